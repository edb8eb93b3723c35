use image::imageops::FilterType;

use super::EvalError;
use crate::backend::Verdict;

/// Side length images are resized to before comparing pixels.
pub const L1_CANONICAL_SIDE: u32 = 256;

pub fn mean(values: &[f64]) -> Result<f64, EvalError> {
    if values.is_empty() {
        return Err(EvalError::NoValidSamples);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn correct_proportion(verdicts: &[Verdict]) -> Result<f64, EvalError> {
    if verdicts.is_empty() {
        return Err(EvalError::NoValidSamples);
    }
    let correct = verdicts.iter().filter(|v| **v == Verdict::Correct).count();
    Ok(correct as f64 / verdicts.len() as f64)
}

/// Attribute-binding score of one image: the product of its per-question
/// answer probabilities.
pub fn bvqa_score(probabilities: &[f64]) -> Result<f64, EvalError> {
    if probabilities.is_empty() {
        return Err(EvalError::MissingQuestions);
    }
    let mut product = 1.0;
    for &p in probabilities {
        if !(0.0..=1.0).contains(&p) {
            return Err(EvalError::ProbabilityOutOfRange(p));
        }
        product *= p;
    }
    Ok(product)
}

/// Mean absolute difference of two equally sized buffers of values in
/// `[0, 1]`.
pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::ImageSizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::Image("empty image".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Mean L1 distance over all unordered pairs of normalized pixel buffers.
pub fn l1_diversity(images: &[Vec<f64>]) -> Result<f64, EvalError> {
    if images.len() < 2 {
        return Err(EvalError::TooFewImages(images.len()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            total += l1_distance(&images[i], &images[j])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Decodes a PNG, resizes it bilinearly to the canonical square and returns
/// its RGB channels scaled to `[0, 1]`.
pub fn normalize_png(png_bytes: &[u8]) -> Result<Vec<f64>, EvalError> {
    let img = image::load_from_memory_with_format(png_bytes, image::ImageFormat::Png)
        .map_err(|e| EvalError::Image(e.to_string()))?
        .to_rgb8();
    let resized = image::imageops::resize(&img, L1_CANONICAL_SIDE, L1_CANONICAL_SIDE, FilterType::Triangle);
    Ok(resized.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect())
}

pub fn l1_diversity_png(pngs: &[&[u8]]) -> Result<f64, EvalError> {
    if pngs.len() < 2 {
        return Err(EvalError::TooFewImages(pngs.len()));
    }
    let images = pngs.iter().map(|p| normalize_png(p)).collect::<Result<Vec<_>, _>>()?;
    l1_diversity(&images)
}
