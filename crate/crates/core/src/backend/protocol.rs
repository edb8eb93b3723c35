//! Wire protocol shared by every capability: JSON bodies POSTed to fixed
//! routes, errors returned as `{error: {code, message}}`.

use std::fmt;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Translate,
    Paraphrase,
    Generate,
    EmbedText,
    EmbedImage,
    Judge,
    Reward,
    Vqa,
}

impl Route {
    pub const ALL: [Route; 8] = [
        Route::Translate,
        Route::Paraphrase,
        Route::Generate,
        Route::EmbedText,
        Route::EmbedImage,
        Route::Judge,
        Route::Reward,
        Route::Vqa,
    ];

    pub fn path(self) -> &'static str {
        match self {
            Route::Translate => "/v1/translate",
            Route::Paraphrase => "/v1/paraphrase",
            Route::Generate => "/v1/generate",
            Route::EmbedText => "/v1/embed/text",
            Route::EmbedImage => "/v1/embed/image",
            Route::Judge => "/v1/judge",
            Route::Reward => "/v1/reward",
            Route::Vqa => "/v1/vqa",
        }
    }

    pub fn from_path(path: &str) -> Option<Route> {
        Route::ALL.into_iter().find(|r| r.path() == path)
    }

    pub fn name(self) -> &'static str {
        match self {
            Route::Translate => "translate",
            Route::Paraphrase => "paraphrase",
            Route::Generate => "generate",
            Route::EmbedText => "embed_text",
            Route::EmbedImage => "embed_image",
            Route::Judge => "judge",
            Route::Reward => "reward",
            Route::Vqa => "vqa",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.path())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranslateRequest {
    pub text: String,
    pub source_lang: String,
    pub target_lang: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranslateResponse {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParaphraseRequest {
    pub text: String,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParaphraseResponse {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub image_b64: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedTextRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedImageRequest {
    pub image_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embedding: Vec<f64>,
    pub dim: usize,
    pub model_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub prompt: String,
    pub image_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub verdict: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardRequest {
    pub prompt: String,
    pub image_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardResponse {
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqaRequest {
    pub question: String,
    pub image_b64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqaResponse {
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

/// A feature vector returned by an encoder. Not assumed to be unit norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub dim: usize,
    pub model_id: String,
}

impl Embedding {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Result<Self, BackendError> {
        if values.is_empty() {
            return Err(BackendError::Schema("embedding is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::Schema("embedding contains non-finite values".into()));
        }
        Ok(Self {
            dim: values.len(),
            values,
            model_id: model_id.into(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            dim: self.dim,
            model_id: self.model_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageParams {
    pub width: u32,
    pub height: u32,
}

impl Default for ImageParams {
    fn default() -> Self {
        Self { width: 512, height: 512 }
    }
}

/// A decoded-and-verified PNG produced by a generation backend (or loaded
/// from disk).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedImage {
    pub png_bytes: Vec<u8>,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub backend_id: String,
}

impl GeneratedImage {
    /// Checks that `png_bytes` is a decodable PNG and reads its dimensions.
    pub fn from_png(png_bytes: Vec<u8>, seed: u64, backend_id: impl Into<String>) -> Result<Self, BackendError> {
        let (width, height) = png_dimensions(&png_bytes)?;
        Ok(Self {
            png_bytes,
            width,
            height,
            seed,
            backend_id: backend_id.into(),
        })
    }

    pub fn to_base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(&self.png_bytes)
    }
}

pub(crate) fn png_dimensions(bytes: &[u8]) -> Result<(u32, u32), BackendError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| BackendError::InvalidImage(e.to_string()))?;
    let (width, height) = {
        let info = reader.info();
        (info.width, info.height)
    };
    if width == 0 || height == 0 {
        return Err(BackendError::InvalidImage("zero-sized image".into()));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| BackendError::InvalidImage("image too large".into()))?;
    let mut buf = vec![0; size];
    reader
        .next_frame(&mut buf)
        .map_err(|e| BackendError::InvalidImage(e.to_string()))?;
    Ok((width, height))
}

pub(crate) fn decode_base64(data: &str) -> Result<Vec<u8>, BackendError> {
    base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| BackendError::InvalidImage(format!("bad base64: {e}")))
}

/// Which scoring service to ask about an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Judge,
    Reward,
    Vqa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
}

impl Verdict {
    pub fn parse(s: &str) -> Result<Self, BackendError> {
        match s {
            "correct" => Ok(Verdict::Correct),
            "incorrect" => Ok(Verdict::Incorrect),
            other => Err(BackendError::UnparseableVerdict(other.to_string())),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Verdict::Correct => Verdict::Incorrect,
            Verdict::Incorrect => Verdict::Correct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreResult {
    Verdict(Verdict),
    Score(f64),
    Probability(f64),
}
