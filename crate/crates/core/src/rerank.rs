//! Cosine reranking of candidate images against the source caption, and
//! best-of-k curves.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendClient, BackendError, Embedding};
use crate::prompt::SourceText;

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error("no scores to select from")]
    Empty,
    #[error("score at index {0} is not finite")]
    NonFinite(usize),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("every candidate image failed to embed")]
    AllEmbeddingsFailed,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Cosine similarity of two raw vectors, clamped to `[-1, 1]`.
pub fn cosine_values(u: &[f64], v: &[f64]) -> Result<f64, RerankError> {
    if u.len() != v.len() {
        return Err(RerankError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(RerankError::ZeroNorm);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64, RerankError> {
    if u.dim != v.dim {
        return Err(RerankError::DimensionMismatch(u.dim, v.dim));
    }
    cosine_values(&u.values, &v.values)
}

/// Index of the maximum score; ties go to the lowest index.
pub fn select_best(scores: &[f64]) -> Result<usize, RerankError> {
    if scores.is_empty() {
        return Err(RerankError::Empty);
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(RerankError::NonFinite(i));
        }
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Running maximum: element `k-1` is the best score among the first `k`.
pub fn best_of_k_curve(scores: &[f64]) -> Result<Vec<f64>, RerankError> {
    if scores.is_empty() {
        return Err(RerankError::Empty);
    }
    let mut best = f64::NEG_INFINITY;
    Ok(scores
        .iter()
        .map(|&s| {
            if s > best {
                best = s;
            }
            best
        })
        .collect())
}

/// Identifies one candidate image within a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateRef {
    pub sample_id: String,
    /// Variant rank as a decimal string, or an ablation label.
    pub variant: String,
    pub seed: u64,
}

impl fmt::Display for CandidateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}_{}", self.sample_id, self.variant, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: CandidateRef,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub sample_id: String,
    pub scores: Vec<ScoredCandidate>,
    pub chosen_index: usize,
    pub scorer_model_id: String,
}

impl Selection {
    pub fn from_scores(
        sample_id: impl Into<String>,
        scores: Vec<ScoredCandidate>,
        scorer_model_id: impl Into<String>,
    ) -> Result<Self, RerankError> {
        let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
        let chosen_index = select_best(&values)?;
        Ok(Self {
            sample_id: sample_id.into(),
            scores,
            chosen_index,
            scorer_model_id: scorer_model_id.into(),
        })
    }

    pub fn chosen(&self) -> &ScoredCandidate {
        &self.scores[self.chosen_index]
    }
}

/// Scores candidate images against `text` and picks the argmax.
///
/// One (cached) text embedding plus one image embedding per candidate.
/// Candidates whose image fails to embed are left out of the selection; the
/// call fails only if none could be scored.
pub fn rerank_candidates(
    text: &SourceText,
    candidates: &[(CandidateRef, Vec<u8>)],
    client: &BackendClient,
) -> Result<Selection, RerankError> {
    if candidates.is_empty() {
        return Err(RerankError::Empty);
    }
    let text_embedding = client.embed_text(&text.text)?;
    let embedded: Vec<Result<Embedding, BackendError>> = std::thread::scope(|s| {
        let handles: Vec<_> = candidates
            .iter()
            .map(|(_, png)| s.spawn(move || client.embed_png(png)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("embedding thread panicked"))
            .collect()
    });

    let mut scores = Vec::with_capacity(candidates.len());
    for ((candidate, _), emb) in candidates.iter().zip(embedded) {
        match emb {
            Ok(e) => scores.push(ScoredCandidate {
                candidate: candidate.clone(),
                score: cosine(&text_embedding, &e)?,
            }),
            Err(e) => log::warn!("skipping {candidate}: {e}"),
        }
    }
    if scores.is_empty() {
        return Err(RerankError::AllEmbeddingsFailed);
    }
    Selection::from_scores(text.id.clone(), scores, text_embedding.model_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec(), "t").unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&emb(&[1.0, 0.0]), &emb(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine(&emb(&[2.0, 0.0]), &emb(&[1.0, 0.0])).unwrap(), 1.0);
        let c = cosine(&emb(&[1.0, 1.0]), &emb(&[1.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine(&emb(&[1.0]), &emb(&[1.0, 0.0])),
            Err(RerankError::DimensionMismatch(1, 2))
        ));
        assert!(matches!(
            cosine(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])),
            Err(RerankError::ZeroNorm)
        ));
    }

    #[test]
    fn select_examples() {
        assert_eq!(select_best(&[0.1, 0.9, 0.3]).unwrap(), 1);
        assert_eq!(select_best(&[0.5, 0.5]).unwrap(), 0);
        assert!(matches!(select_best(&[]), Err(RerankError::Empty)));
        assert!(matches!(select_best(&[0.1, f64::NAN]), Err(RerankError::NonFinite(1))));
    }

    #[test]
    fn curve_examples() {
        assert_eq!(best_of_k_curve(&[0.2, 0.5, 0.4]).unwrap(), [0.2, 0.5, 0.5]);
        assert_eq!(best_of_k_curve(&[0.3; 4]).unwrap(), [0.3; 4]);
        let asc = [0.1, 0.2, 0.7];
        assert_eq!(best_of_k_curve(&asc).unwrap(), asc);
        assert!(best_of_k_curve(&[]).is_err());
    }
}
