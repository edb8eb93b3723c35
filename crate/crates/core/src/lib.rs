//! Parallel multilingual prompting for text-to-image backends: prompt
//! variants, candidate generation runs, reranking and evaluation.

pub mod backend;
pub mod dataset;
pub mod eval;
pub mod pipeline;
pub mod prompt;
pub mod rerank;
