//! Parallel multilingual prompt construction.

mod language;
mod render;
mod variants;

pub use language::{default_languages, parse_language_list, LanguageCode, ParallelText, SourceText};
pub use render::{
    render_paraphrase, render_prompt, render_reduplication, render_single_language, AblationKind,
};
pub use variants::{
    count_variants, enumerate_variants, rank_indices, sample_ranks, strategy_ranks, unrank_indices,
    variant_rank, variant_unrank, PromptVariant, VariantStrategy, MAX_LANGUAGES,
};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("invalid language code {0:?}: expected two lowercase ASCII letters")]
    InvalidLanguageCode(String),
    #[error("language {0:?} has an empty display name")]
    EmptyDisplayName(String),
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("language {0:?} appears more than once")]
    DuplicateLanguage(String),
    #[error("display name {0:?} is used by more than one language")]
    DuplicateDisplayName(String),
    #[error("translations must not include English")]
    EnglishTranslation,
    #[error("translation for {0:?} is empty")]
    EmptyTranslation(String),
    #[error("source text is empty")]
    EmptySource,
    #[error("paraphrase text is empty")]
    EmptyParaphrase,
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("{n} languages exceed the supported maximum of {max}")]
    TooManyLanguages { n: usize, max: usize },
    #[error("rank {rank} out of range (variant space has {total} entries)")]
    RankOutOfRange { rank: u64, total: u64 },
    #[error("language order is empty")]
    EmptyOrder,
    #[error("language index {index} out of range for {n} languages")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("language index {0} appears more than once")]
    DuplicateIndex(usize),
    #[error("no translations available to build variants from")]
    EmptyVariantSpace,
    #[error("invalid variant strategy {0:?}: expected all, first:K or sample:K:SEED")]
    InvalidStrategy(String),
    #[error("unknown ablation kind {0:?}")]
    UnknownAblation(String),
}
