//! The space of prompt variants: every nonempty ordered subset of the
//! translation languages, with the English line always in front.
//!
//! Ranks are ordered by subset size first, then lexicographically by the
//! sequence of language indices (configuration order) within one size. For
//! `n` languages the ranks of size `i` occupy
//! `offset(i) .. offset(i) + n!/(n-i)!` with `offset(i) = sum_{j<i} n!/(n-j)!`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{render_prompt, LanguageCode, ParallelText, PromptError};

/// Largest language count whose variant count still fits in a `u64`.
pub const MAX_LANGUAGES: usize = 20;

/// Number of ordered `k`-subsets of `n` items, `n!/(n-k)!`.
fn falling(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    (0..k).try_fold(1u64, |acc, j| acc.checked_mul((n - j) as u64))
}

/// Total number of multilingual prompt variants for `n` translations.
///
/// The English-only prompt is not part of the space, so `n = 0` gives 0.
pub fn count_variants(n: usize) -> Result<u64, PromptError> {
    if n > MAX_LANGUAGES {
        return Err(PromptError::TooManyLanguages { n, max: MAX_LANGUAGES });
    }
    let mut total = 0u64;
    for i in 1..=n {
        let a = falling(n, i).ok_or(PromptError::TooManyLanguages { n, max: MAX_LANGUAGES })?;
        total = total
            .checked_add(a)
            .ok_or(PromptError::TooManyLanguages { n, max: MAX_LANGUAGES })?;
    }
    Ok(total)
}

/// Maps a rank to the language indices of its variant.
pub fn unrank_indices(rank: u64, n: usize) -> Result<Vec<usize>, PromptError> {
    let total = count_variants(n)?;
    if rank >= total {
        return Err(PromptError::RankOutOfRange { rank, total });
    }
    let mut offset = 0u64;
    let mut size = 1;
    loop {
        // bounded by count_variants above
        let block = falling(n, size).expect("checked by count_variants");
        if rank < offset + block {
            break;
        }
        offset += block;
        size += 1;
    }

    let mut within = rank - offset;
    let mut available: Vec<usize> = (0..n).collect();
    let mut seq = Vec::with_capacity(size);
    for j in 0..size {
        let stride = falling(n - j - 1, size - j - 1).expect("checked by count_variants");
        let pick = (within / stride) as usize;
        within %= stride;
        seq.push(available.remove(pick));
    }
    Ok(seq)
}

/// Inverse of [`unrank_indices`].
pub fn rank_indices(seq: &[usize], n: usize) -> Result<u64, PromptError> {
    count_variants(n)?;
    if seq.is_empty() {
        return Err(PromptError::EmptyOrder);
    }
    for (i, &idx) in seq.iter().enumerate() {
        if idx >= n {
            return Err(PromptError::IndexOutOfRange { index: idx, n });
        }
        if seq[..i].contains(&idx) {
            return Err(PromptError::DuplicateIndex(idx));
        }
    }
    let size = seq.len();
    let offset: u64 = (1..size).map(|i| falling(n, i).expect("checked")).sum();
    let mut within = 0u64;
    for (j, &idx) in seq.iter().enumerate() {
        let smaller_unused = (0..idx).filter(|k| !seq[..j].contains(k)).count() as u64;
        within += smaller_unused * falling(n - j - 1, size - j - 1).expect("checked");
    }
    Ok(offset + within)
}

/// Returns the language order at `rank` over `languages`.
pub fn variant_unrank(rank: u64, languages: &[LanguageCode]) -> Result<Vec<LanguageCode>, PromptError> {
    Ok(unrank_indices(rank, languages.len())?
        .into_iter()
        .map(|i| languages[i].clone())
        .collect())
}

/// Returns the rank of `order` within the variant space over `languages`.
pub fn variant_rank(order: &[LanguageCode], languages: &[LanguageCode]) -> Result<u64, PromptError> {
    let indices = order
        .iter()
        .map(|lang| {
            languages
                .iter()
                .position(|l| l.code() == lang.code())
                .ok_or_else(|| PromptError::UnknownLanguage(lang.code().to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    rank_indices(&indices, languages.len())
}

/// One assembled prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub language_order: Vec<LanguageCode>,
    pub rendered: String,
    /// Position in the variant space; `None` for baseline and ablation prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u64>,
}

/// How to pick variants out of the full space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantStrategy {
    All,
    FirstK(u64),
    Sample { k: u64, seed: u64 },
}

impl fmt::Display for VariantStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariantStrategy::All => f.write_str("all"),
            VariantStrategy::FirstK(k) => write!(f, "first:{k}"),
            VariantStrategy::Sample { k, seed } => write!(f, "sample:{k}:{seed}"),
        }
    }
}

impl FromStr for VariantStrategy {
    type Err = PromptError;

    /// Accepts `all`, `first:K` and `sample:K:SEED`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PromptError::InvalidStrategy(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["all"] => Ok(VariantStrategy::All),
            ["first", k] => Ok(VariantStrategy::FirstK(k.parse().map_err(|_| bad())?)),
            ["sample", k, seed] => Ok(VariantStrategy::Sample {
                k: k.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for VariantStrategy {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VariantStrategy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Picks `k` distinct ranks from `0..total` uniformly (Floyd's algorithm),
/// returned in ascending order.
pub fn sample_ranks(total: u64, k: u64, seed: u64) -> Vec<u64> {
    let k = k.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = BTreeSet::new();
    for j in (total - k)..total {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    chosen.into_iter().collect()
}

/// Selects the ranks a strategy yields for `n` languages.
pub fn strategy_ranks(n: usize, strategy: VariantStrategy) -> Result<Vec<u64>, PromptError> {
    let total = count_variants(n)?;
    match strategy {
        VariantStrategy::All => Ok((0..total).collect()),
        VariantStrategy::FirstK(0) | VariantStrategy::Sample { k: 0, .. } => Err(PromptError::ZeroCount),
        _ if total == 0 => Err(PromptError::EmptyVariantSpace),
        VariantStrategy::FirstK(k) => Ok((0..k.min(total)).collect()),
        VariantStrategy::Sample { k, seed } => Ok(sample_ranks(total, k, seed)),
    }
}

/// Builds the rendered variants chosen by `strategy`, in ascending rank.
pub fn enumerate_variants(parallel: &ParallelText, strategy: VariantStrategy) -> Result<Vec<PromptVariant>, PromptError> {
    let languages = parallel.languages();
    strategy_ranks(languages.len(), strategy)?
        .into_iter()
        .map(|rank| {
            let order = variant_unrank(rank, &languages)?;
            Ok(PromptVariant {
                rendered: render_prompt(parallel, &order)?,
                language_order: order,
                rank: Some(rank),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::SourceText;

    fn langs(codes: &[&str]) -> Vec<LanguageCode> {
        codes.iter().map(|c| LanguageCode::from_code(c).unwrap()).collect()
    }

    /// Every nonempty ordered subset of `0..n`, generated by extension.
    fn brute_force(n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut frontier: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::new();
            for seq in &frontier {
                for k in 0..n {
                    if !seq.contains(&k) {
                        let mut s = seq.clone();
                        s.push(k);
                        next.push(s);
                    }
                }
            }
            next.sort();
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    #[test]
    fn counts() {
        assert_eq!(count_variants(0).unwrap(), 0);
        assert_eq!(count_variants(1).unwrap(), 1);
        assert_eq!(count_variants(3).unwrap(), 15);
        assert_eq!(count_variants(6).unwrap(), 1956);
        assert!(count_variants(MAX_LANGUAGES).is_ok());
        assert!(matches!(
            count_variants(MAX_LANGUAGES + 1),
            Err(PromptError::TooManyLanguages { .. })
        ));
    }

    #[test]
    fn counts_match_enumeration() {
        for n in 0..=7 {
            assert_eq!(count_variants(n).unwrap(), brute_force(n).len() as u64, "n={n}");
        }
    }

    #[test]
    fn rank_order_matches_size_then_lexicographic() {
        for n in 1..=5 {
            for (rank, seq) in brute_force(n).into_iter().enumerate() {
                assert_eq!(unrank_indices(rank as u64, n).unwrap(), seq);
                assert_eq!(rank_indices(&seq, n).unwrap(), rank as u64);
            }
        }
    }

    #[test]
    fn unrank_examples() {
        let l = langs(&["de", "fr"]);
        assert_eq!(variant_unrank(0, &l).unwrap(), langs(&["de"]));
        assert_eq!(variant_unrank(3, &l).unwrap(), langs(&["fr", "de"]));
        assert!(matches!(
            variant_unrank(4, &l),
            Err(PromptError::RankOutOfRange { rank: 4, total: 4 })
        ));
    }

    #[test]
    fn rank_rejects_bad_sequences() {
        assert!(rank_indices(&[], 3).is_err());
        assert!(rank_indices(&[0, 0], 3).is_err());
        assert!(rank_indices(&[3], 3).is_err());
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("all".parse::<VariantStrategy>().unwrap(), VariantStrategy::All);
        assert_eq!("first:6".parse::<VariantStrategy>().unwrap(), VariantStrategy::FirstK(6));
        assert_eq!(
            "sample:3:42".parse::<VariantStrategy>().unwrap(),
            VariantStrategy::Sample { k: 3, seed: 42 }
        );
        assert!("first".parse::<VariantStrategy>().is_err());
        assert!("sample:x:1".parse::<VariantStrategy>().is_err());
        let s = VariantStrategy::Sample { k: 3, seed: 42 };
        assert_eq!(s.to_string().parse::<VariantStrategy>().unwrap(), s);
    }

    fn de_fr() -> ParallelText {
        ParallelText::new(
            SourceText::new("1", "A red car.").unwrap(),
            vec![
                (LanguageCode::from_code("de").unwrap(), "Ein rotes Auto.".into()),
                (LanguageCode::from_code("fr").unwrap(), "Une voiture rouge.".into()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn enumerate_all_and_first_k() {
        let all = enumerate_variants(&de_fr(), VariantStrategy::All).unwrap();
        assert_eq!(all.iter().map(|v| v.rank.unwrap()).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert_eq!(all[3].rendered, "English: A red car.\nFrench: Une voiture rouge.\nGerman: Ein rotes Auto.");
        let first = enumerate_variants(&de_fr(), VariantStrategy::FirstK(10)).unwrap();
        assert_eq!(first.len(), 4);
        assert!(enumerate_variants(&de_fr(), VariantStrategy::FirstK(0)).is_err());
    }

    #[test]
    fn enumerate_sample_is_reproducible() {
        let s = VariantStrategy::Sample { k: 2, seed: 7 };
        let a = enumerate_variants(&de_fr(), s).unwrap();
        let b = enumerate_variants(&de_fr(), s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a[0].rank < a[1].rank);
    }

    #[test]
    fn empty_translation_list() {
        let p = ParallelText::new(SourceText::new("1", "A red car.").unwrap(), vec![]).unwrap();
        assert!(enumerate_variants(&p, VariantStrategy::All).unwrap().is_empty());
        assert!(matches!(
            enumerate_variants(&p, VariantStrategy::FirstK(1)),
            Err(PromptError::EmptyVariantSpace)
        ));
        assert!(matches!(
            enumerate_variants(&p, VariantStrategy::Sample { k: 1, seed: 0 }),
            Err(PromptError::EmptyVariantSpace)
        ));
    }

    #[test]
    fn sampled_ranks_are_distinct_and_in_range() {
        let total = count_variants(6).unwrap();
        let ranks = sample_ranks(total, 100, 3);
        assert_eq!(ranks.len(), 100);
        assert!(ranks.windows(2).all(|w| w[0] < w[1]));
        assert!(ranks.iter().all(|&r| r < total));
        // large spaces work without materializing them
        let big = count_variants(MAX_LANGUAGES).unwrap();
        assert_eq!(sample_ranks(big, 5, 1).len(), 5);
    }
}
