use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Clients, PipelineError, RunConfig};
use crate::dataset::{self, DatasetRecord};
use crate::prompt::{strategy_ranks, variant_rank, variant_unrank, AblationKind, LanguageCode};

/// How a candidate's prompt is assembled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum VariantKind {
    Multilingual { order: Vec<LanguageCode> },
    EnglishOnly,
    SingleLanguage { language: LanguageCode },
    Reduplication { n: usize },
    Paraphrase { n: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    /// Rank as a decimal string for multilingual variants, else a label.
    pub label: String,
    pub rank: Option<u64>,
    pub kind: VariantKind,
}

impl VariantSpec {
    fn languages(&self) -> Vec<&LanguageCode> {
        match &self.kind {
            VariantKind::Multilingual { order } => order.iter().collect(),
            VariantKind::SingleLanguage { language } => vec![language],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationItem {
    pub sample_index: usize,
    pub sample_id: String,
    pub language: LanguageCode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationItem {
    pub sample_index: usize,
    pub sample_id: String,
    pub variant_index: usize,
    pub seed_index: usize,
    pub seed: u64,
}

/// A fully expanded run: what to translate, paraphrase and generate, in
/// execution order.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub config: RunConfig,
    pub config_digest: String,
    pub records: Vec<DatasetRecord>,
    pub variants: Vec<VariantSpec>,
    pub translations: Vec<TranslationItem>,
    /// Sample indices needing paraphrases.
    pub paraphrases: Vec<usize>,
    pub generations: Vec<GenerationItem>,
}

impl RunPlan {
    pub fn variant(&self, item: &GenerationItem) -> &VariantSpec {
        &self.variants[item.variant_index]
    }
}

/// The variant list a configuration asks for; identical for every sample.
pub fn variants_for(config: &RunConfig) -> Result<Vec<VariantSpec>, PipelineError> {
    let languages = &config.languages;
    let specs = match config.ablation {
        AblationKind::Pmt2i => {
            let ranked: Vec<(u64, Vec<LanguageCode>)> = match &config.variants {
                Some(orders) => orders
                    .iter()
                    .map(|o| Ok((variant_rank(o, languages)?, o.clone())))
                    .collect::<Result<_, PipelineError>>()?,
                None => strategy_ranks(languages.len(), config.variant_strategy)?
                    .into_iter()
                    .map(|r| Ok((r, variant_unrank(r, languages)?)))
                    .collect::<Result<_, PipelineError>>()?,
            };
            let mut seen = BTreeSet::new();
            for (rank, _) in &ranked {
                if !seen.insert(*rank) {
                    return Err(PipelineError::Config(format!("variant rank {rank} listed twice")));
                }
            }
            ranked
                .into_iter()
                .map(|(rank, order)| VariantSpec {
                    label: rank.to_string(),
                    rank: Some(rank),
                    kind: VariantKind::Multilingual { order },
                })
                .collect()
        }
        AblationKind::EnglishOnly => vec![VariantSpec {
            label: "en".into(),
            rank: None,
            kind: VariantKind::EnglishOnly,
        }],
        AblationKind::SingleLanguage => languages
            .iter()
            .map(|l| VariantSpec {
                label: format!("mono-{}", l.code()),
                rank: None,
                kind: VariantKind::SingleLanguage { language: l.clone() },
            })
            .collect(),
        AblationKind::Reduplication => {
            let n = config.ablation_count();
            vec![VariantSpec {
                label: format!("redup-{n}"),
                rank: None,
                kind: VariantKind::Reduplication { n },
            }]
        }
        AblationKind::Paraphrase => {
            let n = config.ablation_count();
            vec![VariantSpec {
                label: format!("para-{n}"),
                rank: None,
                kind: VariantKind::Paraphrase { n },
            }]
        }
    };
    Ok(specs)
}

/// Expands `config` over `records`: work is ordered by sample, then
/// variant, then seed. Translation items are deduplicated per
/// `(sample, language)` and skipped where the dataset already supplies one.
pub fn plan_run(config: &RunConfig, records: Vec<DatasetRecord>) -> Result<RunPlan, PipelineError> {
    config.validate()?;
    if records.is_empty() {
        return Err(PipelineError::Config("dataset is empty".into()));
    }
    let variants = variants_for(config)?;

    let needed: Vec<&LanguageCode> = {
        let mut seen = BTreeSet::new();
        config
            .languages
            .iter()
            .filter(|l| variants.iter().any(|v| v.languages().contains(l)))
            .filter(|l| seen.insert(l.code()))
            .collect()
    };

    let mut translations = Vec::new();
    for (i, r) in records.iter().enumerate() {
        for lang in &needed {
            if !r.translations.contains_key(lang.code()) {
                if config.routing.translator_for(lang.code()).is_none() {
                    return Err(PipelineError::Config(format!(
                        "no translate route for language {:?} (sample {:?} has no pre-supplied translation)",
                        lang.code(),
                        r.id
                    )));
                }
                translations.push(TranslationItem {
                    sample_index: i,
                    sample_id: r.id.clone(),
                    language: (*lang).clone(),
                });
            }
        }
    }

    let paraphrases = if config.ablation == AblationKind::Paraphrase {
        (0..records.len()).collect()
    } else {
        Vec::new()
    };

    let mut generations = Vec::with_capacity(records.len() * variants.len() * config.seeds.len());
    for (sample_index, r) in records.iter().enumerate() {
        for variant_index in 0..variants.len() {
            for (seed_index, &seed) in config.seeds.iter().enumerate() {
                generations.push(GenerationItem {
                    sample_index,
                    sample_id: r.id.clone(),
                    variant_index,
                    seed_index,
                    seed,
                });
            }
        }
    }

    Ok(RunPlan {
        config_digest: config.digest(),
        config: config.clone(),
        records,
        variants,
        translations,
        paraphrases,
        generations,
    })
}

/// Loads the configured dataset (applying `sample` if set) and plans it.
pub fn plan_from_config(config: &RunConfig) -> Result<RunPlan, PipelineError> {
    config.validate()?;
    let mut records = dataset::load_dataset(&config.dataset)?;
    if let Some(s) = config.sample {
        records = dataset::sample(&records, s.n, s.seed)?;
    }
    plan_run(config, records)
}

/// Checks that `clients` can serve everything `plan` needs.
pub fn check_clients(plan: &RunPlan, clients: &Clients) -> Result<(), PipelineError> {
    use super::Capability;
    let mut caps = vec![Capability::Generate, Capability::Rerank];
    if !plan.paraphrases.is_empty() {
        caps.push(Capability::Paraphrase);
    }
    for cap in caps {
        if !clients.has(cap) {
            return Err(PipelineError::Config(format!("no endpoint routed for {}", cap.name())));
        }
    }
    for t in &plan.translations {
        if clients.translator(&t.language).is_err() {
            return Err(PipelineError::Config(format!(
                "no translate endpoint routed for language {}",
                t.language.code()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendEndpoint;
    use crate::prompt::parse_language_list;

    fn config(languages: &str) -> RunConfig {
        let mut c = RunConfig::new("d.jsonl", "out");
        c.languages = parse_language_list(languages).unwrap();
        c.endpoints.insert("m".into(), BackendEndpoint::new("mock://m"));
        c.routing.generate = Some("m".into());
        c.routing.embed = Some("m".into());
        c.routing.translate = Some("m".into());
        c
    }

    fn records(n: usize) -> Vec<DatasetRecord> {
        (0..n).map(|i| DatasetRecord::new(format!("s{i}"), format!("caption {i}"))).collect()
    }

    #[test]
    fn counts_and_order() {
        let mut c = config("de,fr");
        c.variant_strategy = crate::prompt::VariantStrategy::FirstK(3);
        let plan = plan_run(&c, records(2)).unwrap();
        assert_eq!(plan.generations.len(), 6);
        let keys: Vec<_> = plan
            .generations
            .iter()
            .map(|g| (g.sample_index, g.variant_index, g.seed_index))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(plan.translations.len(), 4);
    }

    #[test]
    fn english_only_has_one_variant() {
        let mut c = config("de,fr,es");
        c.ablation = AblationKind::EnglishOnly;
        let plan = plan_run(&c, records(3)).unwrap();
        assert_eq!(plan.variants.len(), 1);
        assert_eq!(plan.generations.len(), 3);
        assert!(plan.translations.is_empty());
    }

    #[test]
    fn deterministic() {
        let c = config("de,fr");
        let a = plan_run(&c, records(2)).unwrap();
        let b = plan_run(&c, records(2)).unwrap();
        assert_eq!(a.generations, b.generations);
        assert_eq!(a.variants, b.variants);
        assert_eq!(a.config_digest, b.config_digest);
    }

    #[test]
    fn translations_dedup_and_presupplied() {
        let c = config("de,fr");
        let mut recs = records(2);
        recs[0].translations.insert("de".into(), "Bildunterschrift".into());
        let plan = plan_run(&c, recs).unwrap();
        let pairs: Vec<_> = plan
            .translations
            .iter()
            .map(|t| (t.sample_id.as_str(), t.language.code()))
            .collect();
        assert_eq!(pairs, [("s0", "fr"), ("s1", "de"), ("s1", "fr")]);
    }

    #[test]
    fn missing_translate_route_names_language() {
        let mut c = config("de,zh");
        c.routing.translate = None;
        c.routing.translate_by_language.insert("de".into(), "m".into());
        let err = plan_run(&c, records(1)).unwrap_err().to_string();
        assert!(err.contains("\"zh\""), "{err}");
    }

    #[test]
    fn explicit_variants_keep_given_order() {
        let mut c = config("de,es,fr");
        c.variants = Some(vec![
            parse_language_list("fr,de").unwrap(),
            parse_language_list("de").unwrap(),
        ]);
        let plan = plan_run(&c, records(1)).unwrap();
        let labels: Vec<_> = plan.variants.iter().map(|v| v.label.as_str()).collect();
        // [fr,de] = offset 3 + lexicographic position 4 among 2-permutations
        assert_eq!(labels, ["7", "0"]);
        c.variants = Some(vec![parse_language_list("de").unwrap(); 2]);
        assert!(plan_run(&c, records(1)).is_err());
    }

    #[test]
    fn ablation_labels() {
        let mut c = config("de,fr");
        c.ablation = AblationKind::SingleLanguage;
        let labels: Vec<_> = variants_for(&c).unwrap().into_iter().map(|v| v.label).collect();
        assert_eq!(labels, ["mono-de", "mono-fr"]);
        c.ablation = AblationKind::Reduplication;
        c.ablation_n = Some(3);
        assert_eq!(variants_for(&c).unwrap()[0].label, "redup-3");
    }
}
