use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::backend::{
    canonical_json, sha256_hex, transport_for, BackendClient, BackendEndpoint, BackendError, ImageParams,
    MockRegistry, ResponseCache,
};
use crate::prompt::{default_languages, AblationKind, LanguageCode, VariantStrategy};

/// Which endpoint serves each capability, by endpoint name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Routing {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translate: Option<String>,
    /// Per-language overrides of `translate`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub translate_by_language: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<String>,
    /// Dual text/image encoder used for CLIP-T.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed: Option<String>,
    /// Encoder used for reranking; falls back to `embed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_i: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dino: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vqa: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capability {
    Paraphrase,
    Generate,
    Embed,
    Rerank,
    ClipI,
    Dino,
    Judge,
    Reward,
    Vqa,
}

impl Capability {
    pub fn name(self) -> &'static str {
        match self {
            Capability::Paraphrase => "paraphrase",
            Capability::Generate => "generate",
            Capability::Embed => "embed",
            Capability::Rerank => "rerank",
            Capability::ClipI => "clip_i",
            Capability::Dino => "dino",
            Capability::Judge => "judge",
            Capability::Reward => "reward",
            Capability::Vqa => "vqa",
        }
    }
}

impl Routing {
    pub fn endpoint_for(&self, cap: Capability) -> Option<&str> {
        let r = match cap {
            Capability::Paraphrase => &self.paraphrase,
            Capability::Generate => &self.generate,
            Capability::Embed => &self.embed,
            Capability::Rerank => return self.rerank.as_deref().or(self.embed.as_deref()),
            Capability::ClipI => &self.clip_i,
            Capability::Dino => &self.dino,
            Capability::Judge => &self.judge,
            Capability::Reward => &self.reward,
            Capability::Vqa => &self.vqa,
        };
        r.as_deref()
    }

    pub fn translator_for(&self, code: &str) -> Option<&str> {
        self.translate_by_language
            .get(code)
            .map(String::as_str)
            .or(self.translate.as_deref())
    }

    fn names(&self) -> impl Iterator<Item = &String> {
        [
            &self.translate,
            &self.paraphrase,
            &self.generate,
            &self.embed,
            &self.rerank,
            &self.clip_i,
            &self.dino,
            &self.judge,
            &self.reward,
            &self.vqa,
        ]
        .into_iter()
        .flatten()
        .chain(self.translate_by_language.values())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSampling {
    pub n: usize,
    pub seed: u64,
}

/// Everything that determines a run's outputs. Its digest guards resumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_languages")]
    pub languages: Vec<LanguageCode>,
    #[serde(default)]
    pub ablation: AblationKind,
    /// Copies for `reduplication`, paraphrases for `paraphrase`. Defaults
    /// to the number of languages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation_n: Option<usize>,
    #[serde(default = "default_strategy")]
    pub variant_strategy: VariantStrategy,
    /// Explicit language orders; replaces `variant_strategy` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<Vec<LanguageCode>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<DatasetSampling>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub image: ImageParams,
    #[serde(default)]
    pub endpoints: BTreeMap<String, BackendEndpoint>,
    #[serde(default)]
    pub routing: Routing,
    #[serde(default)]
    pub output_dir: PathBuf,
}

fn default_strategy() -> VariantStrategy {
    VariantStrategy::All
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl RunConfig {
    pub fn new(dataset: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            languages: default_languages(),
            ablation: AblationKind::default(),
            ablation_n: None,
            variant_strategy: default_strategy(),
            variants: None,
            sample: None,
            seeds: default_seeds(),
            image: ImageParams::default(),
            endpoints: BTreeMap::new(),
            routing: Routing::default(),
            output_dir: output_dir.into(),
        }
    }

    /// Number of duplicates or paraphrases for the monolingual ablations.
    pub fn ablation_count(&self) -> usize {
        self.ablation_n.unwrap_or(self.languages.len())
    }

    /// Checks everything that can be checked without the dataset.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |m: String| Err(PipelineError::Config(m));
        let needs_languages = matches!(self.ablation, AblationKind::Pmt2i | AblationKind::SingleLanguage);
        if needs_languages && self.languages.is_empty() {
            return cfg(format!("ablation {} needs at least one language", self.ablation));
        }
        for (i, l) in self.languages.iter().enumerate() {
            if l.is_english() {
                return cfg("languages must not include en".into());
            }
            if self.languages[..i].contains(l) {
                return cfg(format!("language {l} listed twice"));
            }
        }
        if self.seeds.is_empty() {
            return cfg("seeds must not be empty".into());
        }
        if self.seeds.iter().enumerate().any(|(i, s)| self.seeds[..i].contains(s)) {
            return cfg("seeds must be distinct".into());
        }
        if self.image.width == 0 || self.image.height == 0 {
            return cfg("image width and height must be positive".into());
        }
        if matches!(self.ablation, AblationKind::Reduplication | AblationKind::Paraphrase)
            && self.ablation_count() == 0
        {
            return cfg(format!("ablation {} needs ablation_n >= 1", self.ablation));
        }
        if let Some(s) = &self.sample {
            if s.n == 0 {
                return cfg("sample.n must be at least 1".into());
            }
        }
        for name in self.routing.names() {
            if !self.endpoints.contains_key(name) {
                return cfg(format!("routing refers to undefined endpoint {name:?}"));
            }
        }
        for (name, e) in &self.endpoints {
            e.validate()
                .map_err(|err| PipelineError::Config(format!("endpoint {name:?}: {err}")))?;
        }
        for cap in [Capability::Generate, Capability::Rerank] {
            if self.routing.endpoint_for(cap).is_none() {
                return cfg(format!("no endpoint routed for {}", cap.name()));
            }
        }
        if self.ablation == AblationKind::Paraphrase && self.routing.paraphrase.is_none() {
            return cfg("no endpoint routed for paraphrase".into());
        }
        Ok(())
    }

    /// Makes the dataset path absolute so the config means the same thing
    /// from any working directory.
    pub fn normalized(mut self) -> Result<Self, PipelineError> {
        if self.dataset.is_relative() {
            let cwd = std::env::current_dir().map_err(|source| PipelineError::Io {
                path: PathBuf::from("."),
                source,
            })?;
            self.dataset = cwd.join(&self.dataset);
        }
        Ok(self)
    }

    /// Digest of the canonical JSON form, ignoring where outputs go.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let value = serde_json::to_value(&c).expect("config serializes");
        sha256_hex(canonical_json(&value).as_bytes())
    }

    pub fn dataset_dir(&self) -> &Path {
        self.dataset.parent().unwrap_or_else(|| Path::new("."))
    }
}

/// One client per configured endpoint, looked up through the routing table.
#[derive(Debug, Clone)]
pub struct Clients {
    clients: BTreeMap<String, Arc<BackendClient>>,
    routing: Routing,
}

impl Clients {
    pub fn build(
        endpoints: &BTreeMap<String, BackendEndpoint>,
        routing: &Routing,
        cache: Arc<ResponseCache>,
        mocks: &MockRegistry,
    ) -> Result<Self, BackendError> {
        let clients = endpoints
            .iter()
            .map(|(name, e)| {
                let client = BackendClient::new(e.clone(), transport_for(e, mocks), cache.clone())?;
                Ok((name.clone(), Arc::new(client)))
            })
            .collect::<Result<_, BackendError>>()?;
        Ok(Self {
            clients,
            routing: routing.clone(),
        })
    }

    pub fn for_config(config: &RunConfig, cache: Arc<ResponseCache>, mocks: &MockRegistry) -> Result<Self, BackendError> {
        Self::build(&config.endpoints, &config.routing, cache, mocks)
    }

    pub fn routing(&self) -> &Routing {
        &self.routing
    }

    pub fn get(&self, cap: Capability) -> Result<Arc<BackendClient>, BackendError> {
        self.routing
            .endpoint_for(cap)
            .and_then(|n| self.clients.get(n))
            .cloned()
            .ok_or_else(|| BackendError::MissingRoute(cap.name().to_string()))
    }

    pub fn has(&self, cap: Capability) -> bool {
        self.get(cap).is_ok()
    }

    pub fn translator(&self, lang: &LanguageCode) -> Result<Arc<BackendClient>, BackendError> {
        self.routing
            .translator_for(lang.code())
            .and_then(|n| self.clients.get(n))
            .cloned()
            .ok_or_else(|| BackendError::MissingRoute(format!("translate ({})", lang.code())))
    }

    pub fn all(&self) -> impl Iterator<Item = (&String, &Arc<BackendClient>)> {
        self.clients.iter()
    }
}
