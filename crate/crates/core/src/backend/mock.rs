//! Deterministic in-process backends implementing the wire protocol.
//!
//! Every response is a pure function of the canonicalized request and the
//! mock's static configuration:
//!
//! * translate returns `"«<target>» " + text`;
//! * paraphrase returns `text + " ¶i"` for `i = 1..=n`;
//! * generate returns a noise PNG seeded by the request, carrying the prompt
//!   and seed in `iTXt`/`tEXt` chunks;
//! * embed/text returns a hash-seeded vector;
//! * embed/image mixes the caption embedding (recovered from the PNG's
//!   prompt chunk) with hash noise, or returns the caption embedding exactly
//!   for planted `(prompt, seed)` pairs;
//! * judge answers `incorrect` iff the prompt contains `XFAIL`;
//! * reward and vqa are hash-derived unless overridden.
//!
//! Call counters, concurrency tracking and failure injection make client
//! behaviour observable in tests.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Cursor;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::cache::canonical_json;
use super::protocol::decode_base64;
use super::{
    EmbedImageRequest, EmbedTextRequest, GenerateRequest, JudgeRequest, ParaphraseRequest, RewardRequest, Route,
    TranslateRequest, Transport, TransportError, VqaRequest,
};

pub const PROMPT_CHUNK: &str = "prompt";
pub const SEED_CHUNK: &str = "seed";

/// Largest mock image side, to keep accidental huge requests cheap.
const MAX_SIDE: u32 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectedFailure {
    Network,
    Timeout,
    Status(u16),
}

#[derive(Debug)]
pub struct MockBackend {
    model_id: String,
    dim: usize,
    latency: Duration,
    planted_best: HashSet<(String, u64)>,
    refused: HashSet<(String, u64)>,
    text_overrides: HashMap<String, Vec<f64>>,
    image_overrides: HashMap<(String, u64), Vec<f64>>,
    translate_overrides: HashMap<String, String>,
    vqa_overrides: HashMap<String, f64>,
    paraphrase_limit: Option<usize>,
    calls: Mutex<BTreeMap<Route, usize>>,
    active: AtomicUsize,
    peak: AtomicUsize,
    failures: Mutex<HashMap<Route, (u32, InjectedFailure)>>,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self {
            model_id: "mock-v1".to_string(),
            dim: 32,
            latency: Duration::ZERO,
            planted_best: HashSet::new(),
            refused: HashSet::new(),
            text_overrides: HashMap::new(),
            image_overrides: HashMap::new(),
            translate_overrides: HashMap::new(),
            vqa_overrides: HashMap::new(),
            paraphrase_limit: None,
            calls: Mutex::default(),
            active: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            failures: Mutex::default(),
        }
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        assert!(dim >= 1);
        self.dim = dim;
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Images generated from `(prompt, seed)` embed exactly onto their
    /// caption's text embedding, so they win any cosine rerank.
    pub fn plant_best(mut self, prompt: impl Into<String>, seed: u64) -> Self {
        self.planted_best.insert((prompt.into(), seed));
        self
    }

    /// Generation of `(prompt, seed)` fails with `content_refused`.
    pub fn refuse(mut self, prompt: impl Into<String>, seed: u64) -> Self {
        self.refused.insert((prompt.into(), seed));
        self
    }

    pub fn with_text_embedding(mut self, text: impl Into<String>, values: Vec<f64>) -> Self {
        self.text_overrides.insert(text.into(), values);
        self
    }

    pub fn with_image_embedding(mut self, prompt: impl Into<String>, seed: u64, values: Vec<f64>) -> Self {
        self.image_overrides.insert((prompt.into(), seed), values);
        self
    }

    pub fn with_translation(mut self, text: impl Into<String>, translation: impl Into<String>) -> Self {
        self.translate_overrides.insert(text.into(), translation.into());
        self
    }

    pub fn with_vqa_probability(mut self, question: impl Into<String>, p: f64) -> Self {
        self.vqa_overrides.insert(question.into(), p);
        self
    }

    pub fn with_paraphrase_limit(mut self, limit: usize) -> Self {
        self.paraphrase_limit = Some(limit);
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Makes the next `times` requests to `route` fail with `failure`.
    pub fn fail_next(&self, route: Route, times: u32, failure: InjectedFailure) {
        self.failures
            .lock()
            .expect("mock poisoned")
            .insert(route, (times, failure));
    }

    pub fn calls(&self, route: Route) -> usize {
        self.calls
            .lock()
            .expect("mock poisoned")
            .get(&route)
            .copied()
            .unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.lock().expect("mock poisoned").values().sum()
    }

    pub fn call_counts(&self) -> BTreeMap<Route, usize> {
        self.calls.lock().expect("mock poisoned").clone()
    }

    pub fn peak_concurrency(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn reset_counters(&self) {
        self.calls.lock().expect("mock poisoned").clear();
        self.peak.store(0, Ordering::SeqCst);
    }

    /// Text embedding used by the mock encoder.
    pub fn text_vector(&self, text: &str) -> Vec<f64> {
        self.text_overrides
            .get(text)
            .cloned()
            .unwrap_or_else(|| hash_vector("text", text.as_bytes(), self.dim))
    }

    /// Image embedding used by the mock encoder.
    pub fn image_vector(&self, png_bytes: &[u8]) -> Vec<f64> {
        let meta = read_generation_chunks(png_bytes);
        if let Some((prompt, seed)) = &meta {
            if let Some(v) = self.image_overrides.get(&(prompt.clone(), *seed)) {
                return v.clone();
            }
        }
        let caption = meta.as_ref().and_then(|(p, _)| english_caption(p));
        match (&meta, caption) {
            (Some((prompt, seed)), Some(caption)) if self.planted_best.contains(&(prompt.clone(), *seed)) => {
                self.text_vector(caption)
            }
            (_, Some(caption)) => {
                let noise = hash_vector("image", png_bytes, self.dim);
                self.text_vector(caption)
                    .iter()
                    .zip(noise)
                    .map(|(t, n)| 0.5 * t + n)
                    .collect()
            }
            _ => hash_vector("image", png_bytes, self.dim),
        }
    }

    fn handle(&self, route: Route, body: &Value) -> Result<Value, TransportError> {
        match route {
            Route::Translate => {
                let r: TranslateRequest = parse(body)?;
                if r.text.is_empty() || r.target_lang.is_empty() {
                    return Err(bad_request("text and target_lang are required"));
                }
                let text = match self.translate_overrides.get(&r.text) {
                    Some(t) => t.clone(),
                    None => format!("«{}» {}", r.target_lang, r.text),
                };
                Ok(json!({ "text": text }))
            }
            Route::Paraphrase => {
                let r: ParaphraseRequest = parse(body)?;
                let n = self.paraphrase_limit.map_or(r.n, |l| l.min(r.n));
                let texts: Vec<String> = (1..=n).map(|i| format!("{} ¶{i}", r.text)).collect();
                Ok(json!({ "texts": texts }))
            }
            Route::Generate => {
                let r: GenerateRequest = parse(body)?;
                if r.prompt.is_empty() {
                    return Err(bad_request("prompt is required"));
                }
                if r.width == 0 || r.height == 0 || r.width > MAX_SIDE || r.height > MAX_SIDE {
                    return Err(bad_request("image dimensions out of bounds"));
                }
                if r.prompt.contains("XREFUSE") || self.refused.contains(&(r.prompt.clone(), r.seed)) {
                    return Err(TransportError::status(422, "content_refused", "prompt refused by mock"));
                }
                let png = mock_png(&r.prompt, r.seed, r.width, r.height, canonical_json(body).as_bytes());
                Ok(json!({
                    "image_b64": base64_encode(&png),
                    "width": r.width,
                    "height": r.height,
                }))
            }
            Route::EmbedText => {
                let r: EmbedTextRequest = parse(body)?;
                if r.text.is_empty() {
                    return Err(bad_request("text is required"));
                }
                Ok(self.embedding_body(self.text_vector(&r.text)))
            }
            Route::EmbedImage => {
                let r: EmbedImageRequest = parse(body)?;
                let png = image_bytes(&r.image_b64)?;
                Ok(self.embedding_body(self.image_vector(&png)))
            }
            Route::Judge => {
                let r: JudgeRequest = parse(body)?;
                image_bytes(&r.image_b64)?;
                let verdict = if r.prompt.contains("XFAIL") { "incorrect" } else { "correct" };
                Ok(json!({ "verdict": verdict }))
            }
            Route::Reward => {
                let r: RewardRequest = parse(body)?;
                image_bytes(&r.image_b64)?;
                let u = unit_hash(canonical_json(body).as_bytes());
                Ok(json!({ "score": 4.0 * u - 2.0 }))
            }
            Route::Vqa => {
                let r: VqaRequest = parse(body)?;
                image_bytes(&r.image_b64)?;
                let p = match self.vqa_overrides.get(&r.question) {
                    Some(p) => *p,
                    None => unit_hash(canonical_json(body).as_bytes()),
                };
                Ok(json!({ "probability": p }))
            }
        }
    }

    fn embedding_body(&self, values: Vec<f64>) -> Value {
        json!({ "dim": values.len(), "embedding": values, "model_id": self.model_id })
    }
}

impl Transport for MockBackend {
    fn post(&self, route: Route, body: &Value, _timeout: Duration) -> Result<Value, TransportError> {
        *self.calls.lock().expect("mock poisoned").entry(route).or_insert(0) += 1;
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let injected = {
            let mut failures = self.failures.lock().expect("mock poisoned");
            match failures.get_mut(&route) {
                Some((remaining, failure)) if *remaining > 0 => {
                    *remaining -= 1;
                    Some(*failure)
                }
                _ => None,
            }
        };
        let result = match injected {
            Some(InjectedFailure::Network) => Err(TransportError::Network("injected connection reset".into())),
            Some(InjectedFailure::Timeout) => Err(TransportError::Timeout),
            Some(InjectedFailure::Status(s)) => Err(TransportError::status(s, "injected", "injected failure")),
            None => self.handle(route, body),
        };
        self.active.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

/// Named mock instances so every endpoint with the same `mock://NAME` URL
/// shares counters and configuration.
#[derive(Debug, Default, Clone)]
pub struct MockRegistry {
    mocks: Arc<Mutex<HashMap<String, Arc<MockBackend>>>>,
}

impl MockRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, name: impl Into<String>, mock: MockBackend) -> Arc<MockBackend> {
        let mock = Arc::new(mock);
        self.mocks
            .lock()
            .expect("registry poisoned")
            .insert(name.into(), mock.clone());
        mock
    }

    pub fn get_or_default(&self, name: &str) -> Arc<MockBackend> {
        self.mocks
            .lock()
            .expect("registry poisoned")
            .entry(name.to_string())
            .or_insert_with(|| Arc::new(MockBackend::new()))
            .clone()
    }

    pub fn get(&self, name: &str) -> Option<Arc<MockBackend>> {
        self.mocks.lock().expect("registry poisoned").get(name).cloned()
    }
}

fn parse<T: DeserializeOwned>(body: &Value) -> Result<T, TransportError> {
    serde_json::from_value(body.clone()).map_err(|e| bad_request(&e.to_string()))
}

fn bad_request(message: &str) -> TransportError {
    TransportError::status(400, "bad_request", message)
}

fn image_bytes(b64: &str) -> Result<Vec<u8>, TransportError> {
    let bytes = decode_base64(b64).map_err(|e| bad_request(&e.to_string()))?;
    super::protocol::png_dimensions(&bytes).map_err(|e| bad_request(&e.to_string()))?;
    Ok(bytes)
}

fn base64_encode(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn seeded_rng(tag: &str, bytes: &[u8]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    hasher.update([0u8]);
    hasher.update(bytes);
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

fn hash_vector(tag: &str, bytes: &[u8], dim: usize) -> Vec<f64> {
    let mut rng = seeded_rng(tag, bytes);
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn unit_hash(bytes: &[u8]) -> f64 {
    seeded_rng("unit", bytes).random::<f64>()
}

/// The caption carried by the first `English: ` line of a prompt.
pub fn english_caption(prompt: &str) -> Option<&str> {
    prompt.lines().next()?.strip_prefix("English: ")
}

/// Reads the prompt and seed chunks written by the mock generator.
pub fn read_generation_chunks(png_bytes: &[u8]) -> Option<(String, u64)> {
    let reader = png::Decoder::new(Cursor::new(png_bytes)).read_info().ok()?;
    let info = reader.info();
    let prompt = info
        .utf8_text
        .iter()
        .find(|c| c.keyword == PROMPT_CHUNK)?
        .get_text()
        .ok()?;
    let seed = info
        .uncompressed_latin1_text
        .iter()
        .find(|c| c.keyword == SEED_CHUNK)?
        .text
        .parse()
        .ok()?;
    Some((prompt, seed))
}

fn mock_png(prompt: &str, seed: u64, width: u32, height: u32, request: &[u8]) -> Vec<u8> {
    let mut rng = seeded_rng("generate", request);
    let mut pixels = vec![0u8; width as usize * height as usize * 3];
    rng.fill(&mut pixels[..]);
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder
            .add_itxt_chunk(PROMPT_CHUNK.to_string(), prompt.to_string())
            .expect("valid itxt chunk");
        encoder
            .add_text_chunk(SEED_CHUNK.to_string(), seed.to_string())
            .expect("valid text chunk");
        let mut writer = encoder.write_header().expect("png header");
        writer.write_image_data(&pixels).expect("png data");
    }
    out
}
