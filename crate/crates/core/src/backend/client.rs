use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use super::cache::sha256_hex;
use super::protocol::decode_base64;
use super::{
    BackendEndpoint, BackendError, CacheKey, EmbedImageRequest, EmbedResponse, EmbedTextRequest, Embedding,
    GenerateRequest, GenerateResponse, GeneratedImage, ImageParams, InFlightLimiter, JudgeRequest, JudgeResponse,
    ParaphraseRequest, ParaphraseResponse, ResponseCache, RewardRequest, RewardResponse, Route, ScoreKind,
    ScoreResult, TranslateRequest, TranslateResponse, Transport, Verdict, VqaRequest, VqaResponse,
};
use crate::prompt::LanguageCode;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    /// Requests that reached the transport, counting each retry attempt.
    pub upstream_requests: u64,
    pub cache_hits: u64,
}

/// Typed client for one endpoint. Cheap to share behind an `Arc`.
pub struct BackendClient {
    endpoint: BackendEndpoint,
    transport: Arc<dyn Transport>,
    cache: Arc<ResponseCache>,
    limiter: InFlightLimiter,
    upstream: AtomicU64,
    hits: AtomicU64,
}

impl std::fmt::Debug for BackendClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendClient")
            .field("endpoint", &self.endpoint.base_url)
            .finish_non_exhaustive()
    }
}

impl BackendClient {
    pub fn new(
        endpoint: BackendEndpoint,
        transport: Arc<dyn Transport>,
        cache: Arc<ResponseCache>,
    ) -> Result<Self, BackendError> {
        endpoint.validate()?;
        Ok(Self {
            limiter: InFlightLimiter::new(endpoint.max_in_flight),
            endpoint,
            transport,
            cache,
            upstream: AtomicU64::new(0),
            hits: AtomicU64::new(0),
        })
    }

    pub fn endpoint(&self) -> &BackendEndpoint {
        &self.endpoint
    }

    pub fn model_key(&self) -> &str {
        self.endpoint.model_key()
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            upstream_requests: self.upstream.load(Ordering::Relaxed),
            cache_hits: self.hits.load(Ordering::Relaxed),
        }
    }

    fn send(&self, route: Route, body: &Value) -> Result<Value, BackendError> {
        let policy = &self.endpoint.retry;
        let mut attempt = 1;
        loop {
            let result = {
                let _permit = self.limiter.acquire();
                self.upstream.fetch_add(1, Ordering::Relaxed);
                self.transport.post(route, body, self.endpoint.timeout())
            };
            match result {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < policy.max_attempts => {
                    log::debug!("{route} attempt {attempt} failed: {e}; retrying");
                    std::thread::sleep(policy.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(BackendError::from_transport(route, attempt, e)),
            }
        }
    }

    /// Sends `request`, validating the decoded response with `check` before
    /// anything is cached. `key_payload` identifies the logical request.
    fn cached<Req, Resp, Out>(
        &self,
        route: Route,
        key_payload: Option<Value>,
        request: &Req,
        check: impl Fn(Resp) -> Result<Out, BackendError>,
    ) -> Result<Out, BackendError>
    where
        Req: Serialize,
        Resp: DeserializeOwned,
    {
        let key = key_payload.map(|p| CacheKey::new(route.name(), &p, self.model_key()));
        if let Some(key) = &key {
            if let Some(hit) = self.cache.get(key) {
                if let Ok(out) = decode::<Resp>(hit).and_then(&check) {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(out);
                }
            }
        }
        let body = serde_json::to_value(request).expect("request serializes");
        let raw = self.send(route, &body)?;
        let out = check(decode::<Resp>(raw.clone())?)?;
        if let Some(key) = &key {
            self.cache.put(key, route.name(), self.model_key(), &raw)?;
        }
        Ok(out)
    }

    pub fn translate(&self, text: &str, source: &LanguageCode, target: &LanguageCode) -> Result<String, BackendError> {
        if source.code() == target.code() {
            return Err(BackendError::InvalidLanguagePair(source.code().to_string()));
        }
        nonempty(text, "text")?;
        let req = TranslateRequest {
            text: text.to_string(),
            source_lang: source.code().to_string(),
            target_lang: target.code().to_string(),
        };
        let key = serde_json::to_value(&req).expect("serializes");
        self.cached(Route::Translate, Some(key), &req, |r: TranslateResponse| {
            if r.text.trim().is_empty() {
                Err(BackendError::EmptyTranslation)
            } else {
                Ok(r.text)
            }
        })
    }

    pub fn paraphrase(&self, text: &str, n: usize) -> Result<Vec<String>, BackendError> {
        if n == 0 {
            return Err(BackendError::InvalidRequest("paraphrase count must be at least 1".into()));
        }
        nonempty(text, "text")?;
        let req = ParaphraseRequest { text: text.to_string(), n };
        let key = serde_json::to_value(&req).expect("serializes");
        self.cached(Route::Paraphrase, Some(key), &req, |r: ParaphraseResponse| {
            let texts: Vec<String> = r.texts.into_iter().filter(|t| !t.trim().is_empty()).collect();
            if texts.len() < n {
                return Err(BackendError::TooFewParaphrases { expected: n, got: texts.len() });
            }
            Ok(texts.into_iter().take(n).collect())
        })
    }

    pub fn generate_image(&self, prompt: &str, seed: u64, params: ImageParams) -> Result<GeneratedImage, BackendError> {
        nonempty(prompt, "prompt")?;
        if params.width == 0 || params.height == 0 {
            return Err(BackendError::InvalidRequest("image dimensions must be positive".into()));
        }
        let req = GenerateRequest {
            prompt: prompt.to_string(),
            seed,
            width: params.width,
            height: params.height,
        };
        let key = self
            .endpoint
            .cache_generation
            .then(|| serde_json::to_value(&req).expect("serializes"));
        let backend_id = self.model_key().to_string();
        self.cached(Route::Generate, key, &req, |r: GenerateResponse| {
            let image = GeneratedImage::from_png(decode_base64(&r.image_b64)?, seed, backend_id.clone())?;
            if image.width != r.width || image.height != r.height {
                return Err(BackendError::Schema(format!(
                    "declared {}x{} but PNG is {}x{}",
                    r.width, r.height, image.width, image.height
                )));
            }
            Ok(image)
        })
    }

    fn check_embedding(&self, r: EmbedResponse) -> Result<Embedding, BackendError> {
        if r.embedding.len() != r.dim {
            return Err(BackendError::DimensionMismatch {
                expected: r.dim,
                got: r.embedding.len(),
            });
        }
        if let Some(expected) = self.endpoint.embed_dim {
            if r.dim != expected {
                return Err(BackendError::DimensionMismatch { expected, got: r.dim });
            }
        }
        Embedding::new(r.embedding, r.model_id)
    }

    pub fn embed_text(&self, text: &str) -> Result<Embedding, BackendError> {
        nonempty(text, "text")?;
        let req = EmbedTextRequest { text: text.to_string() };
        let key = serde_json::to_value(&req).expect("serializes");
        self.cached(Route::EmbedText, Some(key), &req, |r| self.check_embedding(r))
    }

    /// Embeds raw PNG bytes. The image is verified locally before any I/O.
    pub fn embed_png(&self, png_bytes: &[u8]) -> Result<Embedding, BackendError> {
        super::protocol::png_dimensions(png_bytes)?;
        let image_b64 = base64_encode(png_bytes);
        let req = EmbedImageRequest { image_b64 };
        let key = json!({ "image_sha256": sha256_hex(png_bytes) });
        self.cached(Route::EmbedImage, Some(key), &req, |r| self.check_embedding(r))
    }

    pub fn embed_image(&self, image: &GeneratedImage) -> Result<Embedding, BackendError> {
        self.embed_png(&image.png_bytes)
    }

    pub fn score_image(&self, kind: ScoreKind, prompt_or_question: &str, png_bytes: &[u8]) -> Result<ScoreResult, BackendError> {
        nonempty(prompt_or_question, "prompt")?;
        super::protocol::png_dimensions(png_bytes)?;
        let image_b64 = base64_encode(png_bytes);
        let digest = sha256_hex(png_bytes);
        match kind {
            ScoreKind::Judge => {
                let template_id = self.endpoint.judge_template_id.clone();
                let key = json!({"prompt": prompt_or_question, "image_sha256": digest, "template_id": template_id});
                let req = JudgeRequest {
                    prompt: prompt_or_question.to_string(),
                    image_b64,
                    template_id,
                };
                self.cached(Route::Judge, Some(key), &req, |r: JudgeResponse| {
                    Verdict::parse(&r.verdict).map(ScoreResult::Verdict)
                })
            }
            ScoreKind::Reward => {
                let key = json!({"prompt": prompt_or_question, "image_sha256": digest});
                let req = RewardRequest {
                    prompt: prompt_or_question.to_string(),
                    image_b64,
                };
                self.cached(Route::Reward, Some(key), &req, |r: RewardResponse| {
                    if r.score.is_finite() {
                        Ok(ScoreResult::Score(r.score))
                    } else {
                        Err(BackendError::Schema("non-finite reward".into()))
                    }
                })
            }
            ScoreKind::Vqa => {
                let key = json!({"question": prompt_or_question, "image_sha256": digest});
                let req = VqaRequest {
                    question: prompt_or_question.to_string(),
                    image_b64,
                };
                self.cached(Route::Vqa, Some(key), &req, |r: VqaResponse| {
                    if (0.0..=1.0).contains(&r.probability) {
                        Ok(ScoreResult::Probability(r.probability))
                    } else {
                        Err(BackendError::ProbabilityOutOfRange(r.probability))
                    }
                })
            }
        }
    }

    pub fn judge(&self, prompt: &str, png_bytes: &[u8]) -> Result<Verdict, BackendError> {
        match self.score_image(ScoreKind::Judge, prompt, png_bytes)? {
            ScoreResult::Verdict(v) => Ok(v),
            _ => unreachable!("judge returns a verdict"),
        }
    }

    pub fn reward(&self, prompt: &str, png_bytes: &[u8]) -> Result<f64, BackendError> {
        match self.score_image(ScoreKind::Reward, prompt, png_bytes)? {
            ScoreResult::Score(s) => Ok(s),
            _ => unreachable!("reward returns a score"),
        }
    }

    pub fn vqa(&self, question: &str, png_bytes: &[u8]) -> Result<f64, BackendError> {
        match self.score_image(ScoreKind::Vqa, question, png_bytes)? {
            ScoreResult::Probability(p) => Ok(p),
            _ => unreachable!("vqa returns a probability"),
        }
    }
}

fn base64_encode(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn nonempty(s: &str, what: &str) -> Result<(), BackendError> {
    if s.trim().is_empty() {
        Err(BackendError::InvalidRequest(format!("{what} is empty")))
    } else {
        Ok(())
    }
}

fn decode<T: DeserializeOwned>(v: Value) -> Result<T, BackendError> {
    serde_json::from_value(v).map_err(|e| BackendError::Schema(e.to_string()))
}
