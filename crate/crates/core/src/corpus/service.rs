//! Embedding providers: the cache, and the HTTP sidecar behind it.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::cache::{text_hash, EmbeddingCache, TextHash};
use super::{repr_from_cache, text_units};
use crate::domain::{DenseVec, DocRepr, DocumentInput};
use crate::error::{Error, Result};

/// Response body of `POST /embed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
    pub model: String,
}

/// Anything that turns a batch of texts into one vector per text.
pub trait EmbeddingService: Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<EmbedResponse>;
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
}

/// Client for the embedding sidecar's `POST /embed` endpoint.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingService {
    endpoint: String,
    agent: ureq::Agent,
    attempts: u32,
    backoff: Duration,
}

impl HttpEmbeddingService {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(Duration::from_secs(300))
            .build();
        HttpEmbeddingService {
            endpoint: format!("{}/embed", base_url.trim_end_matches('/')),
            agent,
            attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }

    /// Initial delay between retries; doubles after each failed attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn post_once(&self, texts: &[String]) -> std::result::Result<EmbedResponse, (bool, String)> {
        match self.agent.post(&self.endpoint).send_json(EmbedRequest { texts }) {
            Ok(resp) => resp
                .into_json::<EmbedResponse>()
                .map_err(|e| (false, format!("malformed response: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp
                    .into_json::<ErrorBody>()
                    .map(|b| b.error)
                    .unwrap_or_else(|_| "no error body".to_owned());
                // Server-side failures are worth retrying; client errors are not.
                Err((code >= 500, format!("HTTP {code}: {detail}")))
            }
            Err(ureq::Error::Transport(t)) => Err((true, t.to_string())),
        }
    }
}

impl EmbeddingService for HttpEmbeddingService {
    fn embed_batch(&self, texts: &[String]) -> Result<EmbedResponse> {
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match self.post_once(texts) {
                Ok(r) => return Ok(r),
                Err((retry, msg)) => {
                    log::warn!("embedding request attempt {attempt} failed: {msg}");
                    last = msg;
                    if !retry {
                        break;
                    }
                    if attempt < self.attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(Error::Service(format!("{}: {last}", self.endpoint)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            batch_size: 32,
            max_in_flight: 4,
        }
    }
}

fn check_response(resp: &EmbedResponse, expected: usize) -> Result<()> {
    if resp.vectors.len() != expected {
        return Err(Error::Service(format!(
            "asked for {expected} vectors, got {}",
            resp.vectors.len()
        )));
    }
    if let Some(v) = resp.vectors.iter().find(|v| v.len() != resp.dim) {
        return Err(Error::Service(format!(
            "response declares dim {} but carries a vector of length {}",
            resp.dim,
            v.len()
        )));
    }
    Ok(())
}

/// Produce a representation for every document.
///
/// Units already in the cache are reused, including units whose text
/// matches a cached unit of another document. Without a service, any
/// remaining miss is an error listing the missing units; with one, missing
/// texts are embedded in batches and written through to the cache.
pub fn embed(
    docs: &[DocumentInput],
    cache: &mut EmbeddingCache,
    service: Option<&dyn EmbeddingService>,
    opts: EmbedOptions,
) -> Result<Vec<DocRepr>> {
    if opts.batch_size == 0 || opts.max_in_flight == 0 {
        return Err(Error::InvalidParameter("batch size and parallelism must be >= 1".into()));
    }
    let mut missing: Vec<(String, String, TextHash)> = Vec::new();
    let mut to_embed: BTreeMap<TextHash, String> = BTreeMap::new();
    for doc in docs {
        for (unit, text) in text_units(doc) {
            if cache.contains(&doc.id, &unit) {
                continue;
            }
            let hash = text_hash(text);
            if let Some(v) = cache.vector_for_hash(&hash).cloned() {
                cache.insert(&doc.id, &unit, hash, v)?;
                continue;
            }
            to_embed.entry(hash).or_insert_with(|| text.to_owned());
            missing.push((doc.id.clone(), unit, hash));
        }
    }

    if !missing.is_empty() {
        let Some(service) = service else {
            return Err(Error::CacheMiss(
                missing.iter().map(|(d, u, _)| format!("{d}/{u}")).collect(),
            ));
        };
        let (hashes, texts): (Vec<TextHash>, Vec<String>) = to_embed.into_iter().unzip();
        let batches: Vec<&[String]> = texts.chunks(opts.batch_size).collect();
        let mut responses: Vec<EmbedResponse> = Vec::with_capacity(batches.len());
        for wave in batches.chunks(opts.max_in_flight) {
            let results: Vec<Result<EmbedResponse>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| s.spawn(move || service.embed_batch(batch)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Service("worker panicked".into()))))
                    .collect()
            });
            for (batch, r) in wave.iter().zip(results) {
                let r = r?;
                check_response(&r, batch.len())?;
                responses.push(r);
            }
        }

        let mut vectors: BTreeMap<TextHash, DenseVec> = BTreeMap::new();
        let mut hash_iter = hashes.iter();
        for resp in responses {
            cache.bind(resp.dim, &resp.model)?;
            for v in resp.vectors {
                let hash = hash_iter.next().expect("one vector per text");
                vectors.insert(*hash, DenseVec::new(v)?);
            }
        }
        for (doc_id, unit, hash) in &missing {
            cache.insert(doc_id, unit, *hash, vectors[hash].clone())?;
        }
    }
    cache.flush()?;

    docs.iter().map(|d| repr_from_cache(d, cache)).collect()
}
