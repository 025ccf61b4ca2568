//! JSON-over-HTTP teacher client.
//!
//! Request: `{"pairs":[{"id","q","s"}]}`. Response: `{"scores":[{"id","z":[a,b]}]}`.

use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PairText, TeacherScore, TeacherScorer, TeacherStore};
use crate::distill::Logits;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub max_batch: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            max_batch: 256,
            retries: 3,
            backoff_ms: 200,
            timeout_ms: 30_000,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    pairs: &'a [PairText],
}

#[derive(Deserialize)]
struct Response {
    scores: Vec<ResponseScore>,
}

#[derive(Deserialize)]
struct ResponseScore {
    id: String,
    z: Vec<f64>,
}

pub struct RemoteTeacher {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    cache: Mutex<TeacherStore>,
}

enum Failure {
    Transient(String),
    Fatal(Error),
}

impl RemoteTeacher {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        Self::with_cache(config, TeacherStore::default())
    }

    /// Starts from an existing store; cached ids are not re-requested.
    pub fn with_cache(config: RemoteConfig, cache: TeacherStore) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::Config("teacher endpoint is empty".into()));
        }
        if config.max_batch == 0 || config.max_in_flight == 0 {
            return Err(Error::Config("max_batch and max_in_flight must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Remote(format!("building HTTP client: {e}")))?;
        Ok(RemoteTeacher {
            config,
            client,
            cache: Mutex::new(cache),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Snapshot of every score fetched or preloaded so far.
    pub fn cache(&self) -> TeacherStore {
        self.cache.lock().unwrap().clone()
    }

    /// Scores one batch of at most `max_batch` pairs and merges the results
    /// into the cache.
    pub fn score_remote(&self, batch: &[PairText]) -> Result<Vec<TeacherScore>> {
        if batch.len() > self.config.max_batch {
            return Err(Error::InvalidInput(format!(
                "batch of {} exceeds the configured maximum {}",
                batch.len(),
                self.config.max_batch
            )));
        }
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let scores = self.fetch_with_retry(batch)?;
        let mut cache = self.cache.lock().unwrap();
        for s in &scores {
            cache.upsert(s.clone())?;
        }
        Ok(scores)
    }

    /// Scores any number of pairs: cached ids are served locally, the rest
    /// go out in concurrent batches and are merged back in input order.
    pub fn score_all(&self, pairs: &[PairText]) -> Result<Vec<TeacherScore>> {
        let mut out: Vec<Option<TeacherScore>> = {
            let cache = self.cache.lock().unwrap();
            pairs.iter().map(|p| cache.get(&p.id).cloned()).collect()
        };
        let missing: Vec<usize> = (0..pairs.len()).filter(|&i| out[i].is_none()).collect();
        let chunks: Vec<&[usize]> = missing.chunks(self.config.max_batch).collect();
        for wave in chunks.chunks(self.config.max_in_flight) {
            let results: Vec<Result<Vec<TeacherScore>>> = thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|idx| {
                        let batch: Vec<PairText> = idx.iter().map(|&i| pairs[i].clone()).collect();
                        s.spawn(move || self.score_remote(&batch))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("teacher worker panicked"))
                    .collect()
            });
            for (idx, res) in wave.iter().zip(results) {
                for (&i, score) in idx.iter().zip(res?) {
                    out[i] = Some(score);
                }
            }
        }
        Ok(out.into_iter().map(|s| s.expect("every pair scored")).collect())
    }

    fn fetch_with_retry(&self, batch: &[PairText]) -> Result<Vec<TeacherScore>> {
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                log::warn!("teacher request failed ({last}); retry {attempt} in {delay:?}");
                thread::sleep(delay);
                delay *= 2;
            }
            match self.fetch(batch) {
                Ok(scores) => return Ok(scores),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => last = msg,
            }
        }
        Err(Error::Remote(format!(
            "{}: giving up after {} retries: {last}",
            self.config.endpoint, self.config.retries
        )))
    }

    fn fetch(&self, batch: &[PairText]) -> std::result::Result<Vec<TeacherScore>, Failure> {
        let resp = self
            .client
            .post(&self.config.endpoint)
            .json(&Request { pairs: batch })
            .send()
            .map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(Error::Remote(format!("HTTP {status}"))));
        }
        let body: Response = resp
            .json()
            .map_err(|e| Failure::Fatal(Error::Remote(format!("malformed response: {e}"))))?;
        parse_scores(batch, body).map_err(Failure::Fatal)
    }
}

fn parse_scores(batch: &[PairText], body: Response) -> Result<Vec<TeacherScore>> {
    if body.scores.len() != batch.len() {
        return Err(Error::Remote(format!(
            "malformed response: {} scores for {} pairs",
            body.scores.len(),
            batch.len()
        )));
    }
    batch
        .iter()
        .zip(body.scores)
        .map(|(p, s)| {
            if s.id != p.id {
                return Err(Error::Remote(format!(
                    "malformed response: expected id `{}`, got `{}`",
                    p.id, s.id
                )));
            }
            let [a, b] = s.z[..] else {
                return Err(Error::Remote(format!(
                    "malformed response: `{}` has {} logits",
                    s.id,
                    s.z.len()
                )));
            };
            let logits = Logits::new(a, b).map_err(|e| Error::Remote(format!("malformed response: {e}")))?;
            TeacherScore::from_logits(s.id, logits)
        })
        .collect()
}

impl TeacherScorer for RemoteTeacher {
    fn score_pairs(&self, pairs: &[PairText]) -> Result<Vec<TeacherScore>> {
        self.score_all(pairs)
    }
}
