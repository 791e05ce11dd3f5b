//! Pluggable semantic-equivalence judge.
//!
//! Three backends share one trait: a deterministic scripted stub for tests,
//! a rule-based fallback (normalized exact match), and a remote HTTP backend
//! speaking a minimal JSON protocol (`POST /judge`).

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge request timed out")]
    Timeout,
    #[error("judge protocol error: {0}")]
    ProtocolError(String),
    #[error("judge unavailable: {0}")]
    Unavailable(String),
}

/// A judge's verdict on a (reference, candidate) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub equivalent: bool,
    /// Confidence in [0, 1].
    pub confidence: f64,
    pub latency_ms: u64,
}

/// Semantic-equivalence judge, shareable across concurrent verifications.
pub trait JudgeClient: Send + Sync {
    fn judge(
        &self,
        question: &str,
        reference: &str,
        candidate: &str,
        domain: &str,
    ) -> Result<JudgeVerdict, JudgeError>;
}

/// Normalize for exact matching: trim, collapse whitespace, casefold.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Scripted verdicts from a preloaded table keyed by (reference, candidate);
/// pairs absent from the table are non-equivalent. The table is immutable
/// after load.
#[derive(Debug, Default)]
pub struct StubJudge {
    table: HashMap<(String, String), bool>,
}

#[derive(Debug, Deserialize)]
struct StubEntry {
    reference: String,
    candidate: String,
    equivalent: bool,
}

impl StubJudge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_entry(mut self, reference: &str, candidate: &str, equivalent: bool) -> Self {
        self.table
            .insert((reference.to_string(), candidate.to_string()), equivalent);
        self
    }

    /// Load a table from JSON Lines `{"reference","candidate","equivalent"}`.
    pub fn from_jsonl(path: &Path) -> Result<Self, std::io::Error> {
        let file = std::fs::File::open(path)?;
        let mut table = HashMap::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: StubEntry = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), lineno + 1),
                )
            })?;
            table.insert((entry.reference, entry.candidate), entry.equivalent);
        }
        Ok(Self { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl JudgeClient for StubJudge {
    fn judge(
        &self,
        _question: &str,
        reference: &str,
        candidate: &str,
        _domain: &str,
    ) -> Result<JudgeVerdict, JudgeError> {
        let equivalent = self
            .table
            .get(&(reference.to_string(), candidate.to_string()))
            .copied()
            .unwrap_or(false);
        Ok(JudgeVerdict {
            equivalent,
            confidence: 1.0,
            latency_ms: 0,
        })
    }
}

/// Rule-based fallback: normalized exact match. Reflexive by construction.
#[derive(Debug, Default, Clone, Copy)]
pub struct FallbackJudge;

impl JudgeClient for FallbackJudge {
    fn judge(
        &self,
        _question: &str,
        reference: &str,
        candidate: &str,
        _domain: &str,
    ) -> Result<JudgeVerdict, JudgeError> {
        Ok(JudgeVerdict {
            equivalent: normalize_text(reference) == normalize_text(candidate),
            confidence: 1.0,
            latency_ms: 0,
        })
    }
}

#[derive(Serialize)]
struct JudgeRequestBody<'a> {
    domain: &'a str,
    question: &'a str,
    reference: &'a str,
    candidate: &'a str,
}

#[derive(Deserialize)]
struct JudgeResponseBody {
    equivalent: bool,
    confidence: f64,
}

/// Remote judge over HTTP: `POST {base_url}/judge` with a JSON body
/// `{"domain","question","reference","candidate"}`, expecting
/// `{"equivalent": bool, "confidence": number}`.
pub struct RemoteJudge {
    agent: ureq::Agent,
    endpoint: String,
    timeout: Duration,
    retries: u32,
}

impl RemoteJudge {
    /// `base_url` without the trailing `/judge` path.
    pub fn new(base_url: &str, timeout: Duration, retries: u32) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            endpoint: format!("{}/judge", base_url.trim_end_matches('/')),
            timeout,
            retries,
        }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn attempt(&self, body: &JudgeRequestBody) -> Result<JudgeResponseBody, JudgeError> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(map_transport_error)?;
        let parsed: JudgeResponseBody = response
            .body_mut()
            .read_json()
            .map_err(|e| JudgeError::ProtocolError(e.to_string()))?;
        if !(0.0..=1.0).contains(&parsed.confidence) {
            return Err(JudgeError::ProtocolError(format!(
                "confidence {} outside [0,1]",
                parsed.confidence
            )));
        }
        Ok(parsed)
    }
}

fn map_transport_error(e: ureq::Error) -> JudgeError {
    match e {
        ureq::Error::Timeout(_) => JudgeError::Timeout,
        ureq::Error::StatusCode(code) if code >= 500 => {
            JudgeError::Unavailable(format!("status {code}"))
        }
        ureq::Error::Io(io) => JudgeError::Unavailable(io.to_string()),
        ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => {
            JudgeError::Unavailable(e.to_string())
        }
        other => JudgeError::ProtocolError(other.to_string()),
    }
}

impl JudgeClient for RemoteJudge {
    fn judge(
        &self,
        question: &str,
        reference: &str,
        candidate: &str,
        domain: &str,
    ) -> Result<JudgeVerdict, JudgeError> {
        let body = JudgeRequestBody {
            domain,
            question,
            reference,
            candidate,
        };
        let started = Instant::now();
        let mut last_err = None;
        // retries bound transient failures only; no backoff, so total wall
        // time stays within (retries + 1) * timeout
        for _ in 0..=self.retries {
            match self.attempt(&body) {
                Ok(parsed) => {
                    return Ok(JudgeVerdict {
                        equivalent: parsed.equivalent,
                        confidence: parsed.confidence,
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(e @ JudgeError::ProtocolError(_)) => return Err(e),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or(JudgeError::Unavailable("no attempt made".into())))
    }
}

/// Exact-key verdict cache around another backend; config-gated, off by
/// default so tests stay deterministic without hidden state.
pub struct CachingJudge<J: JudgeClient> {
    inner: J,
    cache: Mutex<HashMap<(String, String, String, String), JudgeVerdict>>,
}

impl<J: JudgeClient> CachingJudge<J> {
    pub fn new(inner: J) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl<J: JudgeClient> JudgeClient for CachingJudge<J> {
    fn judge(
        &self,
        question: &str,
        reference: &str,
        candidate: &str,
        domain: &str,
    ) -> Result<JudgeVerdict, JudgeError> {
        let key = (
            question.to_string(),
            reference.to_string(),
            candidate.to_string(),
            domain.to_string(),
        );
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let verdict = self.inner.judge(question, reference, candidate, domain)?;
        self.cache.lock().unwrap().insert(key, verdict.clone());
        Ok(verdict)
    }
}
