//! HTTP client for the velocity wire protocol.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use crate::error::{RemoteError, Result};
use crate::fields::wire::{
    WireArray, WireBatchRequest, WireBatchResponse, WireErrorBody, WireQuery, WireVelocity,
    BATCH_PATH, VELOCITY_PATH,
};
use crate::fields::{VelocityField, VelocityQuery};
use crate::latent::LatentVector;

/// Environment variable holding the default server endpoint.
pub const ENDPOINT_ENV: &str = "FLOWDC_VELOCITY_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Json,
    #[default]
    B64,
}

fn default_timeout() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    2
}
fn default_batch_limit() -> usize {
    64
}
fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteFieldConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    /// Extra attempts after a transport failure. HTTP error statuses are
    /// never retried.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Maximum queries per batch request.
    #[serde(default = "default_batch_limit")]
    pub batch_limit: usize,
    #[serde(default)]
    pub encoding: Encoding,
    /// Requests one client may have outstanding at once; further callers
    /// block until a slot frees up.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

impl RemoteFieldConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout_ms: default_timeout(),
            retries: default_retries(),
            batch_limit: default_batch_limit(),
            encoding: Encoding::default(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.timeout_ms == 0 {
            return Err(Error::Config("remote timeout_ms must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("remote max_in_flight must be positive".into()));
        }
        if self.batch_limit == 0 {
            return Err(Error::Config("remote batch_limit must be positive".into()));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(Error::Config(format!("endpoint {:?} is not an http URL", self.endpoint)));
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.endpoint.trim_end_matches('/'), path)
    }
}

/// Remote [`VelocityField`].
pub struct RemoteField {
    cfg: RemoteFieldConfig,
    agent: Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

struct Slot<'a>(&'a RemoteField);

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("in-flight counter poisoned") -= 1;
        self.0.slot_freed.notify_one();
    }
}

impl RemoteField {
    pub fn new(cfg: RemoteFieldConfig) -> Result<Self> {
        cfg.validate()?;
        let agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            cfg,
            agent,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
        })
    }

    fn acquire(&self) -> Slot<'_> {
        let mut n = self.in_flight.lock().expect("in-flight counter poisoned");
        while *n >= self.cfg.max_in_flight {
            n = self.slot_freed.wait(n).expect("in-flight counter poisoned");
        }
        *n += 1;
        Slot(self)
    }

    pub fn config(&self) -> &RemoteFieldConfig {
        &self.cfg
    }

    fn post(&self, path: &str, body: &str) -> Result<String, RemoteError> {
        let url = self.cfg.url(path);
        let _slot = self.acquire();
        let attempts = self.cfg.retries + 1;
        let mut last = None;
        for attempt in 1..=attempts {
            let sent = self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(body);
            let mut resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    last = Some((attempt, e));
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = match resp.body_mut().read_to_string() {
                Ok(t) => t,
                Err(e) => {
                    last = Some((attempt, e));
                    continue;
                }
            };
            return match status {
                200..=299 => Ok(text),
                400..=499 => {
                    let (kind, message) = error_body(&text);
                    Err(RemoteError::Rejected {
                        status,
                        kind,
                        message,
                    })
                }
                _ => {
                    let (kind, message) = error_body(&text);
                    Err(RemoteError::Server {
                        status,
                        kind,
                        message,
                    })
                }
            };
        }
        let (attempts, e) = last.expect("at least one attempt");
        Err(match e {
            ureq::Error::Timeout(_) => RemoteError::Timeout { attempts },
            other => RemoteError::Transport {
                attempts,
                message: other.to_string(),
            },
        })
    }

    fn encode(&self, q: &VelocityQuery) -> WireQuery {
        WireQuery::encode(q, self.cfg.encoding == Encoding::B64)
    }

    fn evaluate_one(&self, q: &VelocityQuery) -> Result<LatentVector, RemoteError> {
        let body = serde_json::to_string(&self.encode(q)).expect("query serializes");
        let text = self.post(VELOCITY_PATH, &body)?;
        let resp: WireVelocity =
            serde_json::from_str(&text).map_err(|e| RemoteError::Malformed(e.to_string()))?;
        into_latent(q, &resp.velocity)
    }

    fn evaluate_chunk(&self, qs: &[VelocityQuery]) -> Result<Vec<LatentVector>, RemoteError> {
        let req = WireBatchRequest {
            queries: qs.iter().map(|q| self.encode(q)).collect(),
        };
        let body = serde_json::to_string(&req).expect("batch serializes");
        let text = self.post(BATCH_PATH, &body)?;
        let resp: WireBatchResponse =
            serde_json::from_str(&text).map_err(|e| RemoteError::Malformed(e.to_string()))?;
        if resp.results.len() != qs.len() {
            return Err(RemoteError::Malformed(format!(
                "{} results for {} queries",
                resp.results.len(),
                qs.len()
            )));
        }
        // Results correlate with queries by position in the batch.
        qs.iter()
            .zip(&resp.results)
            .map(|(q, r)| into_latent(q, &r.velocity))
            .collect()
    }
}

fn error_body(text: &str) -> (String, String) {
    match serde_json::from_str::<WireErrorBody>(text) {
        Ok(b) => (b.kind, b.error),
        Err(_) => ("unknown".into(), text.to_owned()),
    }
}

fn into_latent(q: &VelocityQuery, arr: &WireArray) -> Result<LatentVector, RemoteError> {
    let data = arr.decode().map_err(RemoteError::Malformed)?;
    if data.len() != q.latent.len() {
        return Err(RemoteError::ShapeMismatch {
            expected: q.latent.len(),
            actual: data.len(),
        });
    }
    LatentVector::new(data, q.latent.shape().to_vec())
        .map_err(|e| RemoteError::Malformed(e.to_string()))
}

impl VelocityField for RemoteField {
    fn evaluate(&self, query: &VelocityQuery) -> Result<LatentVector> {
        Ok(self.evaluate_one(query)?)
    }

    fn evaluate_batch(&self, queries: &[VelocityQuery]) -> Result<Vec<LatentVector>> {
        let mut out = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(self.cfg.batch_limit) {
            out.extend(self.evaluate_chunk(chunk)?);
        }
        Ok(out)
    }
}

/// One-shot query against a remote server.
pub fn remote_evaluate(cfg: &RemoteFieldConfig, query: &VelocityQuery) -> Result<LatentVector> {
    RemoteField::new(cfg.clone())?.evaluate(query)
}
