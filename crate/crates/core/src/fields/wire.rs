//! Velocity wire protocol: JSON bodies over HTTP.
//!
//! ```text
//! POST /v1/velocity        {"latent", "shape", "t", "prompt", "guidance"} -> {"velocity"}
//! POST /v1/velocity_batch  {"queries": [...]}                            -> {"results": [{"velocity"}, ...]}
//! GET  /v1/health                                                        -> {"status": "ok", "dim_hint"}
//! ```
//!
//! Arrays travel either as JSON numbers or as `{"b64": ...}`, the base64 of
//! the little-endian f64 bytes. Errors are `{"error", "kind"}` with status
//! 400 (malformed), 422 (unregistered prompt, bad shape) or 500.
//!
//! [`dispatch`] is the server side of the protocol for any
//! [`VelocityField`]; it carries no transport.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fields::{VelocityField, VelocityQuery};
use crate::latent::LatentVector;

pub const VELOCITY_PATH: &str = "/v1/velocity";
pub const BATCH_PATH: &str = "/v1/velocity_batch";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireArray {
    Numbers(Vec<f64>),
    B64 { b64: String },
}

impl WireArray {
    pub fn numbers(data: &[f64]) -> Self {
        WireArray::Numbers(data.to_vec())
    }

    pub fn b64(data: &[f64]) -> Self {
        let bytes: Vec<u8> = data.iter().flat_map(|x| x.to_le_bytes()).collect();
        WireArray::B64 {
            b64: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> std::result::Result<Vec<f64>, String> {
        match self {
            WireArray::Numbers(v) => Ok(v.clone()),
            WireArray::B64 { b64 } => {
                let bytes = STANDARD.decode(b64).map_err(|e| format!("bad base64: {e}"))?;
                if bytes.len() % 8 != 0 {
                    return Err(format!("b64 payload of {} bytes is not f64-aligned", bytes.len()));
                }
                Ok(bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect())
            }
        }
    }

    fn same_encoding(&self, data: &[f64]) -> Self {
        match self {
            WireArray::Numbers(_) => Self::numbers(data),
            WireArray::B64 { .. } => Self::b64(data),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireQuery {
    pub latent: WireArray,
    pub shape: Vec<usize>,
    pub t: f64,
    pub prompt: String,
    pub guidance: f64,
}

impl WireQuery {
    pub fn encode(q: &VelocityQuery, b64: bool) -> Self {
        let latent = if b64 {
            WireArray::b64(q.latent.data())
        } else {
            WireArray::numbers(q.latent.data())
        };
        Self {
            latent,
            shape: q.latent.shape().to_vec(),
            t: q.t,
            prompt: q.prompt.clone(),
            guidance: q.guidance,
        }
    }

    /// Rebuilds the query; a payload that disagrees with `shape` is a 422.
    pub fn decode(&self) -> std::result::Result<VelocityQuery, WireError> {
        let data = self.latent.decode().map_err(WireError::malformed)?;
        let latent = LatentVector::new(data, self.shape.clone())
            .map_err(|e| WireError::new(422, "bad_shape", e.to_string()))?;
        Ok(VelocityQuery {
            latent,
            t: self.t,
            prompt: self.prompt.clone(),
            guidance: self.guidance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireVelocity {
    pub velocity: WireArray,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireBatchRequest {
    pub queries: Vec<WireQuery>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireBatchResponse {
    pub results: Vec<WireVelocity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireHealth {
    pub status: String,
    pub dim_hint: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireErrorBody {
    pub error: String,
    pub kind: String,
}

/// A protocol-level failure with its HTTP status.
#[derive(Debug, Clone, PartialEq)]
pub struct WireError {
    pub status: u16,
    pub kind: String,
    pub message: String,
}

impl WireError {
    pub fn new(status: u16, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind: kind.to_owned(),
            message: message.into(),
        }
    }

    fn malformed(message: impl Into<String>) -> Self {
        Self::new(400, "malformed", message)
    }

    /// Maps an engine error raised by a backend onto the protocol.
    pub fn from_backend(e: &Error) -> Self {
        match e.root() {
            Error::UnregisteredPrompt(p) => {
                Self::new(422, "unregistered_prompt", format!("unregistered prompt {p:?}"))
            }
            err @ (Error::ShapeMismatch { .. } | Error::InvalidShape { .. }) => {
                Self::new(422, "bad_shape", err.to_string())
            }
            err => Self::new(500, "backend", err.to_string()),
        }
    }

    pub fn body(&self) -> String {
        serde_json::to_string(&WireErrorBody {
            error: self.message.clone(),
            kind: self.kind.clone(),
        })
        .expect("error body serializes")
    }
}

/// Status and JSON body of a protocol response.
#[derive(Debug, Clone, PartialEq)]
pub struct WireResponse {
    pub status: u16,
    pub body: String,
}

impl From<WireError> for WireResponse {
    fn from(e: WireError) -> Self {
        Self {
            status: e.status,
            body: e.body(),
        }
    }
}

fn ok<T: Serialize>(value: &T) -> WireResponse {
    WireResponse {
        status: 200,
        body: serde_json::to_string(value).expect("response serializes"),
    }
}

fn answer(field: &dyn VelocityField, queries: &[WireQuery]) -> std::result::Result<Vec<WireVelocity>, WireError> {
    let decoded = queries
        .iter()
        .map(WireQuery::decode)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let outs = field
        .evaluate_batch(&decoded)
        .map_err(|e| WireError::from_backend(&e))?;
    Ok(queries
        .iter()
        .zip(outs)
        .map(|(q, v)| WireVelocity {
            velocity: q.latent.same_encoding(v.data()),
        })
        .collect())
}

/// Serves one request against `field`. Responses mirror the encoding of the
/// query (numbers in, numbers out; b64 in, b64 out).
pub fn dispatch(
    field: &dyn VelocityField,
    dim_hint: Option<usize>,
    method: &str,
    path: &str,
    body: &str,
) -> WireResponse {
    match (method, path) {
        ("GET", HEALTH_PATH) => ok(&WireHealth {
            status: "ok".into(),
            dim_hint,
        }),
        ("POST", VELOCITY_PATH) => {
            let q: WireQuery = match serde_json::from_str(body) {
                Ok(q) => q,
                Err(e) => return WireError::malformed(e.to_string()).into(),
            };
            match answer(field, std::slice::from_ref(&q)) {
                Ok(mut v) => ok(&v.remove(0)),
                Err(e) => e.into(),
            }
        }
        ("POST", BATCH_PATH) => {
            let req: WireBatchRequest = match serde_json::from_str(body) {
                Ok(q) => q,
                Err(e) => return WireError::malformed(e.to_string()).into(),
            };
            match answer(field, &req.queries) {
                Ok(results) => ok(&WireBatchResponse { results }),
                Err(e) => e.into(),
            }
        }
        _ => WireError::new(404, "not_found", format!("no route {method} {path}")).into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{GaussianField, GaussianScenario};
    use proptest::prelude::*;

    fn field() -> GaussianField {
        GaussianField::new(GaussianScenario::new(2).with_prompt("a", vec![1.0, -1.0])).unwrap()
    }

    proptest! {
        #[test]
        fn b64_is_bit_exact(xs in proptest::collection::vec(any::<f64>(), 0..40)) {
            let back = WireArray::b64(&xs).decode().unwrap();
            prop_assert_eq!(back.len(), xs.len());
            for (a, b) in xs.iter().zip(&back) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn json_numbers_round_trip_exactly(xs in proptest::collection::vec(-1e300f64..1e300, 0..40)) {
            let s = serde_json::to_string(&WireArray::numbers(&xs)).unwrap();
            let back: WireArray = serde_json::from_str(&s).unwrap();
            let back = back.decode().unwrap();
            for (a, b) in xs.iter().zip(&back) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn health() {
        let r = dispatch(&field(), Some(2), "GET", HEALTH_PATH, "");
        assert_eq!(r.status, 200);
        let h: WireHealth = serde_json::from_str(&r.body).unwrap();
        assert_eq!(h.status, "ok");
        assert_eq!(h.dim_hint, Some(2));
    }

    #[test]
    fn error_mapping() {
        let f = field();
        let r = dispatch(&f, None, "POST", VELOCITY_PATH, "{not json");
        assert_eq!(r.status, 400);
        let body = r#"{"latent":[0,0],"shape":[2],"t":0.5,"prompt":"zzz","guidance":1}"#;
        let r = dispatch(&f, None, "POST", VELOCITY_PATH, body);
        assert_eq!(r.status, 422);
        let e: WireErrorBody = serde_json::from_str(&r.body).unwrap();
        assert_eq!(e.kind, "unregistered_prompt");
        let body = r#"{"latent":[0,0,0],"shape":[2],"t":0.5,"prompt":"a","guidance":1}"#;
        assert_eq!(dispatch(&f, None, "POST", VELOCITY_PATH, body).status, 422);
        let body = r#"{"latent":[0,0],"shape":[2],"t":7.0,"prompt":"a","guidance":1}"#;
        assert_eq!(dispatch(&f, None, "POST", VELOCITY_PATH, body).status, 500);
        assert_eq!(dispatch(&f, None, "GET", "/nope", "").status, 404);
    }

    #[test]
    fn batch_preserves_order_and_encoding() {
        let f = field();
        let qs: Vec<WireQuery> = (0..4)
            .map(|i| {
                let z = LatentVector::from_vec(vec![i as f64, 0.5]).unwrap();
                WireQuery::encode(&VelocityQuery::new(z, 0.3, "a", 1.0), i % 2 == 0)
            })
            .collect();
        let body = serde_json::to_string(&WireBatchRequest { queries: qs.clone() }).unwrap();
        let r = dispatch(&f, None, "POST", BATCH_PATH, &body);
        assert_eq!(r.status, 200);
        let resp: WireBatchResponse = serde_json::from_str(&r.body).unwrap();
        for (q, res) in qs.iter().zip(&resp.results) {
            let expect = f.evaluate(&q.decode().unwrap()).unwrap();
            assert_eq!(res.velocity.decode().unwrap(), expect.data());
            assert_eq!(
                matches!(res.velocity, WireArray::B64 { .. }),
                matches!(q.latent, WireArray::B64 { .. })
            );
        }
    }
}
