//! Velocity-field backends.
//!
//! Everything the engine knows about a flow model goes through
//! [`VelocityField`]: a query carries the latent, the time, the prompt and
//! the guidance scale, and the backend decides what guidance means.

mod gaussian;
mod jitter;
mod remote;
pub mod wire;

pub use gaussian::{gaussian_velocity, GaussianField, GaussianScenario, PromptDistribution};
pub use jitter::JitteredField;
pub use remote::{remote_evaluate, Encoding, RemoteField, RemoteFieldConfig, ENDPOINT_ENV};

use crate::error::{Error, Result};
use crate::latent::LatentVector;

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityQuery {
    pub latent: LatentVector,
    pub t: f64,
    pub prompt: String,
    pub guidance: f64,
}

impl VelocityQuery {
    pub fn new(latent: LatentVector, t: f64, prompt: &str, guidance: f64) -> Self {
        Self {
            latent,
            t,
            prompt: prompt.to_owned(),
            guidance,
        }
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "velocity query (t={}, prompt={:?}, guidance={})",
            self.t, self.prompt, self.guidance
        )
    }
}

/// A prompt-conditioned velocity field `v(z, t, prompt)`.
pub trait VelocityField: Send + Sync {
    fn evaluate(&self, query: &VelocityQuery) -> Result<LatentVector>;

    /// Results come back in query order.
    fn evaluate_batch(&self, queries: &[VelocityQuery]) -> Result<Vec<LatentVector>> {
        queries.iter().map(|q| self.evaluate(q)).collect()
    }
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn evaluate(&self, query: &VelocityQuery) -> Result<LatentVector> {
        (**self).evaluate(query)
    }

    fn evaluate_batch(&self, queries: &[VelocityQuery]) -> Result<Vec<LatentVector>> {
        (**self).evaluate_batch(queries)
    }
}

impl<F: VelocityField + ?Sized> VelocityField for Box<F> {
    fn evaluate(&self, query: &VelocityQuery) -> Result<LatentVector> {
        (**self).evaluate(query)
    }

    fn evaluate_batch(&self, queries: &[VelocityQuery]) -> Result<Vec<LatentVector>> {
        (**self).evaluate_batch(queries)
    }
}

/// Checks a backend answer against its query.
pub(crate) fn validate_output(query: &VelocityQuery, out: &LatentVector) -> Result<()> {
    if out.shape() != query.latent.shape() {
        return Err(Error::ShapeMismatch {
            expected: query.latent.shape().to_vec(),
            actual: out.shape().to_vec(),
        });
    }
    out.ensure_finite()
}

/// Evaluates a batch and attaches query context to any failure.
pub(crate) fn evaluate_checked(
    field: &dyn VelocityField,
    queries: &[VelocityQuery],
) -> Result<Vec<LatentVector>> {
    let outs = field.evaluate_batch(queries).map_err(|e| match queries {
        [q] => e.context(q.describe()),
        _ => {
            let prompts: Vec<&str> = queries.iter().map(|q| q.prompt.as_str()).collect();
            e.context(format!(
                "batch of {} velocity queries (prompts {prompts:?})",
                queries.len()
            ))
        }
    })?;
    if outs.len() != queries.len() {
        return Err(Error::Config(format!(
            "field returned {} results for {} queries",
            outs.len(),
            queries.len()
        )));
    }
    for (q, out) in queries.iter().zip(&outs) {
        validate_output(q, out).map_err(|e| e.context(q.describe()))?;
    }
    Ok(outs)
}
