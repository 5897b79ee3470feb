//! Closed-form rectified-flow velocity for isotropic Gaussian data.
//!
//! For a prompt `P` the data distribution is `X_0 ~ N(mu_P, sigma_P^2 I)`,
//! the noise is `X_1 ~ N(0, I)` drawn independently, and
//! `Z_t = t X_1 + (1 - t) X_0`. The marginal velocity
//! `E[X_1 - X_0 | Z_t = z]` is linear in `z`:
//!
//! ```text
//! s_t^2 = t^2 + (1 - t)^2 sigma^2
//! a_t   = (t - (1 - t) sigma^2) / s_t^2
//! v     = a_t (z - (1 - t) mu) - mu
//! ```
//!
//! Guidance multiplies the prompt mean, so `mu` above is `guidance * mu_P`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{VelocityField, VelocityQuery};
use crate::latent::LatentVector;

fn one() -> f64 {
    1.0
}

/// Prompt table of an analytic scenario.
///
/// A prompt resolves either to its own registered entry, or, when it is a
/// `"; "`-joined list of registered clauses, to the sum of the clause means
/// with `default_sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianScenario {
    pub dim: usize,
    pub means: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub sigmas: BTreeMap<String, f64>,
    #[serde(default = "one")]
    pub default_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptDistribution {
    pub mean: Vec<f64>,
    pub sigma: f64,
}

impl GaussianScenario {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            means: BTreeMap::new(),
            sigmas: BTreeMap::new(),
            default_sigma: 1.0,
        }
    }

    pub fn with_prompt(mut self, prompt: &str, mean: Vec<f64>) -> Self {
        self.means.insert(prompt.to_owned(), mean);
        self
    }

    pub fn with_sigma(mut self, prompt: &str, sigma: f64) -> Self {
        self.sigmas.insert(prompt.to_owned(), sigma);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("gaussian scenario dim must be positive".into()));
        }
        for (p, m) in &self.means {
            if m.len() != self.dim {
                return Err(Error::Config(format!(
                    "mean of {p:?} has length {}, expected {}",
                    m.len(),
                    self.dim
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("mean of {p:?} is not finite")));
            }
        }
        for (p, s) in self
            .sigmas
            .iter()
            .chain(std::iter::once((&"default_sigma".to_string(), &self.default_sigma)))
        {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(Error::Config(format!("sigma of {p:?} must be nonnegative")));
            }
        }
        if let Some(p) = self.sigmas.keys().find(|p| !self.means.contains_key(*p)) {
            return Err(Error::Config(format!("sigma given for unregistered prompt {p:?}")));
        }
        Ok(())
    }

    /// Data distribution conditioned on `prompt`.
    pub fn resolve(&self, prompt: &str) -> Result<PromptDistribution> {
        if let Some(mean) = self.means.get(prompt) {
            let sigma = self.sigmas.get(prompt).copied().unwrap_or(self.default_sigma);
            return Ok(PromptDistribution {
                mean: mean.clone(),
                sigma,
            });
        }
        let clauses: Vec<&str> = prompt.split("; ").collect();
        if clauses.len() < 2 {
            return Err(Error::UnregisteredPrompt(prompt.to_owned()));
        }
        let mut mean = vec![0.0; self.dim];
        for c in clauses {
            let m = self
                .means
                .get(c)
                .ok_or_else(|| Error::UnregisteredPrompt(prompt.to_owned()))?;
            for (a, b) in mean.iter_mut().zip(m) {
                *a += b;
            }
        }
        Ok(PromptDistribution {
            mean,
            sigma: self.default_sigma,
        })
    }

    /// One draw from the prompt's data distribution.
    pub fn sample<R: Rng + ?Sized>(&self, prompt: &str, rng: &mut R) -> Result<LatentVector> {
        let d = self.resolve(prompt)?;
        let data = d
            .mean
            .iter()
            .map(|m| m + d.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        LatentVector::from_vec(data)
    }
}

/// Exact marginal velocity of the Gaussian scenario at `(z, t)`.
pub fn gaussian_velocity(
    scn: &GaussianScenario,
    z: &LatentVector,
    t: f64,
    prompt: &str,
    guidance: f64,
) -> Result<LatentVector> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange { t, range: "[0, 1]" });
    }
    if z.len() != scn.dim {
        return Err(Error::ShapeMismatch {
            expected: vec![scn.dim],
            actual: z.shape().to_vec(),
        });
    }
    let dist = scn.resolve(prompt)?;
    let var = dist.sigma * dist.sigma;
    let s2 = t * t + (1.0 - t) * (1.0 - t) * var;
    if s2 == 0.0 {
        return Err(Error::TimeOutOfRange {
            t,
            range: "(0, 1] for a degenerate prompt distribution",
        });
    }
    let a = (t - (1.0 - t) * var) / s2;
    let data = z
        .data()
        .iter()
        .zip(&dist.mean)
        .map(|(&zi, &mi)| {
            let m = guidance * mi;
            a * (zi - (1.0 - t) * m) - m
        })
        .collect();
    LatentVector::new(data, z.shape().to_vec())
}

/// [`VelocityField`] backed by a [`GaussianScenario`].
#[derive(Debug, Clone)]
pub struct GaussianField {
    scenario: GaussianScenario,
}

impl GaussianField {
    pub fn new(scenario: GaussianScenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Self { scenario })
    }

    pub fn scenario(&self) -> &GaussianScenario {
        &self.scenario
    }
}

impl VelocityField for GaussianField {
    fn evaluate(&self, q: &VelocityQuery) -> Result<LatentVector> {
        gaussian_velocity(&self.scenario, &q.latent, q.t, &q.prompt, q.guidance)
    }

    fn evaluate_batch(&self, queries: &[VelocityQuery]) -> Result<Vec<LatentVector>> {
        queries.par_iter().map(|q| self.evaluate(q)).collect()
    }
}
