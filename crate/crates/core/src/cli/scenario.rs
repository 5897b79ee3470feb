//! Scenario files: everything one run needs, in one strict JSON document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::EditConfig;
use crate::error::{Error, Result};
use crate::fields::{
    GaussianField, GaussianScenario, JitteredField, RemoteField, RemoteFieldConfig, VelocityField,
    ENDPOINT_ENV,
};
use crate::latent::LatentVector;
use crate::prompts::{DelimiterDecoupler, PromptDecoupler, PromptSet};
use crate::seeds::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSpec {
    Gaussian {
        scenario: GaussianScenario,
        /// Per-call velocity jitter; 0 disables it.
        #[serde(default)]
        jitter: f64,
    },
    Remote {
        /// Falls back to the endpoint environment variable when absent.
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        timeout_ms: Option<u64>,
        #[serde(default)]
        retries: Option<u32>,
        #[serde(default)]
        batch_limit: Option<usize>,
        #[serde(default)]
        encoding: Option<crate::fields::Encoding>,
        #[serde(default)]
        max_in_flight: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceSpec {
    /// Explicit source latent; a flat list is a vector.
    Values {
        data: Vec<f64>,
        #[serde(default)]
        shape: Option<Vec<usize>>,
    },
    /// One draw from a registered prompt's distribution.
    Sample { prompt: String, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub source: String,
    pub target: String,
    /// Explicit cumulative intermediates; the `"; "` splitter when absent.
    #[serde(default)]
    pub intermediates: Option<Vec<String>>,
}

/// Endpoint reference for `compare` when the field has no known means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub target_coords: Vec<usize>,
    /// Composed target in the target coordinates, same order.
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub field: FieldSpec,
    pub x_src: SourceSpec,
    pub prompts: PromptSpec,
    #[serde(default)]
    pub config: EditConfig,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
}

/// Target coordinates and the composed target value in each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub target_coords: Vec<usize>,
    pub target: Vec<f64>,
}

/// Fully resolved run inputs.
pub struct Resolved {
    pub field: Box<dyn VelocityField>,
    pub x_src: LatentVector,
    pub prompts: PromptSet,
    pub cfg: EditConfig,
    pub reference: Option<Reference>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    /// Builds the field, source latent and prompt set. Every failure here is
    /// a configuration error. `seed` overrides the config seed.
    pub fn resolve(&self, seed: Option<u64>) -> Result<Resolved> {
        let mut cfg = self.config.clone();
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let prompts = match &self.prompts.intermediates {
            Some(list) => PromptSet::new(&self.prompts.source, &self.prompts.target, list.clone()),
            None => DelimiterDecoupler.decouple(&self.prompts.source, &self.prompts.target),
        }
        .map_err(as_config)?;

        let (field, scenario): (Box<dyn VelocityField>, Option<&GaussianScenario>) = match &self.field {
            FieldSpec::Gaussian { scenario, jitter } => {
                let g = GaussianField::new(scenario.clone())?;
                for p in std::iter::once(prompts.source()).chain(prompts.intermediates().iter().map(String::as_str)) {
                    scenario.resolve(p).map_err(as_config)?;
                }
                let f: Box<dyn VelocityField> = if *jitter > 0.0 {
                    Box::new(JitteredField::new(g, *jitter, derive_seed(cfg.seed, "jitter"))?)
                } else if *jitter == 0.0 {
                    Box::new(g)
                } else {
                    return Err(Error::Config(format!("jitter must be nonnegative, got {jitter}")));
                };
                (f, Some(scenario))
            }
            FieldSpec::Remote {
                endpoint,
                timeout_ms,
                retries,
                batch_limit,
                encoding,
                max_in_flight,
            } => {
                let url = match endpoint {
                    Some(u) => u.clone(),
                    None => std::env::var(ENDPOINT_ENV).map_err(|_| {
                        Error::Config(format!("remote field needs an endpoint or {ENDPOINT_ENV}"))
                    })?,
                };
                let mut rc = RemoteFieldConfig::new(url);
                rc.timeout_ms = timeout_ms.unwrap_or(rc.timeout_ms);
                rc.retries = retries.unwrap_or(rc.retries);
                rc.batch_limit = batch_limit.unwrap_or(rc.batch_limit);
                rc.encoding = encoding.unwrap_or(rc.encoding);
                rc.max_in_flight = max_in_flight.unwrap_or(rc.max_in_flight);
                (Box::new(RemoteField::new(rc)?), None)
            }
        };

        let x_src = match &self.x_src {
            SourceSpec::Values { data, shape } => {
                let shape = shape.clone().unwrap_or_else(|| vec![data.len()]);
                LatentVector::new(data.clone(), shape).map_err(as_config)?
            }
            SourceSpec::Sample { prompt, seed } => {
                let scn = scenario.ok_or_else(|| {
                    Error::Config("sampling x_src needs a gaussian field".into())
                })?;
                scn.sample(prompt, &mut rng_for(*seed, "x_src")).map_err(as_config)?
            }
        };
        if let Some(scn) = scenario {
            if x_src.len() != scn.dim {
                return Err(Error::Config(format!(
                    "x_src has {} values, scenario dim is {}",
                    x_src.len(),
                    scn.dim
                )));
            }
        }

        let reference = match (&self.reference, scenario) {
            (Some(r), _) => Some(explicit_reference(r, &x_src)?),
            (None, Some(scn)) => Some(composed_reference(scn, &prompts, &x_src, &cfg)?),
            (None, None) => None,
        };
        Ok(Resolved {
            field,
            x_src,
            prompts,
            cfg,
            reference,
        })
    }
}

fn as_config(e: Error) -> Error {
    Error::Config(e.to_string())
}

fn explicit_reference(r: &ReferenceSpec, x_src: &LatentVector) -> Result<Reference> {
    if r.target_coords.len() != r.target.len() {
        return Err(Error::Config("reference target_coords and target differ in length".into()));
    }
    if let Some(&c) = r.target_coords.iter().find(|&&c| c >= x_src.len()) {
        return Err(Error::Config(format!("reference coordinate {c} out of range")));
    }
    Ok(Reference {
        target_coords: r.target_coords.clone(),
        target: r.target.clone(),
    })
}

/// Where a perfect edit would land: `x_src` shifted by the difference of
/// the guided target and source means. Target coordinates are those where
/// that shift is nonzero.
fn composed_reference(
    scn: &GaussianScenario,
    prompts: &PromptSet,
    x_src: &LatentVector,
    cfg: &EditConfig,
) -> Result<Reference> {
    let mu_t = scn.resolve(prompts.target()).map_err(as_config)?.mean;
    let mu_s = scn.resolve(prompts.source()).map_err(as_config)?.mean;
    let mut target_coords = Vec::new();
    let mut target = Vec::new();
    for (i, ((t, s), x)) in mu_t.iter().zip(&mu_s).zip(x_src.data()).enumerate() {
        let shift = cfg.tar_guidance * t - cfg.src_guidance * s;
        if shift != 0.0 {
            target_coords.push(i);
            target.push(x + shift);
        }
    }
    Ok(Reference {
        target_coords,
        target,
    })
}
