//! Time grid and editing hyperparameters.

use serde::{Deserialize, Serialize};

use crate::decay::DecaySchedule;
use crate::error::{Error, Result};

/// Uniform descending grid `t_k = k / T`, `k = T..0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    steps: usize,
}

impl TimeGrid {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.steps as f64
    }

    /// Grid times from `t = 1` down to `t = 0`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).rev().map(|k| self.time(k)).collect()
    }

    /// Grid index of `t`, if `t` is a multiple of `1/T` in `[0, 1]`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        if !(0.0..=1.0).contains(&t) {
            return None;
        }
        let scaled = t * self.steps as f64;
        let k = scaled.round();
        ((scaled - k).abs() < 1e-9).then_some(k as usize)
    }
}

fn default_steps() -> usize {
    28
}
fn default_t1() -> f64 {
    27.0 / 28.0
}
fn default_tg() -> f64 {
    22.0 / 28.0
}
fn default_to() -> f64 {
    27.0 / 28.0
}
fn default_td() -> f64 {
    20.0 / 28.0
}
fn default_lambda1() -> f64 {
    0.1
}
fn default_lambda_d() -> f64 {
    0.64
}
fn default_lambda_sub() -> f64 {
    1.0
}
fn default_src_guidance() -> f64 {
    1.5
}
fn default_tar_guidance() -> f64 {
    5.5
}
fn default_seed() -> u64 {
    0
}
fn default_eps() -> f64 {
    1e-8
}
fn default_reps() -> usize {
    3
}

/// Every scalar hyperparameter of an editing run.
///
/// Grid times (`t1`, `t_g`, `t_o`, `t_d`) are plain floats in `[0, 1]` and
/// must land on the `1/T` grid; [`EditConfig::validate`] resolves them to
/// grid indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_t1")]
    pub t1: f64,
    #[serde(default = "default_tg")]
    pub t_g: f64,
    #[serde(default = "default_to")]
    pub t_o: f64,
    #[serde(default = "default_td")]
    pub t_d: f64,
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_lambda_d")]
    pub lambda_d: f64,
    #[serde(default = "default_lambda_sub")]
    pub lambda_sub: f64,
    #[serde(default = "default_src_guidance")]
    pub src_guidance: f64,
    #[serde(default = "default_tar_guidance")]
    pub tar_guidance: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub eps_ortho: f64,
    #[serde(default = "default_reps")]
    pub guidance_reps: usize,
    /// Draw fresh noise at every step instead of one draw per run.
    #[serde(default)]
    pub resample_noise: bool,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            t1: default_t1(),
            t_g: default_tg(),
            t_o: default_to(),
            t_d: default_td(),
            lambda1: default_lambda1(),
            lambda_d: default_lambda_d(),
            lambda_sub: default_lambda_sub(),
            src_guidance: default_src_guidance(),
            tar_guidance: default_tar_guidance(),
            seed: default_seed(),
            eps_ortho: default_eps(),
            guidance_reps: default_reps(),
            resample_noise: false,
        }
    }
}

/// Grid indices of the key times of a validated [`EditConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySteps {
    pub grid: TimeGrid,
    pub k1: usize,
    pub kg: usize,
    pub ko: usize,
    pub kd: usize,
}

impl EditConfig {
    /// Same defaults with the given step count; key times are rescaled to
    /// keep their positions relative to the last grid step.
    pub fn with_steps(steps: usize) -> Self {
        let s = steps as f64;
        let at = |k_from_end: f64| ((s - k_from_end).max(0.0)) / s;
        let scale = |num: f64| (num / 28.0 * s).round() / s;
        Self {
            steps,
            t1: at(1.0),
            t_o: at(1.0),
            t_g: scale(22.0),
            t_d: scale(20.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<KeySteps> {
        let grid = TimeGrid::new(self.steps)?;
        let on_grid = |name: &str, t: f64| {
            grid.index_of(t).ok_or_else(|| {
                Error::Config(format!("{name} = {t} is not a multiple of 1/{}", self.steps))
            })
        };
        let k1 = on_grid("t1", self.t1)?;
        let kg = on_grid("t_g", self.t_g)?;
        let ko = on_grid("t_o", self.t_o)?;
        let kd = on_grid("t_d", self.t_d)?;
        if k1 == 0 {
            return Err(Error::Config("t1 must be positive".into()));
        }
        if kd > k1 {
            return Err(Error::Config("t_d must not exceed t1".into()));
        }
        if ko > k1 {
            return Err(Error::Config("t_o must not exceed t1".into()));
        }
        for (name, x) in [
            ("lambda1", self.lambda1),
            ("lambda_d", self.lambda_d),
            ("lambda_sub", self.lambda_sub),
        ] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Config(format!("{name} = {x} outside [0, 1]")));
            }
        }
        for (name, g) in [
            ("src_guidance", self.src_guidance),
            ("tar_guidance", self.tar_guidance),
        ] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::Config(format!("{name} must be a nonnegative float")));
            }
        }
        if !(self.eps_ortho > 0.0 && self.eps_ortho.is_finite()) {
            return Err(Error::Config("eps_ortho must be positive".into()));
        }
        if self.guidance_reps == 0 {
            return Err(Error::Config("guidance_reps must be at least 1".into()));
        }
        Ok(KeySteps {
            grid,
            k1,
            kg,
            ko,
            kd,
        })
    }

    pub fn decay_schedule(&self) -> DecaySchedule {
        DecaySchedule {
            lambda1: self.lambda1,
            lambda_d: self.lambda_d,
            lambda_sub: self.lambda_sub,
            t_d: self.t_d,
            t1: self.t1,
        }
    }
}
