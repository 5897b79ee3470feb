//! Velocity orthogonal decay: the piecewise-linear orthogonal coefficient
//! and reconstruction of the modified velocity from its decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentVector;
use crate::ortho::VelocityDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySchedule {
    pub lambda1: f64,
    pub lambda_d: f64,
    /// Coefficient of the in-subspace component; 1 keeps the edit intact.
    pub lambda_sub: f64,
    pub t_d: f64,
    pub t1: f64,
}

impl DecaySchedule {
    /// Schedule with `lambda_orth == 1` everywhere (plain FlowEdit updates).
    pub fn identity(t_d: f64, t1: f64) -> Self {
        Self {
            lambda1: 1.0,
            lambda_d: 1.0,
            lambda_sub: 1.0,
            t_d,
            t1,
        }
    }
}

/// Orthogonal coefficient at time `t`.
///
/// Linear from `lambda_d` at `t_d` to `lambda1` at `t1`, and exactly 1 below
/// `t_d`. The jump at `t_d` is intentional.
pub fn lambda_orth(t: f64, s: &DecaySchedule) -> Result<f64> {
    if !(0.0..=s.t1).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            range: "[0, t1]",
        });
    }
    if t < s.t_d {
        return Ok(1.0);
    }
    if s.t1 == s.t_d {
        return Err(Error::DegenerateSchedule(s.t1));
    }
    if s.lambda1 == s.lambda_d {
        return Ok(s.lambda_d);
    }
    // Convex-combination form so both endpoints come out exact.
    let w = (t - s.t_d) / (s.t1 - s.t_d);
    Ok((1.0 - w) * s.lambda_d + w * s.lambda1)
}

/// `lambda_sub * v_sub + lambda_orth(t) * v_orth`.
pub fn reconstruct(d: &VelocityDecomposition, t: f64, s: &DecaySchedule) -> Result<LatentVector> {
    let lo = lambda_orth(t, s)?;
    reconstruct_with(d, s.lambda_sub, lo)
}

pub(crate) fn reconstruct_with(
    d: &VelocityDecomposition,
    lambda_sub: f64,
    lambda_orth: f64,
) -> Result<LatentVector> {
    if lambda_sub == 1.0 && lambda_orth == 1.0 {
        // v_sub + v_orth may differ from v in the last bit.
        return Ok(d.original().clone());
    }
    d.v_sub.scale(lambda_sub).axpy(lambda_orth, &d.v_orth)
}
