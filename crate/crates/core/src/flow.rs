//! Source-path interpolation, target-path construction, editing velocity and
//! Forward-Euler stepping.

use crate::config::{EditConfig, TimeGrid};
use crate::error::{Error, Result};
use crate::fields::{evaluate_checked, VelocityField, VelocityQuery};
use crate::latent::LatentVector;

/// `t * x1 + (1 - t) * x_src`
pub fn interpolate_source(x_src: &LatentVector, x1: &LatentVector, t: f64) -> Result<LatentVector> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange { t, range: "[0, 1]" });
    }
    x_src.check_shape(x1)?;
    x_src.ensure_finite()?;
    x1.ensure_finite()?;
    let data = x_src
        .data()
        .iter()
        .zip(x1.data())
        .map(|(&s, &n)| t * n + (1.0 - t) * s)
        .collect();
    LatentVector::new(data, x_src.shape().to_vec())
}

/// `z_src_t + z_edit_t - x_src`
pub fn target_state(
    z_src_t: &LatentVector,
    z_edit_t: &LatentVector,
    x_src: &LatentVector,
) -> Result<LatentVector> {
    z_src_t.add(z_edit_t)?.sub(x_src)
}

/// One backward Euler step: `z - dt * v`.
pub fn euler_step(z: &LatentVector, v: &LatentVector, dt: f64) -> Result<LatentVector> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("euler step needs dt > 0, got {dt}")));
    }
    z.axpy(-dt, v)
}

/// `v(z_tar_t, t, p_tar) - v(z_src_t, t, p_src)`, with the configured
/// target and source guidance forwarded to the field.
#[allow(clippy::too_many_arguments)]
pub fn editing_velocity(
    field: &dyn VelocityField,
    z_tar_t: &LatentVector,
    z_src_t: &LatentVector,
    t: f64,
    p_tar: &str,
    p_src: &str,
    cfg: &EditConfig,
) -> Result<LatentVector> {
    z_tar_t.check_shape(z_src_t)?;
    let queries = [
        VelocityQuery::new(z_src_t.clone(), t, p_src, cfg.src_guidance),
        VelocityQuery::new(z_tar_t.clone(), t, p_tar, cfg.tar_guidance),
    ];
    let out = evaluate_checked(field, &queries)?;
    out[1].sub(&out[0])
}

/// Integrates `dz/dt = v(z, t, prompt)` backward from `t = 1` to `t = 0`
/// on the uniform grid, starting at `z1`.
pub fn integrate_backward(
    field: &dyn VelocityField,
    z1: &LatentVector,
    prompt: &str,
    guidance: f64,
    grid: TimeGrid,
) -> Result<LatentVector> {
    let dt = grid.dt();
    let mut z = z1.clone();
    for k in (1..=grid.steps()).rev() {
        let q = VelocityQuery::new(z.clone(), grid.time(k), prompt, guidance);
        let v = evaluate_checked(field, std::slice::from_ref(&q))?.remove(0);
        z = euler_step(&z, &v, dt)?;
    }
    Ok(z)
}
