//! Per-step diagnostics of a run trace and endpoint deviation measures.

use std::io::Write;

use serde::Serialize;

use crate::cli::scenario::Reference;
use crate::error::{Error, Result};
use crate::latent::LatentVector;
use crate::trace::RunTrace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub t: f64,
    /// Cosine with the previous main-trajectory displacement; empty on the
    /// first step and around zero steps.
    pub cos_prev: Option<f64>,
    pub cumulative_cost: f64,
    pub v_sub_norm: Option<f64>,
    pub v_orth_norm: Option<f64>,
    pub lambda_orth: f64,
    pub method: String,
}

/// One row per executed main-trajectory step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsReport {
    pub fn from_trace(trace: &RunTrace) -> Result<Self> {
        let mut cost = 0.0;
        let rows: Vec<DiagnosticsRow> = trace
            .main_records()
            .map(|r| {
                cost += r.step_norm;
                DiagnosticsRow {
                    step: r.step,
                    t: r.t,
                    cos_prev: r.cos_prev,
                    cumulative_cost: cost,
                    v_sub_norm: r.v_sub_norm,
                    v_orth_norm: r.v_orth_norm,
                    lambda_orth: r.lambda_orth,
                    method: r.method.clone(),
                }
            })
            .collect();
        if rows.is_empty() {
            return Err(Error::Empty("diagnostics of a trace without main steps"));
        }
        Ok(Self { rows })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// `‖z - x_src‖` over the coordinates outside `target_coords`.
pub fn nontarget_deviation(z: &LatentVector, x_src: &LatentVector, target_coords: &[usize]) -> Result<f64> {
    z.check_shape(x_src)?;
    let mut is_target = vec![false; z.len()];
    for &c in target_coords {
        *is_target.get_mut(c).ok_or(Error::Empty("target coordinate out of range"))? = true;
    }
    Ok(z.data()
        .iter()
        .zip(x_src.data())
        .zip(&is_target)
        .filter(|(_, &t)| !t)
        .map(|((a, b), _)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// `‖z - target‖` over the reference's target coordinates.
pub fn target_deviation(z: &LatentVector, reference: &Reference) -> Result<f64> {
    let mut sum = 0.0;
    for (&c, &want) in reference.target_coords.iter().zip(&reference.target) {
        let got = *z.data().get(c).ok_or(Error::Empty("target coordinate out of range"))?;
        sum += (got - want) * (got - want);
    }
    Ok(sum.sqrt())
}
