//! Per-step run records and the trajectory diagnostics computed from them.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    /// Orthogonalized guidance velocities (first editing step).
    Guidance,
    /// Orthogonalized trajectory displacements.
    Displacements,
    /// The main trajectory's own displacement.
    FinalDisplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisInfo {
    pub source: BasisSource,
    pub size: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Parallel trajectories with orthogonalized subspaces.
    Parallel,
    /// Main trajectory only.
    Single,
    /// Plain editing updates without decomposition.
    Plain,
}

/// One executed `(step, trajectory)` update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub method: String,
    pub round: usize,
    /// Executed main-trajectory step this record belongs to, counted from 0
    /// over the whole run.
    pub step: usize,
    /// Grid index of `t`.
    pub k: usize,
    pub t: f64,
    pub phase: Phase,
    pub trajectory: usize,
    pub main: bool,
    pub v_norm: f64,
    pub v_sub_norm: Option<f64>,
    pub v_orth_norm: Option<f64>,
    pub v_prime_norm: f64,
    pub lambda_orth: f64,
    pub basis: Option<BasisInfo>,
    /// `‖P(v)‖` for the one-vector basis `{d}` of the main trajectory, on
    /// parallel steps after the first.
    pub single_basis_v_sub_norm: Option<f64>,
    /// `‖Z_after - Z_before‖`.
    pub step_norm: f64,
    /// Cosine between this displacement and the previous one of the same
    /// trajectory; `None` on the first step or for zero displacements.
    pub cos_prev: Option<f64>,
    /// State after the update, when snapshots are enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<LatentVector>,
}

/// Ordered trace of one run. Records are appended in execution order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn main_records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.main)
    }

    pub fn main_steps(&self) -> usize {
        self.main_records().count()
    }

    pub fn extend(&mut self, other: RunTrace) {
        self.records.extend(other.records);
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| Error::from(e).context(format!("trace line {}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }
}

/// Fields of a record supplied by the integrator; the recorder fills in
/// step counters and displacement statistics.
#[derive(Debug, Clone)]
pub(crate) struct StepUpdate<'a> {
    pub round: usize,
    pub k: usize,
    pub t: f64,
    pub phase: Phase,
    pub trajectory: usize,
    pub main: bool,
    pub v: &'a LatentVector,
    pub v_sub: Option<&'a LatentVector>,
    pub v_orth: Option<&'a LatentVector>,
    pub v_prime: &'a LatentVector,
    pub lambda_orth: f64,
    pub basis: Option<BasisInfo>,
    pub single_basis_v_sub_norm: Option<f64>,
    pub before: &'a LatentVector,
    pub after: &'a LatentVector,
}

pub(crate) struct TraceRecorder {
    method: String,
    snapshots: bool,
    main_steps: usize,
    prev_disp: BTreeMap<usize, LatentVector>,
    trace: RunTrace,
}

impl TraceRecorder {
    pub fn new(method: &str, snapshots: bool) -> Self {
        Self {
            method: method.to_owned(),
            snapshots,
            main_steps: 0,
            prev_disp: BTreeMap::new(),
            trace: RunTrace::default(),
        }
    }

    pub fn record(&mut self, u: StepUpdate<'_>) -> Result<()> {
        let disp = u.after.sub(u.before)?;
        let cos_prev = match self.prev_disp.get(&u.trajectory) {
            Some(prev) => prev.cosine(&disp)?,
            None => None,
        };
        let step = if u.main {
            self.main_steps += 1;
            self.main_steps - 1
        } else {
            self.main_steps
        };
        self.trace.records.push(TraceRecord {
            method: self.method.clone(),
            round: u.round,
            step,
            k: u.k,
            t: u.t,
            phase: u.phase,
            trajectory: u.trajectory,
            main: u.main,
            v_norm: u.v.norm(),
            v_sub_norm: u.v_sub.map(LatentVector::norm),
            v_orth_norm: u.v_orth.map(LatentVector::norm),
            v_prime_norm: u.v_prime.norm(),
            lambda_orth: u.lambda_orth,
            basis: u.basis,
            single_basis_v_sub_norm: u.single_basis_v_sub_norm,
            step_norm: disp.norm(),
            cos_prev,
            state: self.snapshots.then(|| u.after.clone()),
        });
        self.prev_disp.insert(u.trajectory, disp);
        Ok(())
    }

    pub fn finish(self) -> RunTrace {
        self.trace
    }
}

/// Cosine similarity of each adjacent pair of main-trajectory displacements.
/// Pairs involving a zero displacement yield `None`.
pub fn consecutive_cosine(trace: &RunTrace) -> Result<Vec<Option<f64>>> {
    let main: Vec<&TraceRecord> = trace.main_records().collect();
    if main.len() < 2 {
        return Err(Error::Empty("consecutive cosine needs at least two steps"));
    }
    Ok(main[1..].iter().map(|r| r.cos_prev).collect())
}

/// Sum of main-trajectory step lengths.
pub fn transport_cost(trace: &RunTrace) -> Result<f64> {
    let mut any = false;
    let total = trace
        .main_records()
        .inspect(|_| any = true)
        .map(|r| r.step_norm)
        .sum();
    if !any {
        return Err(Error::Empty("transport cost of an empty trace"));
    }
    Ok(total)
}
