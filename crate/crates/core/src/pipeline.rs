//! Editing-trajectory orchestration: parallel velocity generation, the
//! time-varying editing subspace, the two-phase decoupled editing run, and
//! the single-trajectory and multi-round baselines.

use crate::config::{EditConfig, KeySteps};
use crate::decay::{lambda_orth, reconstruct_with};
use crate::error::{Error, Result, ResultExt};
use crate::fields::{evaluate_checked, VelocityField, VelocityQuery};
use crate::flow::{euler_step, interpolate_source, target_state};
use crate::latent::LatentVector;
use crate::ortho::{decompose, project, pvo, Basis};
use crate::prompts::{PromptDecoupler, PromptSet};
use crate::seeds::gaussian_noise;
use crate::trace::{BasisInfo, BasisSource, Phase, RunTrace, StepUpdate, TraceRecorder};

/// Options that change what is recorded, never what is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Store the state after every update in the trace.
    pub snapshots: bool,
}

/// Latents of the parallel editing trajectories at grid index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub trajectories: Vec<LatentVector>,
    pub x1: LatentVector,
    pub x_src: LatentVector,
    pub k: usize,
}

impl TrajectoryState {
    /// `n` trajectories all starting at the source.
    pub fn start(x_src: &LatentVector, x1: LatentVector, n: usize, k: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("trajectory state needs at least one trajectory"));
        }
        x_src.check_shape(&x1)?;
        Ok(Self {
            trajectories: vec![x_src.clone(); n],
            x1,
            x_src: x_src.clone(),
            k,
        })
    }

    /// `Z^i - X_src` for every trajectory.
    pub fn displacements(&self) -> Result<Vec<LatentVector>> {
        self.trajectories.iter().map(|z| z.sub(&self.x_src)).collect()
    }
}

/// Editing velocities of several target states against one shared source
/// evaluation: `v(Z_tar_i, t, P_i, g_tar) - v(Z_src, t, P_src, g_src)`.
fn edit_velocities(
    field: &dyn VelocityField,
    p_src: &str,
    targets: &[(&str, &LatentVector)],
    x_src: &LatentVector,
    x1: &LatentVector,
    t: f64,
    cfg: &EditConfig,
) -> Result<Vec<LatentVector>> {
    let z_src = interpolate_source(x_src, x1, t)?;
    let mut queries = Vec::with_capacity(targets.len() + 1);
    queries.push(VelocityQuery::new(z_src.clone(), t, p_src, cfg.src_guidance));
    for (i, (prompt, z)) in targets.iter().enumerate() {
        let z_tar = target_state(&z_src, z, x_src).context_with(|| format!("trajectory {i}"))?;
        queries.push(VelocityQuery::new(z_tar, t, prompt, cfg.tar_guidance));
    }
    let out = evaluate_checked(field, &queries)?;
    out[1..]
        .iter()
        .enumerate()
        .map(|(i, v)| v.sub(&out[0]).context_with(|| format!("trajectory {i}")))
        .collect()
}

/// Parallel velocity generation at time `t` for every trajectory in `st`.
pub fn pvg(
    field: &dyn VelocityField,
    prompts: &PromptSet,
    st: &TrajectoryState,
    t: f64,
    cfg: &EditConfig,
) -> Result<Vec<LatentVector>> {
    if st.trajectories.len() != prompts.len() {
        return Err(Error::Config(format!(
            "{} trajectories for {} intermediate prompts",
            st.trajectories.len(),
            prompts.len()
        )));
    }
    let targets: Vec<(&str, &LatentVector)> = prompts
        .intermediates()
        .iter()
        .map(String::as_str)
        .zip(&st.trajectories)
        .collect();
    edit_velocities(field, prompts.source(), &targets, &st.x_src, &st.x1, t, cfg)
        .context_with(|| format!("parallel velocity generation at t={t}"))
}

/// Guidance velocities: the mean of `cfg.guidance_reps` PVG evaluations at
/// `t_g` from the states in `st`.
///
/// `noise_for_rep` supplies the noise of each repetition; with fixed noise
/// and a deterministic field all repetitions coincide.
pub fn guidance_velocities(
    field: &dyn VelocityField,
    prompts: &PromptSet,
    st: &TrajectoryState,
    cfg: &EditConfig,
) -> Result<Vec<LatentVector>> {
    guidance_velocities_with(field, prompts, st, cfg, |_| Ok(st.x1.clone()))
}

fn guidance_velocities_with(
    field: &dyn VelocityField,
    prompts: &PromptSet,
    st: &TrajectoryState,
    cfg: &EditConfig,
    noise_for_rep: impl Fn(usize) -> Result<LatentVector>,
) -> Result<Vec<LatentVector>> {
    let ks = cfg.validate()?;
    let t_g = ks.grid.time(ks.kg);
    let mut reps: Vec<Vec<LatentVector>> = Vec::with_capacity(cfg.guidance_reps);
    for r in 0..cfg.guidance_reps {
        let rep_state = TrajectoryState {
            x1: noise_for_rep(r)?,
            ..st.clone()
        };
        reps.push(pvg(field, prompts, &rep_state, t_g, cfg).context_with(|| format!("guidance rep {r}"))?);
    }
    (0..prompts.len())
        .map(|i| {
            let per_traj: Vec<LatentVector> = reps.iter().map(|rep| rep[i].clone()).collect();
            LatentVector::mean(&per_traj)
        })
        .collect()
}

/// Which branch of the editing subspace applies at grid index `k`.
pub fn subspace_source(k: usize, ks: &KeySteps) -> Result<BasisSource> {
    if k > ks.k1 {
        return Err(Error::TimeOutOfRange {
            t: ks.grid.time(k),
            range: "[0, t1]",
        });
    }
    Ok(if k == ks.k1 {
        BasisSource::Guidance
    } else if k >= ks.ko {
        BasisSource::Displacements
    } else {
        BasisSource::FinalDisplacement
    })
}

/// Editing subspace at time `t`: orthogonalized guidance velocities at
/// `t1`, orthogonalized displacements on `[t_o, t1)`, and the last
/// displacement alone below `t_o`. A zero last displacement gives the
/// empty basis.
pub fn subspace(
    t: f64,
    cfg: &EditConfig,
    displacements: &[LatentVector],
    guidance_vs: &[LatentVector],
) -> Result<Basis> {
    let ks = cfg.validate()?;
    let k = ks.grid.index_of(t).ok_or_else(|| {
        Error::Config(format!("t = {t} is not on the 1/{} grid", cfg.steps))
    })?;
    match subspace_source(k, &ks)? {
        BasisSource::Guidance => pvo(guidance_vs, cfg.eps_ortho),
        BasisSource::Displacements => pvo(displacements, cfg.eps_ortho),
        BasisSource::FinalDisplacement => {
            let last = displacements
                .last()
                .ok_or(Error::Empty("no displacement for the one-vector subspace"))?;
            pvo(std::slice::from_ref(last), cfg.eps_ortho)
        }
    }
}

fn basis_info(source: BasisSource, b: &Basis) -> BasisInfo {
    let s = b.summary();
    BasisInfo {
        source,
        size: s.size,
        dropped: s.dropped,
    }
}

/// Noise for the source path at grid index `k`.
fn step_noise(cfg: &EditConfig, fixed: &LatentVector, label: &str, k: usize) -> Result<LatentVector> {
    if cfg.resample_noise {
        gaussian_noise(fixed.shape(), cfg.seed, &format!("{label}/step/{k}"))
    } else {
        Ok(fixed.clone())
    }
}

/// Decoupled editing run. Decouples `p_tar` with `decoupler`, then runs
/// [`run_flowdc_prompts`].
pub fn run_flowdc(
    field: &dyn VelocityField,
    decoupler: &dyn PromptDecoupler,
    x_src: &LatentVector,
    p_src: &str,
    p_tar: &str,
    cfg: &EditConfig,
) -> Result<(LatentVector, RunTrace)> {
    let prompts = decoupler.decouple(p_src, p_tar)?;
    run_flowdc_prompts(field, &prompts, x_src, cfg, RunOptions::default())
}

/// Decoupled editing run on an explicit prompt set.
///
/// From `t1` down to `t_o` all `n` trajectories advance together; each
/// trajectory `i` projects its editing velocity onto the subspace built
/// from the first `i` guidance velocities (at `t1`) or displacements, decays
/// the orthogonal remainder, and takes an Euler step. Below `t_o` only the
/// last trajectory continues, against the one-vector subspace of its own
/// displacement.
pub fn run_flowdc_prompts(
    field: &dyn VelocityField,
    prompts: &PromptSet,
    x_src: &LatentVector,
    cfg: &EditConfig,
    opts: RunOptions,
) -> Result<(LatentVector, RunTrace)> {
    let ks = cfg.validate()?;
    x_src.ensure_finite()?;
    let schedule = cfg.decay_schedule();
    let dt = ks.grid.dt();
    let n = prompts.len();
    let main = n - 1;
    let x1 = gaussian_noise(x_src.shape(), cfg.seed, "noise")?;
    let mut st = TrajectoryState::start(x_src, x1.clone(), n, ks.k1)?;
    let mut rec = TraceRecorder::new("flowdc", opts.snapshots);

    let guidance = guidance_velocities_with(field, prompts, &st, cfg, |r| {
        if cfg.resample_noise {
            gaussian_noise(x_src.shape(), cfg.seed, &format!("noise/guidance/{r}"))
        } else {
            Ok(x1.clone())
        }
    })?;

    let last_parallel = ks.ko.max(1);
    for k in (last_parallel..=ks.k1).rev() {
        let t = ks.grid.time(k);
        let ctx = || format!("parallel step at t={t}");
        st.x1 = step_noise(cfg, &x1, "noise", k)?;
        let vs = pvg(field, prompts, &st, t, cfg).context_with(ctx)?;
        let ds = st.displacements()?;
        let lo = lambda_orth(t, &schedule).context_with(ctx)?;
        let source = subspace_source(k, &ks)?;
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let basis = subspace(t, cfg, &ds[..=i], &guidance[..=i])
                .context_with(|| format!("{}, trajectory {i}", ctx()))?;
            let dec = decompose(&vs[i], &basis)?;
            let v_prime = reconstruct_with(&dec, schedule.lambda_sub, lo)?;
            let z = euler_step(&st.trajectories[i], &v_prime, dt)?;
            let single = if i == main && source == BasisSource::Displacements {
                let b = pvo(std::slice::from_ref(&ds[i]), cfg.eps_ortho)?;
                Some(project(&vs[i], &b)?.norm())
            } else {
                None
            };
            rec.record(StepUpdate {
                round: 0,
                k,
                t,
                phase: Phase::Parallel,
                trajectory: i,
                main: i == main,
                v: &vs[i],
                v_sub: Some(&dec.v_sub),
                v_orth: Some(&dec.v_orth),
                v_prime: &v_prime,
                lambda_orth: lo,
                basis: Some(basis_info(source, &basis)),
                single_basis_v_sub_norm: single,
                before: &st.trajectories[i],
                after: &z,
            })?;
            next.push(z);
        }
        st.trajectories = next;
        st.k = k - 1;
    }

    let mut z = st.trajectories.swap_remove(main);
    for k in (1..last_parallel).rev() {
        let t = ks.grid.time(k);
        let ctx = || format!("single-trajectory step at t={t}");
        let noise = step_noise(cfg, &x1, "noise", k)?;
        let v = edit_velocities(field, prompts.source(), &[(prompts.target(), &z)], x_src, &noise, t, cfg)
            .context_with(ctx)?
            .remove(0);
        let d = z.sub(x_src)?;
        let basis = subspace(t, cfg, std::slice::from_ref(&d), &[]).context_with(ctx)?;
        let dec = decompose(&v, &basis)?;
        let lo = lambda_orth(t, &schedule).context_with(ctx)?;
        let v_prime = reconstruct_with(&dec, schedule.lambda_sub, lo)?;
        let next = euler_step(&z, &v_prime, dt)?;
        rec.record(StepUpdate {
            round: 0,
            k,
            t,
            phase: Phase::Single,
            trajectory: main,
            main: true,
            v: &v,
            v_sub: Some(&dec.v_sub),
            v_orth: Some(&dec.v_orth),
            v_prime: &v_prime,
            lambda_orth: lo,
            basis: Some(basis_info(BasisSource::FinalDisplacement, &basis)),
            single_basis_v_sub_norm: None,
            before: &z,
            after: &next,
        })?;
        z = next;
    }
    z.ensure_finite()?;
    Ok((z, rec.finish()))
}

/// Plain inversion-free editing: one trajectory, `v' = v`, from `t1` to 0.
pub fn run_flowedit(
    field: &dyn VelocityField,
    x_src: &LatentVector,
    p_src: &str,
    p_tar: &str,
    cfg: &EditConfig,
) -> Result<(LatentVector, RunTrace)> {
    run_flowedit_with(field, x_src, p_src, p_tar, cfg, RunOptions::default())
}

pub fn run_flowedit_with(
    field: &dyn VelocityField,
    x_src: &LatentVector,
    p_src: &str,
    p_tar: &str,
    cfg: &EditConfig,
    opts: RunOptions,
) -> Result<(LatentVector, RunTrace)> {
    let mut rec = TraceRecorder::new("flowedit", opts.snapshots);
    let z = flowedit_round(field, x_src, p_src, p_tar, cfg, "noise", 0, &mut rec)?;
    Ok((z, rec.finish()))
}

#[allow(clippy::too_many_arguments)]
fn flowedit_round(
    field: &dyn VelocityField,
    x_src: &LatentVector,
    p_src: &str,
    p_tar: &str,
    cfg: &EditConfig,
    noise_label: &str,
    round: usize,
    rec: &mut TraceRecorder,
) -> Result<LatentVector> {
    let ks = cfg.validate()?;
    x_src.ensure_finite()?;
    let dt = ks.grid.dt();
    let x1 = gaussian_noise(x_src.shape(), cfg.seed, noise_label)?;
    let mut z = x_src.clone();
    for k in (1..=ks.k1).rev() {
        let t = ks.grid.time(k);
        let noise = step_noise(cfg, &x1, noise_label, k)?;
        let v = edit_velocities(field, p_src, &[(p_tar, &z)], x_src, &noise, t, cfg)
            .context_with(|| format!("round {round}, step at t={t}"))?
            .remove(0);
        let next = euler_step(&z, &v, dt)?;
        rec.record(StepUpdate {
            round,
            k,
            t,
            phase: Phase::Plain,
            trajectory: 0,
            main: true,
            v: &v,
            v_sub: None,
            v_orth: None,
            v_prime: &v,
            lambda_orth: 1.0,
            basis: None,
            single_basis_v_sub_norm: None,
            before: &z,
            after: &next,
        })?;
        z = next;
    }
    z.ensure_finite()?;
    Ok(z)
}

/// Multi-round baseline: one plain editing run per clause, each starting
/// from the previous round's output. Round `r > 0` draws its own noise.
pub fn run_multiround(
    field: &dyn VelocityField,
    x_src: &LatentVector,
    prompts: &PromptSet,
    cfg: &EditConfig,
) -> Result<(LatentVector, RunTrace)> {
    run_multiround_with(field, x_src, prompts, cfg, RunOptions::default())
}

pub fn run_multiround_with(
    field: &dyn VelocityField,
    x_src: &LatentVector,
    prompts: &PromptSet,
    cfg: &EditConfig,
    opts: RunOptions,
) -> Result<(LatentVector, RunTrace)> {
    let mut rec = TraceRecorder::new("multiround", opts.snapshots);
    let mut z = x_src.clone();
    for (r, clause) in prompts.clauses().iter().enumerate() {
        let label = if r == 0 {
            "noise".to_owned()
        } else {
            format!("noise/round/{r}")
        };
        z = flowedit_round(field, &z, prompts.source(), clause, cfg, &label, r, &mut rec)?;
    }
    Ok((z, rec.finish()))
}
