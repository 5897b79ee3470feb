//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{kernel_velocity, run_trend, trend_file, Pairs, FOUR_TARGETS, PINNED_SEEDS, TWO_TARGETS};
use flowdc::cli::{cmd_run, Method};
use flowdc::fields::{gaussian_velocity, GaussianField, GaussianScenario};
use flowdc::flow::integrate_backward;
use flowdc::seeds::gaussian_noise;
use flowdc::{
    decompose, lambda_orth, project, pvo, run_flowdc, run_flowedit, DelimiterDecoupler, EditConfig,
    LatentVector, TimeGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> LatentVector {
    LatentVector::from_vec((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

/// Random input list; some instances include near-dependent vectors.
fn random_inputs(rng: &mut ChaCha8Rng) -> Vec<LatentVector> {
    let n = rng.random_range(1..=8);
    let dim = if rng.random_bool(0.2) {
        rng.random_range(1..=10)
    } else {
        rng.random_range(1..=4096)
    };
    let mut vs: Vec<LatentVector> = (0..n).map(|_| gaussian_vec(rng, dim)).collect();
    if n >= 2 && rng.random_bool(0.3) {
        let noise = gaussian_vec(rng, dim).scale(1e-6);
        vs[n - 1] = vs[0].scale(rng.random_range(-3.0..3.0)).add(&noise).unwrap();
    }
    vs
}

fn schedule_exactness() -> Result<String, String> {
    let cfg = EditConfig::default();
    let s = cfg.decay_schedule();
    let grid = TimeGrid::new(cfg.steps).unwrap();
    let at_t1 = lambda_orth(cfg.t1, &s).unwrap();
    let at_td = lambda_orth(cfg.t_d, &s).unwrap();
    ensure(at_t1 == 0.1, || format!("lambda(t1) = {at_t1:e}"))?;
    ensure(at_td == 0.64, || format!("lambda(t_d) = {at_td:e}"))?;
    let below: Vec<f64> = (0..20).map(|k| lambda_orth(grid.time(k), &s).unwrap()).collect();
    ensure(below.iter().all(|&x| x == 1.0), || format!("below t_d: {below:?}"))?;
    Ok(format!("lambda(t1)={at_t1}, lambda(t_d)={at_td}, 20 grid times below t_d all 1"))
}

fn pvo_orthogonality() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for inst in 0..1000 {
        let b = pvo(&random_inputs(&mut rng), 1e-8).unwrap();
        let us = b.vectors();
        for i in 0..us.len() {
            for j in 0..i {
                let r = us[i].dot(&us[j]).unwrap().abs() / (us[i].norm() * us[j].norm());
                worst = worst.max(r);
                ensure(r <= 1e-9, || format!("instance {inst}: |<u{i},u{j}>| ratio {r:e}"))?;
            }
        }
    }
    Ok(format!("1000 instances, worst normalized inner product {worst:.2e}"))
}

fn norm_inequality() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = f64::NEG_INFINITY;
    for inst in 0..1000 {
        let ds = random_inputs(&mut rng);
        let v = gaussian_vec(&mut rng, ds[0].len());
        let full = project(&v, &pvo(&ds, 1e-8).unwrap()).unwrap().norm_sq();
        let single = project(&v, &pvo(&ds[ds.len() - 1..], 1e-8).unwrap()).unwrap().norm_sq();
        let violation = (single - full) / v.norm_sq();
        worst = worst.max(violation);
        ensure(violation <= 1e-9, || format!("instance {inst}: violation {violation:e}"))?;
    }
    Ok(format!("1000 instances, worst relative violation {worst:.2e}"))
}

fn decomposition_soundness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut worst_p, mut worst_r): (f64, f64) = (0.0, 0.0);
    for inst in 0..1000 {
        let inputs = random_inputs(&mut rng);
        let v = gaussian_vec(&mut rng, inputs[0].len());
        let d = decompose(&v, &pvo(&inputs, 1e-8).unwrap()).unwrap();
        let vv = v.norm_sq();
        let p = (vv - d.v_sub.norm_sq() - d.v_orth.norm_sq()).abs() / vv;
        let r = d.v_sub.add(&d.v_orth).unwrap().sub(&v).unwrap().norm() / v.norm();
        worst_p = worst_p.max(p);
        worst_r = worst_r.max(r);
        ensure(p <= 1e-8 && r <= 1e-8, || format!("instance {inst}: pythagoras {p:e}, reconstruction {r:e}"))?;
    }
    Ok(format!("1000 instances, worst pythagoras {worst_p:.2e}, reconstruction {worst_r:.2e}"))
}

fn flowedit_reduction() -> Result<String, String> {
    let dim = 256;
    let scn = GaussianScenario::new(dim)
        .with_prompt("src", vec![0.0; dim])
        .with_prompt("tar", (0..dim).map(|i| if i % 7 == 0 { 1.0 } else { 0.0 }).collect())
        .with_sigma("tar", 0.7);
    let f = GaussianField::new(scn).unwrap();
    let x = gaussian_noise(&[dim], 9, "x_src").unwrap();
    let cfg = EditConfig {
        lambda1: 1.0,
        lambda_d: 1.0,
        seed: 1234,
        ..EditConfig::default()
    };
    let (a, _) = run_flowdc(&f, &DelimiterDecoupler, &x, "src", "tar", &cfg).unwrap();
    let (b, _) = run_flowedit(&f, &x, "src", "tar", &cfg).unwrap();
    let same = a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
    ensure(same, || "endpoints differ".into())?;
    ensure(a != x, || "edit did not move the latent".into())?;
    Ok(format!("dim {dim}, T=28: all {dim} coordinates bit-identical"))
}

fn oracle_field() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let dim = 2;
    let mut worst: f64 = 0.0;
    for point in 0..20 {
        let mu: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma: f64 = rng.random_range(0.3..1.5);
        let g: f64 = rng.random_range(0.5..2.0);
        let t: f64 = rng.random_range(0.05..0.95);
        let m: Vec<f64> = mu.iter().map(|x| g * x).collect();
        let pairs = Pairs::draw(1_000_000, &m, sigma, 500 + point);
        let scn = GaussianScenario::new(dim).with_prompt("p", mu).with_sigma("p", sigma);
        // A typical state at time t.
        let z: Vec<f64> = m
            .iter()
            .map(|mi| {
                let x0 = mi + sigma * rng.sample::<f64, _>(StandardNormal);
                t * rng.sample::<f64, _>(StandardNormal) + (1.0 - t) * x0
            })
            .collect();
        let want = gaussian_velocity(&scn, &LatentVector::from_vec(z.clone()).unwrap(), t, "p", g).unwrap();
        let st = (t * t + (1.0 - t) * (1.0 - t) * sigma * sigma).sqrt();
        let est = kernel_velocity(&pairs, t, &z, 0.05 * st);
        let err: f64 = est.mean.iter().zip(want.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let se: f64 = est.se.iter().map(|s| s * s).sum::<f64>().sqrt();
        worst = worst.max(err / se);
        ensure(err <= 3.0 * se, || {
            format!("point {point} (t={t:.3}): closed {:?} vs MC {:?}, error {err:.4} > 3 x {se:.4}", want.data(), est.mean)
        })?;
    }
    Ok(format!("20 random (z, t, mean) at dim {dim}, 1e6 samples each, max error/SE {worst:.2}"))
}

fn euler_convergence() -> Result<String, String> {
    let mu = vec![1.5, -0.5, 0.75, 2.0];
    let scn = GaussianScenario::new(4).with_prompt("p", mu).with_sigma("p", 0.5);
    let f = GaussianField::new(scn).unwrap();
    let z1 = gaussian_noise(&[4], 77, "z1").unwrap();
    let end = |steps| integrate_backward(&f, &z1, "p", 1.0, TimeGrid::new(steps).unwrap()).unwrap();
    let reference = end(4096);
    let errs: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&s| end(s).sub(&reference).unwrap().norm())
        .collect();
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    ensure(ratios.iter().all(|r| (1.7..=2.3).contains(r)), || format!("errors {errs:?}, ratios {ratios:?}"))?;
    Ok(format!("errors {:.3e}/{:.3e}/{:.3e}, ratios {:.3}, {:.3}", errs[0], errs[1], errs[2], ratios[0], ratios[1]))
}

fn marginal_transport() -> Result<String, String> {
    let mu = vec![1.0, -0.5, 2.0, 0.0, -1.5, 0.25, 3.0, -2.0];
    let scn = GaussianScenario::new(8).with_prompt("p", mu.clone()).with_sigma("p", 0.8);
    let f = GaussianField::new(scn).unwrap();
    let n = 512;
    let grid = TimeGrid::new(128).unwrap();
    let mut sums = vec![0.0; 8];
    for i in 0..n {
        let z1 = gaussian_noise(&[8], 31, &format!("transport/{i}")).unwrap();
        let e = integrate_backward(&f, &z1, "p", 1.0, grid).unwrap();
        for (s, x) in sums.iter_mut().zip(e.data()) {
            *s += x;
        }
    }
    let tol = 4.0 / (n as f64).sqrt();
    let mut worst: f64 = 0.0;
    for c in 0..8 {
        let dev = (sums[c] / n as f64 - mu[c]).abs();
        worst = worst.max(dev);
        ensure(dev <= tol, || format!("coordinate {c}: mean off by {dev}"))?;
    }
    Ok(format!("512 samples, T=128, worst mean deviation {worst:.4} (tolerance {tol:.4})"))
}

fn vod_trends() -> Result<String, String> {
    let mut lines = Vec::new();
    for seed in PINNED_SEEDS {
        let on = run_trend(&TWO_TARGETS, seed, Method::Flowdc);
        let off = run_trend(&TWO_TARGETS, seed, Method::NoVod);
        let (c1, c0) = (on.early_cosine(), off.early_cosine());
        let (t1, t0) = (on.cost(), off.cost());
        let (n1, n0) = (on.nontarget(), off.nontarget());
        ensure(c1 > c0, || format!("seed {seed}: early cosine {c1} vs {c0}"))?;
        ensure(t1 < t0, || format!("seed {seed}: transport cost {t1} vs {t0}"))?;
        ensure(n1 < n0, || format!("seed {seed}: non-target deviation {n1} vs {n0}"))?;
        lines.push(format!("s{seed}: cos {c1:.3}>{c0:.3} cost {t1:.2}<{t0:.2} dev {n1:.3}<{n0:.3}"));
    }
    Ok(lines.join("; "))
}

fn pso_ablation() -> Result<String, String> {
    let mut lines = Vec::new();
    for seed in PINNED_SEEDS {
        let on = run_trend(&FOUR_TARGETS, seed, Method::Flowdc).target();
        let off = run_trend(&FOUR_TARGETS, seed, Method::NoPso).target();
        ensure(on <= off, || format!("seed {seed}: target deviation with PSO {on} vs without {off}"))?;
        lines.push(format!("s{seed}: {on:.3}<={off:.3}"));
    }
    Ok(lines.join("; "))
}

fn pso_extended_seeds() -> String {
    let seeds = 0..20u64;
    let (mut wins, mut ratio) = (0, 0.0);
    for seed in seeds.clone() {
        let on = run_trend(&FOUR_TARGETS, seed, Method::Flowdc).target();
        let off = run_trend(&FOUR_TARGETS, seed, Method::NoPso).target();
        wins += usize::from(on <= off);
        ratio += off / on;
    }
    let n = seeds.count();
    format!("seeds 0..{n}: PSO-on <= PSO-off on {wins}/{n}, mean off/on ratio {:.3}", ratio / n as f64)
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("scenario.json");
    let file = trend_file(&FOUR_TARGETS, 7, common::TREND_JITTER, 256);
    std::fs::write(&cfg, serde_json::to_string(&file).unwrap()).map_err(|e| e.to_string())?;
    let methods = [Method::Flowdc, Method::Flowedit, Method::Multiround, Method::NoVod, Method::NoPso];
    for m in methods {
        let a = dir.path().join(format!("{}-a", m.label()));
        let b = dir.path().join(format!("{}-b", m.label()));
        for out in [&a, &b] {
            cmd_run(&cfg, m, out, None, false).map_err(|e| format!("{}: {}", m.label(), e.error()))?;
        }
        for f in ["result.json", "diagnostics.csv"] {
            let same = std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
            ensure(same, || format!("{}: {f} differs", m.label()))?;
        }
    }
    Ok(format!("{} methods, result.json and diagnostics.csv byte-identical", methods.len()))
}

fn main() {
    let criteria: [(&str, Duration, Check); 11] = [
        ("schedule exactness", Duration::from_millis(1), schedule_exactness),
        ("PVO orthogonality", Duration::from_secs(10), pvo_orthogonality),
        ("norm inequality", Duration::from_secs(10), norm_inequality),
        ("decomposition soundness", Duration::from_secs(10), decomposition_soundness),
        ("FlowEdit reduction", Duration::from_secs(5), flowedit_reduction),
        ("oracle field correctness", Duration::from_secs(120), oracle_field),
        ("Euler convergence", Duration::from_secs(30), euler_convergence),
        ("marginal transport", Duration::from_secs(60), marginal_transport),
        ("VOD trend analogs", Duration::from_secs(60), vod_trends),
        ("PSO ablation analog", Duration::from_secs(60), pso_ablation),
        ("determinism", Duration::from_secs(60), determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if took <= budget {
                Ok(detail)
            } else {
                Err(format!("took {took:?}, budget {budget:?}; {detail}"))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS  {name} [{took:.2?}] {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{took:.2?}] {why}");
            }
        }
    }
    println!("info  PSO ablation beyond the pinned seeds: {}", pso_extended_seeds());
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
