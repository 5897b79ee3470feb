#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use flowdc::cli::{execute, FieldSpec, Method, PromptSpec, Reference, ScenarioFile, SourceSpec};
use flowdc::fields::wire::dispatch;
use flowdc::fields::{GaussianScenario, VelocityField};
use flowdc::{EditConfig, LatentVector, RunOptions, RunTrace};

/// Returns `None` to drop the connection without answering.
pub type Handler = Arc<dyn Fn(&str, &str, &str) -> Option<(u16, String)> + Send + Sync>;

/// Minimal HTTP/1.1 server on an ephemeral port, one thread per connection.
pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start(handler: Handler) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let h = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let handler = handler.clone();
                let hits = h.clone();
                thread::spawn(move || serve(stream, &*handler, &hits));
            }
        });
        Self { url, hits }
    }

    /// Serves `field` through the protocol dispatcher.
    pub fn serving<F: VelocityField + 'static>(field: F, dim_hint: Option<usize>) -> Self {
        Self::start(Arc::new(move |m, p, b| {
            let r = dispatch(&field, dim_hint, m, p, b);
            Some((r.status, r.body))
        }))
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, handler: &(dyn Fn(&str, &str, &str) -> Option<(u16, String)> + Send + Sync), hits: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or("").to_owned();
    let path = parts.next().unwrap_or("").to_owned();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 {
            return;
        }
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; len];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    hits.fetch_add(1, Ordering::SeqCst);
    let body = String::from_utf8_lossy(&body);
    let Some((status, text)) = handler(&method, &path, &body) else {
        return;
    };
    let mut stream = stream;
    let head = format!(
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        text.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(text.as_bytes());
    let _ = stream.flush();
}

pub fn vector(xs: &[f64]) -> LatentVector {
    LatentVector::from_vec(xs.to_vec()).unwrap()
}

pub fn axis(dim: usize, i: usize, w: f64) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    m[i] = w;
    m
}

// Trend scenarios: a zero-mean source, one axis-aligned mean shift per
// editing target, and a jittered backend standing in for a stochastic model.
pub const TREND_DIM: usize = 1024;
pub const TREND_JITTER: f64 = 0.5;
pub const PINNED_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const TWO_TARGETS: [f64; 2] = [1.0, 1.0];
/// The last target is deliberately weak.
pub const FOUR_TARGETS: [f64; 4] = [1.0, 1.0, 1.0, 0.25];

pub fn target_prompt(n: usize) -> String {
    (0..n).map(|i| format!("edit{i}")).collect::<Vec<_>>().join("; ")
}

pub fn trend_file(weights: &[f64], seed: u64, jitter: f64, dim: usize) -> ScenarioFile {
    let mut scn = GaussianScenario::new(dim).with_prompt("src", vec![0.0; dim]);
    for (i, &w) in weights.iter().enumerate() {
        scn = scn.with_prompt(&format!("edit{i}"), axis(dim, i, w));
    }
    ScenarioFile {
        field: FieldSpec::Gaussian { scenario: scn, jitter },
        x_src: SourceSpec::Sample {
            prompt: "src".into(),
            seed,
        },
        prompts: PromptSpec {
            source: "src".into(),
            target: target_prompt(weights.len()),
            intermediates: None,
        },
        config: EditConfig {
            seed,
            ..EditConfig::default()
        },
        reference: None,
    }
}

pub struct Outcome {
    pub z: LatentVector,
    pub trace: RunTrace,
    pub x_src: LatentVector,
    pub reference: Reference,
    pub cfg: EditConfig,
}

impl Outcome {
    /// Mean consecutive-displacement cosine over the decay window `t >= t_d`.
    pub fn early_cosine(&self) -> f64 {
        let cs: Vec<f64> = self
            .trace
            .main_records()
            .filter(|r| r.t >= self.cfg.t_d - 1e-12)
            .filter_map(|r| r.cos_prev)
            .collect();
        assert!(!cs.is_empty());
        cs.iter().sum::<f64>() / cs.len() as f64
    }

    pub fn cost(&self) -> f64 {
        flowdc::transport_cost(&self.trace).unwrap()
    }

    pub fn nontarget(&self) -> f64 {
        flowdc::cli::nontarget_deviation(&self.z, &self.x_src, &self.reference.target_coords).unwrap()
    }

    pub fn target(&self) -> f64 {
        flowdc::cli::target_deviation(&self.z, &self.reference).unwrap()
    }
}

pub fn run_file(file: &ScenarioFile, method: Method) -> Outcome {
    let r = file.resolve(None).unwrap();
    let (z, trace) = execute(method, &r, RunOptions::default()).unwrap();
    Outcome {
        z,
        trace,
        x_src: r.x_src.clone(),
        reference: r.reference.clone().unwrap(),
        cfg: r.cfg.clone(),
    }
}

pub fn run_trend(weights: &[f64], seed: u64, method: Method) -> Outcome {
    run_file(&trend_file(weights, seed, TREND_JITTER, TREND_DIM), method)
}

// Monte-Carlo oracle for the analytic field. Draws (X0, X1) pairs directly
// from the data and noise distributions and estimates E[X1 - X0 | Z_t ~ z]
// with a Gaussian kernel; no closed-form velocity is involved.

pub struct Pairs {
    pub dim: usize,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
}

impl Pairs {
    /// `n` draws with `X0 ~ N(mean, sigma^2 I)` and independent `X1 ~ N(0, I)`.
    pub fn draw(n: usize, mean: &[f64], sigma: f64, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let dim = mean.len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x0 = Vec::with_capacity(n * dim);
        let mut x1 = Vec::with_capacity(n * dim);
        for _ in 0..n {
            for m in mean {
                x0.push(m + sigma * rng.sample::<f64, _>(StandardNormal));
            }
            for _ in 0..dim {
                x1.push(rng.sample::<f64, _>(StandardNormal));
            }
        }
        Self { dim, x0, x1 }
    }

    pub fn len(&self) -> usize {
        self.x0.len() / self.dim
    }
}

pub struct KernelEstimate {
    pub mean: Vec<f64>,
    /// Standard error of each coordinate of `mean`.
    pub se: Vec<f64>,
    pub n_eff: f64,
}

/// Self-normalized kernel regression of `X1 - X0` on `Z_t` at `z`.
pub fn kernel_velocity(p: &Pairs, t: f64, z: &[f64], h: f64) -> KernelEstimate {
    let d = p.dim;
    let mut w = Vec::with_capacity(p.len());
    let mut y = Vec::with_capacity(p.len() * d);
    for j in 0..p.len() {
        let mut r2 = 0.0;
        for i in 0..d {
            let (a, b) = (p.x0[j * d + i], p.x1[j * d + i]);
            let zt = t * b + (1.0 - t) * a;
            r2 += (zt - z[i]) * (zt - z[i]);
            y.push(b - a);
        }
        w.push((-0.5 * r2 / (h * h)).exp());
    }
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let mut mean = vec![0.0; d];
    for (j, wj) in w.iter().enumerate() {
        for i in 0..d {
            mean[i] += wj * y[j * d + i] / sw;
        }
    }
    let mut se = vec![0.0; d];
    for (j, wj) in w.iter().enumerate() {
        for i in 0..d {
            let r = y[j * d + i] - mean[i];
            se[i] += wj * wj * r * r;
        }
    }
    for s in &mut se {
        *s = s.sqrt() / sw;
    }
    KernelEstimate {
        mean,
        se,
        n_eff: sw * sw / sw2,
    }
}
