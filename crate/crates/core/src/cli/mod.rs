//! Command-line front end: `run`, `compare` and `diag`.
//!
//! Exit codes are 0 on success, 1 for failures during a run and 2 for
//! configuration errors. Failures print one JSON object to stderr.

mod diagnostics;
mod scenario;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use diagnostics::{nontarget_deviation, target_deviation, DiagnosticsReport, DiagnosticsRow};
pub use scenario::{FieldSpec, PromptSpec, Reference, ReferenceSpec, Resolved, ScenarioFile, SourceSpec};

use crate::config::EditConfig;
use crate::error::{Error, Result};
use crate::latent::LatentVector;
use crate::pipeline::{run_flowdc_prompts, run_flowedit_with, run_multiround_with, RunOptions};
use crate::prompts::PromptSet;
use crate::trace::{transport_cost, RunTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Flowdc,
    Flowedit,
    Multiround,
    /// Decoupled run with the orthogonal coefficient held at 1.
    NoVod,
    /// Decoupled run on the undivided target prompt.
    NoPso,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Flowdc => "flowdc",
            Method::Flowedit => "flowedit",
            Method::Multiround => "multiround",
            Method::NoVod => "no-vod",
            Method::NoPso => "no-pso",
        }
    }
}

/// Runs `method` on resolved inputs.
pub fn execute(
    method: Method,
    r: &Resolved,
    opts: RunOptions,
) -> Result<(LatentVector, RunTrace)> {
    let field = r.field.as_ref();
    match method {
        Method::Flowdc => run_flowdc_prompts(field, &r.prompts, &r.x_src, &r.cfg, opts),
        Method::Flowedit => run_flowedit_with(
            field,
            &r.x_src,
            r.prompts.source(),
            r.prompts.target(),
            &r.cfg,
            opts,
        ),
        Method::Multiround => run_multiround_with(field, &r.x_src, &r.prompts, &r.cfg, opts),
        Method::NoVod => {
            let cfg = EditConfig {
                lambda1: 1.0,
                lambda_d: 1.0,
                ..r.cfg.clone()
            };
            run_flowdc_prompts(field, &r.prompts, &r.x_src, &cfg, opts)
        }
        Method::NoPso => {
            let single = PromptSet::single(r.prompts.source(), r.prompts.target());
            run_flowdc_prompts(field, &single, &r.x_src, &r.cfg, opts)
        }
    }
}

#[derive(Serialize)]
struct RunResult<'a> {
    method: &'static str,
    seed: u64,
    steps: usize,
    endpoint: &'a LatentVector,
    x_src: &'a LatentVector,
    prompts: &'a PromptSet,
    config: &'a EditConfig,
}

/// Error tagged with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Config(Error),
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &Error {
        match self {
            CliError::Config(e) | CliError::Runtime(e) => e,
        }
    }

    fn report(&self) -> String {
        serde_json::json!({
            "error": self.error().to_string(),
            "kind": self.error().kind(),
            "exit": self.exit_code(),
        })
        .to_string()
    }
}

fn load(config: &Path, seed: Option<u64>) -> Result<Resolved, CliError> {
    ScenarioFile::load(config)
        .and_then(|s| s.resolve(seed))
        .map_err(CliError::Config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(e).context(format!("creating {}", path.display())))
}

fn write_outputs(out: &Path, method: Method, r: &Resolved, z: &LatentVector, trace: &RunTrace) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io(e).context(format!("creating {}", out.display())))?;
    let mut w = create(&out.join("trace.jsonl"))?;
    trace.write_jsonl(&mut w)?;
    w.flush()?;

    let result = RunResult {
        method: method.label(),
        seed: r.cfg.seed,
        steps: trace.main_steps(),
        endpoint: z,
        x_src: &r.x_src,
        prompts: &r.prompts,
        config: &r.cfg,
    };
    let mut w = create(&out.join("result.json"))?;
    serde_json::to_writer_pretty(&mut w, &result)?;
    w.write_all(b"\n")?;
    w.flush()?;

    DiagnosticsReport::from_trace(trace)?.write_csv(create(&out.join("diagnostics.csv"))?)
}

/// `run`: one method, writing `trace.jsonl`, `result.json` and
/// `diagnostics.csv` into `out`.
pub fn cmd_run(
    config: &Path,
    method: Method,
    out: &Path,
    seed: Option<u64>,
    snapshots: bool,
) -> Result<(), CliError> {
    let r = load(config, seed)?;
    let (z, trace) = execute(method, &r, RunOptions { snapshots }).map_err(CliError::Runtime)?;
    write_outputs(out, method, &r, &z, &trace).map_err(CliError::Runtime)
}

/// One row of `compare.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: &'static str,
    pub seed: u64,
    pub nontarget_deviation: f64,
    pub target_deviation: f64,
    pub transport_cost: f64,
    pub steps: usize,
}

/// Runs each method from a fresh field and scores its endpoint.
pub fn compare(config: &Path, methods: &[Method], seed: Option<u64>) -> Result<Vec<CompareRow>, CliError> {
    if methods.is_empty() {
        return Err(CliError::Config(Error::Config("no methods to compare".into())));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for &m in methods {
        // Fresh resolution per method so stochastic fields replay the same
        // stream for every method.
        let r = load(config, seed)?;
        let reference = r.reference.clone().ok_or_else(|| {
            CliError::Config(Error::Config(
                "compare needs a gaussian field or an explicit reference".into(),
            ))
        })?;
        let score = || -> Result<CompareRow> {
            let (z, trace) = execute(m, &r, RunOptions::default())
                .map_err(|e| e.context(format!("method {}", m.label())))?;
            Ok(CompareRow {
                method: m.label(),
                seed: r.cfg.seed,
                nontarget_deviation: nontarget_deviation(&z, &r.x_src, &reference.target_coords)?,
                target_deviation: target_deviation(&z, &reference)?,
                transport_cost: transport_cost(&trace)?,
                steps: trace.main_steps(),
            })
        };
        rows.push(score().map_err(CliError::Runtime)?);
    }
    Ok(rows)
}

/// `compare`: writes `compare.csv` with one row per method.
pub fn cmd_compare(config: &Path, methods: &[Method], out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let rows = compare(config, methods, seed)?;
    let write = || -> Result<()> {
        std::fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_writer(create(&out.join("compare.csv"))?);
        for row in &rows {
            w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(CliError::Runtime)
}

/// `diag`: rebuilds `diagnostics.csv` from a trace file.
pub fn cmd_diag(trace: &Path, out: &Path) -> Result<(), CliError> {
    let file = File::open(trace)
        .map_err(|e| CliError::Config(Error::Config(format!("cannot read {}: {e}", trace.display()))))?;
    let tr = RunTrace::read_jsonl(BufReader::new(file)).map_err(CliError::Config)?;
    let report = DiagnosticsReport::from_trace(&tr).map_err(CliError::Runtime)?;
    create(out)
        .and_then(|w| report.write_csv(w))
        .map_err(CliError::Runtime)
}

#[derive(Debug, Parser)]
#[command(name = "flowdc", version, about = "Multi-target flow editing trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one editing method on a scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Store full latent snapshots in the trace.
        #[arg(long)]
        snapshots: bool,
    },
    /// Run several methods under one seed and tabulate endpoint deviations.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        methods: Vec<Method>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute per-step diagnostics from a trace.
    Diag {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let res = match &cli.command {
        Command::Run {
            config,
            method,
            out,
            seed,
            snapshots,
        } => cmd_run(config, *method, out, *seed, *snapshots),
        Command::Compare {
            config,
            methods,
            out,
            seed,
        } => cmd_compare(config, methods, out, *seed),
        Command::Diag { trace, out } => cmd_diag(trace, out),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.report());
            e.exit_code()
        }
    }
}
