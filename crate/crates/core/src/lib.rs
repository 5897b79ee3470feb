//! Inversion-free multi-target editing of rectified-flow latents.
//!
//! A complex target prompt is split into cumulative intermediate prompts.
//! One editing trajectory per intermediate runs in parallel during the early,
//! high-noise steps, and each trajectory's editing velocity is split against
//! an orthogonalized subspace built from the trajectories that precede it.
//! The component outside that subspace is damped by a time-varying
//! coefficient. Single-trajectory editing and sequential per-clause editing
//! are provided as baselines.
//!
//! Velocity fields are pluggable through [`fields::VelocityField`]: an
//! analytic Gaussian field for testing and a remote HTTP client.

pub mod cli;
pub mod config;
pub mod decay;
pub mod error;
pub mod fields;
pub mod flow;
pub mod latent;
pub mod ortho;
pub mod pipeline;
pub mod prompts;
pub mod seeds;
pub mod trace;

pub use config::{EditConfig, KeySteps, TimeGrid};
pub use decay::{lambda_orth, reconstruct, DecaySchedule};
pub use error::{Error, RemoteError, Result};
pub use latent::LatentVector;
pub use ortho::{decompose, project, pvo, Basis, VelocityDecomposition};
pub use pipeline::{
    pvg, run_flowdc, run_flowdc_prompts, run_flowedit, run_multiround, subspace, RunOptions,
    TrajectoryState,
};
pub use prompts::{DelimiterDecoupler, FixedDecoupler, PromptDecoupler, PromptSet};
pub use trace::{consecutive_cosine, transport_cost, RunTrace, TraceRecord};
