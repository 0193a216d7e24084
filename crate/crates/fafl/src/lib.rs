//! Deterministic simulator and benchmark harness for fairness-aware
//! federated learning.
//!
//! The crate is organized around six subsystems:
//!
//! - [`model`] — small differentiable classifiers with native SGD
//! - [`data`] — synthetic data, CSV ingestion, non-IID partitioning
//! - [`fairness`] — pluggable aggregation mechanisms (FedAvg baseline,
//!   bandit client selection, reputation thresholding, bounded group loss,
//!   agnostic minimax mixtures, incentive sharing)
//! - [`channel`] — AES-256-GCM sealed client/server weight exchange with a
//!   bit-exact wire format and overhead instrumentation
//! - [`engine`] — the synchronous round loop, latency accounting and sweep
//!   harness
//! - [`report`] / [`cli`] — config parsing, CSV/SVG emission and the
//!   command-line entry points
//!
//! Every run is a pure function of its [`config::ExperimentConfig`]: fixed
//! seeds give bitwise-identical results across runs and worker counts.

pub mod channel;
pub mod cli;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod fairness;
pub mod model;
pub mod report;
pub mod rng;

pub use error::{FaflError, Result};
