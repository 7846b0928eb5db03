//! Desk-scale mmWave beam-tracking simulator and evaluation toolkit.
//!
//! The pipeline goes: geometric multipath channel -> DFT-codebook beam
//! gains and RSRP -> sliding-window LSTM prediction (best-index
//! classification or per-beam RSRP regression) -> autoregressive
//! measurement-substitution schedules -> Top-K / throughput-ratio /
//! MAFD / MOR reporting.
//!
//! Modules:
//! - [`channel`]: array responses, narrowband MIMO channel, DFT codebooks,
//!   combined beam gains, best-beam selection, RSRP.
//! - [`dataset`]: episode/scene data model, scene-records file format,
//!   synthetic vehicular generator with a blockage model, stats, splits.
//! - [`metrics`]: Top-K accuracy, throughput ratio, circular MAFD, MOR.
//! - [`model`]: LSTM stack with dense heads, BPTT training, checkpoints.
//! - [`tracking`]: sliding windows, measurement schedules, autoregressive
//!   rollouts with prediction feedback, angular pre-filter, persistence
//!   baseline.
//! - [`harness`]: experiment configuration, the end-to-end pipeline, and
//!   report/plot-data emission.

pub mod channel;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod tracking;

pub use error::{Error, Result};
