//! Simulation of differentially private federated few-shot learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: fully-connected classifier with exact gradients and Hessian-vector products.
//! * [`episodes`]: N-way K-shot task construction.
//! * [`meta`]: Meta-SGD, its clipped and noised private variant, and a MAML baseline.
//! * [`privacy`]: noise calibration and Gaussian noise.
//! * [`federation`]: simulated clients, FedAvg and communication rounds.
//! * [`data`]: PGM ingestion, preprocessing, synthetic data and client partitioning.
//! * [`metrics`]: confusion counts, diagnostic indicators and confidence intervals.
//! * [`config`] / [`scenario`] / [`report`]: the experiment runner behind the CLI.

pub mod config;
pub mod data;
pub mod episodes;
pub mod error;
pub mod federation;
pub mod meta;
pub mod metrics;
pub mod nn;
pub mod privacy;
pub mod report;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
