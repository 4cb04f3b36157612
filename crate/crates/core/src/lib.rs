//! Planner and verifier for pruning-aware split inference over a wireless
//! edge link.
//!
//! * [`system_model`]: uplink rate and per-stage latency/energy.
//! * [`rd_bounds`]: rate-distortion lower bounds on pruning distortion.
//! * [`weight_stats`]: Laplacian/Gaussian weight fits and entropy.
//! * [`dnn_verify`]: empirical checks of the output-vs-parameter distortion
//!   bounds on small fully connected networks.
//! * [`sca_solver`]: joint pruning/power/frequency design by successive
//!   convex approximation, with a grid oracle and restricted benchmarks.
//! * [`harness`]: configuration, sweeps and CSV output.

pub mod dnn_verify;
pub mod error;
pub mod harness;
pub mod rd_bounds;
pub mod sca_solver;
pub mod system_model;
pub mod weight_stats;

pub use error::{Error, Result};
pub use system_model::{Decision, Metrics, Scenario};
