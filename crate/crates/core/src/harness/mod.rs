//! Configuration files, budget and split-point sweeps, CSV output.
//!
//! Sweeps report the distortion bound `D_hat` and feasibility of each design
//! rather than task accuracy of an actually pruned model.

mod config;
mod layered;
mod sweep;

pub use config::{load_scenario, Config};
pub use layered::{scenario_at_split, LayerRecord, LayeredModelSpec};
pub use sweep::{csv_string, emit_csv, run_sweep, RunOptions, SweepAxis, SweepRow, SweepSpec, CSV_HEADER};

/// Note printed at the top of run reports.
pub const REPORT_NOTE: &str =
    "objective is the distortion lower bound D_hat of the pruned model; task accuracy is not measured";
