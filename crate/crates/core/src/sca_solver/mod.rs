//! Joint pruning, transmit-power and clock-frequency design.
//!
//! The original problem couples the retained workload `rho N` with the clock
//! through `rho N / f` and `rho f^2`, and the upload energy `p theta / r(p)`
//! is non-convex in `p`. [`sca_optimize`] introduces auxiliaries
//! `rho' >= 1/rho`, replaces `rho <= 1/rho'` by its tangent line and the
//! upload energy by its first-order model, and solves the resulting convex
//! problems with a log-barrier method until the objective stalls.

pub mod barrier;
mod benchmark;
mod linearize;
mod oracle;
mod sca;
mod subproblem;

pub use benchmark::{benchmark_setup, solve_benchmark, BenchmarkScheme};
pub use linearize::{upload_energy_concavity_defect, upload_energy_slope, zeta_linearization, LocalPoint};
pub use oracle::{grid_oracle, OracleResult};
pub use sca::{
    effective_pins, sca_optimize, sca_optimize_with, InitMethod, Iterate, ScaOptions, SolveStatus, SolveTrace,
    StepDiagnostics, DEFAULT_EPSILON, DEFAULT_MAX_ITER, PHASE_ONE_TOL,
};
pub use subproblem::{
    build_subproblem, phase_one_subproblem, solve_subproblem, Pins, Point, Subproblem, SubproblemSolution, NVAR,
    P_FLOOR,
};
