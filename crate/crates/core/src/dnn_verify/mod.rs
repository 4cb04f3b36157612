//! Desk-scale verification that pruning-induced output distortion of a fully
//! connected co-inference network is dominated by its weighted parameter
//! distortion.

mod bounds;
mod gradient;
mod network;
mod prune;
mod spec;

pub use bounds::{
    bound_report, device_distortion_bound, param_distortion_bound, verify_layer_bounds,
    verify_output_bound, BoundReport, LayerCheck, LayerTerm, ParamBound, ROUNDING_SLACK,
};
pub use gradient::{
    gradient_distortion_estimate, GradientReport, InputEstimate, MAX_JACOBIAN_PARAMS,
    RICHARDSON_TOLERANCE,
};
pub use network::{fcdnn16_sizes, fcdnn8_sizes, unit_ball_input, Activation, DnnNetwork};
pub use prune::{prune, retained_count, PruneKind, PruneScope, PruneStrategy};
pub use spec::{run_verification, NetSpec, VerifyOptions, VerifySummary, WeightSource};
