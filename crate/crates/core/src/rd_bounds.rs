//! Rate-distortion lower bounds for pruned parameter vectors under the
//! (unsquared) Frobenius distortion `d(w, w_hat) = ||w - w_hat||`.
//!
//! Every quantity is in bits. Gamma ratios are evaluated in the log domain so
//! the bounds stay finite for parameter counts in the hundreds of millions.

use std::f64::consts::{E, LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system_model::ModelProfile;

/// Lower edge of the water-level bracket, relative to `min(1/lambda_i)`.
pub const BRACKET_EPS: f64 = 1e-12;
pub const MAX_BISECTION_ITERS: usize = 200;

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Source model of a parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdModel {
    /// Source dimension.
    pub dim: f64,
    /// Differential entropy of the whole vector (bits).
    pub entropy_bits: f64,
    /// Optional per-coordinate Laplacian rate parameters.
    #[serde(default)]
    pub scales: Option<Vec<f64>>,
}

impl RdModel {
    pub fn new(dim: f64, entropy_bits: f64) -> Self {
        RdModel {
            dim,
            entropy_bits,
            scales: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dim >= 1.0) {
            return Err(Error::field("dim", "must be >= 1"));
        }
        if let Some(s) = &self.scales {
            if s.len() as f64 != self.dim {
                return Err(Error::field(
                    "scales",
                    format!("expected {} entries, got {}", self.dim, s.len()),
                ));
            }
            check_scales(s)?;
        }
        Ok(())
    }
}

/// Value of a bound. For rate bounds `value` is clamped at zero and
/// `unclamped` keeps the raw expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub value: f64,
    pub unclamped: f64,
    /// Water level of the parallel-Laplacian bounds.
    pub mu_waterlevel: Option<f64>,
}

impl BoundResult {
    fn plain(v: f64) -> Self {
        BoundResult {
            value: v.max(0.0),
            unclamped: v,
            mu_waterlevel: None,
        }
    }
}

/// `log2` of `Gamma(n/2) / (2 Gamma(n))`.
fn log2_gamma_ratio(n: f64) -> f64 {
    (ln_gamma(0.5 * n) - LN_2 - ln_gamma(n)) / LN_2
}

/// Maximum differential entropy (bits) of a `dim`-dimensional error vector
/// with unit expected Euclidean norm.
pub fn phi_of_one(dim: f64) -> f64 {
    let q = dim;
    q * (PI.sqrt() * E / q).log2() - log2_gamma_ratio(q)
}

/// Lower bound on `R(D)` of a source with the given entropy and dimension.
///
/// `distortion == 0` yields an unbounded (+inf) result.
pub fn rate_lower_bound(distortion: f64, m: &RdModel) -> Result<BoundResult> {
    if distortion.is_nan() || distortion < 0.0 {
        return Err(Error::domain(
            "rate_lower_bound",
            format!("distortion must be > 0, got {distortion}"),
        ));
    }
    if !(m.dim >= 1.0) {
        return Err(Error::domain("rate_lower_bound", "dimension must be >= 1"));
    }
    if distortion == 0.0 {
        return Ok(BoundResult::plain(f64::INFINITY));
    }
    let q = m.dim;
    let raw = m.entropy_bits + q * (q / (PI.sqrt() * E * distortion)).log2() + log2_gamma_ratio(q);
    Ok(BoundResult::plain(raw))
}

/// Inverse of [`rate_lower_bound`]: the smallest distortion reachable at
/// `rate` bits.
pub fn distortion_rate_bound(rate_bits: f64, m: &RdModel) -> Result<f64> {
    if !(m.dim >= 1.0) {
        return Err(Error::domain("distortion_rate_bound", "dimension must be >= 1"));
    }
    let n = m.dim;
    let log2_d = (n / (PI.sqrt() * E)).log2() - (rate_bits - m.entropy_bits) / n
        + log2_gamma_ratio(n) / n;
    Ok(log2_d.exp2())
}

/// Distortion lower bound `D_hat(rho, rho_server)` of a pruned split model
/// whose retained size is `(rho q + rho_server s) b` bits.
pub fn distortion_lower_bound(rho: f64, rho_server: f64, prof: &ModelProfile) -> Result<f64> {
    let n = prof.total_params();
    if !(n > 0.0) {
        return Err(Error::domain(
            "distortion_lower_bound",
            "total parameter count must be > 0",
        ));
    }
    let rate = retained_bits(rho, rho_server, prof);
    distortion_rate_bound(rate, &RdModel::new(n, prof.entropy_bits))
}

/// Storage size (bits) of the pruned model.
pub fn retained_bits(rho: f64, rho_server: f64, prof: &ModelProfile) -> f64 {
    (rho * prof.q_device_params + rho_server * prof.s_server_params) * prof.bits_per_param
}

/// Rate-distortion function of a scalar zero-mean Laplacian source under
/// absolute-error distortion.
pub fn laplacian_scalar_rd(lambda: f64, distortion: f64) -> f64 {
    if distortion <= 0.0 {
        return f64::INFINITY;
    }
    if distortion < 1.0 / lambda {
        -(lambda * distortion).log2()
    } else {
        0.0
    }
}

fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::field("scales", "must be non-empty"));
    }
    if let Some(bad) = scales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::field("scales", format!("entries must be > 0, got {bad}")));
    }
    Ok(())
}

/// Water-level bisection on an increasing function of `mu`.
fn bisect_increasing(
    op: &'static str,
    lo: f64,
    hi: f64,
    tol: f64,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Numeric {
            op,
            msg: "water level outside bisection bracket".into(),
            diagnostics: format!("bracket=[{lo:e}, {hi:e}], f(lo)={flo:e}, f(hi)={fhi:e}"),
        });
    }
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let v = f(mid);
    if v.abs() <= tol {
        Ok(mid)
    } else {
        Err(Error::Numeric {
            op,
            msg: format!("no convergence after {MAX_BISECTION_ITERS} iterations"),
            diagnostics: format!("bracket=[{lo:e}, {hi:e}], residual={v:e}"),
        })
    }
}

/// Total distortion consumed at water level `mu`.
pub fn waterfill_distortion(scales: &[f64], mu: f64) -> f64 {
    let sq = (scales.len() as f64).sqrt();
    scales.iter().map(|l| mu.min(1.0 / l)).sum::<f64>() / sq
}

/// Total rate (bits) spent at water level `mu`.
pub fn waterfill_rate(scales: &[f64], mu: f64) -> f64 {
    scales.iter().map(|l| (-(l * mu).log2()).max(0.0)).sum()
}

fn bracket(scales: &[f64]) -> (f64, f64) {
    let inv = scales.iter().map(|l| 1.0 / l);
    let min = inv.clone().fold(f64::INFINITY, f64::min);
    let max = inv.fold(0.0, f64::max);
    (BRACKET_EPS * min, max)
}

/// Rate lower bound of a parallel (independent, non-identical) Laplacian
/// source at Frobenius distortion `distortion`.
pub fn parallel_laplacian_rate_bound(scales: &[f64], distortion: f64) -> Result<BoundResult> {
    check_scales(scales)?;
    if !(distortion > 0.0) {
        return Err(Error::domain(
            "parallel_laplacian_rate_bound",
            format!("distortion must be > 0, got {distortion}"),
        ));
    }
    let (lo, hi) = bracket(scales);
    let saturated = waterfill_distortion(scales, hi);
    if distortion >= saturated {
        return Ok(BoundResult {
            value: 0.0,
            unclamped: 0.0,
            mu_waterlevel: Some(hi),
        });
    }
    let inv_sum: f64 = scales.iter().map(|l| 1.0 / l).sum();
    let mu = bisect_increasing(
        "parallel_laplacian_rate_bound",
        lo,
        hi,
        1e-12 * inv_sum * 1e-3,
        |mu| waterfill_distortion(scales, mu) - distortion,
    )?;
    let r = waterfill_rate(scales, mu);
    Ok(BoundResult {
        value: r,
        unclamped: r,
        mu_waterlevel: Some(mu),
    })
}

/// Distortion lower bound of a parallel Laplacian source at `rate` bits.
pub fn parallel_laplacian_distortion_bound(scales: &[f64], rate: f64) -> Result<BoundResult> {
    check_scales(scales)?;
    if !(rate >= 0.0) {
        return Err(Error::domain(
            "parallel_laplacian_distortion_bound",
            format!("rate must be >= 0, got {rate}"),
        ));
    }
    let (lo, hi) = bracket(scales);
    let mu = if rate == 0.0 {
        hi
    } else {
        // rate(mu) is decreasing; bisect on its negation
        bisect_increasing(
            "parallel_laplacian_distortion_bound",
            lo,
            hi,
            1e-12 * rate.max(1.0),
            |mu| rate - waterfill_rate(scales, mu),
        )?
    };
    let d = waterfill_distortion(scales, mu);
    Ok(BoundResult {
        value: d,
        unclamped: d,
        mu_waterlevel: Some(mu),
    })
}
