use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::network::DnnNetwork;
use crate::error::{Error, Result};

/// Largest network for which the full finite-difference Jacobian is formed.
pub const MAX_JACOBIAN_PARAMS: usize = 50_000;

/// Relative disagreement between step `h` and `h/2` that rejects a step.
pub const RICHARDSON_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEstimate {
    /// `||J ΔΩ||`, the first-order output distortion.
    pub jvp_norm: f64,
    /// `||f(φ, Ω_hat) - f(φ, Ω)||`
    pub true_distortion: f64,
    /// Jacobian Frobenius norm at this input, when formed.
    pub jacobian_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub per_input: Vec<InputEstimate>,
    /// `||ΔΩ||_F`
    pub delta_norm: f64,
    /// Gradient bound `G`: the largest Jacobian norm over inputs.
    pub g_estimate: Option<f64>,
    /// `G ||ΔΩ||_F`
    pub g_bound: Option<f64>,
    pub holds: bool,
    /// Largest `| ||JVP|| - true | / true` over inputs with nonzero distortion.
    pub max_relative_gap: f64,
}

fn eval_at(net: &DnnNetwork, base: &[f64], dir: &[f64], h: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let shifted: Vec<f64> = base.iter().zip(dir).map(|(w, d)| w + h * d).collect();
    net.with_flat_params(&shifted)?.forward(x)
}

fn central_difference(net: &DnnNetwork, base: &[f64], dir: &[f64], h: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let plus = eval_at(net, base, dir, h, x)?;
    let minus = eval_at(net, base, dir, -h, x)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Directional derivative of the output along `dir`, Richardson-checked.
fn jvp(net: &DnnNetwork, base: &[f64], dir: &[f64], h: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let coarse = central_difference(net, base, dir, h, x)?;
    let fine = central_difference(net, base, dir, 0.5 * h, x)?;
    let scale = fine.norm().max(coarse.norm());
    let disagreement = (&coarse - &fine).norm();
    if scale > 1e-300 && disagreement > RICHARDSON_TOLERANCE * scale {
        return Err(Error::Numeric {
            op: "gradient_distortion_estimate",
            msg: "finite-difference step too large".into(),
            diagnostics: format!("step={h:e}, |J_h - J_h/2|={disagreement:e}, |J|={scale:e}"),
        });
    }
    Ok((fine * 4.0 - coarse) / 3.0)
}

fn jacobian_norm(net: &DnnNetwork, base: &[f64], h: f64, x: &DVector<f64>) -> Result<f64> {
    let mut e = vec![0.0; base.len()];
    let mut sq = 0.0;
    for i in 0..base.len() {
        e[i] = 1.0;
        sq += central_difference(net, base, &e, h, x)?.norm_squared();
        e[i] = 0.0;
    }
    Ok(sq.sqrt())
}

/// First-order (Jacobian-vector) estimate of the pruning-induced output
/// distortion, together with the gradient-norm bound `G ||ΔΩ||_F`.
pub fn gradient_distortion_estimate(
    net: &DnnNetwork,
    pruned: &DnnNetwork,
    inputs: &[DVector<f64>],
    fd_step: f64,
) -> Result<GradientReport> {
    if !(fd_step > 0.0) {
        return Err(Error::domain("gradient_distortion_estimate", "fd_step must be > 0"));
    }
    net.check_same_shape(pruned)?;
    let base = net.flat_params();
    let delta: Vec<f64> = pruned
        .flat_params()
        .iter()
        .zip(&base)
        .map(|(p, w)| p - w)
        .collect();
    let delta_norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
    let with_g = base.len() <= MAX_JACOBIAN_PARAMS;

    let mut per_input = Vec::with_capacity(inputs.len());
    for x in inputs {
        let j = jvp(net, &base, &delta, fd_step, x)?;
        let true_distortion = (pruned.forward(x)? - net.forward(x)?).norm();
        let jacobian_norm = if with_g {
            Some(jacobian_norm(net, &base, fd_step, x)?)
        } else {
            None
        };
        per_input.push(InputEstimate {
            jvp_norm: j.norm(),
            true_distortion,
            jacobian_norm,
        });
    }
    let g_estimate = with_g.then(|| {
        per_input
            .iter()
            .filter_map(|e| e.jacobian_norm)
            .fold(0.0, f64::max)
    });
    let g_bound = g_estimate.map(|g| g * delta_norm);
    let holds = match g_bound {
        Some(b) => per_input
            .iter()
            .all(|e| e.jvp_norm <= b + 1e-6 * b.max(1e-12) + 1e-12),
        None => true,
    };
    let max_relative_gap = per_input
        .iter()
        .filter(|e| e.true_distortion > 0.0)
        .map(|e| (e.jvp_norm - e.true_distortion).abs() / e.true_distortion)
        .fold(0.0, f64::max);
    Ok(GradientReport {
        per_input,
        delta_norm,
        g_estimate,
        g_bound,
        holds,
        max_relative_gap,
    })
}
