use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::network::DnnNetwork;
use super::prune::{prune, PruneStrategy};
use crate::error::Result;

/// Relative slack granted to inequalities that can hold with equality.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTerm {
    /// Product of the other layers' (unpruned) Frobenius norms.
    pub coeff: f64,
    pub norm: f64,
    pub pruned_norm: f64,
    /// `||Ω^(l) - Ω_hat^(l)||_F`
    pub delta_norm: f64,
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBound {
    pub total: f64,
    pub per_layer: Vec<LayerTerm>,
}

/// `Π_{i ≠ l} norms[i]` for every `l`, without dividing.
fn leave_one_out_products(norms: &[f64]) -> Vec<f64> {
    let n = norms.len();
    let mut prefix = vec![1.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * norms[i];
    }
    let mut suffix = vec![1.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] * norms[i];
    }
    (0..n).map(|l| prefix[l] * suffix[l + 1]).collect()
}

fn bound_over(net: &DnnNetwork, pruned: &DnnNetwork, range: std::ops::Range<usize>) -> ParamBound {
    let norms: Vec<f64> = net.layers[range.clone()].iter().map(|m| m.norm()).collect();
    let coeffs = leave_one_out_products(&norms);
    let per_layer: Vec<LayerTerm> = range
        .zip(coeffs)
        .zip(&norms)
        .map(|((l, coeff), &norm)| {
            let delta_norm = (&net.layers[l] - &pruned.layers[l]).norm();
            LayerTerm {
                coeff,
                norm,
                pruned_norm: pruned.layers[l].norm(),
                delta_norm,
                term: coeff * delta_norm,
            }
        })
        .collect();
    ParamBound {
        total: per_layer.iter().map(|t| t.term).sum(),
        per_layer,
    }
}

/// Weighted parameter distortion `Σ_l Â^(l) ||Ω^(l) - Ω_hat^(l)||_F` over the
/// whole network, with coefficients from the unpruned norms.
pub fn param_distortion_bound(net: &DnnNetwork, pruned: &DnnNetwork) -> Result<ParamBound> {
    net.check_same_shape(pruned)?;
    Ok(bound_over(net, pruned, 0..net.num_layers()))
}

/// The same bound restricted to the device-side layers; it dominates the
/// distortion of the uploaded embedding.
pub fn device_distortion_bound(net: &DnnNetwork, pruned: &DnnNetwork) -> Result<ParamBound> {
    net.check_same_shape(pruned)?;
    Ok(bound_over(net, pruned, 0..net.split_index))
}

/// Worst slack (bound minus observed) of both per-layer inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: usize,
    /// `Π_{j≤l} ||W^(j)||_F − ||f(φ, W^(1:l))||`
    pub norm_slack: f64,
    /// Recursive distortion inequality slack.
    pub distortion_slack: f64,
    pub pass: bool,
}

fn within(slack: f64, scale: f64) -> bool {
    slack >= -ROUNDING_SLACK * scale.max(1.0)
}

pub fn verify_layer_bounds(
    net: &DnnNetwork,
    pruned: &DnnNetwork,
    inputs: &[DVector<f64>],
) -> Result<Vec<LayerCheck>> {
    net.check_same_shape(pruned)?;
    let norms = net.frobenius_norms();
    let deltas: Vec<f64> = net
        .layers
        .iter()
        .zip(&pruned.layers)
        .map(|(a, b)| (a - b).norm())
        .collect();
    let mut prefix = Vec::with_capacity(norms.len());
    let mut acc = 1.0;
    for n in &norms {
        acc *= n;
        prefix.push(acc);
    }
    let mut checks: Vec<LayerCheck> = (0..norms.len())
        .map(|l| LayerCheck {
            layer: l + 1,
            norm_slack: f64::INFINITY,
            distortion_slack: f64::INFINITY,
            pass: true,
        })
        .collect();
    for x in inputs {
        let a = net.layer_outputs(x)?;
        let b = pruned.layer_outputs(x)?;
        let mut prev_dist = 0.0;
        for l in 0..norms.len() {
            let norm_slack = prefix[l] - a[l].norm();
            let dist = (&a[l] - &b[l]).norm();
            let before = if l == 0 { 1.0 } else { prefix[l - 1] };
            let rhs = deltas[l] * before + norms[l] * prev_dist;
            let distortion_slack = rhs - dist;
            let c = &mut checks[l];
            c.norm_slack = c.norm_slack.min(norm_slack);
            c.distortion_slack = c.distortion_slack.min(distortion_slack);
            c.pass &= within(norm_slack, prefix[l]) && within(distortion_slack, rhs);
            prev_dist = dist;
        }
    }
    Ok(checks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rho: f64,
    pub rho_server: f64,
    pub strategy: PruneStrategy,
    /// Output ℓ2 distortion per input.
    pub output_distortion: Vec<f64>,
    pub output_distortion_max: f64,
    pub param_bound: ParamBound,
    /// Largest embedding distortion and its device-side bound.
    pub embedding_distortion_max: f64,
    pub device_bound: f64,
    pub holds: bool,
    /// `param_bound / output_distortion_max` (infinite when nothing moved).
    pub gap_factor: f64,
}

pub fn bound_report(
    net: &DnnNetwork,
    pruned: &DnnNetwork,
    inputs: &[DVector<f64>],
    rho: f64,
    rho_server: f64,
    strategy: PruneStrategy,
) -> Result<BoundReport> {
    let param_bound = param_distortion_bound(net, pruned)?;
    let device = device_distortion_bound(net, pruned)?;
    let mut output_distortion = Vec::with_capacity(inputs.len());
    let mut emb_max: f64 = 0.0;
    for x in inputs {
        let a = net.layer_outputs(x)?;
        let b = pruned.layer_outputs(x)?;
        let k = net.split_index - 1;
        emb_max = emb_max.max((&a[k] - &b[k]).norm());
        output_distortion.push((a.last().unwrap() - b.last().unwrap()).norm());
    }
    let out_max = output_distortion.iter().copied().fold(0.0, f64::max);
    let holds = within(param_bound.total - out_max, param_bound.total)
        && within(device.total - emb_max, device.total);
    Ok(BoundReport {
        rho,
        rho_server,
        strategy,
        output_distortion,
        output_distortion_max: out_max,
        gap_factor: if out_max > 0.0 {
            param_bound.total / out_max
        } else {
            f64::INFINITY
        },
        param_bound,
        embedding_distortion_max: emb_max,
        device_bound: device.total,
        holds,
    })
}

/// Prunes both sides at each ratio with each strategy and compares the
/// largest output distortion against the parameter-distortion bound.
pub fn verify_output_bound(
    net: &DnnNetwork,
    inputs: &[DVector<f64>],
    rho_grid: &[f64],
    strategies: &[PruneStrategy],
) -> Result<Vec<BoundReport>> {
    let mut out = Vec::with_capacity(rho_grid.len() * strategies.len());
    for &rho in rho_grid {
        for s in strategies {
            let pruned = prune(net, rho, rho, s);
            out.push(bound_report(net, &pruned, inputs, rho, rho, *s)?);
        }
    }
    Ok(out)
}
