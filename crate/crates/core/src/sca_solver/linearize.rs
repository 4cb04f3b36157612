//! First-order upper model of the upload energy and the local point it is
//! taken at.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system_model::{upload_energy, uplink_rate, ChannelParams, Scenario};

/// Point at which the non-convex terms are linearized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPoint {
    pub p_k: f64,
    pub rho_aux_k: f64,
    pub rho_server_aux_k: f64,
}

impl LocalPoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_k.is_finite() && self.p_k >= 0.0) {
            return Err(Error::field("p_k", format!("must be finite and >= 0, got {}", self.p_k)));
        }
        for (name, v) in [
            ("rho_aux_k", self.rho_aux_k),
            ("rho_server_aux_k", self.rho_server_aux_k),
        ] {
            if !(v.is_finite() && v >= 1.0 - 1e-12) {
                return Err(Error::field(name, format!("must be finite and >= 1, got {v}")));
            }
        }
        Ok(())
    }
}

/// Derivative of `p theta / r(p)` at `p_k`:
/// `theta/r(p_k) - p_k theta g / (B log2(1+gamma p_k)^2 (B N0 + g p_k) ln 2)`.
pub fn upload_energy_slope(p_k: f64, theta: f64, chan: &ChannelParams) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let g = crate::system_model::path_gain(chan);
    let b = chan.bandwidth;
    let l = (chan.snr_per_watt() * p_k).ln_1p() / ln2;
    theta / uplink_rate(p_k, chan) - p_k * theta * g / (b * l * l * (b * chan.noise_psd + g * p_k) * ln2)
}

/// Tangent model `zeta(p) = E_up(p_k) + u(p_k) (p - p_k)`; returns the value
/// at `p` and the slope `u(p_k)`.
pub fn zeta_linearization(p: f64, lp: &LocalPoint, sc: &Scenario) -> Result<(f64, f64)> {
    let pm = sc.channel.p_max;
    if !(lp.p_k > 0.0 && lp.p_k <= pm) {
        return Err(Error::domain(
            "zeta_linearization",
            format!("local power must lie in (0, {pm}], got {}", lp.p_k),
        ));
    }
    if !(p > 0.0 && p <= pm) {
        return Err(Error::domain(
            "zeta_linearization",
            format!("power must lie in (0, {pm}], got {p}"),
        ));
    }
    let theta = sc.model.theta_embedding_bits;
    let e_k = upload_energy(lp.p_k, theta, &sc.channel);
    let u = upload_energy_slope(lp.p_k, theta, &sc.channel);
    Ok((e_k + u * (p - lp.p_k), u))
}

/// Samples the upload energy on `samples` points of `[p_max/samples, p_max]`
/// and reports the largest violation of discrete concavity (second
/// difference), relative to the energy scale. Non-positive means concave on
/// the sample.
pub fn upload_energy_concavity_defect(sc: &Scenario, samples: usize) -> f64 {
    let theta = sc.model.theta_embedding_bits;
    if theta == 0.0 || samples < 3 {
        return 0.0;
    }
    let pm = sc.channel.p_max;
    let e: Vec<f64> = (1..=samples)
        .map(|i| upload_energy(pm * i as f64 / samples as f64, theta, &sc.channel))
        .collect();
    let scale = e.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    e.windows(3)
        .map(|w| (w[0] - 2.0 * w[1] + w[2]) / scale)
        .fold(f64::NEG_INFINITY, f64::max)
}
