//! Closed-form latency and energy model of a two-stage (device, server)
//! co-inference pipeline linked by a single uplink.
//!
//! All rates are in bits/s and every size is in bits. Compute workloads are
//! in FLOPs, clock frequencies in cycles/s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rd_bounds;

/// Deterministic path-loss uplink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Linear power gain at the reference distance.
    pub k0_ref_gain: f64,
    /// Reference distance (m).
    pub d0_ref: f64,
    pub pathloss_exp: f64,
    /// Device-server distance (m).
    pub distance: f64,
    /// Uplink bandwidth (Hz).
    pub bandwidth: f64,
    /// Noise power spectral density (W/Hz).
    pub noise_psd: f64,
    /// Maximum transmit power (W).
    pub p_max: f64,
}

/// Processor model of one side of the split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeParams {
    /// Maximum clock frequency (cycles/s).
    pub f_max: f64,
    pub flops_per_cycle: f64,
    /// Power usage effectiveness multiplier.
    pub pue: f64,
    /// Chip power coefficient (W/(cycle/s)^3).
    pub power_coeff: f64,
}

/// Size and workload of the partitioned model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub q_device_params: f64,
    pub s_server_params: f64,
    pub bits_per_param: f64,
    /// Unpruned on-device workload (FLOPs).
    pub n_flop_device: f64,
    /// Unpruned on-server workload (FLOPs).
    pub n_flop_server: f64,
    /// Size of the uploaded embedding (bits).
    pub theta_embedding_bits: f64,
    /// Differential entropy of the full parameter vector (bits).
    pub entropy_bits: f64,
}

impl ModelProfile {
    pub fn total_params(&self) -> f64 {
        self.q_device_params + self.s_server_params
    }
}

/// Latency and energy ceilings for one inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosBudget {
    /// Delay budget (s).
    pub t_max: f64,
    /// Energy budget (J).
    pub e_max: f64,
}

pub const DEFAULT_RHO_MIN: f64 = 1e-3;

/// A complete problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub channel: ChannelParams,
    pub device: ComputeParams,
    pub server: ComputeParams,
    pub model: ModelProfile,
    pub qos: QosBudget,
    pub rho_min: f64,
}

/// The five decision variables of the joint design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Retained fraction of on-device parameters.
    pub rho: f64,
    pub f_device: f64,
    pub p_tx: f64,
    /// Retained fraction of on-server parameters.
    pub rho_server: f64,
    pub f_server: f64,
}

/// Per-stage latency/energy breakdown of a decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub t_device: f64,
    pub t_upload: f64,
    pub t_server: f64,
    pub t_total: f64,
    pub e_device: f64,
    pub e_upload: f64,
    pub e_server: f64,
    pub e_total: f64,
    pub rate_bps: f64,
    pub distortion_bound: f64,
}

/// Outcome of a feasibility check with signed slacks (positive = margin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub delay_slack: f64,
    pub energy_slack: f64,
    /// Smallest signed distance to any box bound, in the variable's own units
    /// normalised by its range.
    pub box_slack: f64,
}

impl FeasibilityReport {
    /// Feasibility allowing a relative violation of `tol` on each constraint.
    pub fn feasible_within(&self, qos: &QosBudget, tol: f64) -> bool {
        self.delay_slack >= -tol * qos.t_max.max(1.0)
            && self.energy_slack >= -tol * qos.e_max.max(1.0)
            && self.box_slack >= -tol
    }
}

fn require_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::field(field, format!("must be finite and > 0, got {v}")))
    }
}

fn require_nonneg(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::field(field, format!("must be finite and >= 0, got {v}")))
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("k0_ref_gain", self.k0_ref_gain)?;
        require_positive("d0_ref", self.d0_ref)?;
        require_positive("pathloss_exp", self.pathloss_exp)?;
        require_positive("distance", self.distance)?;
        require_positive("bandwidth", self.bandwidth)?;
        require_positive("noise_psd", self.noise_psd)?;
        require_positive("p_max", self.p_max)?;
        if self.distance < self.d0_ref {
            return Err(Error::field(
                "distance",
                format!("must be >= d0_ref ({}), got {}", self.d0_ref, self.distance),
            ));
        }
        Ok(())
    }

    /// Receive SNR per watt of transmit power, `g / (B N0)`.
    pub fn snr_per_watt(&self) -> f64 {
        path_gain(self) / (self.bandwidth * self.noise_psd)
    }
}

impl ComputeParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("f_max", self.f_max)?;
        require_positive("flops_per_cycle", self.flops_per_cycle)?;
        require_positive("pue", self.pue)?;
        require_positive("power_coeff", self.power_coeff)
    }

    /// Stage delay for `flops` of work at clock `f`.
    pub fn delay(&self, flops: f64, f: f64) -> f64 {
        if flops == 0.0 {
            0.0
        } else {
            flops / (f * self.flops_per_cycle)
        }
    }

    /// Stage energy `eta * (flops / c) * phi * f^2`.
    pub fn energy(&self, flops: f64, f: f64) -> f64 {
        self.pue * (flops / self.flops_per_cycle) * self.power_coeff * f * f
    }
}

impl ModelProfile {
    pub fn validate(&self) -> Result<()> {
        require_nonneg("q_device_params", self.q_device_params)?;
        require_nonneg("s_server_params", self.s_server_params)?;
        require_nonneg("bits_per_param", self.bits_per_param)?;
        require_nonneg("n_flop_device", self.n_flop_device)?;
        require_nonneg("n_flop_server", self.n_flop_server)?;
        require_nonneg("theta_embedding_bits", self.theta_embedding_bits)?;
        if !self.entropy_bits.is_finite() {
            return Err(Error::field("entropy_bits", "must be finite"));
        }
        if self.total_params() <= 0.0 {
            return Err(Error::field(
                "q_device_params",
                "q_device_params + s_server_params must be > 0",
            ));
        }
        Ok(())
    }
}

impl QosBudget {
    pub fn validate(&self) -> Result<()> {
        require_positive("t_max", self.t_max)?;
        require_positive("e_max", self.e_max)
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.device.validate()?;
        self.server.validate()?;
        self.model.validate()?;
        self.qos.validate()?;
        if !(self.rho_min > 0.0 && self.rho_min <= 1.0) {
            return Err(Error::field(
                "rho_min",
                format!("must lie in (0, 1], got {}", self.rho_min),
            ));
        }
        Ok(())
    }

    /// Decision with every resource at its maximum and no pruning.
    pub fn full_resources(&self) -> Decision {
        Decision {
            rho: 1.0,
            f_device: self.device.f_max,
            p_tx: self.channel.p_max,
            rho_server: 1.0,
            f_server: self.server.f_max,
        }
    }
}

/// Linear channel power gain `K0 (d/d0)^-alpha`.
pub fn path_gain(chan: &ChannelParams) -> f64 {
    chan.k0_ref_gain * (chan.distance / chan.d0_ref).powf(-chan.pathloss_exp)
}

/// Achievable uplink rate (bits/s) at transmit power `p`.
pub fn uplink_rate(p: f64, chan: &ChannelParams) -> f64 {
    chan.bandwidth * (chan.snr_per_watt() * p).ln_1p() / std::f64::consts::LN_2
}

/// Upload delay `theta / r(p)`; infinite when nothing can be sent.
pub fn upload_delay(p: f64, theta: f64, chan: &ChannelParams) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    let r = uplink_rate(p, chan);
    if r > 0.0 {
        theta / r
    } else {
        f64::INFINITY
    }
}

/// Upload energy `p theta / r(p)`, taken as zero when `p == 0`.
pub fn upload_energy(p: f64, theta: f64, chan: &ChannelParams) -> f64 {
    if theta == 0.0 || p == 0.0 {
        return 0.0;
    }
    p * upload_delay(p, theta, chan)
}

pub fn evaluate(dec: &Decision, sc: &Scenario) -> Metrics {
    let m = &sc.model;
    let t_device = if dec.rho == 0.0 {
        0.0
    } else {
        sc.device.delay(dec.rho * m.n_flop_device, dec.f_device)
    };
    let e_device = sc.device.energy(dec.rho * m.n_flop_device, dec.f_device);
    let t_server = if dec.rho_server == 0.0 {
        0.0
    } else {
        sc.server.delay(dec.rho_server * m.n_flop_server, dec.f_server)
    };
    let e_server = sc.server.energy(dec.rho_server * m.n_flop_server, dec.f_server);
    let t_upload = upload_delay(dec.p_tx, m.theta_embedding_bits, &sc.channel);
    let e_upload = upload_energy(dec.p_tx, m.theta_embedding_bits, &sc.channel);
    let distortion_bound =
        rd_bounds::distortion_lower_bound(dec.rho, dec.rho_server, m).unwrap_or(f64::NAN);
    Metrics {
        t_device,
        t_upload,
        t_server,
        t_total: t_device + t_upload + t_server,
        e_device,
        e_upload,
        e_server,
        e_total: e_device + e_upload + e_server,
        rate_bps: uplink_rate(dec.p_tx, &sc.channel),
        distortion_bound,
    }
}

fn box_slack(dec: &Decision, sc: &Scenario) -> f64 {
    let unit = |v: f64, hi: f64| (v / hi).min(1.0 - v / hi);
    [
        unit(dec.rho, 1.0),
        unit(dec.rho_server, 1.0),
        unit(dec.p_tx, sc.channel.p_max),
        unit(dec.f_device, sc.device.f_max),
        unit(dec.f_server, sc.server.f_max),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

pub fn is_feasible(dec: &Decision, sc: &Scenario) -> FeasibilityReport {
    let m = evaluate(dec, sc);
    let delay_slack = sc.qos.t_max - m.t_total;
    let energy_slack = sc.qos.e_max - m.e_total;
    let box_slack = box_slack(dec, sc);
    FeasibilityReport {
        feasible: delay_slack >= 0.0 && energy_slack >= 0.0 && box_slack >= 0.0,
        delay_slack,
        energy_slack,
        box_slack,
    }
}
