//! Restricted designs compared against the joint optimizer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::sca::{sca_optimize_with, ScaOptions, SolveTrace};
use super::subproblem::Pins;
use crate::error::{Error, Result};
use crate::system_model::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkScheme {
    Joint,
    FixedPower,
    FixedFrequency,
    PruneDeviceOnly,
    PruneServerOnly,
    OnDeviceOnly,
    OnServerOnly,
}

impl BenchmarkScheme {
    pub const ALL: [BenchmarkScheme; 7] = [
        BenchmarkScheme::Joint,
        BenchmarkScheme::FixedPower,
        BenchmarkScheme::FixedFrequency,
        BenchmarkScheme::PruneDeviceOnly,
        BenchmarkScheme::PruneServerOnly,
        BenchmarkScheme::OnDeviceOnly,
        BenchmarkScheme::OnServerOnly,
    ];

    /// Schemes whose feasible set is a subset of the joint one for the same
    /// scenario.
    pub fn is_restriction(self) -> bool {
        matches!(
            self,
            BenchmarkScheme::FixedPower
                | BenchmarkScheme::FixedFrequency
                | BenchmarkScheme::PruneDeviceOnly
                | BenchmarkScheme::PruneServerOnly
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkScheme::Joint => "joint",
            BenchmarkScheme::FixedPower => "fixed_power",
            BenchmarkScheme::FixedFrequency => "fixed_frequency",
            BenchmarkScheme::PruneDeviceOnly => "prune_device_only",
            BenchmarkScheme::PruneServerOnly => "prune_server_only",
            BenchmarkScheme::OnDeviceOnly => "on_device_only",
            BenchmarkScheme::OnServerOnly => "on_server_only",
        }
    }
}

impl fmt::Display for BenchmarkScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkScheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::field("scheme", format!("unknown scheme `{s}`")))
    }
}

/// Scenario and pins that define `kind` on top of `sc`.
///
/// The two single-site schemes move the whole model to one side: parameters
/// and FLOPs of both stages are merged, so `D_hat` still refers to the same
/// model. `raw_input_bits` is the upload size when everything runs on the
/// server.
pub fn benchmark_setup(
    kind: BenchmarkScheme,
    sc: &Scenario,
    raw_input_bits: Option<f64>,
) -> Result<(Scenario, Pins)> {
    let mut s = sc.clone();
    let mut pins = Pins::default();
    let m = &mut s.model;
    match kind {
        BenchmarkScheme::Joint => {}
        BenchmarkScheme::FixedPower => pins.p_tx = Some(sc.channel.p_max),
        BenchmarkScheme::FixedFrequency => {
            pins.f_device = Some(sc.device.f_max);
            pins.f_server = Some(sc.server.f_max);
        }
        BenchmarkScheme::PruneDeviceOnly => pins.rho_server = Some(1.0),
        BenchmarkScheme::PruneServerOnly => pins.rho = Some(1.0),
        BenchmarkScheme::OnDeviceOnly => {
            m.q_device_params += m.s_server_params;
            m.n_flop_device += m.n_flop_server;
            m.s_server_params = 0.0;
            m.n_flop_server = 0.0;
            m.theta_embedding_bits = 0.0;
        }
        BenchmarkScheme::OnServerOnly => {
            let raw = raw_input_bits.ok_or_else(|| {
                Error::field(
                    "raw_input_bits",
                    "required for the on_server_only scheme",
                )
            })?;
            if !(raw.is_finite() && raw >= 0.0) {
                return Err(Error::field("raw_input_bits", format!("must be >= 0, got {raw}")));
            }
            m.s_server_params += m.q_device_params;
            m.n_flop_server += m.n_flop_device;
            m.q_device_params = 0.0;
            m.n_flop_device = 0.0;
            m.theta_embedding_bits = raw;
        }
    }
    Ok((s, pins))
}

/// Runs scheme `kind`. Pins in `opts` are combined with the scheme's own.
pub fn solve_benchmark(
    kind: BenchmarkScheme,
    sc: &Scenario,
    opts: &ScaOptions,
    raw_input_bits: Option<f64>,
) -> Result<SolveTrace> {
    let (s, pins) = benchmark_setup(kind, sc, raw_input_bits)?;
    let merged = Pins {
        rho: opts.pins.rho.or(pins.rho),
        f_device: opts.pins.f_device.or(pins.f_device),
        p_tx: opts.pins.p_tx.or(pins.p_tx),
        rho_server: opts.pins.rho_server.or(pins.rho_server),
        f_server: opts.pins.f_server.or(pins.f_server),
    };
    sca_optimize_with(&s, &ScaOptions { pins: merged, ..*opts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sca_solver::sca::SolveStatus;
    use crate::sca_solver::test_support::{default_scenario, perturbed_scenarios};
    use crate::system_model::{is_feasible, upload_delay};

    #[test]
    fn names_round_trip() {
        for k in BenchmarkScheme::ALL {
            assert_eq!(k.as_str().parse::<BenchmarkScheme>().unwrap(), k);
            let js = serde_json::to_string(&k).unwrap();
            assert_eq!(js, format!("\"{}\"", k.as_str()));
        }
        assert!("both".parse::<BenchmarkScheme>().is_err());
    }

    #[test]
    fn joint_dominates_restrictions() {
        for sc in std::iter::once(default_scenario()).chain(perturbed_scenarios(3, 3)) {
            let opts = ScaOptions::default();
            let joint = solve_benchmark(BenchmarkScheme::Joint, &sc, &opts, None).unwrap();
            let j = joint.objective().unwrap();
            for k in BenchmarkScheme::ALL.into_iter().filter(|k| k.is_restriction()) {
                let tr = solve_benchmark(k, &sc, &opts, None).unwrap();
                if let Some(o) = tr.objective() {
                    assert!(j <= o + 1e-9, "{k}: joint {j} vs {o}");
                    let (s, _) = benchmark_setup(k, &sc, None).unwrap();
                    assert!(is_feasible(&tr.best().unwrap().decision, &s).feasible);
                }
            }
        }
    }

    #[test]
    fn pins_are_respected() {
        let sc = default_scenario();
        let opts = ScaOptions::default();
        let tr = solve_benchmark(BenchmarkScheme::FixedPower, &sc, &opts, None).unwrap();
        for it in &tr.iterates {
            assert_eq!(it.decision.p_tx, sc.channel.p_max);
        }
        let tr = solve_benchmark(BenchmarkScheme::FixedFrequency, &sc, &opts, None).unwrap();
        for it in &tr.iterates {
            assert_eq!(it.decision.f_device, sc.device.f_max);
            assert_eq!(it.decision.f_server, sc.server.f_max);
        }
        let tr = solve_benchmark(BenchmarkScheme::PruneServerOnly, &sc, &opts, None).unwrap();
        for it in &tr.iterates {
            assert_eq!(it.decision.rho, 1.0);
        }
    }

    #[test]
    fn server_only_pruning_fails_under_tight_delay() {
        // device stage alone at full size and clock exceeds the budget
        let mut sc = default_scenario();
        let dev_full = sc.device.delay(sc.model.n_flop_device, sc.device.f_max);
        sc.qos.t_max = 0.9 * dev_full;
        sc.qos.e_max *= 10.0;
        let opts = ScaOptions::default();
        let joint = solve_benchmark(BenchmarkScheme::Joint, &sc, &opts, None).unwrap();
        assert!(joint.is_feasible());
        let pso = solve_benchmark(BenchmarkScheme::PruneServerOnly, &sc, &opts, None).unwrap();
        assert_eq!(pso.status, SolveStatus::Infeasible);
    }

    #[test]
    fn on_server_only_fails_with_large_raw_input() {
        let sc = default_scenario();
        let raw = 50.0 * sc.model.theta_embedding_bits;
        let opts = ScaOptions::default();
        let joint = solve_benchmark(BenchmarkScheme::Joint, &sc, &opts, Some(raw)).unwrap();
        assert!(joint.is_feasible());
        assert!(sc.qos.t_max < upload_delay(sc.channel.p_max, raw, &sc.channel));
        let oso = solve_benchmark(BenchmarkScheme::OnServerOnly, &sc, &opts, Some(raw)).unwrap();
        assert_eq!(oso.status, SolveStatus::Infeasible);
        assert!(solve_benchmark(BenchmarkScheme::OnServerOnly, &sc, &opts, None).is_err());
    }

    #[test]
    fn single_site_schemes_keep_the_model() {
        let sc = default_scenario();
        for k in [BenchmarkScheme::OnDeviceOnly, BenchmarkScheme::OnServerOnly] {
            let (s, _) = benchmark_setup(k, &sc, Some(1e4)).unwrap();
            assert_eq!(s.model.total_params(), sc.model.total_params());
            assert_eq!(
                s.model.n_flop_device + s.model.n_flop_server,
                sc.model.n_flop_device + sc.model.n_flop_server
            );
        }
        let mut loose = sc.clone();
        loose.qos.t_max = 1e3;
        loose.qos.e_max = 1e3;
        let tr = solve_benchmark(BenchmarkScheme::OnDeviceOnly, &loose, &ScaOptions::default(), None).unwrap();
        let d = tr.best().unwrap().decision;
        assert_eq!(d.p_tx, 0.0);
        assert_eq!(d.f_server, 0.0);
        assert_eq!(d.rho, 1.0);
    }
}
