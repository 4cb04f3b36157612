//! Exhaustive grid search over the original problem, used as a reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::subproblem::Pins;
use crate::error::{Error, Result};
use crate::system_model::{evaluate, Decision, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub decision: Option<Decision>,
    pub objective: Option<f64>,
    /// Grid points evaluated.
    pub evaluated: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn axis(pinned: Option<f64>, full: Vec<f64>) -> Vec<f64> {
    match pinned {
        Some(v) => vec![v],
        None => full,
    }
}

/// Best feasible grid point. Axes: pruning ratios on `[rho_min, 1]`, clocks
/// on `[0, f_max]`, power on `p_max * i / n` for `i = 1..n`. Pinned
/// variables take a single value. Ties go to the lexicographically smallest
/// grid index `(rho, f, p, rho_server, f_server)`.
pub fn grid_oracle(sc: &Scenario, pts_per_axis: usize, pins: &Pins) -> Result<OracleResult> {
    if pts_per_axis < 2 {
        return Err(Error::field(
            "pts_per_axis",
            format!("must be >= 2, got {pts_per_axis}"),
        ));
    }
    sc.validate()?;
    let n = pts_per_axis;
    let pins = super::sca::effective_pins(sc, pins);
    let rho = axis(pins.rho, linspace(sc.rho_min, 1.0, n));
    let f = axis(pins.f_device, linspace(0.0, sc.device.f_max, n));
    let p = axis(
        pins.p_tx,
        (1..=n).map(|i| sc.channel.p_max * i as f64 / n as f64).collect(),
    );
    let rho_s = axis(pins.rho_server, linspace(sc.rho_min, 1.0, n));
    let f_s = axis(pins.f_server, linspace(0.0, sc.server.f_max, n));
    let evaluated = rho.len() * f.len() * p.len() * rho_s.len() * f_s.len();

    type Best = Option<(f64, [usize; 5])>;
    let better = |a: Best, b: Best| -> Best {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(x), Some(y)) => {
                if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) {
                    Some(y)
                } else {
                    Some(x)
                }
            }
        }
    };
    let best = (0..rho.len())
        .into_par_iter()
        .map(|i0| {
            let mut best: Best = None;
            for (i1, &fv) in f.iter().enumerate() {
                for (i2, &pv) in p.iter().enumerate() {
                    for (i3, &rs) in rho_s.iter().enumerate() {
                        for (i4, &fs) in f_s.iter().enumerate() {
                            let d = Decision {
                                rho: rho[i0],
                                f_device: fv,
                                p_tx: pv,
                                rho_server: rs,
                                f_server: fs,
                            };
                            let m = evaluate(&d, sc);
                            if m.t_total <= sc.qos.t_max
                                && m.e_total <= sc.qos.e_max
                                && m.distortion_bound.is_finite()
                            {
                                best = better(best, Some((m.distortion_bound, [i0, i1, i2, i3, i4])));
                            }
                        }
                    }
                }
            }
            best
        })
        .reduce(|| None, better);

    Ok(match best {
        None => OracleResult {
            decision: None,
            objective: None,
            evaluated,
        },
        Some((obj, [i0, i1, i2, i3, i4])) => OracleResult {
            decision: Some(Decision {
                rho: rho[i0],
                f_device: f[i1],
                p_tx: p[i2],
                rho_server: rho_s[i3],
                f_server: f_s[i4],
            }),
            objective: Some(obj),
            evaluated,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rd_bounds::distortion_lower_bound;
    use crate::sca_solver::test_support::default_scenario;
    use crate::system_model::is_feasible;

    #[test]
    fn loose_budgets_reach_full_model() {
        let mut sc = default_scenario();
        sc.qos.t_max = 1e3;
        sc.qos.e_max = 1e3;
        let r = grid_oracle(&sc, 5, &Pins::default()).unwrap();
        assert_eq!(r.evaluated, 5usize.pow(5));
        assert_eq!(
            r.objective.unwrap(),
            distortion_lower_bound(1.0, 1.0, &sc.model).unwrap()
        );
        // the all-max corner is one of the optima
        let corner = sc.full_resources();
        assert!(is_feasible(&corner, &sc).feasible);
        assert_eq!(evaluate(&corner, &sc).distortion_bound, r.objective.unwrap());
    }

    #[test]
    fn result_is_feasible_and_deterministic() {
        let sc = default_scenario();
        let a = grid_oracle(&sc, 6, &Pins::default()).unwrap();
        let b = grid_oracle(&sc, 6, &Pins::default()).unwrap();
        assert_eq!(a, b);
        assert!(is_feasible(&a.decision.unwrap(), &sc).feasible);
    }

    #[test]
    fn pins_only_restrict() {
        let sc = default_scenario();
        let free = grid_oracle(&sc, 6, &Pins::default()).unwrap().objective.unwrap();
        let pinned = Pins {
            p_tx: Some(sc.channel.p_max),
            ..Pins::default()
        };
        let r = grid_oracle(&sc, 6, &pinned).unwrap();
        assert!(free <= r.objective.unwrap());
        assert_eq!(r.evaluated, 6usize.pow(4));
    }

    #[test]
    fn empty_feasible_set() {
        let mut sc = default_scenario();
        sc.qos.t_max = 1e-9;
        let r = grid_oracle(&sc, 3, &Pins::default()).unwrap();
        assert!(r.decision.is_none());
        assert!(grid_oracle(&sc, 1, &Pins::default()).is_err());
    }
}
