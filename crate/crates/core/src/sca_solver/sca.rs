use serde::{Deserialize, Serialize};

use super::linearize::{upload_energy_concavity_defect, LocalPoint};
use super::subproblem::{build_subproblem, phase_one_subproblem, solve_subproblem, Pins, Point, P_FLOOR};
use crate::error::{Error, Result};
use crate::rd_bounds::distortion_lower_bound;
use crate::system_model::{is_feasible, Decision, Scenario};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 50;
/// Phase-I optimum above which the problem is declared infeasible.
pub const PHASE_ONE_TOL: f64 = 1e-9;
const CONCAVITY_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaOptions {
    pub epsilon: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub pins: Pins,
}

impl Default for ScaOptions {
    fn default() -> Self {
        ScaOptions {
            epsilon: DEFAULT_EPSILON,
            max_iter: DEFAULT_MAX_ITER,
            pins: Pins::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// How the first feasible point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// Full resources with a common pruning ratio found by bisection.
    Scaling,
    PhaseOne,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub decision: Decision,
    /// Auxiliaries consistent with the decision (`1/rho`).
    pub rho_aux: f64,
    pub rho_server_aux: f64,
    pub objective: f64,
}

/// Per-subproblem solver record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub newton_iters: usize,
    pub outer_iters: usize,
    pub gap: f64,
    pub min_slack: f64,
    pub phase_one_used: bool,
    /// Auxiliaries returned by the inner solver.
    pub raw_rho_aux: f64,
    pub raw_rho_server_aux: f64,
    /// Surrogate `-(rho q + rho_server s)/(q + s)` at the inner optimum.
    pub surrogate: f64,
    pub objective: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterates: Vec<Iterate>,
    pub status: SolveStatus,
    pub epsilon: f64,
    pub init: InitMethod,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Largest sampled second difference of the upload energy; positive
    /// values flag a non-concave region.
    pub concavity_defect: f64,
    pub notes: Vec<String>,
}

impl SolveTrace {
    fn infeasible(epsilon: f64, init: InitMethod, note: String) -> Self {
        SolveTrace {
            iterates: Vec::new(),
            status: SolveStatus::Infeasible,
            epsilon,
            init,
            diagnostics: Vec::new(),
            concavity_defect: 0.0,
            notes: vec![note],
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible && !self.iterates.is_empty()
    }

    pub fn best(&self) -> Option<&Iterate> {
        if self.status == SolveStatus::Infeasible {
            None
        } else {
            self.iterates.last()
        }
    }

    pub fn objective(&self) -> Option<f64> {
        self.best().map(|it| it.objective)
    }

    /// Number of inner problems solved.
    pub fn iterations(&self) -> usize {
        self.diagnostics.len()
    }
}

/// Adds pins for stages that carry no work: a side with no parameters and
/// no FLOPs keeps `rho = 1` at zero clock, and a zero-size upload keeps the
/// radio off.
pub fn effective_pins(sc: &Scenario, pins: &Pins) -> Pins {
    let m = &sc.model;
    let mut out = *pins;
    if m.q_device_params == 0.0 && m.n_flop_device == 0.0 {
        out.rho = Some(1.0);
        out.f_device = Some(0.0);
    }
    if m.s_server_params == 0.0 && m.n_flop_server == 0.0 {
        out.rho_server = Some(1.0);
        out.f_server = Some(0.0);
    }
    if m.theta_embedding_bits == 0.0 {
        out.p_tx = Some(0.0);
    }
    out
}

fn objective_of(d: &Decision, sc: &Scenario) -> Result<f64> {
    distortion_lower_bound(d.rho, d.rho_server, &sc.model)
}

fn scaled_decision(sc: &Scenario, pins: &Pins, kappa: f64) -> Decision {
    Decision {
        rho: pins.rho.unwrap_or(kappa),
        f_device: pins.f_device.unwrap_or(sc.device.f_max),
        p_tx: pins.p_tx.unwrap_or(sc.channel.p_max),
        rho_server: pins.rho_server.unwrap_or(kappa),
        f_server: pins.f_server.unwrap_or(sc.server.f_max),
    }
}

fn local_point_of(d: &Decision) -> LocalPoint {
    LocalPoint {
        p_k: d.p_tx,
        rho_aux_k: 1.0 / d.rho,
        rho_server_aux_k: 1.0 / d.rho_server,
    }
}

enum Init {
    /// Feasible decision plus a start point for the first inner problem.
    Start(Decision, Point, InitMethod),
    Infeasible(String),
}

fn initialize(sc: &Scenario, pins: &Pins, max_iter: usize) -> Result<Init> {
    let feasible = |k: f64| is_feasible(&scaled_decision(sc, pins, k), sc).feasible;
    let start_of = |d: &Decision| -> Result<Point> {
        let prog = build_subproblem(&local_point_of(d), sc, pins)?;
        Ok(prog.point_of(d, 1.0 / d.rho, 1.0 / d.rho_server))
    };
    if feasible(1.0) {
        let d = scaled_decision(sc, pins, 1.0);
        return Ok(Init::Start(d, start_of(&d)?, InitMethod::Scaling));
    }
    if feasible(sc.rho_min) {
        let (mut lo, mut hi) = (sc.rho_min, 1.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 {
                break;
            }
        }
        let d = scaled_decision(sc, pins, lo);
        return Ok(Init::Start(d, start_of(&d)?, InitMethod::Scaling));
    }

    // Phase I by successive convexification of the max-violation problem.
    let mut d = scaled_decision(sc, pins, sc.rho_min);
    let mut x = start_of(&d)?;
    let mut best = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        let prog = build_subproblem(&local_point_of(&d), sc, pins)?;
        let (xp, v) = phase_one_subproblem(&prog, &x)?;
        let cand = prog.decision(&xp);
        if v < 0.0 && is_feasible(&cand, sc).feasible {
            return Ok(Init::Start(cand, xp, InitMethod::PhaseOne));
        }
        if !(v < best - 1e-12) {
            best = best.min(v);
            break;
        }
        best = v;
        // project onto the boxes so the next local point is valid
        d = Decision {
            rho: pins.rho.unwrap_or(cand.rho.clamp(sc.rho_min, 1.0)),
            f_device: pins
                .f_device
                .unwrap_or(cand.f_device.clamp(1e-6 * sc.device.f_max, sc.device.f_max)),
            p_tx: pins
                .p_tx
                .unwrap_or(cand.p_tx.clamp(P_FLOOR * sc.channel.p_max, sc.channel.p_max)),
            rho_server: pins.rho_server.unwrap_or(cand.rho_server.clamp(sc.rho_min, 1.0)),
            f_server: pins
                .f_server
                .unwrap_or(cand.f_server.clamp(1e-6 * sc.server.f_max, sc.server.f_max)),
        };
        x = start_of(&d)?;
    }
    if best <= PHASE_ONE_TOL && is_feasible(&d, sc).feasible {
        let s = start_of(&d)?;
        return Ok(Init::Start(d, s, InitMethod::PhaseOne));
    }
    Ok(Init::Infeasible(format!(
        "no feasible initialization: phase-I optimum {best:e} exceeds {PHASE_ONE_TOL:e}"
    )))
}

/// Successive convex approximation with default pins.
pub fn sca_optimize(sc: &Scenario, epsilon: f64, max_iter: usize) -> Result<SolveTrace> {
    sca_optimize_with(
        sc,
        &ScaOptions {
            epsilon,
            max_iter,
            pins: Pins::default(),
        },
    )
}

pub fn sca_optimize_with(sc: &Scenario, opts: &ScaOptions) -> Result<SolveTrace> {
    sc.validate()?;
    if !(opts.epsilon > 0.0 && opts.epsilon.is_finite()) {
        return Err(Error::field("epsilon", format!("must be > 0, got {}", opts.epsilon)));
    }
    let pins = effective_pins(sc, &opts.pins);
    let (d0, mut x, init) = match initialize(sc, &pins, opts.max_iter)? {
        Init::Start(d, x, m) => (d, x, m),
        Init::Infeasible(msg) => return Ok(SolveTrace::infeasible(opts.epsilon, InitMethod::None, msg)),
    };
    let mut trace = SolveTrace {
        iterates: Vec::new(),
        status: SolveStatus::MaxIter,
        epsilon: opts.epsilon,
        init,
        diagnostics: Vec::new(),
        concavity_defect: upload_energy_concavity_defect(sc, CONCAVITY_SAMPLES),
        notes: Vec::new(),
    };
    if trace.concavity_defect > 0.0 {
        trace.notes.push(format!(
            "upload energy is not concave on the sampled range (defect {:e}); iterates are re-checked against the original constraints",
            trace.concavity_defect
        ));
    }
    let mut prev = objective_of(&d0, sc)?;
    trace.iterates.push(Iterate {
        decision: d0,
        rho_aux: 1.0 / d0.rho,
        rho_server_aux: 1.0 / d0.rho_server,
        objective: prev,
    });
    let mut d = d0;
    for k in 0..opts.max_iter {
        let prog = build_subproblem(&local_point_of(&d), sc, &pins)?;
        let sol = match solve_subproblem(&prog, &x) {
            Ok(s) => s,
            Err(Error::Infeasible(msg)) => {
                trace.notes.push(format!("inner problem {} has no strict interior: {msg}", k + 1));
                trace.status = SolveStatus::Converged;
                return Ok(trace);
            }
            Err(e) => return Err(e),
        };
        let obj = objective_of(&sol.decision, sc)?;
        let ok = is_feasible(&sol.decision, sc).feasible && obj <= prev;
        trace.diagnostics.push(StepDiagnostics {
            newton_iters: sol.stats.newton_iters,
            outer_iters: sol.stats.outer_iters,
            gap: sol.stats.gap,
            min_slack: sol.stats.min_slack,
            phase_one_used: sol.phase_one_used,
            raw_rho_aux: sol.rho_aux,
            raw_rho_server_aux: sol.rho_server_aux,
            surrogate: sol.surrogate,
            objective: obj,
            accepted: ok,
        });
        if !ok {
            trace.status = SolveStatus::Converged;
            return Ok(trace);
        }
        d = sol.decision;
        trace.iterates.push(Iterate {
            decision: d,
            rho_aux: 1.0 / d.rho,
            rho_server_aux: 1.0 / d.rho_server,
            objective: obj,
        });
        let decrease = prev - obj;
        prev = obj;
        x = sol.x;
        if decrease < opts.epsilon {
            trace.status = SolveStatus::Converged;
            return Ok(trace);
        }
    }
    Ok(trace)
}
