//! Convex inner problem solved at each SCA step.
//!
//! Variables, in scaled units:
//!
//! | index | variable                 |
//! |-------|--------------------------|
//! | 0     | `rho`                    |
//! | 1     | `f / f_max`              |
//! | 2     | `p / p_max`              |
//! | 3     | `rho_server`             |
//! | 4     | `f_server / f_server_max`|
//! | 5     | `rho_aux` (`rho'`)       |
//! | 6     | `rho_server_aux`         |
//!
//! The non-convex couplings `rho <= 1/rho'` are replaced by their tangent
//! lines at the local point, and the upload energy by its tangent `zeta`.

use nalgebra::{DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::barrier::{self, BarrierOptions, BarrierStats, ConvexProgram, Eval};
use super::linearize::{upload_energy_slope, LocalPoint};
use crate::error::{Error, Result};
use crate::system_model::{upload_energy, uplink_rate, Decision, Scenario};

pub const RHO: usize = 0;
pub const F: usize = 1;
pub const P: usize = 2;
pub const RHO_S: usize = 3;
pub const F_S: usize = 4;
pub const AUX: usize = 5;
pub const AUX_S: usize = 6;
pub const NVAR: usize = 7;

/// Lower box on the normalized transmit power.
pub const P_FLOOR: f64 = 1e-6;

type V7 = SVector<f64, NVAR>;
type M7 = SMatrix<f64, NVAR, NVAR>;

/// Variables held fixed (physical units). A pinned pruning ratio also pins
/// its auxiliary to the reciprocal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pins {
    pub rho: Option<f64>,
    pub f_device: Option<f64>,
    pub p_tx: Option<f64>,
    pub rho_server: Option<f64>,
    pub f_server: Option<f64>,
}

/// Full scaled variable vector.
pub type Point = [f64; NVAR];

struct Term {
    value: f64,
    grad: V7,
    hess: M7,
}

impl Term {
    fn zero() -> Self {
        Term {
            value: 0.0,
            grad: V7::zeros(),
            hess: M7::zeros(),
        }
    }
}

/// `k / (x_a x_b)`
fn add_inverse_product(t: &mut Term, k: f64, x: &Point, a: usize, b: usize) {
    let v = k / (x[a] * x[b]);
    t.value += v;
    t.grad[a] -= v / x[a];
    t.grad[b] -= v / x[b];
    t.hess[(a, a)] += 2.0 * v / (x[a] * x[a]);
    t.hess[(b, b)] += 2.0 * v / (x[b] * x[b]);
    let cross = v / (x[a] * x[b]);
    t.hess[(a, b)] += cross;
    t.hess[(b, a)] += cross;
}

/// `k x_f^2 / x_a`
fn add_quadratic_over(t: &mut Term, k: f64, x: &Point, fi: usize, ai: usize) {
    let (f, a) = (x[fi], x[ai]);
    let v = k * f * f / a;
    t.value += v;
    t.grad[fi] += 2.0 * k * f / a;
    t.grad[ai] -= v / a;
    t.hess[(fi, fi)] += 2.0 * k / a;
    t.hess[(ai, ai)] += 2.0 * v / (a * a);
    let cross = -2.0 * k * f / (a * a);
    t.hess[(fi, ai)] += cross;
    t.hess[(ai, fi)] += cross;
}

/// Linear term `c x_i + d`.
fn linear(i: usize, c: f64, d: f64) -> Term {
    let mut t = Term::zero();
    t.value = d;
    t.grad[i] = c;
    t
}

#[derive(Debug, Clone)]
pub struct Subproblem {
    sc: Scenario,
    lp: LocalPoint,
    free: Vec<usize>,
    base: Point,
    /// Device delay at `rho = 1`, `f = f_max` (s).
    a1: f64,
    a3: f64,
    /// Device energy at `rho = 1`, `f = f_max` (J).
    b1: f64,
    b3: f64,
    theta: f64,
    zeta_at_pk: f64,
    zeta_slope: f64,
}

/// Builds the inner problem at local point `lp` with the given pins.
pub fn build_subproblem(lp: &LocalPoint, sc: &Scenario, pins: &Pins) -> Result<Subproblem> {
    lp.validate()?;
    let m = &sc.model;
    let theta = m.theta_embedding_bits;
    let mut base: Point = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    let mut fixed = [false; NVAR];
    let mut pin = |i: usize, v: f64, name: &str, hi: f64| -> Result<()> {
        if !(v.is_finite() && v >= 0.0 && v <= hi) {
            return Err(Error::field(name, format!("pinned value {v} outside [0, {hi}]")));
        }
        base[i] = v / hi;
        fixed[i] = true;
        if i == RHO || i == RHO_S {
            let ai = if i == RHO { AUX } else { AUX_S };
            base[ai] = 1.0 / v;
            fixed[ai] = true;
        }
        Ok(())
    };
    for (i, v, name) in [(RHO, pins.rho, "rho"), (RHO_S, pins.rho_server, "rho_server")] {
        if let Some(r) = v {
            if !(r > 0.0) {
                return Err(Error::field(name, "pinned pruning ratio must be > 0"));
            }
            pin(i, r, name, 1.0)?;
        }
    }
    if let Some(f) = pins.f_device {
        pin(F, f, "f_device", sc.device.f_max)?;
    }
    if let Some(f) = pins.f_server {
        pin(F_S, f, "f_server", sc.server.f_max)?;
    }
    if let Some(p) = pins.p_tx {
        pin(P, p, "p_tx", sc.channel.p_max)?;
    }
    let p_k = if fixed[P] {
        base[P] * sc.channel.p_max
    } else {
        lp.p_k
    };
    if theta > 0.0 && !(p_k > 0.0) {
        return Err(Error::domain(
            "build_subproblem",
            "local transmit power must be > 0 when an embedding is uploaded",
        ));
    }
    let (zeta_at_pk, zeta_slope) = if theta > 0.0 {
        (
            upload_energy(p_k, theta, &sc.channel),
            upload_energy_slope(p_k, theta, &sc.channel),
        )
    } else {
        (0.0, 0.0)
    };
    let mut lp = *lp;
    lp.p_k = p_k;
    let dev = &sc.device;
    let srv = &sc.server;
    Ok(Subproblem {
        sc: sc.clone(),
        lp,
        free: (0..NVAR).filter(|&i| !fixed[i]).collect(),
        base,
        a1: dev.delay(m.n_flop_device, dev.f_max),
        a3: srv.delay(m.n_flop_server, srv.f_max),
        b1: dev.energy(m.n_flop_device, dev.f_max),
        b3: srv.energy(m.n_flop_server, srv.f_max),
        theta,
        zeta_at_pk,
        zeta_slope,
    })
}

impl Subproblem {
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    pub fn local_point(&self) -> &LocalPoint {
        &self.lp
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        !self.free.contains(&i)
    }

    /// Full point from the free coordinates.
    pub fn expand(&self, z: &DVector<f64>) -> Point {
        let mut x = self.base;
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = z[k];
        }
        x
    }

    /// Free coordinates of a full point; pinned entries of `x` are ignored.
    pub fn restrict(&self, x: &Point) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| x[i]))
    }

    /// Full point with pinned entries overwritten by their pinned values.
    pub fn with_pins(&self, x: &Point) -> Point {
        self.expand(&self.restrict(x))
    }

    pub fn decision(&self, x: &Point) -> Decision {
        Decision {
            rho: x[RHO],
            f_device: x[F] * self.sc.device.f_max,
            p_tx: x[P] * self.sc.channel.p_max,
            rho_server: x[RHO_S],
            f_server: x[F_S] * self.sc.server.f_max,
        }
    }

    /// Scaled point of a decision with auxiliaries.
    pub fn point_of(&self, d: &Decision, rho_aux: f64, rho_server_aux: f64) -> Point {
        [
            d.rho,
            d.f_device / self.sc.device.f_max,
            d.p_tx / self.sc.channel.p_max,
            d.rho_server,
            d.f_server / self.sc.server.f_max,
            rho_aux,
            rho_server_aux,
        ]
    }

    fn has_upload(&self) -> bool {
        self.theta > 0.0
    }

    /// Upload delay `theta / r(p)` and its first two derivatives in the
    /// normalized power.
    fn upload_delay_terms(&self, pn: f64) -> (f64, f64, f64) {
        let ch = &self.sc.channel;
        let pm = ch.p_max;
        let p = pn * pm;
        let gamma = ch.snr_per_watt();
        let ln2 = std::f64::consts::LN_2;
        let r = uplink_rate(p, ch);
        let r1 = ch.bandwidth * gamma / ((1.0 + gamma * p) * ln2);
        let r2 = -ch.bandwidth * gamma * gamma / ((1.0 + gamma * p).powi(2) * ln2);
        let th = self.theta;
        let u = th / r;
        let u1 = -th * r1 / (r * r);
        let u2 = th * (2.0 * r1 * r1 / (r * r * r) - r2 / (r * r));
        (u, u1 * pm, u2 * pm * pm)
    }

    fn delay_term(&self, x: &Point) -> Term {
        let mut t = Term::zero();
        if self.a1 > 0.0 {
            add_inverse_product(&mut t, self.a1, x, AUX, F);
        }
        if self.a3 > 0.0 {
            add_inverse_product(&mut t, self.a3, x, AUX_S, F_S);
        }
        if self.has_upload() {
            let (u, u1, u2) = self.upload_delay_terms(x[P]);
            t.value += u;
            t.grad[P] += u1;
            t.hess[(P, P)] += u2;
        }
        let t0 = self.sc.qos.t_max;
        Term {
            value: t.value / t0 - 1.0,
            grad: t.grad / t0,
            hess: t.hess / t0,
        }
    }

    fn energy_term(&self, x: &Point) -> Term {
        let mut t = Term::zero();
        if self.b1 > 0.0 {
            add_quadratic_over(&mut t, self.b1, x, F, AUX);
        }
        if self.b3 > 0.0 {
            add_quadratic_over(&mut t, self.b3, x, F_S, AUX_S);
        }
        if self.has_upload() {
            let pm = self.sc.channel.p_max;
            t.value += self.zeta_at_pk + self.zeta_slope * (x[P] * pm - self.lp.p_k);
            t.grad[P] += self.zeta_slope * pm;
        }
        let e0 = self.sc.qos.e_max;
        Term {
            value: t.value / e0 - 1.0,
            grad: t.grad / e0,
            hess: t.hess / e0,
        }
    }

    /// Tangent of `1/aux` at `aux_k`: `rho - 2/aux_k + aux/aux_k^2 <= 0`.
    fn tangent_term(x: &Point, ri: usize, ai: usize, aux_k: f64) -> Term {
        let mut t = Term::zero();
        t.value = x[ri] - 2.0 / aux_k + x[ai] / (aux_k * aux_k);
        t.grad[ri] = 1.0;
        t.grad[ai] = 1.0 / (aux_k * aux_k);
        t
    }

    fn full_constraints(&self, x: &Point) -> Vec<Term> {
        let mut out = vec![self.delay_term(x), self.energy_term(x)];
        let free = |i| !self.is_fixed(i);
        if free(RHO) {
            out.push(Self::tangent_term(x, RHO, AUX, self.lp.rho_aux_k));
            out.push(linear(RHO, -1.0, self.sc.rho_min - x[RHO]));
            out.push(linear(RHO, 1.0, x[RHO] - 1.0));
        }
        if free(AUX) {
            out.push(linear(AUX, -1.0, -x[AUX]));
        }
        if free(RHO_S) {
            out.push(Self::tangent_term(x, RHO_S, AUX_S, self.lp.rho_server_aux_k));
            out.push(linear(RHO_S, -1.0, self.sc.rho_min - x[RHO_S]));
            out.push(linear(RHO_S, 1.0, x[RHO_S] - 1.0));
        }
        if free(AUX_S) {
            out.push(linear(AUX_S, -1.0, -x[AUX_S]));
        }
        for i in [F, F_S] {
            if free(i) {
                out.push(linear(i, -1.0, -x[i]));
                out.push(linear(i, 1.0, x[i] - 1.0));
            }
        }
        if free(P) {
            out.push(linear(P, -1.0, P_FLOOR - x[P]));
            out.push(linear(P, 1.0, x[P] - 1.0));
        }
        out
    }

    fn restrict_term(&self, t: Term) -> Eval {
        let n = self.free.len();
        let mut e = Eval::zeros(n);
        e.value = t.value;
        for (a, &i) in self.free.iter().enumerate() {
            e.grad[a] = t.grad[i];
            for (b, &j) in self.free.iter().enumerate() {
                e.hess[(a, b)] = t.hess[(i, j)];
            }
        }
        e
    }

    /// Constraint values of a full point, in the same order as the barrier
    /// sees them.
    pub fn constraint_values_full(&self, x: &Point) -> Vec<f64> {
        if !self.point_in_domain(x) {
            return vec![f64::INFINITY];
        }
        self.full_constraints(x).into_iter().map(|t| t.value).collect()
    }

    fn point_in_domain(&self, x: &Point) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let dev_ok = self.a1 == 0.0 || (x[AUX] > 0.0 && x[F] > 0.0);
        let srv_ok = self.a3 == 0.0 || (x[AUX_S] > 0.0 && x[F_S] > 0.0);
        let energy_ok = (self.b1 == 0.0 || x[AUX] > 0.0) && (self.b3 == 0.0 || x[AUX_S] > 0.0);
        let up_ok = !self.has_upload() || x[P] > 0.0;
        dev_ok && srv_ok && energy_ok && up_ok
    }

    /// Surrogate objective `-(q rho + s rho_server) / (q + s)`.
    pub fn surrogate(&self, x: &Point) -> f64 {
        let m = &self.sc.model;
        -(m.q_device_params * x[RHO] + m.s_server_params * x[RHO_S]) / m.total_params()
    }
}

impl ConvexProgram for Subproblem {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn num_constraints(&self) -> usize {
        self.full_constraints(&self.base).len()
    }

    fn objective(&self, z: &DVector<f64>) -> Eval {
        let m = &self.sc.model;
        let n = m.total_params();
        let x = self.expand(z);
        let mut t = Term::zero();
        t.value = self.surrogate(&x);
        t.grad[RHO] = -m.q_device_params / n;
        t.grad[RHO_S] = -m.s_server_params / n;
        self.restrict_term(t)
    }

    fn constraints(&self, z: &DVector<f64>) -> Vec<Eval> {
        let x = self.expand(z);
        self.full_constraints(&x)
            .into_iter()
            .map(|t| self.restrict_term(t))
            .collect()
    }

    fn constraint_values(&self, z: &DVector<f64>) -> Vec<f64> {
        self.constraint_values_full(&self.expand(z))
    }

    fn in_domain(&self, z: &DVector<f64>) -> bool {
        self.point_in_domain(&self.expand(z))
    }
}

/// Optimum of one inner problem.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub x: Point,
    pub decision: Decision,
    pub rho_aux: f64,
    pub rho_server_aux: f64,
    /// Surrogate objective value.
    pub surrogate: f64,
    pub stats: BarrierStats,
    pub phase_one_used: bool,
}

/// Solves `prog` starting from `start` (pinned entries are overwritten).
/// A phase-I search runs first when the start is not strictly feasible.
pub fn solve_subproblem(prog: &Subproblem, start: &Point) -> Result<SubproblemSolution> {
    let x0 = prog.with_pins(start);
    let finish = |x: Point, stats: BarrierStats, phase_one_used: bool| SubproblemSolution {
        x,
        decision: prog.decision(&x),
        rho_aux: x[AUX],
        rho_server_aux: x[AUX_S],
        surrogate: prog.surrogate(&x),
        stats,
        phase_one_used,
    };
    let max_g = |x: &Point| {
        prog.constraint_values_full(x)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    };
    if prog.free.is_empty() {
        let g = max_g(&x0);
        if g <= 0.0 {
            return Ok(finish(x0, BarrierStats { min_slack: -g, ..Default::default() }, false));
        }
        return Err(Error::Infeasible(format!(
            "all variables pinned and a constraint is violated by {g:e}"
        )));
    }
    let opts = BarrierOptions::default();
    let mut z = prog.restrict(&x0);
    let mut phase_one_used = false;
    if !(max_g(&x0) < 0.0) {
        if !prog.in_domain(&z) {
            return Err(Error::domain("solve_subproblem", "start point outside the domain"));
        }
        phase_one_used = true;
        let res = barrier::phase_one(prog, &z, 0.0, &opts)?;
        if !(res.max_violation < 0.0) {
            return Err(Error::Infeasible(format!(
                "phase-I found no strictly feasible point (max violation {:e}, lower bound {:e})",
                res.max_violation, res.lower_bound
            )));
        }
        z = res.x;
    }
    let sol = barrier::minimize(prog, &z, &opts)?;
    Ok(finish(prog.expand(&sol.x), sol.stats, phase_one_used))
}

/// Phase-I search alone: smallest `max_i g_i` reachable from `start`.
pub fn phase_one_subproblem(prog: &Subproblem, start: &Point) -> Result<(Point, f64)> {
    let x0 = prog.with_pins(start);
    if prog.free.is_empty() {
        let g = prog
            .constraint_values_full(&x0)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok((x0, g));
    }
    let z = prog.restrict(&x0);
    if !prog.in_domain(&z) {
        return Err(Error::domain("phase_one_subproblem", "start point outside the domain"));
    }
    let res = barrier::phase_one(prog, &z, 0.0, &BarrierOptions::default())?;
    Ok((prog.expand(&res.x), res.max_violation))
}

/// Dense copy of the barrier Hessian pieces, used in tests.
#[cfg(test)]
pub(crate) fn constraint_gradients(prog: &Subproblem, x: &Point) -> Vec<(f64, DVector<f64>, nalgebra::DMatrix<f64>)> {
    prog.constraints(&prog.restrict(x))
        .into_iter()
        .map(|e| (e.value, e.grad, e.hess))
        .collect()
}
