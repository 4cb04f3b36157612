//! Log-barrier interior-point method for small smooth convex programs
//!
//! ```text
//! minimize f(x)  subject to  g_i(x) <= 0,  i = 1..m
//! ```
//!
//! with damped Newton centering and a phase-I problem for finding a
//! strictly feasible start.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Value, gradient and Hessian of one smooth function.
#[derive(Debug, Clone)]
pub struct Eval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Eval {
    pub fn zeros(n: usize) -> Self {
        Eval {
            value: 0.0,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }
}

pub trait ConvexProgram {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn objective(&self, x: &DVector<f64>) -> Eval;
    /// All constraint functions at `x`; `g_i(x) <= 0` is feasible.
    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval>;
    /// Constraint values only.
    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        self.constraints(x).into_iter().map(|e| e.value).collect()
    }
    /// Whether all functions are defined at `x`.
    fn in_domain(&self, x: &DVector<f64>) -> bool;
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Stop once `m / t` falls below this.
    pub gap_tol: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Newton decrement threshold (`lambda^2 / 2`) for centering.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
    /// Scale used to pick the initial `t` as `m / scale`.
    pub objective_scale: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            gap_tol: 1e-12,
            mu: 10.0,
            alpha: 0.01,
            beta: 0.5,
            newton_tol: 1e-12,
            max_newton: 200,
            max_outer: 40,
            objective_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BarrierStats {
    pub newton_iters: usize,
    pub outer_iters: usize,
    /// Final duality gap bound `m / t`.
    pub gap: f64,
    /// Smallest constraint slack `-max_i g_i` at the returned point.
    pub min_slack: f64,
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub stats: BarrierStats,
}

fn strictly_feasible<P: ConvexProgram + ?Sized>(prog: &P, x: &DVector<f64>) -> bool {
    prog.in_domain(x) && prog.constraint_values(x).iter().all(|&g| g < 0.0)
}

fn max_constraint<P: ConvexProgram + ?Sized>(prog: &P, x: &DVector<f64>) -> f64 {
    prog.constraint_values(x)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `t f(x) - sum log(-g_i(x))`, or `+inf` outside the interior.
fn barrier_value<P: ConvexProgram + ?Sized>(prog: &P, x: &DVector<f64>, t: f64) -> f64 {
    if !prog.in_domain(x) {
        return f64::INFINITY;
    }
    let mut v = t * prog.objective(x).value;
    for g in prog.constraint_values(x) {
        if g >= 0.0 || g.is_nan() {
            return f64::INFINITY;
        }
        v -= (-g).ln();
    }
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn barrier_derivatives<P: ConvexProgram + ?Sized>(
    prog: &P,
    x: &DVector<f64>,
    t: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let obj = prog.objective(x);
    let mut grad = obj.grad * t;
    let mut hess = obj.hess * t;
    for c in prog.constraints(x) {
        let inv = -1.0 / c.value;
        grad.axpy(inv, &c.grad, 1.0);
        hess += &c.hess * inv;
        hess.ger(inv * inv, &c.grad, &c.grad, 1.0);
    }
    (grad, hess)
}

/// Solves `H d = -g`, adding a growing ridge if `H` is not numerically
/// positive definite.
fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..30 {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = h.cholesky() {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        ridge = if ridge == 0.0 { scale * 1e-14 } else { ridge * 100.0 };
    }
    None
}

fn center<P: ConvexProgram + ?Sized>(
    prog: &P,
    x: &mut DVector<f64>,
    t: f64,
    opts: &BarrierOptions,
    stats: &mut BarrierStats,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<()> {
    for _ in 0..opts.max_newton {
        if stop(x) {
            return Ok(());
        }
        let (grad, hess) = barrier_derivatives(prog, x, t);
        let dx = newton_direction(&grad, &hess).ok_or_else(|| Error::Numeric {
            op: "barrier",
            msg: "Newton system is singular".into(),
            diagnostics: format!("t = {t:e}, x = {:?}", x.as_slice()),
        })?;
        let slope = grad.dot(&dx);
        if -slope / 2.0 <= opts.newton_tol {
            return Ok(());
        }
        stats.newton_iters += 1;
        let f0 = barrier_value(prog, x, t);
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-20 {
            let cand = &*x + &dx * step;
            let fc = barrier_value(prog, &cand, t);
            if fc <= f0 + opts.alpha * step * slope {
                *x = cand;
                accepted = true;
                break;
            }
            step *= opts.beta;
        }
        if !accepted {
            // No further progress is representable at this t.
            return Ok(());
        }
    }
    Ok(())
}

/// Minimizes `prog` from a strictly feasible `x0`.
pub fn minimize<P: ConvexProgram + ?Sized>(
    prog: &P,
    x0: &DVector<f64>,
    opts: &BarrierOptions,
) -> Result<BarrierSolution> {
    if !strictly_feasible(prog, x0) {
        return Err(Error::domain("barrier", "start point is not strictly feasible"));
    }
    let m = prog.num_constraints().max(1) as f64;
    let mut x = x0.clone();
    let mut t = m / opts.objective_scale.max(1e-300);
    let mut stats = BarrierStats::default();
    loop {
        center(prog, &mut x, t, opts, &mut stats, &|_| false)?;
        stats.outer_iters += 1;
        if m / t <= opts.gap_tol || stats.outer_iters >= opts.max_outer {
            break;
        }
        t *= opts.mu;
    }
    stats.gap = m / t;
    stats.min_slack = -max_constraint(prog, &x);
    let objective = prog.objective(&x).value;
    Ok(BarrierSolution { x, objective, stats })
}

/// Phase-I program `min s  s.t.  g_i(x) <= s`, variables `(x, s)`.
struct PhaseOne<'a, P: ConvexProgram + ?Sized> {
    inner: &'a P,
}

impl<P: ConvexProgram + ?Sized> ConvexProgram for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }

    fn objective(&self, x: &DVector<f64>) -> Eval {
        let n = self.dim();
        let mut e = Eval::zeros(n);
        e.value = x[n - 1];
        e.grad[n - 1] = 1.0;
        e
    }

    fn constraints(&self, x: &DVector<f64>) -> Vec<Eval> {
        let n = self.inner.dim();
        let s = x[n];
        let xi = x.rows(0, n).into_owned();
        self.inner
            .constraints(&xi)
            .into_iter()
            .map(|c| {
                let mut e = Eval::zeros(n + 1);
                e.value = c.value - s;
                e.grad.rows_mut(0, n).copy_from(&c.grad);
                e.grad[n] = -1.0;
                e.hess.view_mut((0, 0), (n, n)).copy_from(&c.hess);
                e
            })
            .collect()
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        let n = self.inner.dim();
        let s = x[n];
        let xi = x.rows(0, n).into_owned();
        self.inner
            .constraint_values(&xi)
            .into_iter()
            .map(|g| g - s)
            .collect()
    }

    fn in_domain(&self, x: &DVector<f64>) -> bool {
        let n = self.inner.dim();
        self.inner.in_domain(&x.rows(0, n).into_owned())
    }
}

/// Outcome of a phase-I search.
#[derive(Debug, Clone)]
pub struct PhaseOneResult {
    /// Best point found (strictly feasible when `max_violation < 0`).
    pub x: DVector<f64>,
    /// `max_i g_i(x)` at the returned point.
    pub max_violation: f64,
    /// Lower bound on the phase-I optimum (valid when `certified`).
    pub lower_bound: f64,
    pub stats: BarrierStats,
}

/// Looks for a point with every `g_i < -margin`. `x0` must lie in the
/// domain of `prog`. Returns early as soon as such a point is found.
pub fn phase_one<P: ConvexProgram + ?Sized>(
    prog: &P,
    x0: &DVector<f64>,
    margin: f64,
    opts: &BarrierOptions,
) -> Result<PhaseOneResult> {
    if !prog.in_domain(x0) {
        return Err(Error::domain("phase_one", "start point outside the domain"));
    }
    let n = prog.dim();
    let g0 = max_constraint(prog, x0);
    if g0 < -margin {
        return Ok(PhaseOneResult {
            x: x0.clone(),
            max_violation: g0,
            lower_bound: f64::NEG_INFINITY,
            stats: BarrierStats::default(),
        });
    }
    let p1 = PhaseOne { inner: prog };
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(x0);
    z[n] = g0 + g0.abs().max(1.0);
    let m = prog.num_constraints().max(1) as f64;
    let mut t = m / g0.abs().max(1.0);
    let mut stats = BarrierStats::default();
    let done = |z: &DVector<f64>| z[n] < -margin && max_constraint(prog, &z.rows(0, n).into_owned()) < -margin;
    loop {
        center(&p1, &mut z, t, opts, &mut stats, &done)?;
        stats.outer_iters += 1;
        if done(&z) || m / t <= opts.gap_tol * 1e-2 || stats.outer_iters >= opts.max_outer {
            break;
        }
        t *= opts.mu;
    }
    let x = z.rows(0, n).into_owned();
    let max_violation = max_constraint(prog, &x);
    stats.gap = m / t;
    stats.min_slack = -max_violation;
    Ok(PhaseOneResult {
        x,
        max_violation,
        lower_bound: z[n] - m / t,
        stats,
    })
}
