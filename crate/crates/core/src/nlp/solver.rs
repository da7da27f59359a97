//! Augmented Lagrangian outer loop with a projected Newton inner loop.
//!
//! For multipliers `lambda` and penalty `rho` the inner loop minimizes
//!
//! ```text
//! phi(x) = f(x) + lambda^T c(x) + rho/2 |c(x)|^2     over  lower <= x <= upper
//! ```
//!
//! with Newton steps on the free variables using the model Hessian
//! `H_L(x, lambda + rho c) + rho J^T J`, and an Armijo search along the
//! projection arc. Variables within `eps` of a bound whose gradient pushes
//! outward are held fixed for the step.

use serde::{Deserialize, Serialize};

use super::derivatives::{Derivatives, DEFAULT_FD_STEP};
use super::linalg::ArrowBand;
use super::{HessianStructure, NlpProblem, SparseMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    Infeasible,
    NumericalFailure,
}

impl SolverStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIterations => "max_iterations",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::NumericalFailure => "numerical_failure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "converged" => SolverStatus::Converged,
            "max_iterations" => SolverStatus::MaxIterations,
            "infeasible" => SolverStatus::Infeasible,
            "numerical_failure" => SolverStatus::NumericalFailure,
            _ => return None,
        })
    }
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    /// Penalty ceiling; a plateau at the ceiling is declared infeasible.
    pub max_penalty: f64,
    pub constraint_tolerance: f64,
    pub stationarity_tolerance: f64,
    /// Relative central-difference step for derivatives not supplied.
    pub fd_step: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Outer iterations without progress at the penalty ceiling before the
    /// problem is declared infeasible.
    pub stall_iterations: usize,
    /// Relative violation improvement that counts as progress.
    pub stall_improvement: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer_iterations: 50,
            max_inner_iterations: 200,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e10,
            constraint_tolerance: 1e-6,
            stationarity_tolerance: 1e-6,
            fd_step: DEFAULT_FD_STEP,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            stall_iterations: 5,
            stall_improvement: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("solver.initial_penalty", self.initial_penalty),
            ("solver.max_penalty", self.max_penalty),
            ("solver.constraint_tolerance", self.constraint_tolerance),
            ("solver.stationarity_tolerance", self.stationarity_tolerance),
            ("solver.fd_step", self.fd_step),
            ("solver.armijo", self.armijo),
            ("solver.stall_improvement", self.stall_improvement),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(key, format!("{v} must be positive")));
            }
        }
        if !(self.penalty_growth > 1.0) {
            return Err(Error::validation("solver.penalty_growth", "must exceed 1"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::validation("solver.backtrack", "must lie in (0, 1)"));
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::validation("solver.max_outer_iterations", "iteration limits must be positive"));
        }
        Ok(())
    }
}

/// One accepted outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub penalty: f64,
    pub violation: f64,
    pub stationarity: f64,
    pub objective: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub status: SolverStatus,
    pub iterations: usize,
    pub inner_iterations: usize,
    /// Infinity norm of the constraints at the returned point.
    pub constraint_violation: f64,
    /// Infinity norm of the projected Lagrangian gradient, re-evaluated at
    /// the returned point and multipliers.
    pub stationarity: f64,
    pub objective: f64,
    pub multipliers: Vec<f64>,
    pub history: Vec<OuterRecord>,
    /// The starting point had to be clamped into the bounds.
    pub clamped_start: bool,
    pub message: Option<String>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((xi, gi), (l, u))| (xi - (xi - gi).clamp(*l, *u)).abs())
        .fold(0.0, f64::max)
}

/// Projected gradient of the Lagrangian `f + lambda^T c`, evaluated from
/// scratch.
pub fn kkt_residual<P: NlpProblem + ?Sized>(problem: &P, x: &[f64], multipliers: &[f64]) -> f64 {
    let d = Derivatives::new(problem, DEFAULT_FD_STEP);
    let mut g = d.gradient(x);
    if problem.num_constraints() > 0 {
        for (gi, ji) in g.iter_mut().zip(d.jacobian(x).tr_mul_vec(multipliers)) {
            *gi += ji;
        }
    }
    projected_gradient_norm(x, &g, problem.lower_bounds(), problem.upper_bounds())
}

struct Augmented<'a, P: NlpProblem + ?Sized> {
    d: Derivatives<'a, P>,
    lo: &'a [f64],
    hi: &'a [f64],
    lambda: Vec<f64>,
    rho: f64,
    m: usize,
}

struct Point {
    x: Vec<f64>,
    f: f64,
    c: Vec<f64>,
    phi: f64,
}

enum InnerEnd {
    Converged,
    IterationLimit,
    Stalled,
    NonFinite,
}

struct InnerResult {
    point: Point,
    projected_gradient: f64,
    iterations: usize,
    end: InnerEnd,
}

impl<'a, P: NlpProblem + ?Sized> Augmented<'a, P> {
    fn evaluate(&self, x: Vec<f64>) -> Point {
        let f = self.d.problem.objective(&x);
        let mut c = vec![0.0; self.m];
        if self.m > 0 {
            self.d.problem.constraints(&x, &mut c);
        }
        let phi = self.merit(f, &c);
        Point { x, f, c, phi }
    }

    fn merit(&self, f: f64, c: &[f64]) -> f64 {
        let mut phi = f;
        for (ci, li) in c.iter().zip(&self.lambda) {
            phi += li * ci + 0.5 * self.rho * ci * ci;
        }
        phi
    }

    fn shifted_multipliers(&self, c: &[f64]) -> Vec<f64> {
        self.lambda.iter().zip(c).map(|(l, ci)| l + self.rho * ci).collect()
    }

    fn gradient(&self, p: &Point) -> (Vec<f64>, Option<SparseMatrix>) {
        let mut g = self.d.gradient(&p.x);
        if self.m == 0 {
            return (g, None);
        }
        let jac = self.d.jacobian(&p.x);
        let mu = self.shifted_multipliers(&p.c);
        for (gi, ji) in g.iter_mut().zip(jac.tr_mul_vec(&mu)) {
            *gi += ji;
        }
        (g, Some(jac))
    }

    fn model_hessian(&self, p: &Point, jac: Option<&SparseMatrix>) -> ArrowBand {
        let n = p.x.len();
        let mut h = match self.d.problem.hessian_structure() {
            HessianStructure::Dense => ArrowBand::dense(n),
            HessianStructure::Arrow { half_bandwidth, border } => ArrowBand::zeros(n, half_bandwidth, border),
        };
        let mu = self.shifted_multipliers(&p.c);
        for (i, j, v) in self.d.hessian(&p.x, 1.0, &mu) {
            if h.holds(i, j) {
                h.add(i, j, v);
            }
        }
        if let Some(jac) = jac {
            for row in &jac.rows {
                for (a, &(i, vi)) in row.iter().enumerate() {
                    for &(j, vj) in &row[..=a] {
                        h.add(i, j, self.rho * vi * vj);
                    }
                }
            }
        }
        h
    }

    /// Full steps that realise the whole linear decrease point along a
    /// direction the model thinks is curved but is nearly flat; keep going
    /// along the projection arc while the merit keeps falling.
    #[allow(clippy::too_many_arguments)]
    fn extrapolate(&self, p: &Point, mut best: Point, d: &[f64], g: &[f64], active: &[bool], alpha: f64, predicted: f64) -> Point {
        if alpha < 1.0 || p.phi - best.phi < LINEAR_RATIO * predicted {
            return best;
        }
        let mut a = alpha;
        for _ in 0..MAX_EXTRAPOLATIONS {
            a *= 4.0;
            let xt = self.project_step(&p.x, d, a);
            if xt == best.x {
                break;
            }
            let pred = predicted_decrease(&p.x, &xt, g, d, active, a);
            let trial = self.evaluate(xt);
            if !(trial.phi < best.phi) || p.phi - trial.phi < 0.5 * pred {
                break;
            }
            best = trial;
        }
        best
    }

    fn project_step(&self, x: &[f64], d: &[f64], alpha: f64) -> Vec<f64> {
        (0..x.len()).map(|i| (x[i] + alpha * d[i]).clamp(self.lo[i], self.hi[i])).collect()
    }

    fn minimize(&self, start: Point, tol: f64, cfg: &SolverConfig) -> InnerResult {
        let n = start.x.len();
        let mut p = start;
        let mut pg = f64::INFINITY;
        let mut damping = 0.0;
        for it in 0..cfg.max_inner_iterations {
            let (g, jac) = self.gradient(&p);
            pg = projected_gradient_norm(&p.x, &g, self.lo, self.hi);
            if !pg.is_finite() {
                return InnerResult { point: p, projected_gradient: pg, iterations: it, end: InnerEnd::NonFinite };
            }
            if pg <= tol {
                return InnerResult { point: p, projected_gradient: pg, iterations: it, end: InnerEnd::Converged };
            }

            let eps = pg.min(ACTIVE_EPS);
            let near_lower: Vec<bool> = (0..n).map(|i| p.x[i] - self.lo[i] <= eps).collect();
            let near_upper: Vec<bool> = (0..n).map(|i| self.hi[i] - p.x[i] <= eps).collect();
            let mut active: Vec<bool> = (0..n)
                .map(|i| self.lo[i] == self.hi[i] || (near_lower[i] && g[i] > 0.0) || (near_upper[i] && g[i] < 0.0))
                .collect();
            let by_gradient = active.clone();

            let full = self.model_hessian(&p, jac.as_ref());
            let diag: Vec<f64> = (0..n).map(|i| full.get(i, i)).collect();

            let mut accepted = None;
            let mut saw_nonfinite = false;
            let mut failures = 0;
            let mut tries = 0;
            while failures < DAMPING_RETRIES && tries < MAX_SOLVES {
                tries += 1;
                let mut solved = None;
                for _ in 0..ACTIVE_REFINEMENTS {
                    let mut h = full.clone();
                    for i in (0..n).filter(|&i| active[i]) {
                        h.pin(i);
                    }
                    let scale = h.max_abs_diagonal().max(1.0);
                    let rhs: Vec<f64> = (0..n).map(|i| if active[i] { 0.0 } else { -g[i] }).collect();
                    let Some(d) = damped_solve(&h, &rhs, damping, scale) else {
                        break;
                    };
                    // Bound variables the step would push further out stay put.
                    let mut grew = false;
                    for i in 0..n {
                        if !active[i] && ((near_lower[i] && d[i] < 0.0) || (near_upper[i] && d[i] > 0.0)) {
                            active[i] = true;
                            grew = true;
                        }
                    }
                    solved = Some((d, scale));
                    if !grew {
                        break;
                    }
                }
                let Some((mut d, scale)) = solved else {
                    let scale = full.max_abs_diagonal().max(1.0);
                    damping = (damping * 100.0).max(1e-6 * scale);
                    failures += 1;
                    continue;
                };
                // Nearly singular directions give huge Newton steps; damp until
                // each free component moves less than a fraction of its range.
                let too_long = (0..n).any(|i| !active[i] && d[i].abs() > STEP_FRACTION * (self.hi[i] - self.lo[i]));
                if too_long {
                    damping = (damping * 4.0).max(1e-8 * scale);
                    continue;
                }
                for i in (0..n).filter(|&i| active[i]) {
                    d[i] = if by_gradient[i] { -g[i] / if diag[i] > 0.0 { diag[i] } else { 1.0 } } else { 0.0 };
                }
                let mut alpha = 1.0;
                for backtracks in 0..cfg.max_backtracks {
                    let xt = self.project_step(&p.x, &d, alpha);
                    let predicted = predicted_decrease(&p.x, &xt, &g, &d, &active, alpha);
                    let trial = self.evaluate(xt);
                    let ok = trial.phi.is_finite() && p.phi - trial.phi >= cfg.armijo * predicted;
                    if !trial.phi.is_finite() {
                        saw_nonfinite = true;
                    } else if ok {
                        damping = match backtracks {
                            0 => damping * 0.25,
                            1 => damping,
                            _ => (damping * 4.0).max(1e-10 * scale),
                        };
                        if damping < 1e-14 * scale {
                            damping = 0.0;
                        }
                        accepted = Some(self.extrapolate(&p, trial, &d, &g, &active, alpha, predicted));
                        break;
                    }
                    alpha *= cfg.backtrack;
                }
                if accepted.is_some() {
                    break;
                }
                damping = (damping * 100.0).max(1e-6 * scale);
                failures += 1;
            }
            match accepted {
                Some(trial) => p = trial,
                None => {
                    let end = if saw_nonfinite { InnerEnd::NonFinite } else { InnerEnd::Stalled };
                    return InnerResult { point: p, projected_gradient: pg, iterations: it + 1, end };
                }
            }
        }
        InnerResult { point: p, projected_gradient: pg, iterations: cfg.max_inner_iterations, end: InnerEnd::IterationLimit }
    }
}

const DAMPING_RETRIES: usize = 8;
const ACTIVE_EPS: f64 = 1e-6;
const ACTIVE_REFINEMENTS: usize = 6;
const STEP_FRACTION: f64 = 0.5;
const MAX_SOLVES: usize = 60;
const LINEAR_RATIO: f64 = 0.9;
const MAX_EXTRAPOLATIONS: usize = 12;

/// Solve `(h + damping I) d = rhs`. Pivots that are not safely positive are
/// replaced by their magnitude (floored) so `d` is a descent direction.
fn damped_solve(h: &ArrowBand, rhs: &[f64], damping: f64, scale: f64) -> Option<Vec<f64>> {
    let mut h = h.clone();
    if damping > 0.0 {
        h.add_diagonal(damping);
    }
    let chol = match h.cholesky() {
        Some(c) => c,
        None => h.cholesky_modified((1e-8 * scale).max(damping))?.0,
    };
    let d = chol.solve(rhs);
    d.iter().all(|v| v.is_finite()).then_some(d)
}

/// Decrease predicted by the linear model: a Newton step for free variables
/// and a projected gradient step for active ones.
fn predicted_decrease(x: &[f64], xt: &[f64], g: &[f64], d: &[f64], active: &[bool], alpha: f64) -> f64 {
    (0..x.len())
        .map(|i| if active[i] { g[i] * (x[i] - xt[i]) } else { -alpha * g[i] * d[i] })
        .sum()
}

/// Minimize `problem` from `x0`. Deterministic for fixed inputs.
pub fn solve<P: NlpProblem + ?Sized>(problem: &P, x0: &[f64], config: &SolverConfig) -> Result<(Vec<f64>, SolverReport)> {
    config.validate()?;
    let n = problem.num_variables();
    let m = problem.num_constraints();
    let (lo, hi) = (problem.lower_bounds(), problem.upper_bounds());
    if x0.len() != n {
        return Err(Error::Dimension { expected: n, got: x0.len() });
    }
    if lo.len() != n || hi.len() != n {
        return Err(Error::Dimension { expected: n, got: lo.len().min(hi.len()) });
    }
    if let Some(i) = (0..n).find(|&i| !(lo[i] <= hi[i])) {
        return Err(Error::validation(format!("bounds[{i}]"), format!("lower {} exceeds upper {}", lo[i], hi[i])));
    }

    let clamped: Vec<f64> = x0.iter().zip(lo.iter().zip(hi)).map(|(x, (l, u))| x.clamp(*l, *u)).collect();
    let clamped_start = clamped != x0;

    let mut al = Augmented {
        d: Derivatives::new(problem, config.fd_step),
        lo,
        hi,
        lambda: vec![0.0; m],
        rho: config.initial_penalty,
        m,
    };
    let mut report = SolverReport {
        status: SolverStatus::MaxIterations,
        iterations: 0,
        inner_iterations: 0,
        constraint_violation: f64::INFINITY,
        stationarity: f64::INFINITY,
        objective: f64::NAN,
        multipliers: vec![0.0; m],
        history: Vec::new(),
        clamped_start,
        message: None,
    };

    let mut current = al.evaluate(clamped);
    if !current.f.is_finite() || current.c.iter().any(|v| !v.is_finite()) {
        report.status = SolverStatus::NumericalFailure;
        report.message = Some("non-finite evaluation at iterate 0 (starting point)".into());
        report.objective = current.f;
        return Ok((current.x, report));
    }
    let mut reference = inf_norm(&current.c);
    // Inner tolerance and violation target, both tightened as the penalty
    // grows or the multipliers settle.
    let inner_tol = |rho: f64| (1.0 / rho).max(config.stationarity_tolerance);
    let target = |rho: f64| (0.1 / (rho / 10.0).powf(0.1)).max(config.constraint_tolerance);
    let mut omega = inner_tol(al.rho);
    let mut eta = target(al.rho);
    let mut best_at_ceiling = f64::INFINITY;
    let mut stall = 0usize;

    for outer in 1..=config.max_outer_iterations {
        report.iterations = outer;
        // Re-evaluate the merit for the current multipliers and penalty.
        current.phi = al.merit(current.f, &current.c);
        let start = Point { x: current.x.clone(), f: current.f, c: current.c.clone(), phi: current.phi };
        let inner = al.minimize(start, omega, config);
        report.inner_iterations += inner.iterations;
        if let InnerEnd::NonFinite = inner.end {
            if !inner.point.phi.is_finite() || !inner.projected_gradient.is_finite() {
                report.status = SolverStatus::NumericalFailure;
                report.message = Some(format!("non-finite evaluation during outer iterate {outer}"));
                break;
            }
        }
        let trial = inner.point;
        let violation = inf_norm(&trial.c);

        let above_floor = al.rho > config.initial_penalty;
        let worse = above_floor && violation > reference.max(config.constraint_tolerance);
        let at_ceiling = al.rho >= config.max_penalty;
        if at_ceiling && violation > config.constraint_tolerance {
            if violation < best_at_ceiling * (1.0 - config.stall_improvement) {
                best_at_ceiling = best_at_ceiling.min(violation);
                stall = 0;
            } else {
                stall += 1;
            }
            if stall >= config.stall_iterations {
                report.status = SolverStatus::Infeasible;
                report.message = Some(format!(
                    "constraint violation plateaued at {:.3e} with penalty at its ceiling {:.1e}",
                    reference, al.rho
                ));
                break;
            }
        }
        if worse {
            al.rho = (al.rho * config.penalty_growth).min(config.max_penalty);
            omega = inner_tol(al.rho);
            eta = target(al.rho);
            continue;
        }

        current = trial;
        let mu = al.shifted_multipliers(&current.c);
        report.history.push(OuterRecord {
            penalty: al.rho,
            violation,
            stationarity: inner.projected_gradient,
            objective: current.f,
            inner_iterations: inner.iterations,
        });

        if violation <= config.constraint_tolerance && inner.projected_gradient <= config.stationarity_tolerance {
            al.lambda = mu;
            report.status = SolverStatus::Converged;
            break;
        }
        if violation <= eta {
            al.lambda = mu;
            eta = (eta / al.rho.powf(0.9)).max(config.constraint_tolerance);
            omega = (omega / al.rho).max(config.stationarity_tolerance);
        } else {
            al.rho = (al.rho * config.penalty_growth).min(config.max_penalty);
            omega = inner_tol(al.rho);
            eta = target(al.rho);
        }
        reference = violation;
    }

    report.constraint_violation = inf_norm(&current.c);
    report.objective = current.f;
    report.multipliers = al.lambda.clone();
    report.stationarity = kkt_residual(problem, &current.x, &report.multipliers);
    if report.status == SolverStatus::Converged
        && (report.stationarity > config.stationarity_tolerance || report.constraint_violation > config.constraint_tolerance)
    {
        report.status = SolverStatus::MaxIterations;
        report.message = Some("post-hoc KKT check did not confirm convergence".into());
    }
    Ok((current.x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Toy<F, C> {
        n: usize,
        m: usize,
        lo: Vec<f64>,
        hi: Vec<f64>,
        f: F,
        c: C,
    }

    impl<F, C> NlpProblem for Toy<F, C>
    where
        F: Fn(&[f64]) -> f64 + Sync,
        C: Fn(&[f64], &mut [f64]) + Sync,
    {
        fn num_variables(&self) -> usize {
            self.n
        }
        fn num_constraints(&self) -> usize {
            self.m
        }
        fn lower_bounds(&self) -> &[f64] {
            &self.lo
        }
        fn upper_bounds(&self) -> &[f64] {
            &self.hi
        }
        fn objective(&self, x: &[f64]) -> f64 {
            (self.f)(x)
        }
        fn constraints(&self, x: &[f64], out: &mut [f64]) {
            (self.c)(x, out)
        }
    }

    #[test]
    fn active_lower_bound() {
        let p = Toy { n: 1, m: 0, lo: vec![1.0], hi: vec![10.0], f: |x: &[f64]| x[0] * x[0], c: |_: &[f64], _: &mut [f64]| {} };
        let (x, r) = solve(&p, &[5.0], &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolverStatus::Converged);
        assert_eq!(x[0], 1.0);
        assert!((r.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_equality_quadratic() {
        let p = Toy {
            n: 2,
            m: 1,
            lo: vec![-10.0; 2],
            hi: vec![10.0; 2],
            f: |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2),
            c: |x: &[f64], out: &mut [f64]| out[0] = x[0] + x[1],
        };
        let (x, r) = solve(&p, &[0.0, 0.0], &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolverStatus::Converged, "{r:?}");
        assert!((x[0] - 2.0).abs() < 1e-6 && (x[1] + 2.0).abs() < 1e-6, "{x:?}");
        assert!((r.objective - 2.0).abs() < 1e-6);
        assert!((r.multipliers[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn starting_point_is_clamped() {
        let p = Toy { n: 1, m: 0, lo: vec![0.0], hi: vec![1.0], f: |x: &[f64]| (x[0] - 0.5).powi(2), c: |_: &[f64], _: &mut [f64]| {} };
        let (x, r) = solve(&p, &[7.0], &SolverConfig::default()).unwrap();
        assert!(r.clamped_start);
        assert!((x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_finite_start_is_a_numerical_failure() {
        let p = Toy { n: 1, m: 0, lo: vec![-1.0], hi: vec![1.0], f: |x: &[f64]| (x[0]).ln(), c: |_: &[f64], _: &mut [f64]| {} };
        let (_, r) = solve(&p, &[-0.5], &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolverStatus::NumericalFailure);
        assert!(r.message.unwrap().contains("iterate 0"));
    }

    #[test]
    fn inconsistent_constraints_are_infeasible() {
        let p = Toy {
            n: 2,
            m: 2,
            lo: vec![-5.0; 2],
            hi: vec![5.0; 2],
            f: |x: &[f64]| x[0] + x[1],
            c: |x: &[f64], out: &mut [f64]| {
                out[0] = x[0] + x[1] - 1.0;
                out[1] = x[0] + x[1] + 1.0;
            },
        };
        let (_, r) = solve(&p, &[0.3, 0.1], &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolverStatus::Infeasible, "{r:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Toy { n: 2, m: 0, lo: vec![0.0, 2.0], hi: vec![1.0, 1.0], f: |_: &[f64]| 0.0, c: |_: &[f64], _: &mut [f64]| {} };
        assert!(solve(&p, &[0.0, 0.0], &SolverConfig::default()).is_err());
        assert!(solve(&p, &[0.0], &SolverConfig::default()).is_err());
        let bad = SolverConfig { penalty_growth: 1.0, ..SolverConfig::default() };
        let ok = Toy { n: 1, m: 0, lo: vec![0.0], hi: vec![1.0], f: |_: &[f64]| 0.0, c: |_: &[f64], _: &mut [f64]| {} };
        assert!(solve(&ok, &[0.5], &bad).is_err());
    }

    fn rosenbrock_on_circle() -> impl NlpProblem {
        Toy {
            n: 2,
            m: 1,
            lo: vec![-2.0; 2],
            hi: vec![2.0; 2],
            f: |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            c: |x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0] + x[1] * x[1] - 1.0,
        }
    }

    /// Minimize along the unit circle by a dense angle scan and golden
    /// section polish.
    fn circle_oracle() -> (f64, f64) {
        let f = |a: f64| {
            let (x, y) = (a.cos(), a.sin());
            (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2)
        };
        let n = 200_000;
        let step = std::f64::consts::TAU / n as f64;
        let k = (0..n).min_by(|&a, &b| f(a as f64 * step).total_cmp(&f(b as f64 * step))).unwrap();
        let (mut lo, mut hi) = ((k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let a = 0.5 * (lo + hi);
        (a.cos(), a.sin())
    }

    #[test]
    fn constrained_rosenbrock_matches_scan() {
        let p = rosenbrock_on_circle();
        let (x, r) = solve(&p, &[0.0, 0.5], &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolverStatus::Converged, "{r:?}");
        let (ox, oy) = circle_oracle();
        assert!((x[0] - ox).abs() < 1e-6 && (x[1] - oy).abs() < 1e-6, "{x:?} vs ({ox}, {oy})");
    }

    #[test]
    fn accepted_violations_never_increase() {
        let p = rosenbrock_on_circle();
        let (_, r) = solve(&p, &[-1.5, 1.5], &SolverConfig::default()).unwrap();
        let cfg = SolverConfig::default();
        let tol = cfg.constraint_tolerance;
        for w in r.history.windows(2).filter(|w| w[0].penalty > cfg.initial_penalty) {
            assert!(w[1].violation <= w[0].violation.max(tol), "{:?}", r.history);
        }
    }

    #[test]
    fn repeated_solves_are_bit_identical() {
        let p = rosenbrock_on_circle();
        let (a, ra) = solve(&p, &[0.3, -0.4], &SolverConfig::default()).unwrap();
        let (b, rb) = solve(&p, &[0.3, -0.4], &SolverConfig::default()).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(ra, rb);
    }

    #[test]
    fn scaled_objective_has_the_same_minimizer() {
        let mk = |s: f64| Toy {
            n: 2,
            m: 1,
            lo: vec![-10.0; 2],
            hi: vec![10.0; 2],
            f: move |x: &[f64]| s * ((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2)),
            c: |x: &[f64], out: &mut [f64]| out[0] = x[0] + x[1],
        };
        let (a, _) = solve(&mk(1.0), &[0.0, 0.0], &SolverConfig::default()).unwrap();
        let (b, _) = solve(&mk(1e3), &[0.0, 0.0], &SolverConfig::default()).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-6 && (a[1] - b[1]).abs() < 1e-6);
    }
}
