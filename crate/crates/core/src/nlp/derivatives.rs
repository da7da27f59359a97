use super::{NlpProblem, SparseMatrix};

pub(crate) const DEFAULT_FD_STEP: f64 = 1e-6;

fn step_for(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

pub(crate) fn fd_gradient<P: NlpProblem + ?Sized>(p: &P, x: &[f64], rel: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = step_for(x[j], rel);
            xp[j] = x[j] + h;
            let fp = p.objective(&xp);
            xp[j] = x[j] - h;
            let fm = p.objective(&xp);
            xp[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn fd_jacobian_dense<P: NlpProblem + ?Sized>(p: &P, x: &[f64], rel: f64) -> SparseMatrix {
    let (n, m) = (p.num_variables(), p.num_constraints());
    let mut dense = vec![vec![0.0; n]; m];
    let mut xp = x.to_vec();
    let (mut cp, mut cm) = (vec![0.0; m], vec![0.0; m]);
    for j in 0..n {
        let h = step_for(x[j], rel);
        xp[j] = x[j] + h;
        p.constraints(&xp, &mut cp);
        xp[j] = x[j] - h;
        p.constraints(&xp, &mut cm);
        xp[j] = x[j];
        for i in 0..m {
            dense[i][j] = (cp[i] - cm[i]) / (2.0 * h);
        }
    }
    SparseMatrix::from_dense(n, &dense)
}

/// Greedy distance-2 coloring of the columns of a sparsity pattern: two
/// columns share a color only if no row touches both.
pub fn color_columns(sparsity: &[Vec<usize>], ncols: usize) -> Vec<usize> {
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); ncols];
    for (i, row) in sparsity.iter().enumerate() {
        for &j in row {
            col_rows[j].push(i);
        }
    }
    let mut color = vec![usize::MAX; ncols];
    let mut forbidden: Vec<usize> = Vec::new();
    for j in 0..ncols {
        forbidden.clear();
        for &i in &col_rows[j] {
            for &k in &sparsity[i] {
                if k != j && color[k] != usize::MAX {
                    forbidden.push(color[k]);
                }
            }
        }
        forbidden.sort_unstable();
        forbidden.dedup();
        let mut c = 0;
        for &f in &forbidden {
            if f == c {
                c += 1;
            } else if f > c {
                break;
            }
        }
        color[j] = c;
    }
    color
}

/// Central-difference Jacobian using one pair of constraint evaluations per
/// column color.
pub fn colored_jacobian<P: NlpProblem + ?Sized>(p: &P, x: &[f64], sparsity: &[Vec<usize>], rel: f64) -> SparseMatrix {
    let (n, m) = (p.num_variables(), p.num_constraints());
    let colors = color_columns(sparsity, n);
    let ncolors = colors.iter().copied().max().map_or(0, |c| c + 1);
    let mut jac = SparseMatrix::new(m, n);
    let (mut cp, mut cm) = (vec![0.0; m], vec![0.0; m]);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for color in 0..ncolors {
        for j in (0..n).filter(|&j| colors[j] == color) {
            let h = step_for(x[j], rel);
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
        }
        p.constraints(&xp, &mut cp);
        p.constraints(&xm, &mut cm);
        for (i, row) in sparsity.iter().enumerate() {
            for &j in row.iter().filter(|&&j| colors[j] == color) {
                let h = step_for(x[j], rel);
                jac.rows[i].push((j, (cp[i] - cm[i]) / (2.0 * h)));
            }
        }
        xp.copy_from_slice(x);
        xm.copy_from_slice(x);
    }
    jac
}

/// Derivative provider: analytic where the problem supplies it, finite
/// differences otherwise.
pub(crate) struct Derivatives<'a, P: NlpProblem + ?Sized> {
    pub problem: &'a P,
    pub fd_step: f64,
    sparsity: Option<Vec<Vec<usize>>>,
}

impl<'a, P: NlpProblem + ?Sized> Derivatives<'a, P> {
    pub fn new(problem: &'a P, fd_step: f64) -> Self {
        Self { problem, fd_step, sparsity: problem.jacobian_sparsity() }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.problem
            .objective_gradient(x)
            .unwrap_or_else(|| fd_gradient(self.problem, x, self.fd_step))
    }

    pub fn jacobian(&self, x: &[f64]) -> SparseMatrix {
        if let Some(j) = self.problem.constraint_jacobian(x) {
            return j;
        }
        match &self.sparsity {
            Some(s) => colored_jacobian(self.problem, x, s, self.fd_step),
            None => fd_jacobian_dense(self.problem, x, self.fd_step),
        }
    }

    /// Lagrangian Hessian triplets; falls back to differencing the
    /// Lagrangian gradient.
    pub fn hessian(&self, x: &[f64], obj_factor: f64, mult: &[f64]) -> Vec<(usize, usize, f64)> {
        if let Some(h) = self.problem.lagrangian_hessian(x, obj_factor, mult) {
            return h;
        }
        let n = x.len();
        let lag_grad = |z: &[f64]| {
            let mut g = self.gradient(z);
            for gi in &mut g {
                *gi *= obj_factor;
            }
            if !mult.is_empty() {
                let jt = self.jacobian(z).tr_mul_vec(mult);
                for (gi, ji) in g.iter_mut().zip(jt) {
                    *gi += ji;
                }
            }
            g
        };
        // Second differences of the objective need a larger step than first.
        let rel = self.fd_step.max(1e-8).sqrt().min(1e-4);
        let mut cols = Vec::with_capacity(n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let h = step_for(x[j], rel);
            xp[j] = x[j] + h;
            let gp = lag_grad(&xp);
            xp[j] = x[j] - h;
            let gm = lag_grad(&xp);
            xp[j] = x[j];
            cols.push(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
        }
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let v = 0.5 * (cols[j][i] + cols[i][j]);
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
}

/// Worst discrepancies between supplied analytic derivatives and central
/// finite differences. Error per entry is `|a - fd| / max(1, |fd|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    /// `None` when the problem has no analytic objective gradient.
    pub objective_gradient: Option<f64>,
    pub worst_gradient_index: Option<usize>,
    /// `None` when the problem has no analytic constraint Jacobian.
    pub constraint_jacobian: Option<f64>,
    pub worst_jacobian_entry: Option<(usize, usize)>,
}

impl GradientCheckReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.objective_gradient.unwrap_or(0.0).max(self.constraint_jacobian.unwrap_or(0.0))
    }
}

fn discrepancy(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / fd.abs().max(1.0)
}

pub fn check_gradients<P: NlpProblem + ?Sized>(problem: &P, x: &[f64]) -> GradientCheckReport {
    let mut report = GradientCheckReport {
        objective_gradient: None,
        worst_gradient_index: None,
        constraint_jacobian: None,
        worst_jacobian_entry: None,
    };
    if let Some(g) = problem.objective_gradient(x) {
        let fd = fd_gradient(problem, x, DEFAULT_FD_STEP);
        let (idx, worst) = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| discrepancy(*a, *b))
            .enumerate()
            .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
        report.objective_gradient = Some(worst);
        report.worst_gradient_index = Some(idx);
    }
    if let Some(jac) = problem.constraint_jacobian(x) {
        let fd = match problem.jacobian_sparsity() {
            Some(s) => colored_jacobian(problem, x, &s, DEFAULT_FD_STEP),
            None => fd_jacobian_dense(problem, x, DEFAULT_FD_STEP),
        };
        let mut worst = 0.0;
        let mut at = (0, 0);
        for i in 0..jac.nrows {
            let mut cols: Vec<usize> = jac.rows[i].iter().chain(&fd.rows[i]).map(|(j, _)| *j).collect();
            cols.sort_unstable();
            cols.dedup();
            for j in cols {
                let e = discrepancy(jac.get(i, j), fd.get(i, j));
                if e > worst {
                    worst = e;
                    at = (i, j);
                }
            }
        }
        report.constraint_jacobian = Some(worst);
        report.worst_jacobian_entry = Some(at);
    }
    report
}
