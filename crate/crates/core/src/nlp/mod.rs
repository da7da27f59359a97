//! Smooth equality-constrained nonlinear programming with box bounds.
//!
//! ```text
//! minimize f(x)  subject to  c(x) = 0,  lower <= x <= upper
//! ```
//!
//! solved by an augmented Lagrangian outer loop whose bound-constrained
//! subproblems are minimized with a projected Newton method.

mod derivatives;
pub mod linalg;
mod solver;

pub use derivatives::{check_gradients, colored_jacobian, color_columns, GradientCheckReport};
pub use solver::{kkt_residual, solve, OuterRecord, SolverConfig, SolverReport, SolverStatus};

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    pub fn from_dense(ncols: usize, dense: &[Vec<f64>]) -> Self {
        let rows = dense
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
            .collect();
        Self { nrows: dense.len(), ncols, rows }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|(j, v)| v * x[*j]).sum()).collect()
    }

    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (row, yi) in self.rows.iter().zip(y) {
            for (j, v) in row {
                out[*j] += v * yi;
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().filter(|(c, _)| *c == j).map(|(_, v)| v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Sparsity of the Lagrangian Hessian the solver may exploit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianStructure {
    Dense,
    /// Banded with `half_bandwidth`, plus `border` trailing dense rows.
    Arrow { half_bandwidth: usize, border: usize },
}

/// A smooth NLP. Only the zeroth-order evaluators are mandatory; any missing
/// derivative is approximated by finite differences.
pub trait NlpProblem: Sync {
    fn num_variables(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];
    fn objective(&self, x: &[f64]) -> f64;
    fn constraints(&self, x: &[f64], out: &mut [f64]);

    fn objective_gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn constraint_jacobian(&self, _x: &[f64]) -> Option<SparseMatrix> {
        None
    }

    /// Column indices touched by each constraint row; enables colored finite
    /// differences when no analytic Jacobian is supplied.
    fn jacobian_sparsity(&self) -> Option<Vec<Vec<usize>>> {
        None
    }

    /// Lower-triangle triplets `(i, j, v)`, `i >= j`, of
    /// `obj_factor * H_f + sum_k multipliers[k] * H_{c_k}`. Duplicates add.
    fn lagrangian_hessian(&self, _x: &[f64], _obj_factor: f64, _multipliers: &[f64]) -> Option<Vec<(usize, usize, f64)>> {
        None
    }

    fn hessian_structure(&self) -> HessianStructure {
        HessianStructure::Dense
    }
}

impl<P: NlpProblem + ?Sized> NlpProblem for &P {
    fn num_variables(&self) -> usize {
        (**self).num_variables()
    }
    fn num_constraints(&self) -> usize {
        (**self).num_constraints()
    }
    fn lower_bounds(&self) -> &[f64] {
        (**self).lower_bounds()
    }
    fn upper_bounds(&self) -> &[f64] {
        (**self).upper_bounds()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (**self).objective(x)
    }
    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        (**self).constraints(x, out)
    }
    fn objective_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        (**self).objective_gradient(x)
    }
    fn constraint_jacobian(&self, x: &[f64]) -> Option<SparseMatrix> {
        (**self).constraint_jacobian(x)
    }
    fn jacobian_sparsity(&self) -> Option<Vec<Vec<usize>>> {
        (**self).jacobian_sparsity()
    }
    fn lagrangian_hessian(&self, x: &[f64], obj_factor: f64, multipliers: &[f64]) -> Option<Vec<(usize, usize, f64)>> {
        (**self).lagrangian_hessian(x, obj_factor, multipliers)
    }
    fn hessian_structure(&self) -> HessianStructure {
        (**self).hessian_structure()
    }
}
