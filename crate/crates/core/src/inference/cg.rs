//! Preconditioned conjugate gradients for symmetric positive definite systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VecchiaError};
use crate::factor::VecchiaFactor;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn diagonal(&self) -> Vec<f64>;

    /// Applies the inverse of the prior precision contained in the operator,
    /// if it has one.
    fn prior_inverse(&self, _r: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    None,
    /// Jacobi scaling by the operator diagonal.
    Diagonal,
    /// The inverse prior precision, applied by triangular solves.
    Prior,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `||A x - b|| / ||b||`.
    pub residual: f64,
}

/// Explicit matrix as an operator.
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(x)).iter().copied().collect()
    }

    fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }
}

/// `Phi + M / sigma^2`, where `M` is the 0/1 mask of observed nodes.
pub struct PosteriorOperator<'a> {
    pub factor: &'a VecchiaFactor,
    pub observed: &'a [bool],
    pub inv_sigma2: f64,
}

impl LinearOperator for PosteriorOperator<'_> {
    fn dim(&self) -> usize {
        self.factor.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.factor.apply_precision(x);
        for ((yi, xi), &obs) in y.iter_mut().zip(x).zip(self.observed) {
            if obs {
                *yi += self.inv_sigma2 * xi;
            }
        }
        y
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.factor.precision_diagonal();
        for (di, &obs) in d.iter_mut().zip(self.observed) {
            if obs {
                *di += self.inv_sigma2;
            }
        }
        d
    }

    fn prior_inverse(&self, r: &[f64]) -> Option<Vec<f64>> {
        Some(self.factor.apply_covariance(r))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` from a zero start.
pub fn cg_solve(
    op: &dyn LinearOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    precond: Preconditioner,
) -> Result<CgResult> {
    cg_solve_from(op, b, &vec![0.0; b.len()], tol, max_iter, precond)
}

/// Solves `A x = b` starting from `x0`, stopping once
/// `||A x - b|| <= tol ||b||`.
pub fn cg_solve_from(
    op: &dyn LinearOperator,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
    precond: Preconditioner,
) -> Result<CgResult> {
    let n = op.dim();
    if b.len() != n || x0.len() != n {
        return Err(VecchiaError::InvalidInput("CG vector length mismatch".into()));
    }
    if !(tol > 0.0) {
        return Err(VecchiaError::InvalidInput("CG tolerance must be positive".into()));
    }
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgResult { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let inv_diag: Option<Vec<f64>> = match precond {
        Preconditioner::Diagonal => Some(op.diagonal().iter().map(|d| 1.0 / d).collect()),
        Preconditioner::Prior => {
            if op.prior_inverse(b).is_none() {
                return Err(VecchiaError::InvalidInput("operator has no prior to precondition with".into()));
            }
            None
        }
        Preconditioner::None => None,
    };
    let precondition = |r: &[f64]| -> Vec<f64> {
        match (precond, &inv_diag) {
            (Preconditioner::Prior, _) => op.prior_inverse(r).expect("checked above"),
            (_, Some(w)) => r.iter().zip(w).map(|(a, b)| a * b).collect(),
            _ => r.to_vec(),
        }
    };

    let mut x = x0.to_vec();
    let ax = op.apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut rnorm = dot(&r, &r).sqrt();
    if rnorm <= tol * bnorm {
        return Ok(CgResult { x, iterations: 0, residual: rnorm / bnorm });
    }
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = op.apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(VecchiaError::NotConverged { iterations: it, residual: rnorm / bnorm });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = dot(&r, &r).sqrt();
        if rnorm <= tol * bnorm {
            return Ok(CgResult { x, iterations: it, residual: rnorm / bnorm });
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(VecchiaError::NotConverged { iterations: max_iter, residual: rnorm / bnorm })
}
