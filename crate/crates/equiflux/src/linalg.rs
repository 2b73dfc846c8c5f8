//! Small dense and sparse linear algebra helpers shared by the solvers.
//!
//! Dense factorizations come from `nalgebra`; this module adds the few pieces
//! the schemes need on top: a compressed sparse row matrix assembled from
//! triplets in a deterministic order, a conjugate gradient iteration for the
//! symmetric positive definite systems, and condition number reports.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Failure modes of the linear solvers in this module.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// A factorization failed because the matrix is singular (or not positive
    /// definite where positive definiteness was required).
    #[error("linear system is singular or not positive definite: {0}")]
    SingularSystem(String),
    /// Conjugate gradients did not reach the requested tolerance.
    #[error("conjugate gradient stalled at relative residual {residual:.3e} after {iterations} iterations")]
    ConvergenceFailure { residual: f64, iterations: usize },
}

/// Compressed sparse row matrix built from (row, col, value) triplets.
///
/// Duplicate triplets are summed. Construction sorts by (row, col), so the
/// result does not depend on the order in which cells were visited during
/// assembly.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles a CSR matrix from triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for &(r, c, v) in &entries {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: merged.iter().map(|e| e.1).collect(),
            values: merged.iter().map(|e| e.2).collect(),
        }
    }

    /// Number of rows.
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    /// Number of columns.
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Matrix-vector product `y = A x`.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = DVector::zeros(self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    /// Densifies the matrix (desk-scale problems only).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.values[k];
            }
        }
        m
    }
}

/// Solves the symmetric positive definite system `A x = b` by unpreconditioned
/// conjugate gradients started from zero.
///
/// Stops when the residual drops below `tol` relative to `|b|`, and fails
/// after `max_iterations`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &DVector<f64>,
    tol: f64,
    max_iterations: usize,
) -> Result<DVector<f64>, LinalgError> {
    assert_eq!(a.nrows(), a.ncols());
    assert_eq!(b.len(), a.nrows());
    let bnorm = b.norm();
    if bnorm == 0.0 {
        return Ok(DVector::zeros(b.len()));
    }
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iterations {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let ap = a.mul_vec(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(LinalgError::SingularSystem(format!(
                "non-positive curvature {pap:.3e} encountered in CG"
            )));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        let beta = rr_new / rr;
        rr = rr_new;
        p = &r + beta * &p;
    }
    if rr.sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(LinalgError::ConvergenceFailure {
            residual: rr.sqrt() / bnorm,
            iterations: max_iterations,
        })
    }
}

/// Solves a dense symmetric positive definite system by Cholesky, with one
/// step of iterative refinement so the residual stays near working
/// precision even for strongly anisotropic mobilities.
pub fn solve_spd_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let chol = a.clone().cholesky().ok_or_else(|| {
        LinalgError::SingularSystem("Cholesky factorization failed".to_string())
    })?;
    let mut x = chol.solve(b);
    let r = b - a * &x;
    x += chol.solve(&r);
    Ok(x)
}

/// Solves a dense (possibly indefinite) system by LU with partial pivoting,
/// with one step of iterative refinement.
pub fn solve_lu_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let lu = a.clone().lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| LinalgError::SingularSystem("LU solve failed".to_string()))?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Ok(x)
}

/// Two-norm condition number of a dense matrix, from its singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank of a dense matrix: singular values above
/// `rel_tol * sigma_max` count.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.max();
    if max == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > rel_tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn csr_sums_duplicates_and_multiplies() {
        let triplets = vec![
            (0, 0, 2.0),
            (0, 1, -1.0),
            (1, 0, -1.0),
            (1, 1, 2.0),
            (0, 0, 1.0), // duplicate, should sum to 3
        ];
        let a = CsrMatrix::from_triplets(2, 2, &triplets);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let y = a.mul_vec(&x);
        assert_relative_eq!(y[0], 3.0 * 1.0 - 1.0 * 2.0);
        assert_relative_eq!(y[1], -1.0 + 4.0);
        let d = a.to_dense();
        assert_relative_eq!(d[(0, 0)], 3.0);
    }

    #[test]
    fn cg_matches_dense_cholesky_on_spd_system() {
        // Small SPD tridiagonal system.
        let n = 20;
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 2.5));
            if i + 1 < n {
                triplets.push((i, i + 1, -1.0));
                triplets.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &triplets);
        let b = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let x_cg = conjugate_gradient(&a, &b, 1e-14, 10 * n).unwrap();
        let x_chol = solve_spd_dense(&a.to_dense(), &b).unwrap();
        assert_relative_eq!((x_cg - x_chol).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn cg_reports_convergence_failure() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1e8)]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let err = conjugate_gradient(&a, &b, 1e-16, 1).unwrap_err();
        match err {
            LinalgError::ConvergenceFailure { iterations, .. } => assert_eq!(iterations, 1),
            other => panic!("expected convergence failure, got {other}"),
        }
    }

    #[test]
    fn rank_and_condition_of_simple_matrices() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(numerical_rank(&id, 1e-12), 3);
        assert_relative_eq!(condition_number(&id), 1.0);
        let mut sing = DMatrix::<f64>::identity(3, 3);
        sing[(2, 2)] = 0.0;
        assert_eq!(numerical_rank(&sing, 1e-12), 2);
        assert!(condition_number(&sing).is_infinite());
    }
}
