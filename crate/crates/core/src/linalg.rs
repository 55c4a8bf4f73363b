//! Small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative pivot size below which an LU factorization counts as singular.
const PIVOT_RATIO_FLOOR: f64 = 1e-14;

/// Solve `a x = b` by LU with partial pivoting.
///
/// Fails instead of returning garbage when a pivot collapses relative to the
/// largest one.
pub(crate) fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let big = diag.amax();
    let small = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !(big > 0.0) || !(small > PIVOT_RATIO_FLOOR * big) {
        return Err(Error::numeric(format!("{what}: matrix is singular to working precision")));
    }
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::numeric(format!("{what}: LU solve failed")))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("{what}: solution is not finite")));
    }
    Ok(x)
}

/// `(a + aᵀ) / 2`
pub(crate) fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenpairs of a symmetric matrix sorted by ascending eigenvalue.
pub(crate) fn sym_eig_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
