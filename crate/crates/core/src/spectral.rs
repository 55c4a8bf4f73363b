//! Eigenvalue utilities and the matrices that stabilize the Nash dynamics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, sym, sym_eig_sorted};

/// Extreme eigenvalues of the two diagonal Hessian blocks of `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEigs {
    /// Smallest eigenvalue of `∇²_xx f`.
    pub lambda_x: f64,
    /// Largest eigenvalue of `∇²_yy f`.
    pub lambda_y: f64,
}

/// Constants of the stabilizer `β` and of the Gershgorin regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerParams {
    pub b_x: f64,
    pub b_y: f64,
    /// Gershgorin floor.
    pub lambda0: f64,
    /// The regularizer is switched off once `‖ω‖ ≤ delta0`.
    pub delta0: f64,
    /// Add `b_y` itself (a negative number) to the y block of `β` instead of
    /// its magnitude.
    pub beta_literal_sign: bool,
}

impl Default for RegularizerParams {
    fn default() -> Self {
        RegularizerParams { b_x: 1.0, b_y: -1.0, lambda0: 5.0, delta0: 5e-5, beta_literal_sign: false }
    }
}

impl RegularizerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_x > 0.5) {
            return Err(Error::arg(format!("b_x must exceed 1/2, got {}", self.b_x)));
        }
        if !(self.b_y < -0.5) {
            return Err(Error::arg(format!("b_y must be below -1/2, got {}", self.b_y)));
        }
        if !(self.lambda0 > 0.0) || !self.lambda0.is_finite() {
            return Err(Error::arg(format!("lambda0 must be positive, got {}", self.lambda0)));
        }
        if !(self.delta0 > 0.0) {
            return Err(Error::arg(format!("delta0 must be positive, got {}", self.delta0)));
        }
        Ok(())
    }
}

fn check_blocks(j: &DMatrix<f64>, dims: (usize, usize)) -> Result<()> {
    let (n, m) = dims;
    if n == 0 || m == 0 || j.nrows() != n + m || j.ncols() != n + m {
        return Err(Error::arg(format!(
            "jacobian is {}x{}, dims ({n}, {m}) need {}x{}",
            j.nrows(),
            j.ncols(),
            n + m,
            n + m
        )));
    }
    if !all_finite(j) {
        return Err(Error::arg("jacobian has non-finite entries"));
    }
    Ok(())
}

/// `∇²_xx f`, read off the top-left block of `J`.
pub fn hess_xx(j: &DMatrix<f64>, dims: (usize, usize)) -> DMatrix<f64> {
    sym(&j.view((0, 0), (dims.0, dims.0)).into_owned())
}

/// `∇²_yy f`, the negated bottom-right block of `J`.
pub fn hess_yy(j: &DMatrix<f64>, dims: (usize, usize)) -> DMatrix<f64> {
    let (n, m) = dims;
    -sym(&j.view((n, n), (m, m)).into_owned())
}

pub fn extreme_block_eigs(j: &DMatrix<f64>, dims: (usize, usize)) -> Result<BlockEigs> {
    check_blocks(j, dims)?;
    let (vx, _) = sym_eig_sorted(&hess_xx(j, dims));
    let (vy, _) = sym_eig_sorted(&hess_yy(j, dims));
    Ok(BlockEigs { lambda_x: vx[0], lambda_y: vy[vy.len() - 1] })
}

/// Extreme eigenpairs of the Hessian blocks: the smallest of `∇²_xx f` and
/// the largest of `∇²_yy f`. Eigenvectors have unit norm.
pub fn extreme_block_eigpairs(
    j: &DMatrix<f64>,
    dims: (usize, usize),
) -> Result<((f64, DVector<f64>), (f64, DVector<f64>))> {
    check_blocks(j, dims)?;
    let (vx, ex) = sym_eig_sorted(&hess_xx(j, dims));
    let (vy, ey) = sym_eig_sorted(&hess_yy(j, dims));
    let last = vy.len() - 1;
    Ok(((vx[0], ex.column(0).into_owned()), (vy[last], ey.column(last).into_owned())))
}

/// Diagonal stabilizer added to `J + Jᵀ` in the discrete dynamics.
///
/// The x block is `b_x I` when `λ_x > 0`. The y block is `|b_y| I` when
/// `λ_y < 0`, or `b_y I` under `beta_literal_sign`.
pub fn build_beta(eigs: BlockEigs, params: &RegularizerParams, dims: (usize, usize)) -> DMatrix<f64> {
    let (n, m) = dims;
    let bx = if eigs.lambda_x > 0.0 { params.b_x } else { 0.0 };
    let by = if eigs.lambda_y < 0.0 {
        if params.beta_literal_sign {
            params.b_y
        } else {
            params.b_y.abs()
        }
    } else {
        0.0
    };
    let mut d = DVector::zeros(n + m);
    d.rows_mut(0, n).fill(bx);
    d.rows_mut(n, m).fill(by);
    DMatrix::from_diagonal(&d)
}

/// Diagonal shift `M` with `M_ii = max(0, λ0 − (A_ii − R_i))`, or zero when
/// the gate is closed.
pub fn gershgorin_regularizer(a: &DMatrix<f64>, lambda0: f64, active: bool) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::arg(format!("regularizer needs a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    let d = a.nrows();
    if !active {
        return Ok(DMatrix::zeros(d, d));
    }
    let diag = DVector::from_fn(d, |i, _| {
        let off: f64 = (0..d).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
        (lambda0 - (a[(i, i)] - off)).max(0.0)
    });
    Ok(DMatrix::from_diagonal(&diag))
}

/// `S = JᵀJ + min(λ0, ‖ω‖) I`.
pub fn build_gn_metric(j: &DMatrix<f64>, omega_norm: f64, lambda0: f64) -> DMatrix<f64> {
    let lam = lambda0.min(omega_norm).max(0.0);
    let mut s = j.tr_mul(j);
    // JᵀJ is symmetric in exact arithmetic; force it bitwise.
    for r in 0..s.nrows() {
        for c in 0..r {
            let v = 0.5 * (s[(r, c)] + s[(c, r)]);
            s[(r, c)] = v;
            s[(c, r)] = v;
        }
        s[(r, r)] += lam;
    }
    s
}

/// All eigenvalues of a general square matrix.
pub fn spectrum(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::arg("spectrum needs a square matrix"));
    }
    if !all_finite(m) {
        return Err(Error::arg("matrix has non-finite entries"));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numeric("eigenvalue iteration did not converge"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(spectrum(m)?.iter().map(|c| c.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn block_eig_examples() {
        let e = extreme_block_eigs(&m(2, 2, &[2.0, 0.0, 0.0, -2.0]), (1, 1)).unwrap();
        assert_eq!((e.lambda_x, e.lambda_y), (2.0, 2.0));
        let e = extreme_block_eigs(&DMatrix::identity(2, 2), (1, 1)).unwrap();
        assert_eq!((e.lambda_x, e.lambda_y), (1.0, -1.0));
        let e = extreme_block_eigs(&m(2, 2, &[0.0, 1.0, -1.0, 0.0]), (1, 1)).unwrap();
        assert_eq!((e.lambda_x, e.lambda_y), (0.0, 0.0));
        assert!(extreme_block_eigs(&m(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]), (1, 1)).is_err());
    }

    #[test]
    fn beta_examples() {
        let p = RegularizerParams::default();
        let b = build_beta(BlockEigs { lambda_x: 1.0, lambda_y: -1.0 }, &p, (2, 3));
        assert_eq!(b, DMatrix::identity(5, 5));
        let b = build_beta(BlockEigs { lambda_x: -1.0, lambda_y: 1.0 }, &p, (2, 2));
        assert_eq!(b, DMatrix::zeros(4, 4));
        let b = build_beta(BlockEigs { lambda_x: 2.0, lambda_y: 2.0 }, &p, (1, 1));
        assert_eq!(b, m(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let lit = RegularizerParams { beta_literal_sign: true, ..p };
        let b = build_beta(BlockEigs { lambda_x: 1.0, lambda_y: -1.0 }, &lit, (1, 1));
        assert_eq!(b, m(2, 2, &[1.0, 0.0, 0.0, -1.0]));
    }

    #[test]
    fn gershgorin_examples() {
        let a = m(2, 2, &[1.0, -3.0, 0.0, 2.0]);
        let reg = gershgorin_regularizer(&a, 5.0, true).unwrap();
        assert_eq!(reg, m(2, 2, &[7.0, 0.0, 0.0, 3.0]));
        let min_re = spectrum(&(&a + &reg)).unwrap().iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        assert!(min_re >= 2.0 - 1e-12);
        assert_eq!(gershgorin_regularizer(&(DMatrix::identity(2, 2) * 6.0), 5.0, true).unwrap(), DMatrix::zeros(2, 2));
        assert_eq!(gershgorin_regularizer(&a, 5.0, false).unwrap(), DMatrix::zeros(2, 2));
        assert!(gershgorin_regularizer(&DMatrix::zeros(2, 3), 5.0, true).is_err());
    }

    #[test]
    fn gn_metric_examples() {
        assert_abs_diff_eq!(build_gn_metric(&DMatrix::identity(2, 2), 0.3, 5.0), DMatrix::identity(2, 2) * 1.3);
        let j = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(build_gn_metric(&j, 0.0, 5.0), j.transpose() * &j);
        let rot = m(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(build_gn_metric(&rot, 10.0, 5.0), DMatrix::identity(2, 2) * 6.0);
    }

    #[test]
    fn radius_examples() {
        assert_abs_diff_eq!(spectral_radius(&m(2, 2, &[0.75, 0.0, 0.0, 0.5])).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(spectral_radius(&m(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(spectral_radius(&m(2, 2, &[2.0, 0.0, 0.0, -3.0])).unwrap(), 3.0, epsilon = 1e-14);
    }

    // Independent 2x2 oracle: eigenvalues from the characteristic polynomial.
    fn radius_2x2(a: &DMatrix<f64>) -> f64 {
        let tr = a[(0, 0)] + a[(1, 1)];
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let disc = tr * tr / 4.0 - det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
        } else {
            det.abs().sqrt()
        }
    }

    fn square(max_dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (2..=max_dim).prop_flat_map(|d| {
            prop::collection::vec(-10.0f64..10.0, d * d).prop_map(move |v| DMatrix::from_row_slice(d, d, &v))
        })
    }

    proptest! {
        #[test]
        fn gershgorin_makes_spectrum_right_half(a in square(8), lam in 0.1f64..10.0) {
            let reg = gershgorin_regularizer(&a, lam, true).unwrap();
            for i in 0..a.nrows() {
                let off: f64 = (0..a.nrows()).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
                let deficit = a[(i, i)] - off;
                if deficit >= lam { prop_assert_eq!(reg[(i, i)], 0.0); }
                if deficit < 0.0 { prop_assert!((reg[(i, i)] - (deficit.abs() + lam)).abs() < 1e-12); }
            }
            for c in spectrum(&(&a + &reg)).unwrap() {
                prop_assert!(c.re > 0.0);
            }
        }

        #[test]
        fn gn_metric_is_symmetric_and_bounded(a in square(6), w in 0.0f64..20.0) {
            let s = build_gn_metric(&a, w, 5.0);
            prop_assert_eq!(&s, &s.transpose());
            let (vals, _) = sym_eig_sorted(&s);
            let lam = w.min(5.0);
            prop_assert!(vals[0] >= lam - 1e-9 * (1.0 + vals[vals.len() - 1]));
        }

        #[test]
        fn radius_matches_2x2_formula(v in prop::collection::vec(-5.0f64..5.0, 4)) {
            let a = DMatrix::from_row_slice(2, 2, &v);
            let r = spectral_radius(&a).unwrap();
            prop_assert!((r - radius_2x2(&a)).abs() <= 1e-10 * r.max(1.0));
        }

        #[test]
        fn beta_pattern_is_scale_invariant(a in square(4), c in 0.01f64..100.0) {
            let d = a.nrows();
            let dims = (d / 2, d - d / 2);
            let p = RegularizerParams::default();
            let b1 = build_beta(extreme_block_eigs(&a, dims).unwrap(), &p, dims);
            let b2 = build_beta(extreme_block_eigs(&(&a * c), dims).unwrap(), &p, dims);
            prop_assert_eq!(b1, b2);
        }

        #[test]
        fn block_eigs_bound_every_eigenvalue(a in square(6)) {
            let d = a.nrows();
            let dims = (d / 2, d - d / 2);
            let e = extreme_block_eigs(&a, dims).unwrap();
            let (vx, _) = sym_eig_sorted(&hess_xx(&a, dims));
            let (vy, _) = sym_eig_sorted(&hess_yy(&a, dims));
            prop_assert!(vx.iter().all(|v| e.lambda_x <= *v));
            prop_assert!(vy.iter().all(|v| e.lambda_y >= *v));
        }
    }
}
