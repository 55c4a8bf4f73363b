//! Single-step update rules. All of them take the current point as a plain
//! vector ordered `(x, y)` and evaluate the oracle themselves.

use nalgebra::{DMatrix, DVector};

use super::config::{PerturbParams, SolverConfig};
use crate::error::{Error, Result};
use crate::game::{jacobian_at, omega_at, Game};
use crate::linalg::solve;
use crate::spectral::{
    build_beta, extreme_block_eigpairs, extreme_block_eigs, gershgorin_regularizer, RegularizerParams,
};

fn is_zero(v: &DVector<f64>) -> bool {
    v.iter().all(|x| *x == 0.0)
}

/// `z − α ω(z)`
pub fn gda_step<G: Game + ?Sized>(game: &G, z: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::arg("alpha must be positive"));
    }
    let w = omega_at(game, z)?;
    Ok(z - w * alpha)
}

/// Right-hand side of `ż = −g_c(z)` with `g_c = [JᵀJ(J+Jᵀ) + E_c]⁻¹ Jᵀω`.
pub fn continuous_rhs<G: Game + ?Sized>(game: &G, z: &DVector<f64>, reg: &RegularizerParams) -> Result<DVector<f64>> {
    let w = omega_at(game, z)?;
    if is_zero(&w) {
        return Ok(DVector::zeros(z.len()));
    }
    let j = jacobian_at(game, z)?;
    let a = j.tr_mul(&j) * (&j + j.transpose());
    let e = gershgorin_regularizer(&a, reg.lambda0, w.norm() > reg.delta0)?;
    solve(&(a + e), &j.tr_mul(&w), "continuous dynamics")
}

/// `JᵀJ(J + Jᵀ + β) + E` for the discrete dynamics, with `β` built from the
/// block eigenvalues of `J` and `E` gated on `‖ω‖ > δ0`.
pub fn dnd_matrix(
    j: &DMatrix<f64>,
    omega_norm: f64,
    dims: (usize, usize),
    reg: &RegularizerParams,
) -> Result<DMatrix<f64>> {
    let beta = build_beta(extreme_block_eigs(j, dims)?, reg, dims);
    let a = j.tr_mul(j) * (j + j.transpose() + beta);
    let e = gershgorin_regularizer(&a, reg.lambda0, omega_norm > reg.delta0)?;
    Ok(a + e)
}

/// Unscaled discrete-dynamics direction `[JᵀJ(J+Jᵀ+β) + E]⁻¹ Jᵀω` from
/// precomputed `ω` and `J`. Zero when `Jᵀω = 0`.
pub fn dnd_direction(
    w: &DVector<f64>,
    j: &DMatrix<f64>,
    dims: (usize, usize),
    reg: &RegularizerParams,
) -> Result<DVector<f64>> {
    let jtw = j.tr_mul(w);
    if is_zero(&jtw) {
        return Ok(jtw);
    }
    let m = dnd_matrix(j, w.norm(), dims, reg)?;
    solve(&m, &jtw, "discrete dynamics")
}

/// One step of the discrete Nash dynamics. Returns `z` unchanged when
/// `ω(z) = 0`.
pub fn dnd_step<G: Game + ?Sized>(game: &G, z: &DVector<f64>, cfg: &SolverConfig) -> Result<DVector<f64>> {
    let w = omega_at(game, z)?;
    if is_zero(&w) {
        return Ok(z.clone());
    }
    let j = jacobian_at(game, z)?;
    let d = dnd_direction(&w, &j, game.dims(), &cfg.reg)?;
    Ok(z - d * cfg.alpha)
}

/// Damped Gauss-Newton direction and the matching Armijo slope.
#[derive(Debug, Clone, PartialEq)]
pub struct GnDirection {
    /// `(JᵀJ + λI)⁻¹ Jᵀω`
    pub direction: DVector<f64>,
    /// `(Jᵀω)ᵀ direction`, nonnegative.
    pub quad_term: f64,
}

/// Solve `(JᵀJ + λI) d = Jᵀω` through a QR factorization of `[J; √λ I]`,
/// which avoids squaring the condition number of `J`.
pub fn gn_direction(j: &DMatrix<f64>, w: &DVector<f64>, damping: f64) -> Result<GnDirection> {
    if !(damping >= 0.0) {
        return Err(Error::arg("Gauss-Newton damping must be nonnegative"));
    }
    let d = j.ncols();
    let (aug, rhs) = if damping > 0.0 {
        let mut aug = DMatrix::zeros(j.nrows() + d, d);
        aug.view_mut((0, 0), (j.nrows(), d)).copy_from(j);
        aug.view_mut((j.nrows(), 0), (d, d)).fill_diagonal(damping.sqrt());
        let mut rhs = DVector::zeros(j.nrows() + d);
        rhs.rows_mut(0, j.nrows()).copy_from(w);
        (aug, rhs)
    } else {
        (j.clone(), w.clone())
    };
    let qr = aug.qr();
    let r = qr.r();
    let diag = r.diagonal();
    let big = diag.amax();
    let small = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if !(small > 1e-14 * big) {
        return Err(Error::numeric("Gauss-Newton system is singular"));
    }
    let qtb = qr.q().tr_mul(&rhs);
    let direction = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::numeric("Gauss-Newton triangular solve failed"))?;
    let quad_term = j.tr_mul(w).dot(&direction);
    Ok(GnDirection { direction, quad_term })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmijoOutcome {
    pub alpha: f64,
    /// `z − alpha · direction`
    pub point: DVector<f64>,
    pub omega: DVector<f64>,
    /// Number of halvings performed.
    pub backtracks: usize,
    /// No trial passed; `alpha` is the last one tried.
    pub exhausted: bool,
}

/// Backtracking on the merit `ℓ = ½‖ω‖²`: the first `α = α0 · shrink^j` with
/// `ℓ(z) − ℓ(z − α d) ≥ c α quad_term`.
///
/// Trial points where the oracle fails count as rejected.
pub fn armijo_search<G: Game + ?Sized>(
    game: &G,
    z: &DVector<f64>,
    direction: &DVector<f64>,
    quad_term: f64,
    cfg: &SolverConfig,
) -> Result<ArmijoOutcome> {
    let merit = 0.5 * omega_at(game, z)?.norm_squared();
    let mut alpha = cfg.armijo_init;
    let mut last = None;
    for j in 0..=cfg.armijo_max_backtracks {
        let trial = z - direction * alpha;
        match omega_at(game, &trial) {
            Ok(w) => {
                let drop = merit - 0.5 * w.norm_squared();
                if drop >= cfg.armijo_c * alpha * quad_term {
                    return Ok(ArmijoOutcome { alpha, point: trial, omega: w, backtracks: j, exhausted: false });
                }
                last = Some(Ok((trial, w)));
            }
            Err(e) => last = Some(Err(e)),
        }
        if j < cfg.armijo_max_backtracks {
            alpha *= cfg.armijo_shrink;
        }
    }
    match last {
        Some(Ok((point, omega))) => Ok(ArmijoOutcome {
            alpha,
            point,
            omega,
            backtracks: cfg.armijo_max_backtracks,
            exhausted: true,
        }),
        Some(Err(e)) => Err(e),
        None => Err(Error::numeric("line search made no trial")),
    }
}

fn lss_lambda(omega_norm_sq: f64, cfg: &SolverConfig) -> f64 {
    let p = &cfg.lss;
    if p.lambda_sign_corrected {
        -p.xi1 * (-omega_norm_sq).exp_m1()
    } else {
        -p.xi1 * omega_norm_sq.exp_m1()
    }
}

/// `v = Jᵀ(JᵀJ + λI)⁻¹Jᵀω` of the symplectic-surgery baseline.
pub fn lss_correction(j: &DMatrix<f64>, w: &DVector<f64>, cfg: &SolverConfig) -> Result<DVector<f64>> {
    if is_zero(w) {
        return Ok(DVector::zeros(w.len()));
    }
    let lam = lss_lambda(w.norm_squared(), cfg);
    let u = if lam >= 0.0 {
        gn_direction(j, w, lam)?.direction
    } else {
        let mut m = j.tr_mul(j);
        for i in 0..m.nrows() {
            m[(i, i)] += lam;
        }
        solve(&m, &j.tr_mul(w), "symplectic surgery")?
    };
    Ok(j.transpose() * u)
}

/// `z − α(ω + e^{−ξ2‖v‖²} v)`
pub fn lss_step<G: Game + ?Sized>(game: &G, z: &DVector<f64>, cfg: &SolverConfig) -> Result<DVector<f64>> {
    let w = omega_at(game, z)?;
    if is_zero(&w) {
        return Ok(z.clone());
    }
    let j = jacobian_at(game, z)?;
    let v = lss_correction(&j, &w, cfg)?;
    let damp = (-cfg.lss.xi2 * v.norm_squared()).exp();
    Ok(z - (w + v * damp) * cfg.alpha)
}

/// Two-timescale variant: `z` moves with rate `γ1` along
/// `ω + e^{−ξ2‖Jᵀv‖²} Jᵀv`, while `v` tracks the least-squares solution of
/// `(JᵀJ + λI) v = Jᵀω` with rate `γ2`.
pub fn lss_two_timescale_step<G: Game + ?Sized>(
    game: &G,
    z: &DVector<f64>,
    v: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if v.len() != z.len() {
        return Err(Error::arg("auxiliary vector has the wrong length"));
    }
    let w = omega_at(game, z)?;
    let j = jacobian_at(game, z)?;
    let jtv = j.tr_mul(v);
    let damp = (-cfg.lss.xi2 * jtv.norm_squared()).exp();
    let z_next = z - (&w + jtv * damp) * cfg.lss.gamma1;
    let lam = lss_lambda(w.norm_squared(), cfg);
    let resid = j.tr_mul(&(&j * v)) + v * lam - j.tr_mul(&w);
    let v_next = v - resid * cfg.lss.gamma2;
    Ok((z_next, v_next))
}

fn sgn(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Gradient step plus curvature-exploitation moves along negative (for x)
/// and positive (for y) curvature directions.
pub fn cesp_step<G: Game + ?Sized>(game: &G, z: &DVector<f64>, cfg: &SolverConfig) -> Result<DVector<f64>> {
    let (n, m) = game.dims();
    let w = omega_at(game, z)?;
    let j = jacobian_at(game, z)?;
    let ((lx, vx), (ly, vy)) = extreme_block_eigpairs(&j, (n, m))?;
    let mut next = z - &w * cfg.alpha;
    if lx < 0.0 {
        let grad_x = w.rows(0, n);
        let c = lx * cfg.cesp.inv_two_rho_x * sgn(vx.dot(&grad_x));
        let mut top = next.rows_mut(0, n);
        top += vx * c;
    }
    if ly > 0.0 {
        let grad_y = -w.rows(n, m);
        let c = ly * cfg.cesp.inv_two_rho_y * sgn(vy.dot(&grad_y));
        let mut bottom = next.rows_mut(n, m);
        bottom += vy * c;
    }
    Ok(next)
}

/// `h(z, t) = a (1 − e^{−b‖ω‖²}) e^{−t} z̃`, zero exactly when `ω = 0`.
pub fn time_varying_perturbation(
    z: &DVector<f64>,
    t: f64,
    omega_norm_sq: f64,
    params: &PerturbParams,
) -> Result<DVector<f64>> {
    if !(params.a > 0.0 && params.b > 0.0) {
        return Err(Error::arg("perturbation constants a and b must be positive"));
    }
    let dir = if params.z_tilde.is_empty() {
        DVector::from_element(z.len(), 1.0)
    } else if params.z_tilde.len() == z.len() {
        DVector::from_column_slice(&params.z_tilde)
    } else {
        return Err(Error::arg(format!(
            "z_tilde has {} entries, expected {}",
            params.z_tilde.len(),
            z.len()
        )));
    };
    if is_zero(&dir) {
        return Err(Error::arg("z_tilde must be nonzero"));
    }
    let scale = params.a * -(-params.b * omega_norm_sq).exp_m1() * (-t).exp();
    Ok(dir * scale)
}
