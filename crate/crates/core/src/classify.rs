//! Verdicts for candidate equilibria and empirical convergence rates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constrained::{ConvexSet, Location};
use crate::dynamics::{IterateTrace, SolverConfig};
use crate::error::{Error, Result};
use crate::game::{jacobian_at, omega_at, Game, JointPoint};
use crate::spectral::{build_beta, extreme_block_eigs, spectral_radius, spectrum};

/// Step used by the normal-cone test of [`check_boundary_gne`].
pub const NORMAL_CONE_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    /// Critical, `∇²_xx f ≻ 0` and `∇²_yy f ≺ 0` (up to the margin).
    StrictLocalNash,
    /// Critical but the block Hessians do not certify a Nash point.
    NonNashCritical,
    NotCritical,
    /// On the boundary with `−ω` in the normal cone.
    BoundaryGNE,
    BoundaryNonGNE,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::StrictLocalNash => "StrictLocalNash",
            Verdict::NonNashCritical => "NonNashCritical",
            Verdict::NotCritical => "NotCritical",
            Verdict::BoundaryGNE => "BoundaryGNE",
            Verdict::BoundaryNonGNE => "BoundaryNonGNE",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub point: JointPoint,
    pub omega_norm: f64,
    pub verdict: Verdict,
    pub lambda_x: f64,
    pub lambda_y: f64,
    /// Eigenvalues of `J`, the linearization of GDA.
    pub gda_jac_spectrum: Vec<Eigenvalue>,
    /// Spectral radius of the discrete-dynamics map at the point. Only
    /// defined at critical points where `J + Jᵀ + β` is invertible.
    pub dnd_map_radius: Option<f64>,
}

/// Definition-2 style test from a precomputed Jacobian.
pub fn unconstrained_verdict(
    j: &DMatrix<f64>,
    omega_norm: f64,
    dims: (usize, usize),
    tol: f64,
    margin: f64,
) -> Result<Verdict> {
    if !(omega_norm <= tol) {
        return Ok(Verdict::NotCritical);
    }
    let e = extreme_block_eigs(j, dims)?;
    Ok(if e.lambda_x > margin && e.lambda_y < -margin { Verdict::StrictLocalNash } else { Verdict::NonNashCritical })
}

/// `I − α (J + Jᵀ + β)⁻¹`, the differential of the discrete dynamics at a
/// critical point (where the Gershgorin term vanishes).
pub fn dnd_map_differential(j: &DMatrix<f64>, dims: (usize, usize), cfg: &SolverConfig) -> Result<DMatrix<f64>> {
    let beta = build_beta(extreme_block_eigs(j, dims)?, &cfg.reg, dims);
    let k = j + j.transpose() + beta;
    let d = k.nrows();
    let inv = k
        .clone()
        .lu()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::numeric("J + Jᵀ + β is singular"))?;
    Ok(DMatrix::identity(d, d) - inv * cfg.alpha)
}

/// Spectral radius of the discrete-dynamics map at a critical point.
pub fn dnd_map_radius<G: Game + ?Sized>(game: &G, z: &DVector<f64>, cfg: &SolverConfig) -> Result<f64> {
    let w = omega_at(game, z)?;
    if w.norm() > cfg.tol {
        return Err(Error::arg(format!("point is not critical: ‖ω‖ = {:e} > tol", w.norm())));
    }
    let j = jacobian_at(game, z)?;
    spectral_radius(&dnd_map_differential(&j, game.dims(), cfg)?)
}

fn report_from<G: Game + ?Sized>(
    game: &G,
    z: &DVector<f64>,
    verdict_of: impl FnOnce(&DMatrix<f64>, f64) -> Result<Verdict>,
    cfg: &SolverConfig,
) -> Result<FixedPointReport> {
    let (n, m) = game.dims();
    let w = omega_at(game, z)?;
    let wn = w.norm();
    let j = jacobian_at(game, z)?;
    let e = extreme_block_eigs(&j, (n, m))?;
    let verdict = verdict_of(&j, wn)?;
    let gda_jac_spectrum = spectrum(&j)?.into_iter().map(|c| Eigenvalue { re: c.re, im: c.im }).collect();
    let dnd_map_radius = if wn <= cfg.tol {
        dnd_map_differential(&j, (n, m), cfg).ok().and_then(|d| spectral_radius(&d).ok())
    } else {
        None
    };
    Ok(FixedPointReport {
        point: JointPoint::new(z.clone(), n, m)?,
        omega_norm: wn,
        verdict,
        lambda_x: e.lambda_x,
        lambda_y: e.lambda_y,
        gda_jac_spectrum,
        dnd_map_radius,
    })
}

/// Classify with the tolerances, step size and regularizer of `cfg`.
pub fn classify_with<G: Game + ?Sized>(game: &G, z: &DVector<f64>, cfg: &SolverConfig) -> Result<FixedPointReport> {
    if !(cfg.tol > 0.0) || !(cfg.nash_margin >= 0.0) {
        return Err(Error::arg("tol must be positive and margin nonnegative"));
    }
    let dims = game.dims();
    report_from(game, z, |j, wn| unconstrained_verdict(j, wn, dims, cfg.tol, cfg.nash_margin), cfg)
}

/// Classify `z` as strict local Nash, non-Nash critical or not critical.
/// The reported map radius uses the default step size and regularizer.
pub fn classify_unconstrained<G: Game + ?Sized>(
    game: &G,
    z: &DVector<f64>,
    tol: f64,
    margin: f64,
) -> Result<FixedPointReport> {
    if !(tol > 0.0) || !(margin > 0.0) {
        return Err(Error::arg("tol and margin must be positive"));
    }
    classify_with(game, z, &SolverConfig { tol, nash_margin: margin, ..SolverConfig::default() })
}

/// Normal-cone test at a boundary point: `‖Π(z − ηω) − z‖ ≤ η tol`.
///
/// For sets with an empty ambient interior (the simplex) every feasible point
/// is an ambient boundary point and is accepted.
pub fn check_boundary_gne<G: Game + ?Sized>(
    game: &G,
    set: &ConvexSet,
    z: &DVector<f64>,
    tol: f64,
) -> Result<FixedPointReport> {
    if !(tol > 0.0) {
        return Err(Error::arg("tol must be positive"));
    }
    let loc = set.locate(z)?;
    let on_boundary = loc == Location::Boundary || (loc == Location::Interior && set.has_empty_interior());
    if !on_boundary {
        return Err(Error::arg(format!("point is not on the boundary of the set ({loc:?})")));
    }
    let cfg = SolverConfig { tol, ..SolverConfig::default() };
    report_from(
        game,
        z,
        |_j, _wn| {
            let w = omega_at(game, z)?;
            let moved = (set.project(&(z - w * NORMAL_CONE_STEP))? - z).norm();
            Ok(if moved <= NORMAL_CONE_STEP * tol { Verdict::BoundaryGNE } else { Verdict::BoundaryNonGNE })
        },
        &cfg,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateOrder {
    Linear,
    Quadratic,
    Inconclusive,
}

/// Thresholds of [`estimate_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateOptions {
    /// Linear when the ratio standard deviation is below this fraction of the mean.
    pub ratio_rel_std: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions { ratio_rel_std: 0.05, slope_lo: 1.8, slope_hi: 2.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub order: RateOrder,
    /// Mean contraction ratio (linear) or `C` in `e_{k+1} ≈ C e_k²` (quadratic).
    pub factor: f64,
    /// Mean of `e_{k+1} / e_k` over the tail.
    pub mean_ratio: f64,
    /// Slope of `log e_{k+1}` against `log e_k`.
    pub loglog_slope: f64,
    pub tail_len: usize,
    pub measured_l: Option<f64>,
    pub measured_mu: Option<f64>,
    pub measured_lj: Option<f64>,
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Classify a decreasing error sequence `e_k`.
pub fn estimate_rate_from_errors(errors: &[f64], opts: &RateOptions) -> RateEstimate {
    let usable: Vec<f64> = errors.iter().copied().take_while(|e| *e > 0.0 && e.is_finite()).collect();
    let mut est = RateEstimate {
        order: RateOrder::Inconclusive,
        factor: f64::NAN,
        mean_ratio: f64::NAN,
        loglog_slope: f64::NAN,
        tail_len: usable.len(),
        measured_l: None,
        measured_mu: None,
        measured_lj: None,
    };
    if usable.len() < 3 {
        return est;
    }
    let ratios: Vec<f64> = usable.windows(2).map(|w| w[1] / w[0]).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / ratios.len() as f64;
    est.mean_ratio = mean;
    let logs: Vec<f64> = usable.iter().map(|e| e.ln()).collect();
    let (slope, intercept) = linear_fit(&logs[..logs.len() - 1], &logs[1..]);
    est.loglog_slope = slope;
    if var.sqrt() < opts.ratio_rel_std * mean && mean < 1.0 {
        est.order = RateOrder::Linear;
        est.factor = mean;
    } else if slope >= opts.slope_lo && slope <= opts.slope_hi {
        est.order = RateOrder::Quadratic;
        est.factor = intercept.exp();
    }
    est
}

/// Estimate the local rate from the last `tail_len + 1` iterates of a trace.
pub fn estimate_rate(trace: &IterateTrace, z_star: &JointPoint, tail_len: usize, opts: &RateOptions) -> RateEstimate {
    let start = trace.steps.len().saturating_sub(tail_len + 1);
    let errors: Vec<f64> = trace.steps[start..].iter().map(|s| (&s.z - z_star.values()).norm()).collect();
    estimate_rate_from_errors(&errors, opts)
}

/// Empirical smoothness constants sampled along a polyline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredConstants {
    /// Largest spectral norm of `∇²ℓ`.
    pub l: f64,
    /// Smallest singular value of `J`.
    pub mu: f64,
    /// Largest observed `‖J(a) − J(b)‖ / ‖a − b‖` between neighboring samples.
    pub l_j: f64,
}

fn merit_hessian<G: Game + ?Sized>(game: &G, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    // central differences of the exact gradient Jᵀω
    let d = z.len();
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        let step = 1e-5 * z[i].abs().max(1.0);
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[i] += step;
        zm[i] -= step;
        let gp = jacobian_at(game, &zp)?.tr_mul(&omega_at(game, &zp)?);
        let gm = jacobian_at(game, &zm)?.tr_mul(&omega_at(game, &zm)?);
        h.set_column(i, &((gp - gm) / (zp[i] - zm[i])));
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Sample `per_segment` points on every segment of the polyline through
/// `points` and measure `L`, `μ` and `L_J` there.
pub fn measure_constants<G: Game + ?Sized>(
    game: &G,
    points: &[DVector<f64>],
    per_segment: usize,
) -> Result<MeasuredConstants> {
    if points.is_empty() {
        return Err(Error::arg("need at least one point"));
    }
    let mut samples = vec![points[0].clone()];
    for w in points.windows(2) {
        for s in 1..=per_segment.max(1) {
            let t = s as f64 / per_segment.max(1) as f64;
            samples.push(&w[0] + (&w[1] - &w[0]) * t);
        }
    }
    let mut out = MeasuredConstants { l: 0.0, mu: f64::INFINITY, l_j: 0.0 };
    let mut prev: Option<(DVector<f64>, DMatrix<f64>)> = None;
    for z in samples {
        let j = jacobian_at(game, &z)?;
        let sv = j.clone().singular_values();
        out.mu = out.mu.min(sv.min());
        let hl = merit_hessian(game, &z)?;
        out.l = out.l.max(hl.clone().singular_values().max());
        if let Some((pz, pj)) = &prev {
            let dz = (&z - pz).norm();
            if dz > 0.0 {
                out.l_j = out.l_j.max((&j - pj).clone().singular_values().max() / dz);
            }
        }
        prev = Some((z, j));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constrained::ConvexSet;
    use crate::dynamics::{run_second, LineSearch};
    use crate::game::Builtin;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn saddle() -> Builtin {
        Builtin::quadratic(DMatrix::identity(1, 1), DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap()
    }

    #[test]
    fn unconstrained_examples() {
        let r = classify_unconstrained(&Builtin::toy2d(), &v(&[0.0, 0.0]), 1e-5, 1e-8).unwrap();
        assert_eq!(r.verdict, Verdict::NonNashCritical);
        assert_eq!((r.lambda_x, r.lambda_y), (2.0, 2.0));
        let r = classify_unconstrained(&saddle(), &v(&[0.0, 0.0]), 1e-5, 1e-8).unwrap();
        assert_eq!(r.verdict, Verdict::StrictLocalNash);
        assert_eq!((r.lambda_x, r.lambda_y), (1.0, -1.0));
        assert!(r.dnd_map_radius.unwrap() < 1.0);
        // ω = (1, 0) at (1, 0) for the saddle
        let r = classify_unconstrained(&saddle(), &v(&[1.0, 0.0]), 1e-5, 1e-8).unwrap();
        assert_eq!(r.verdict, Verdict::NotCritical);
        assert_eq!(r.omega_norm, 1.0);
        assert!(r.dnd_map_radius.is_none());
    }

    #[test]
    fn map_radius_examples() {
        let cfg = SolverConfig { alpha: 0.5, ..SolverConfig::default() };
        assert_abs_diff_eq!(dnd_map_radius(&saddle(), &v(&[0.0, 0.0]), &cfg).unwrap(), 5.0 / 6.0, epsilon = 1e-14);
        let r = dnd_map_radius(&Builtin::toy2d(), &v(&[0.0, 0.0]), &cfg).unwrap();
        assert_abs_diff_eq!(r, 1.125, epsilon = 1e-14);
        let tiny = SolverConfig { alpha: 1e-9, ..SolverConfig::default() };
        let r = dnd_map_radius(&saddle(), &v(&[0.0, 0.0]), &tiny).unwrap();
        assert!(r < 1.0 && r > 1.0 - 1e-9);
        assert!(dnd_map_radius(&saddle(), &v(&[1.0, 0.0]), &cfg).is_err());
    }

    #[test]
    fn boundary_examples() {
        let qre = Builtin::qre(DMatrix::identity(2, 2)).unwrap();
        let simplex = ConvexSet::product(vec![ConvexSet::simplex(2), ConvexSet::simplex(2)]).unwrap();
        let r = check_boundary_gne(&qre, &simplex, &v(&[0.5, 0.5, 0.5, 0.5]), 1e-5).unwrap();
        assert_eq!(r.verdict, Verdict::BoundaryGNE);

        let ball = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let z = v(&[1.0, 0.0]);
        // ω = z for the saddle: −ω points inward, projection moves the point
        let r = check_boundary_gne(&saddle(), &ball, &z, 1e-5).unwrap();
        assert_eq!(r.verdict, Verdict::BoundaryNonGNE);
        // ω = −z: −ω is the outward normal
        let neg = Builtin::quadratic(-DMatrix::identity(1, 1), -DMatrix::identity(1, 1), DMatrix::zeros(1, 1)).unwrap();
        let r = check_boundary_gne(&neg, &ball, &z, 1e-5).unwrap();
        assert_eq!(r.verdict, Verdict::BoundaryGNE);
        assert!(check_boundary_gne(&neg, &ball, &v(&[0.0, 0.0]), 1e-5).is_err());
    }

    #[test]
    fn rate_examples() {
        let opts = RateOptions::default();
        let e: Vec<f64> = (0..20).map(|k| 0.5f64.powi(k)).collect();
        let r = estimate_rate_from_errors(&e, &opts);
        assert_eq!(r.order, RateOrder::Linear);
        assert_abs_diff_eq!(r.factor, 0.5, epsilon = 1e-12);
        let mut e = vec![0.5];
        for _ in 0..4 {
            let last = *e.last().unwrap();
            e.push(last * last);
        }
        let r = estimate_rate_from_errors(&e, &opts);
        assert_eq!(r.order, RateOrder::Quadratic);
        assert_abs_diff_eq!(r.factor, 1.0, epsilon = 1e-9);
        assert_eq!(estimate_rate_from_errors(&[1.0, 0.5], &opts).order, RateOrder::Inconclusive);
        let r = estimate_rate_from_errors(&[1.0, 0.5, 0.25, 0.0, 0.0], &opts);
        assert_eq!(r.tail_len, 3);
    }

    #[test]
    fn rate_of_second_on_bilinear() {
        let g = Builtin::bilinear(DMatrix::identity(1, 1)).unwrap();
        let cfg = SolverConfig {
            alpha: 0.25,
            line_search: LineSearch::Fixed,
            gn_damping_cap: 0.0,
            epsilon_switch: 1e-300,
            ..SolverConfig::default()
        };
        let tr = run_second(&g, &JointPoint::from_slice(&[1.0, 1.0], 1, 1).unwrap(), &cfg).unwrap();
        let zs = JointPoint::from_slice(&[0.0, 0.0], 1, 1).unwrap();
        let r = estimate_rate(&tr, &zs, 20, &RateOptions::default());
        assert_eq!(r.order, RateOrder::Linear);
        assert_abs_diff_eq!(r.factor, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn constants_of_a_quadratic() {
        let g = saddle();
        let c = measure_constants(&g, &[v(&[1.0, 1.0]), v(&[-1.0, 2.0])], 10).unwrap();
        assert_abs_diff_eq!(c.mu, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.l, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(c.l_j, 0.0, epsilon = 1e-12);
    }

    fn diagonal_game(a: f64, b: f64) -> Builtin {
        // f = a x²/2 − b y²/2 with an off-diagonal-free coupling
        Builtin::quadratic(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn radius_below_one_iff_strict_nash_on_constructed_games() {
        let cfg = SolverConfig { alpha: 0.5, ..SolverConfig::default() };
        let z = v(&[0.0, 0.0]);
        let cases = [
            (diagonal_game(1.0, 1.0), true),
            (diagonal_game(3.0, 0.5), true),
            (diagonal_game(0.2, 4.0), true),
            (diagonal_game(-1.0, 1.0), false),
            (diagonal_game(1.0, -2.0), false),
            (diagonal_game(-0.5, -0.5), false),
        ];
        for (g, nash) in cases {
            let r = classify_with(&g, &z, &cfg).unwrap();
            assert_eq!(r.verdict == Verdict::StrictLocalNash, nash);
            assert_eq!(r.dnd_map_radius.unwrap() < 1.0, nash, "{r:?}");
        }
    }

    proptest! {
        #[test]
        fn verdict_is_invariant_under_positive_scaling(
            p in -3.0f64..3.0, q in -3.0f64..3.0, b in -2.0f64..2.0, c in 0.1f64..10.0,
        ) {
            prop_assume!(p.abs() > 0.05 && q.abs() > 0.05);
            let mk = |s: f64| Builtin::quadratic(
                DMatrix::from_element(1, 1, s * p),
                DMatrix::from_element(1, 1, s * q),
                DMatrix::from_element(1, 1, s * b),
            ).unwrap();
            let z = v(&[0.0, 0.0]);
            let r1 = classify_unconstrained(&mk(1.0), &z, 1e-5, 1e-8).unwrap();
            let rc = classify_unconstrained(&mk(c), &z, 1e-5 * c, 1e-8).unwrap();
            prop_assert_eq!(r1.verdict, rc.verdict);
        }

        #[test]
        fn boundary_gne_passes_sampled_first_order_test(theta in 0.0f64..std::f64::consts::TAU, k in -2.0f64..2.0) {
            // ω = k · outward normal at a unit-circle point, via a linear game
            let ball = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
            let z = v(&[theta.cos(), theta.sin()]);
            let g = Builtin::quadratic(
                DMatrix::from_element(1, 1, k),
                DMatrix::from_element(1, 1, k),
                DMatrix::zeros(1, 1),
            ).unwrap();
            prop_assume!(k.abs() > 1e-3);
            let r = check_boundary_gne(&g, &ball, &z, 1e-5).unwrap();
            let w = omega_at(&g, &z).unwrap();
            if r.verdict == Verdict::BoundaryGNE {
                for i in 0..100 {
                    let phi = i as f64 * 0.0628;
                    let p = v(&[0.5 * phi.cos(), 0.5 * phi.sin()]);
                    prop_assert!((p - &z).dot(&w) >= -1e-6);
                }
            }
            prop_assert_eq!(r.verdict == Verdict::BoundaryGNE, k < 0.0);
        }
    }
}
