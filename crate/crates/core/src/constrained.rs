//! Convex constraint sets and the projected discrete dynamics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    dnd_direction, drive, Action, Control, Ctx, DriveOptions, IterateTrace, Mode, SolverConfig, Status, Stepper,
};
use crate::error::{Error, Result};
use crate::game::{jacobian_at, Game, JointPoint};

pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;
const DYKSTRA_TOL: f64 = 1e-10;
const DYKSTRA_MAX_SWEEPS: usize = 1000;

/// Serializable set description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{p : a·p ≤ b}`
    Halfspace {
        a: Vec<f64>,
        b: f64,
    },
    /// Probability simplex in `R^dim`.
    Simplex {
        dim: usize,
    },
    /// Cartesian product; factors take consecutive coordinates.
    Product {
        parts: Vec<SetSpec>,
    },
    Intersection {
        parts: Vec<SetSpec>,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Box { lo: DVector<f64>, hi: DVector<f64> },
    Ball { center: DVector<f64>, radius: f64 },
    Halfspace { a: DVector<f64>, b: f64 },
    Simplex { dim: usize },
    Product(Vec<ConvexSet>),
    Intersection(Vec<ConvexSet>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    Interior,
    Boundary,
    Exterior,
}

/// A closed convex set with Euclidean projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSet {
    shape: Shape,
    /// Points within `boundary_tol · (1 + ‖p‖)` of the (relative) boundary
    /// count as boundary points.
    pub boundary_tol: f64,
}

fn finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Set(format!("{name} has non-finite entries")))
    }
}

impl ConvexSet {
    fn wrap(shape: Shape) -> Self {
        ConvexSet { shape, boundary_tol: DEFAULT_BOUNDARY_TOL }
    }

    pub fn with_boundary_tol(mut self, tol: f64) -> Self {
        self.boundary_tol = tol;
        self
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Set("box bounds must be non-empty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::Set("box needs lo ≤ hi in every coordinate".into()));
        }
        if lo.iter().chain(&hi).any(|v| v.is_nan()) {
            return Err(Error::Set("box bounds contain NaN".into()));
        }
        Ok(Self::wrap(Shape::Box { lo: DVector::from_vec(lo), hi: DVector::from_vec(hi) }))
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        finite("ball center", &center)?;
        if center.is_empty() || !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Set("ball needs a non-empty center and a finite radius ≥ 0".into()));
        }
        Ok(Self::wrap(Shape::Ball { center: DVector::from_vec(center), radius }))
    }

    pub fn halfspace(a: Vec<f64>, b: f64) -> Result<Self> {
        finite("halfspace normal", &a)?;
        if a.iter().all(|v| *v == 0.0) || !b.is_finite() {
            return Err(Error::Set("halfspace needs a nonzero normal and finite offset".into()));
        }
        Ok(Self::wrap(Shape::Halfspace { a: DVector::from_vec(a), b }))
    }

    pub fn simplex(dim: usize) -> Self {
        Self::wrap(Shape::Simplex { dim: dim.max(1) })
    }

    pub fn product(parts: Vec<ConvexSet>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Set("product needs at least one factor".into()));
        }
        Ok(Self::wrap(Shape::Product(parts)))
    }

    pub fn intersection(parts: Vec<ConvexSet>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Set("intersection needs at least one set".into()));
        }
        let d = parts[0].dim();
        if parts.iter().any(|p| p.dim() != d) {
            return Err(Error::Set("intersected sets must share a dimension".into()));
        }
        Ok(Self::wrap(Shape::Intersection(parts)))
    }

    pub fn from_spec(spec: &SetSpec) -> Result<Self> {
        match spec {
            SetSpec::Box { lo, hi } => Self::boxed(lo.clone(), hi.clone()),
            SetSpec::Ball { center, radius } => Self::ball(center.clone(), *radius),
            SetSpec::Halfspace { a, b } => Self::halfspace(a.clone(), *b),
            SetSpec::Simplex { dim } => {
                if *dim == 0 {
                    return Err(Error::Set("simplex dimension must be ≥ 1".into()));
                }
                Ok(Self::simplex(*dim))
            }
            SetSpec::Product { parts } => Self::product(parts.iter().map(Self::from_spec).collect::<Result<_>>()?),
            SetSpec::Intersection { parts } => {
                Self::intersection(parts.iter().map(Self::from_spec).collect::<Result<_>>()?)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Box { lo, .. } => lo.len(),
            Shape::Ball { center, .. } => center.len(),
            Shape::Halfspace { a, .. } => a.len(),
            Shape::Simplex { dim } => *dim,
            Shape::Product(parts) => parts.iter().map(ConvexSet::dim).sum(),
            Shape::Intersection(parts) => parts[0].dim(),
        }
    }

    /// True when the set lies in a proper affine subspace, so that interior
    /// and boundary are only meaningful relative to its affine hull.
    pub fn has_empty_interior(&self) -> bool {
        match &self.shape {
            Shape::Box { lo, hi } => lo.iter().zip(hi.iter()).any(|(l, h)| l == h),
            Shape::Ball { radius, .. } => *radius == 0.0,
            Shape::Halfspace { .. } => false,
            Shape::Simplex { .. } => true,
            Shape::Product(parts) | Shape::Intersection(parts) => parts.iter().any(ConvexSet::has_empty_interior),
        }
    }

    fn check_dim(&self, p: &DVector<f64>) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::arg(format!("point has {} coordinates, set lives in R^{}", p.len(), self.dim())));
        }
        Ok(())
    }

    /// Euclidean projection.
    pub fn project(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(p)?;
        match &self.shape {
            Shape::Box { lo, hi } => Ok(p.zip_zip_map(lo, hi, |v, l, h| v.max(l).min(h))),
            Shape::Ball { center, radius } => {
                let d = p - center;
                let r = d.norm();
                Ok(if r <= *radius { p.clone() } else { center + d * (*radius / r) })
            }
            Shape::Halfspace { a, b } => {
                let s = a.dot(p);
                Ok(if s <= *b { p.clone() } else { p - a * ((s - b) / a.norm_squared()) })
            }
            Shape::Simplex { .. } => Ok(project_simplex(p)),
            Shape::Product(parts) => {
                let mut out = DVector::zeros(p.len());
                let mut off = 0;
                for part in parts {
                    let d = part.dim();
                    out.rows_mut(off, d).copy_from(&part.project(&p.rows(off, d).into_owned())?);
                    off += d;
                }
                Ok(out)
            }
            Shape::Intersection(parts) => dykstra(parts, p),
        }
    }

    /// Signed distance to the relative boundary: positive inside, negative
    /// outside.
    fn margin(&self, p: &DVector<f64>) -> Result<f64> {
        Ok(match &self.shape {
            Shape::Box { lo, hi } => {
                let mut m = f64::INFINITY;
                for i in 0..p.len() {
                    if lo[i] == hi[i] {
                        // flat coordinate: only the mismatch counts
                        let off = (p[i] - lo[i]).abs();
                        if off > 0.0 {
                            m = m.min(-off);
                        }
                    } else {
                        m = m.min(p[i] - lo[i]).min(hi[i] - p[i]);
                    }
                }
                m
            }
            Shape::Ball { center, radius } => radius - (p - center).norm(),
            Shape::Halfspace { a, b } => (b - a.dot(p)) / a.norm(),
            Shape::Simplex { dim } => {
                let off_hull = (p.sum() - 1.0).abs() / (*dim as f64).sqrt();
                if *dim == 1 {
                    return Ok(if off_hull > 0.0 { -off_hull } else { f64::INFINITY });
                }
                let facet = p.min() * (*dim as f64 / (*dim as f64 - 1.0)).sqrt();
                if off_hull > 0.0 {
                    facet.min(-off_hull)
                } else {
                    facet
                }
            }
            Shape::Product(parts) => {
                let mut m = f64::INFINITY;
                let mut off = 0;
                for part in parts {
                    let d = part.dim();
                    m = m.min(part.margin(&p.rows(off, d).into_owned())?);
                    off += d;
                }
                m
            }
            Shape::Intersection(parts) => {
                let mut m = f64::INFINITY;
                for part in parts {
                    m = m.min(part.margin(p)?);
                }
                m
            }
        })
    }

    /// Interior, boundary or exterior, with the tolerance
    /// `boundary_tol · (1 + ‖p‖)`. Sets with empty interior are located
    /// relative to their affine hull.
    pub fn locate(&self, p: &DVector<f64>) -> Result<Location> {
        self.check_dim(p)?;
        let tol = self.boundary_tol * (1.0 + p.norm());
        let m = self.margin(p)?;
        Ok(if m < -tol {
            Location::Exterior
        } else if m <= tol {
            Location::Boundary
        } else {
            Location::Interior
        })
    }

    pub fn contains(&self, p: &DVector<f64>) -> Result<bool> {
        Ok(self.locate(p)? != Location::Exterior)
    }
}

/// Sort-based projection onto `{q ≥ 0, Σ q = 1}`.
fn project_simplex(p: &DVector<f64>) -> DVector<f64> {
    let mut u: Vec<f64> = p.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    p.map(|v| (v - theta).max(0.0))
}

/// Dykstra's alternating projections onto an intersection.
fn dykstra(parts: &[ConvexSet], p: &DVector<f64>) -> Result<DVector<f64>> {
    let mut x = p.clone();
    let mut incr = vec![DVector::zeros(p.len()); parts.len()];
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let prev = x.clone();
        // x can stall for a few sweeps while the increments are still moving
        let mut moved = 0.0;
        for (part, y) in parts.iter().zip(incr.iter_mut()) {
            let shifted = &x + &*y;
            let next = part.project(&shifted)?;
            let y_next = shifted - &next;
            moved += (&y_next - &*y).norm();
            *y = y_next;
            x = next;
        }
        moved += (&x - prev).norm();
        if moved <= DYKSTRA_TOL * (1.0 + x.norm()) {
            let feasible = parts
                .iter()
                .map(|s| s.margin(&x).map(|m| m >= -1e-8 * (1.0 + x.norm())))
                .collect::<Result<Vec<_>>>()?;
            if feasible.into_iter().all(|f| f) {
                return Ok(x);
            }
            return Err(Error::Set("intersection appears to be empty".into()));
        }
    }
    Err(Error::Set(format!("Dykstra projection did not converge in {DYKSTRA_MAX_SWEEPS} sweeps")))
}

/// `(a·b / ‖a‖²) a`
pub fn project_onto_vector(a: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.len() != b.len() {
        return Err(Error::arg("vectors differ in length"));
    }
    let nn = a.norm_squared();
    if nn == 0.0 {
        return Err(Error::arg("cannot project onto the zero vector"));
    }
    Ok(a * (a.dot(b) / nn))
}

struct Projected<'a> {
    set: &'a ConvexSet,
    empty_interior: bool,
    /// Displacement of the last update and whether the set shaped it.
    last: Option<(f64, bool)>,
    loc: Location,
}

impl Stepper for Projected<'_> {
    fn check<G: Game + ?Sized>(&mut self, _game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Control> {
        self.loc = self.set.locate(ctx.z)?;
        if self.loc == Location::Interior && !self.empty_interior && ctx.wn <= cfg.tol {
            return Ok(Control::Stop(Mode::Halt, Status::Converged));
        }
        if let Some((disp, constrained)) = self.last {
            if (constrained || self.empty_interior) && disp <= cfg.tol * cfg.alpha {
                let status = if ctx.wn <= cfg.tol { Status::Converged } else { Status::Stationary };
                return Ok(Control::Stop(Mode::Halt, status));
            }
        }
        if self.loc == Location::Boundary && ctx.wn == 0.0 {
            // projection direction undefined
            return Ok(Control::Stop(Mode::Halt, Status::Converged));
        }
        Ok(Control::Continue)
    }

    fn step<G: Game + ?Sized>(&mut self, game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Action> {
        let j = jacobian_at(game, ctx.z)?;
        let d = dnd_direction(ctx.w, &j, game.dims(), &cfg.reg)?;
        let (next, mode, constrained) = if self.loc == Location::Boundary {
            let m = project_onto_vector(ctx.w, &d)?;
            (self.set.project(&(ctx.z - m * cfg.alpha))?, Mode::Boundary, true)
        } else {
            let free = ctx.z - d * cfg.alpha;
            let next = self.set.project(&free)?;
            let active = next != free;
            (next, Mode::Interior, active)
        };
        self.last = Some(((&next - ctx.z).norm(), constrained));
        Ok(Action { next, alpha: cfg.alpha, mode, warning: None, stop: None })
    }
}

/// Projected discrete Nash dynamics on a convex set.
///
/// Interior points take `Π[z − α d]` with the unconstrained direction `d`.
/// Boundary points move along the component of `d` parallel to `ω` and are
/// projected back. The run stops at an interior point with `‖ω‖ ≤ tol`, or
/// once a projected or boundary update moves less than `tol · α`
/// (status [`Status::Stationary`] when `ω ≠ 0` there).
pub fn run_constrained<G: Game + ?Sized>(
    game: &G,
    set: &ConvexSet,
    z0: &JointPoint,
    cfg: &SolverConfig,
) -> Result<IterateTrace> {
    cfg.validate_dnd()?;
    let (n, m) = game.dims();
    if z0.n() != n || z0.m() != m {
        return Err(Error::arg("initial point does not match game dims"));
    }
    if set.dim() != n + m {
        return Err(Error::arg(format!("set lives in R^{}, game in R^{}", set.dim(), n + m)));
    }
    let start = set.project(z0.values())?;
    let mut stepper =
        Projected { set, empty_interior: set.has_empty_interior(), last: None, loc: Location::Interior };
    Ok(drive(game, start, cfg, "second_constrained", &mut stepper, DriveOptions::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, Algorithm};
    use crate::game::{omega_at, Builtin};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn projection_examples() {
        let ball = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(ball.project(&v(&[3.0, 4.0])).unwrap(), v(&[0.6, 0.8]), epsilon = 1e-15);
        let s = ConvexSet::simplex(2);
        assert_abs_diff_eq!(s.project(&v(&[0.9, 0.3])).unwrap(), v(&[0.8, 0.2]), epsilon = 1e-15);
        let b = ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(b.project(&v(&[0.5, 0.5])).unwrap(), v(&[0.5, 0.5]));
        assert!(b.project(&v(&[0.5])).is_err());
    }

    #[test]
    fn simplex_projection_matches_grid_search() {
        let p = v(&[0.9, 0.3]);
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=10_000 {
            let q0 = i as f64 * 1e-4;
            let d = (q0 - p[0]).powi(2) + (1.0 - q0 - p[1]).powi(2);
            if d < best.0 {
                best = (d, q0);
            }
        }
        let got = ConvexSet::simplex(2).project(&p).unwrap();
        assert!((got[0] - best.1).abs() <= 1e-4);
    }

    #[test]
    fn locate_examples() {
        let ball = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(ball.locate(&v(&[0.0, 0.0])).unwrap(), Location::Interior);
        assert_eq!(ball.locate(&v(&[0.6, 0.8])).unwrap(), Location::Boundary);
        assert_eq!(ball.locate(&v(&[3.0, 0.0])).unwrap(), Location::Exterior);
        let s = ConvexSet::simplex(2);
        assert_eq!(s.locate(&v(&[0.5, 0.5])).unwrap(), Location::Interior);
        assert_eq!(s.locate(&v(&[1.0, 0.0])).unwrap(), Location::Boundary);
        assert_eq!(s.locate(&v(&[0.7, 0.7])).unwrap(), Location::Exterior);
        let prod = ConvexSet::product(vec![ConvexSet::simplex(2), ball.clone()]).unwrap();
        assert_eq!(prod.locate(&v(&[0.5, 0.5, 0.0, 0.0])).unwrap(), Location::Interior);
        assert_eq!(prod.locate(&v(&[0.5, 0.5, 1.0, 0.0])).unwrap(), Location::Boundary);
    }

    #[test]
    fn vector_projection_examples() {
        assert_eq!(project_onto_vector(&v(&[1.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), v(&[3.0, 0.0]));
        let a = v(&[1.5, -2.0]);
        assert_abs_diff_eq!(project_onto_vector(&a, &a).unwrap(), a.clone(), epsilon = 1e-15);
        assert_eq!(project_onto_vector(&v(&[1.0, 1.0]), &v(&[1.0, -1.0])).unwrap(), v(&[0.0, 0.0]));
        assert!(project_onto_vector(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn dykstra_ball_box() {
        let s = ConvexSet::intersection(vec![
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexSet::boxed(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap(),
        ])
        .unwrap();
        // the nearest point of the quarter disc to (2, -1) is (1, 0)
        assert_abs_diff_eq!(s.project(&v(&[2.0, -1.0])).unwrap(), v(&[1.0, 0.0]), epsilon = 1e-8);
        let empty = ConvexSet::intersection(vec![
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexSet::ball(vec![5.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        assert!(matches!(empty.project(&v(&[2.5, 0.0])), Err(Error::Set(_))));
    }

    #[test]
    fn spec_round_trip() {
        let spec = SetSpec::Product { parts: vec![SetSpec::Simplex { dim: 2 }, SetSpec::Simplex { dim: 3 }] };
        let s = ConvexSet::from_spec(&spec).unwrap();
        assert_eq!(s.dim(), 5);
        assert!(s.has_empty_interior());
        assert!(ConvexSet::from_spec(&SetSpec::Simplex { dim: 0 }).is_err());
        assert!(ConvexSet::from_spec(&SetSpec::Box { lo: vec![1.0], hi: vec![0.0] }).is_err());
    }

    #[test]
    fn huge_box_reproduces_unconstrained_dnd() {
        let g = Builtin::quadratic(
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[0.5]),
        )
        .unwrap();
        let cfg = SolverConfig { alpha: 0.3, ..SolverConfig::default() };
        let z0 = JointPoint::from_slice(&[1.0, -2.0], 1, 1).unwrap();
        let set = ConvexSet::boxed(vec![-1e6; 2], vec![1e6; 2]).unwrap();
        let a = run_constrained(&g, &set, &z0, &cfg).unwrap();
        let b = run(Algorithm::Dnd, &g, &z0, &cfg).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.steps.len(), b.steps.len());
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.z, y.z);
        }
    }

    #[test]
    fn interior_steps_are_projected_dnd_steps() {
        let g = Builtin::toy2d_negated();
        let set = ConvexSet::ball(vec![-10.5, -5.0], 5.0).unwrap();
        let cfg = SolverConfig { alpha: 0.05, max_iters: 200, ..SolverConfig::default() };
        let tr = run_constrained(&g, &set, &JointPoint::from_slice(&[-9.0, -4.0], 1, 1).unwrap(), &cfg).unwrap();
        for w in tr.steps.windows(2) {
            if w[0].mode == Mode::Interior {
                let expect = set.project(&crate::dynamics::dnd_step(&g, &w[0].z, &cfg).unwrap()).unwrap();
                assert_eq!(w[1].z, expect);
            }
        }
    }

    #[test]
    fn qre_reaches_uniform_point() {
        let g = Builtin::qre(DMatrix::identity(2, 2)).unwrap();
        let set = ConvexSet::product(vec![ConvexSet::simplex(2), ConvexSet::simplex(2)]).unwrap();
        let cfg = SolverConfig { alpha: 0.1, max_iters: 20_000, ..SolverConfig::default() };
        let tr = run_constrained(&g, &set, &JointPoint::from_slice(&[0.1, 0.9, 0.9, 0.1], 2, 2).unwrap(), &cfg).unwrap();
        assert!(tr.status.is_terminal_point(), "{:?}", tr.status);
        assert_abs_diff_eq!(tr.final_point.values().clone(), v(&[0.5; 4]), epsilon = 1e-4);
    }

    // Exact projection onto the simplex by enumerating supports.
    fn simplex_oracle(p: &DVector<f64>) -> DVector<f64> {
        let d = p.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 1u32..(1 << d) {
            let support: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
            let shift = (support.iter().map(|&i| p[i]).sum::<f64>() - 1.0) / support.len() as f64;
            let mut q = DVector::zeros(d);
            for &i in &support {
                q[i] = p[i] - shift;
            }
            if q.iter().all(|x| *x >= 0.0) {
                let dist = (&q - p).norm();
                if best.as_ref().map_or(true, |(b, _)| dist < *b) {
                    best = Some((dist, q));
                }
            }
        }
        best.unwrap().1
    }

    fn any_set() -> impl Strategy<Value = ConvexSet> {
        prop_oneof![
            (prop::collection::vec(-2.0f64..0.0, 3), prop::collection::vec(0.1f64..2.0, 3))
                .prop_map(|(lo, w)| ConvexSet::boxed(lo.clone(), lo.iter().zip(&w).map(|(l, w)| l + w).collect()).unwrap()),
            (prop::collection::vec(-1.0f64..1.0, 3), 0.1f64..3.0).prop_map(|(c, r)| ConvexSet::ball(c, r).unwrap()),
            (prop::collection::vec(-1.0f64..1.0, 3), -1.0f64..1.0)
                .prop_filter("nonzero normal", |(a, _)| a.iter().any(|x| x.abs() > 1e-3))
                .prop_map(|(a, b)| ConvexSet::halfspace(a, b).unwrap()),
            Just(ConvexSet::simplex(3)),
            Just(ConvexSet::product(vec![ConvexSet::simplex(2), ConvexSet::ball(vec![0.0], 1.0).unwrap()]).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn projection_invariants(set in any_set(), p in prop::collection::vec(-5.0f64..5.0, 3), q in prop::collection::vec(-5.0f64..5.0, 3)) {
            let p = DVector::from_vec(p);
            let q = DVector::from_vec(q);
            let pp = set.project(&p).unwrap();
            let ppp = set.project(&pp).unwrap();
            prop_assert!((&ppp - &pp).norm() <= 1e-12 * (1.0 + pp.norm()));
            prop_assert!(set.contains(&pp).unwrap());
            let pq = set.project(&q).unwrap();
            prop_assert!((&pp - &pq).norm() <= (&p - &q).norm() * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn simplex_matches_support_enumeration(p in prop::collection::vec(-2.0f64..2.0, 1..=4)) {
            let p = DVector::from_vec(p);
            let got = ConvexSet::simplex(p.len()).project(&p).unwrap();
            prop_assert!(got.iter().all(|x| *x >= 0.0));
            prop_assert!((got.sum() - 1.0).abs() <= 1e-12);
            prop_assert!((got - simplex_oracle(&p)).norm() <= 1e-8);
        }

        #[test]
        fn intersection_projection_is_feasible_and_stable(p in prop::collection::vec(-3.0f64..3.0, 2)) {
            let s = ConvexSet::intersection(vec![
                ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
                ConvexSet::boxed(vec![-0.5, -2.0], vec![2.0, 0.5]).unwrap(),
            ]).unwrap();
            let p = DVector::from_vec(p);
            let pp = s.project(&p).unwrap();
            prop_assert!(s.contains(&pp).unwrap());
            prop_assert!((s.project(&pp).unwrap() - &pp).norm() <= 1e-9);
        }

        #[test]
        fn boundary_direction_is_parallel_to_omega(x in -15.0f64..-6.0, y in -9.0f64..-1.0) {
            let g = Builtin::toy2d_negated();
            let z = v(&[x, y]);
            let w = omega_at(&g, &z).unwrap();
            prop_assume!(w.norm() > 1e-8);
            let j = crate::game::jacobian_at(&g, &z).unwrap();
            let d = match dnd_direction(&w, &j, (1, 1), &Default::default()) { Ok(d) => d, Err(_) => return Ok(()) };
            let m = project_onto_vector(&w, &d).unwrap();
            let cross = (m[0] * w[1] - m[1] * w[0]).abs();
            prop_assert!(cross <= 1e-10 * m.norm() * w.norm() + 1e-300);
        }
    }
}
