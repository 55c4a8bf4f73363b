//! Game oracles: objective value, stacked pseudo-gradient and its Jacobian.
//!
//! A two-player zero-sum game is described by a smooth `f(x, y)` where the
//! first player minimizes over `x ∈ R^n` and the second maximizes over
//! `y ∈ R^m`. Every solver in this crate only talks to a game through the
//! [`Game`] trait:
//!
//! * `omega(z) = (∇_x f, −∇_y f)`
//! * `jacobian(z) = ∇_z omega(z) = [[∇²_xx f, ∇²_xy f], [−∇²_yx f, −∇²_yy f]]`
//!
//! The built-in problems ship closed-form derivatives. [`fd_check`] compares
//! them (or any user-supplied oracle) against central finite differences.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest simplex coordinate accepted by the entropy terms of [`Builtin::Qre`].
pub const QRE_MIN_COORDINATE: f64 = 1e-12;

/// A strategy pair `z = (x, y)` with the split between the players recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPoint {
    values: DVector<f64>,
    n: usize,
}

impl JointPoint {
    pub fn new(values: DVector<f64>, n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::arg("both players need at least one coordinate"));
        }
        if values.len() != n + m {
            return Err(Error::arg(format!(
                "point has {} coordinates, expected n + m = {}",
                values.len(),
                n + m
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("coordinate {i} is not finite")));
        }
        Ok(JointPoint { values, n })
    }

    pub fn from_slice(values: &[f64], n: usize, m: usize) -> Result<Self> {
        Self::new(DVector::from_column_slice(values), n, m)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.values.len() - self.n
    }

    pub fn x(&self) -> &[f64] {
        &self.values.as_slice()[..self.n]
    }

    pub fn y(&self) -> &[f64] {
        &self.values.as_slice()[self.n..]
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}

/// Oracle interface for a smooth two-player zero-sum game.
///
/// Implementations must be pure: the solvers call them from several threads
/// and expect identical answers for identical inputs.
pub trait Game: Send + Sync {
    /// `(n, m)`: dimensions of the minimizing and maximizing player.
    fn dims(&self) -> (usize, usize);

    fn name(&self) -> &str;

    fn value(&self, z: &DVector<f64>) -> Result<f64>;

    fn omega(&self, z: &DVector<f64>) -> Result<DVector<f64>>;

    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn dim(&self) -> usize {
        let (n, m) = self.dims();
        n + m
    }
}

impl<G: Game + ?Sized> Game for &G {
    fn dims(&self) -> (usize, usize) {
        (**self).dims()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
    fn value(&self, z: &DVector<f64>) -> Result<f64> {
        (**self).value(z)
    }
    fn omega(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).omega(z)
    }
    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).jacobian(z)
    }
}

fn check_len<G: Game + ?Sized>(game: &G, z: &DVector<f64>) -> Result<()> {
    if z.len() != game.dim() {
        return Err(Error::arg(format!(
            "{}: point has {} coordinates, game expects {}",
            game.name(),
            z.len(),
            game.dim()
        )));
    }
    Ok(())
}

fn first_non_finite<'a>(values: impl Iterator<Item = &'a f64>) -> Option<usize> {
    values.into_iter().position(|v| !v.is_finite())
}

/// `omega(z)` with dimension and finiteness checks.
pub fn omega_at<G: Game + ?Sized>(game: &G, z: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(game, z)?;
    let w = game.omega(z)?;
    if w.len() != z.len() {
        return Err(Error::arg(format!(
            "{}: omega returned {} entries, expected {}",
            game.name(),
            w.len(),
            z.len()
        )));
    }
    if let Some(i) = first_non_finite(w.iter()) {
        return Err(Error::Evaluation {
            coordinate: i,
            detail: format!("{}: omega entry is {}", game.name(), w[i]),
        });
    }
    Ok(w)
}

/// `J(z)` with dimension and finiteness checks.
pub fn jacobian_at<G: Game + ?Sized>(game: &G, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_len(game, z)?;
    let j = game.jacobian(z)?;
    let d = z.len();
    if j.nrows() != d || j.ncols() != d {
        return Err(Error::arg(format!(
            "{}: jacobian is {}x{}, expected {d}x{d}",
            game.name(),
            j.nrows(),
            j.ncols()
        )));
    }
    if let Some(idx) = first_non_finite(j.iter()) {
        // column-major storage
        return Err(Error::Evaluation {
            coordinate: idx / d,
            detail: format!("{}: jacobian entry ({}, {}) is not finite", game.name(), idx % d, idx / d),
        });
    }
    Ok(j)
}

fn check_point<G: Game + ?Sized>(game: &G, z: &JointPoint) -> Result<()> {
    let (n, m) = game.dims();
    if z.n() != n || z.m() != m {
        return Err(Error::arg(format!(
            "{}: point split ({}, {}) does not match game dims ({n}, {m})",
            game.name(),
            z.n(),
            z.m()
        )));
    }
    Ok(())
}

pub fn eval_omega<G: Game + ?Sized>(game: &G, z: &JointPoint) -> Result<DVector<f64>> {
    check_point(game, z)?;
    omega_at(game, z.values())
}

pub fn eval_jacobian<G: Game + ?Sized>(game: &G, z: &JointPoint) -> Result<DMatrix<f64>> {
    check_point(game, z)?;
    jacobian_at(game, z.values())
}

/// Serializable description of a built-in problem.
///
/// Matrices are given as arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `f(x, y) = e^{-0.01(x²+y²)}((0.3x²+y)² + (0.5y²+x)²)`, or its negation.
    Toy2d {
        #[serde(default)]
        negate: bool,
    },
    /// `f = xᵀAy` with `A` square and invertible.
    Bilinear {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
    },
    /// `f = ½xᵀPx + xᵀBy − ½yᵀQy`.
    Quadratic {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
    },
    /// Entropy-regularized matrix game `f = xᵀAy − H(x) + H(y)`.
    Qre {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
    },
}

/// Closed-form built-in problems.
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    Toy2d { sign: f64 },
    Bilinear { a: DMatrix<f64> },
    Quadratic { p: DMatrix<f64>, q: DMatrix<f64>, b: DMatrix<f64> },
    Qre { a: DMatrix<f64> },
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::Construction("matrix must be non-empty".into()));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Construction("matrix rows have different lengths".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Construction("matrix has non-finite entries".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Construction(format!("{name} must be square")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Construction(format!("{name} must be symmetric")));
    }
    Ok(())
}

impl Builtin {
    pub fn toy2d() -> Self {
        Builtin::Toy2d { sign: 1.0 }
    }

    /// The toy objective with the roles of the players exchanged, i.e. `−f`.
    pub fn toy2d_negated() -> Self {
        Builtin::Toy2d { sign: -1.0 }
    }

    pub fn bilinear(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Construction("bilinear A must be square".into()));
        }
        let sv = a.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > 1e-12 * smax.max(1.0)) {
            return Err(Error::Construction("bilinear A is singular".into()));
        }
        Ok(Builtin::Bilinear { a })
    }

    pub fn quadratic(p: DMatrix<f64>, q: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        check_symmetric("P", &p)?;
        check_symmetric("Q", &q)?;
        if b.nrows() != p.nrows() || b.ncols() != q.nrows() {
            return Err(Error::Construction(format!(
                "B is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                p.nrows(),
                q.nrows()
            )));
        }
        Ok(Builtin::Quadratic { p, q, b })
    }

    pub fn qre(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Construction("QRE payoff matrix must be non-empty".into()));
        }
        Ok(Builtin::Qre { a })
    }

    fn qre_logs(v: &[f64], offset: usize) -> Result<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(i, &vi)| {
                if vi >= QRE_MIN_COORDINATE {
                    Ok(vi.ln())
                } else {
                    Err(Error::Evaluation {
                        coordinate: offset + i,
                        detail: format!("entropy term needs a coordinate >= {QRE_MIN_COORDINATE:e}, got {vi:e}"),
                    })
                }
            })
            .collect()
    }
}

/// Build an oracle from its serializable description.
pub fn make_builtin(spec: &ProblemSpec) -> Result<Builtin> {
    match spec {
        ProblemSpec::Toy2d { negate } => Ok(if *negate { Builtin::toy2d_negated() } else { Builtin::toy2d() }),
        ProblemSpec::Bilinear { a } => Builtin::bilinear(matrix_from_rows(a)?),
        ProblemSpec::Quadratic { p, q, b } => {
            Builtin::quadratic(matrix_from_rows(p)?, matrix_from_rows(q)?, matrix_from_rows(b)?)
        }
        ProblemSpec::Qre { a } => Builtin::qre(matrix_from_rows(a)?),
    }
}

// Value, gradient and Hessian of the toy objective (before the sign flip).
struct ToyParts {
    f: f64,
    fx: f64,
    fy: f64,
    fxx: f64,
    fxy: f64,
    fyy: f64,
}

fn toy_parts(x: f64, y: f64) -> ToyParts {
    let r = (-0.01 * (x * x + y * y)).exp();
    let u = 0.3 * x * x + y;
    let v = 0.5 * y * y + x;
    let g = u * u + v * v;
    let gx = 1.2 * x * u + 2.0 * v;
    let gy = 2.0 * u + 2.0 * y * v;
    let gxx = 1.2 * u + 0.72 * x * x + 2.0;
    let gxy = 1.2 * x + 2.0 * y;
    let gyy = 2.0 + 2.0 * v + 2.0 * y * y;
    let rx = -0.02 * x * r;
    let ry = -0.02 * y * r;
    let rxx = (-0.02 + 0.0004 * x * x) * r;
    let rxy = 0.0004 * x * y * r;
    let ryy = (-0.02 + 0.0004 * y * y) * r;
    ToyParts {
        f: r * g,
        fx: rx * g + r * gx,
        fy: ry * g + r * gy,
        fxx: rxx * g + 2.0 * rx * gx + r * gxx,
        fxy: rxy * g + rx * gy + ry * gx + r * gxy,
        fyy: ryy * g + 2.0 * ry * gy + r * gyy,
    }
}

impl Game for Builtin {
    fn dims(&self) -> (usize, usize) {
        match self {
            Builtin::Toy2d { .. } => (1, 1),
            Builtin::Bilinear { a } => (a.nrows(), a.ncols()),
            Builtin::Quadratic { p, q, .. } => (p.nrows(), q.nrows()),
            Builtin::Qre { a } => (a.nrows(), a.ncols()),
        }
    }

    fn name(&self) -> &str {
        match self {
            Builtin::Toy2d { sign } if *sign < 0.0 => "toy2d-negated",
            Builtin::Toy2d { .. } => "toy2d",
            Builtin::Bilinear { .. } => "bilinear",
            Builtin::Quadratic { .. } => "quadratic",
            Builtin::Qre { .. } => "qre",
        }
    }

    fn value(&self, z: &DVector<f64>) -> Result<f64> {
        check_len(self, z)?;
        let (n, _) = self.dims();
        let (x, y) = (z.rows(0, n), z.rows(n, z.len() - n));
        let val = match self {
            Builtin::Toy2d { sign } => sign * toy_parts(z[0], z[1]).f,
            Builtin::Bilinear { a } => x.dot(&(a * y)),
            Builtin::Quadratic { p, q, b } => {
                0.5 * x.dot(&(p * x)) + x.dot(&(b * y)) - 0.5 * y.dot(&(q * y))
            }
            Builtin::Qre { a } => {
                let lx = Self::qre_logs(x.as_slice(), 0)?;
                let ly = Self::qre_logs(y.as_slice(), n)?;
                let neg_hx: f64 = x.iter().zip(&lx).map(|(v, l)| v * l).sum();
                let neg_hy: f64 = y.iter().zip(&ly).map(|(v, l)| v * l).sum();
                x.dot(&(a * y)) + neg_hx - neg_hy
            }
        };
        Ok(val)
    }

    fn omega(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self, z)?;
        let (n, m) = self.dims();
        let (x, y) = (z.rows(0, n), z.rows(n, m));
        let mut w = DVector::zeros(n + m);
        match self {
            Builtin::Toy2d { sign } => {
                let t = toy_parts(z[0], z[1]);
                w[0] = sign * t.fx;
                w[1] = -sign * t.fy;
            }
            Builtin::Bilinear { a } => {
                w.rows_mut(0, n).copy_from(&(a * y));
                w.rows_mut(n, m).copy_from(&(-(a.transpose() * x)));
            }
            Builtin::Quadratic { p, q, b } => {
                w.rows_mut(0, n).copy_from(&(p * x + b * y));
                w.rows_mut(n, m).copy_from(&(q * y - b.transpose() * x));
            }
            Builtin::Qre { a } => {
                let lx = Self::qre_logs(x.as_slice(), 0)?;
                let ly = Self::qre_logs(y.as_slice(), n)?;
                let ay = a * y;
                let atx = a.transpose() * x;
                for i in 0..n {
                    w[i] = ay[i] + lx[i] + 1.0;
                }
                for j in 0..m {
                    w[n + j] = -atx[j] + ly[j] + 1.0;
                }
            }
        }
        Ok(w)
    }

    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self, z)?;
        let (n, m) = self.dims();
        let mut j = DMatrix::zeros(n + m, n + m);
        match self {
            Builtin::Toy2d { sign } => {
                let t = toy_parts(z[0], z[1]);
                j[(0, 0)] = sign * t.fxx;
                j[(0, 1)] = sign * t.fxy;
                j[(1, 0)] = -sign * t.fxy;
                j[(1, 1)] = -sign * t.fyy;
            }
            Builtin::Bilinear { a } => {
                j.view_mut((0, n), (n, m)).copy_from(a);
                j.view_mut((n, 0), (m, n)).copy_from(&(-a.transpose()));
            }
            Builtin::Quadratic { p, q, b } => {
                j.view_mut((0, 0), (n, n)).copy_from(p);
                j.view_mut((0, n), (n, m)).copy_from(b);
                j.view_mut((n, 0), (m, n)).copy_from(&(-b.transpose()));
                j.view_mut((n, n), (m, m)).copy_from(q);
            }
            Builtin::Qre { a } => {
                // validates the domain
                Self::qre_logs(&z.as_slice()[..n], 0)?;
                Self::qre_logs(&z.as_slice()[n..], n)?;
                for i in 0..n {
                    j[(i, i)] = 1.0 / z[i];
                }
                for k in 0..m {
                    j[(n + k, n + k)] = 1.0 / z[n + k];
                }
                j.view_mut((0, n), (n, m)).copy_from(a);
                j.view_mut((n, 0), (m, n)).copy_from(&(-a.transpose()));
            }
        }
        Ok(j)
    }
}

type ValueFn = dyn Fn(&DVector<f64>) -> Result<f64> + Send + Sync;
type VectorFn = dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync;
type MatrixFn = dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync;

/// A user-defined game given by three callables.
///
/// The callables are trusted; run [`fd_check`] to validate them.
pub struct CallbackGame {
    name: String,
    dims: (usize, usize),
    f: Box<ValueFn>,
    omega: Box<VectorFn>,
    jac: Box<MatrixFn>,
}

impl CallbackGame {
    pub fn new<F, W, J>(name: impl Into<String>, dims: (usize, usize), f: F, omega: W, jac: J) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> Result<f64> + Send + Sync + 'static,
        W: Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        if dims.0 == 0 || dims.1 == 0 {
            return Err(Error::Construction("both players need at least one coordinate".into()));
        }
        Ok(CallbackGame {
            name: name.into(),
            dims,
            f: Box::new(f),
            omega: Box::new(omega),
            jac: Box::new(jac),
        })
    }
}

impl std::fmt::Debug for CallbackGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CallbackGame").field("name", &self.name).field("dims", &self.dims).finish()
    }
}

impl Game for CallbackGame {
    fn dims(&self) -> (usize, usize) {
        self.dims
    }
    fn name(&self) -> &str {
        &self.name
    }
    fn value(&self, z: &DVector<f64>) -> Result<f64> {
        (self.f)(z)
    }
    fn omega(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        (self.omega)(z)
    }
    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        (self.jac)(z)
    }
}

/// Worst relative errors found by [`fd_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdReport {
    /// max over i of |omega_i − fd_i| / max(1, |omega_i|)
    pub omega_rel_err: f64,
    pub omega_worst: usize,
    /// max over (i, j) of |J_ij − fd_ij| / max(1, |J_ij|)
    pub jac_rel_err: f64,
    pub jac_worst: (usize, usize),
}

impl FdReport {
    pub fn max_rel_err(&self) -> f64 {
        self.omega_rel_err.max(self.jac_rel_err)
    }
}

/// Default central-difference base step, `cbrt(machine epsilon)`.
pub fn default_fd_step() -> f64 {
    f64::EPSILON.cbrt()
}

/// Compare the analytic `omega` and `J` against central differences.
///
/// Coordinate `i` is perturbed by `h * max(1, |z_i|)`. `omega` is checked
/// against differences of `f` (with the sign flip on the `y` block), `J`
/// against differences of `omega`.
pub fn fd_check<G: Game + ?Sized>(game: &G, z: &JointPoint, h: f64) -> Result<FdReport> {
    if !(h > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    check_point(game, z)?;
    let z0 = z.values();
    let d = z0.len();
    let n = z.n();
    let w = omega_at(game, z0)?;
    let j = jacobian_at(game, z0)?;

    let mut report = FdReport { omega_rel_err: 0.0, omega_worst: 0, jac_rel_err: 0.0, jac_worst: (0, 0) };
    let rel = |analytic: f64, approx: f64| (analytic - approx).abs() / analytic.abs().max(1.0);

    for i in 0..d {
        let hi = h * z0[i].abs().max(1.0);
        let mut zp = z0.clone();
        let mut zm = z0.clone();
        zp[i] += hi;
        zm[i] -= hi;
        // use the actually representable step
        let step = zp[i] - zm[i];

        let df = (game.value(&zp)? - game.value(&zm)?) / step;
        let grad = if i < n { df } else { -df };
        let e = rel(w[i], grad);
        if e > report.omega_rel_err || e.is_nan() {
            report.omega_rel_err = e;
            report.omega_worst = i;
        }

        let dw = (omega_at(game, &zp)? - omega_at(game, &zm)?) / step;
        for r in 0..d {
            let e = rel(j[(r, i)], dw[r]);
            if e > report.jac_rel_err || e.is_nan() {
                report.jac_rel_err = e;
                report.jac_worst = (r, i);
            }
        }
    }
    Ok(report)
}
