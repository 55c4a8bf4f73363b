use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{LineSearch, SolverConfig};
use super::steps::{
    armijo_search, cesp_step, continuous_rhs, dnd_direction, gn_direction, lss_step,
    lss_two_timescale_step, time_varying_perturbation,
};
use super::trace::{IterateTrace, Mode, Status, StepRecord, TraceWarning, WarningKind};
use crate::classify::{unconstrained_verdict, Verdict};
use crate::error::{Error, Result};
use crate::game::{jacobian_at, omega_at, Game, JointPoint};
use crate::spectral::RegularizerParams;

/// Unconstrained solvers understood by [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gda,
    Dnd,
    Second,
    Lss,
    Lss2,
    Cesp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] =
        [Algorithm::Gda, Algorithm::Dnd, Algorithm::Second, Algorithm::Lss, Algorithm::Lss2, Algorithm::Cesp];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gda => "gda",
            Algorithm::Dnd => "dnd",
            Algorithm::Second => "second",
            Algorithm::Lss => "lss",
            Algorithm::Lss2 => "lss2",
            Algorithm::Cesp => "cesp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown algorithm {s:?}; expected one of gda, dnd, second, lss, lss2, cesp")))
    }
}

/// State visible to a stepper at iterate `k`.
pub(crate) struct Ctx<'a> {
    pub z: &'a DVector<f64>,
    pub w: &'a DVector<f64>,
    pub wn: f64,
}

pub(crate) struct Action {
    pub next: DVector<f64>,
    pub alpha: f64,
    pub mode: Mode,
    pub warning: Option<WarningKind>,
    /// End the run after recording this action; `next` is ignored.
    pub stop: Option<Status>,
}

pub(crate) enum Control {
    Continue,
    /// Stop before stepping and label the terminal record.
    Stop(Mode, Status),
}

pub(crate) trait Stepper {
    /// Termination test run before each step. The default stops on `‖ω‖ ≤ tol`.
    fn check<G: Game + ?Sized>(&mut self, _game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Control> {
        Ok(if ctx.wn <= cfg.tol { Control::Stop(Mode::Halt, Status::Converged) } else { Control::Continue })
    }

    fn step<G: Game + ?Sized>(&mut self, game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Action>;
}

#[derive(Default)]
pub(crate) struct DriveOptions {
    pub perturb: bool,
    pub detect_stall: bool,
}

fn status_for(err: &Error) -> Status {
    match err {
        Error::Evaluation { .. } => Status::EvalError,
        _ => Status::NumericError,
    }
}

fn record(k: usize, z: &DVector<f64>, wn: f64, alpha: f64, mode: Mode) -> StepRecord {
    StepRecord { k, z: z.clone(), omega_norm: wn, merit: 0.5 * wn * wn, alpha, mode }
}

/// Shared iteration loop: evaluates `ω`, applies the stop rules, asks the
/// stepper for the next point and records everything.
pub(crate) fn drive<G: Game + ?Sized, S: Stepper>(
    game: &G,
    z0: DVector<f64>,
    cfg: &SolverConfig,
    name: &str,
    stepper: &mut S,
    opts: DriveOptions,
) -> IterateTrace {
    let (n, m) = game.dims();
    let mut steps = Vec::new();
    let mut warnings = Vec::new();
    let mut error = None;
    let mut z = z0;
    let mut k = 0usize;
    let status = loop {
        if z.iter().any(|v| !v.is_finite()) || z.norm() > cfg.diverge_norm {
            steps.push(record(k, &z, f64::NAN, 0.0, Mode::Halt));
            break Status::Diverged;
        }
        let w = match omega_at(game, &z) {
            Ok(w) => w,
            Err(e) => {
                steps.push(record(k, &z, f64::NAN, 0.0, Mode::Halt));
                let s = status_for(&e);
                error = Some(e.to_string());
                break s;
            }
        };
        let wn = w.norm();
        let ctx = Ctx { z: &z, w: &w, wn };
        match stepper.check(game, &ctx, cfg) {
            Ok(Control::Continue) => {}
            Ok(Control::Stop(mode, status)) => {
                steps.push(record(k, &z, wn, 0.0, mode));
                break status;
            }
            Err(e) => {
                steps.push(record(k, &z, wn, 0.0, Mode::Halt));
                let s = status_for(&e);
                error = Some(e.to_string());
                break s;
            }
        }
        if k >= cfg.max_iters {
            steps.push(record(k, &z, wn, 0.0, Mode::Halt));
            break Status::MaxIters;
        }
        let action = match stepper.step(game, &ctx, cfg) {
            Ok(a) => a,
            Err(e) => {
                steps.push(record(k, &z, wn, 0.0, Mode::Halt));
                let s = status_for(&e);
                error = Some(e.to_string());
                break s;
            }
        };
        let mut next = action.next;
        if opts.perturb {
            match time_varying_perturbation(&z, k as f64 * cfg.alpha, wn * wn, &cfg.perturb) {
                Ok(h) => next += h * cfg.alpha,
                Err(e) => {
                    steps.push(record(k, &z, wn, 0.0, Mode::Halt));
                    error = Some(e.to_string());
                    break Status::NumericError;
                }
            }
        }
        steps.push(record(k, &z, wn, action.alpha, action.mode));
        if let Some(kind) = action.warning {
            warnings.push(TraceWarning { k, kind });
        }
        if let Some(s) = action.stop {
            break s;
        }
        if opts.detect_stall && next == z {
            // a non-critical point the update cannot leave
            warnings.push(TraceWarning { k, kind: WarningKind::Stalled });
            steps.push(record(k + 1, &z, wn, 0.0, Mode::Halt));
            break Status::MaxIters;
        }
        z = next;
        k += 1;
    };
    let final_point = JointPoint::new(z.clone(), n, m)
        .unwrap_or_else(|_| JointPoint::new(DVector::from_element(n + m, f64::MAX), n, m).expect("finite filler"));
    if let Some(e) = &error {
        log::debug!("{name}: stopped with {status}: {e}");
    }
    IterateTrace { algorithm: name.to_string(), steps, status, final_point, warnings, error }
}

struct Gda;
impl Stepper for Gda {
    fn step<G: Game + ?Sized>(&mut self, _game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Action> {
        Ok(Action { next: ctx.z - ctx.w * cfg.alpha, alpha: cfg.alpha, mode: Mode::Gda, warning: None, stop: None })
    }
}

struct Dnd;
impl Stepper for Dnd {
    fn step<G: Game + ?Sized>(&mut self, game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Action> {
        let next = if ctx.wn == 0.0 {
            ctx.z.clone()
        } else {
            let j = jacobian_at(game, ctx.z)?;
            ctx.z - dnd_direction(ctx.w, &j, game.dims(), &cfg.reg)? * cfg.alpha
        };
        Ok(Action { next, alpha: cfg.alpha, mode: Mode::Dnd, warning: None, stop: None })
    }
}

struct Lss;
impl Stepper for Lss {
    fn step<G: Game + ?Sized>(&mut self, game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Action> {
        Ok(Action { next: lss_step(game, ctx.z, cfg)?, alpha: cfg.alpha, mode: Mode::Lss, warning: None, stop: None })
    }
}

struct Lss2 {
    v: DVector<f64>,
}
impl Stepper for Lss2 {
    fn step<G: Game + ?Sized>(&mut self, game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Action> {
        let (next, v) = lss_two_timescale_step(game, ctx.z, &self.v, cfg)?;
        self.v = v;
        Ok(Action { next, alpha: cfg.lss.gamma1, mode: Mode::Lss2, warning: None, stop: None })
    }
}

struct Cesp;
impl Stepper for Cesp {
    fn step<G: Game + ?Sized>(&mut self, game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Action> {
        Ok(Action { next: cesp_step(game, ctx.z, cfg)?, alpha: cfg.alpha, mode: Mode::Cesp, warning: None, stop: None })
    }
}

/// Gauss-Newton far from fixed points, discrete Nash dynamics near them.
struct Second {
    prev: Option<DVector<f64>>,
}

impl Second {
    fn gn_action<G: Game + ?Sized>(&self, game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Action> {
        let j = jacobian_at(game, ctx.z)?;
        let damping = cfg.gn_damping_cap.min(ctx.wn);
        let gn = gn_direction(&j, ctx.w, damping)?;
        match cfg.line_search {
            LineSearch::Fixed => Ok(Action {
                next: ctx.z - gn.direction * cfg.alpha,
                alpha: cfg.alpha,
                mode: Mode::GaussNewton,
                warning: None,
                stop: None,
            }),
            LineSearch::Armijo => {
                let out = armijo_search(game, ctx.z, &gn.direction, gn.quad_term, cfg)?;
                Ok(Action {
                    next: out.point,
                    alpha: out.alpha,
                    mode: Mode::GaussNewton,
                    warning: out.exhausted.then_some(WarningKind::ArmijoBudgetExhausted),
                    stop: None,
                })
            }
        }
    }
}

impl Stepper for Second {
    fn check<G: Game + ?Sized>(&mut self, game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Control> {
        if ctx.wn > cfg.tol {
            return Ok(Control::Continue);
        }
        let j = jacobian_at(game, ctx.z)?;
        Ok(match unconstrained_verdict(&j, ctx.wn, game.dims(), cfg.tol, cfg.nash_margin)? {
            Verdict::StrictLocalNash => Control::Stop(Mode::SecondBreak, Status::Converged),
            // A certified non-Nash critical point is not an answer; keep iterating.
            Verdict::NonNashCritical if certified_non_nash(&j, game.dims(), cfg.nash_margin)? => Control::Continue,
            _ => Control::Stop(Mode::Halt, Status::Converged),
        })
    }

    fn step<G: Game + ?Sized>(&mut self, game: &G, ctx: &Ctx<'_>, cfg: &SolverConfig) -> Result<Action> {
        let moved = match &self.prev {
            None => true,
            Some(p) => (ctx.z - p).norm() > cfg.epsilon_switch,
        };
        self.prev = Some(ctx.z.clone());
        if moved {
            return self.gn_action(game, ctx, cfg);
        }
        let j = jacobian_at(game, ctx.z)?;
        match unconstrained_verdict(&j, ctx.wn, game.dims(), cfg.tol, cfg.nash_margin)? {
            Verdict::StrictLocalNash => {
                // unreachable through `check`, kept for the literal control flow
                Ok(Action {
                    next: ctx.z.clone(),
                    alpha: 0.0,
                    mode: Mode::SecondBreak,
                    warning: None,
                    stop: Some(Status::Converged),
                })
            }
            _ => {
                let next = ctx.z - dnd_direction(ctx.w, &j, game.dims(), &cfg.reg)? * cfg.alpha;
                Ok(Action { next, alpha: cfg.alpha, mode: Mode::Dnd, warning: None, stop: None })
            }
        }
    }
}

/// Some block Hessian has the wrong sign by more than the margin.
fn certified_non_nash(j: &nalgebra::DMatrix<f64>, dims: (usize, usize), margin: f64) -> Result<bool> {
    let e = crate::spectral::extreme_block_eigs(j, dims)?;
    Ok(e.lambda_x < -margin || e.lambda_y > margin)
}

fn start_point<G: Game + ?Sized>(game: &G, z0: &JointPoint) -> Result<DVector<f64>> {
    let (n, m) = game.dims();
    if z0.n() != n || z0.m() != m {
        return Err(Error::arg(format!(
            "initial point split ({}, {}) does not match game dims ({n}, {m})",
            z0.n(),
            z0.m()
        )));
    }
    Ok(z0.values().clone())
}

/// Iterate `algorithm` from `z0` until `‖ω‖ ≤ tol`, the iteration cap,
/// divergence or an oracle failure.
///
/// Only argument errors are returned as `Err`; failures during the run end
/// up in the trace status.
pub fn run<G: Game + ?Sized>(algorithm: Algorithm, game: &G, z0: &JointPoint, cfg: &SolverConfig) -> Result<IterateTrace> {
    match algorithm {
        Algorithm::Dnd | Algorithm::Second => cfg.validate_dnd()?,
        _ => cfg.validate()?,
    }
    let z = start_point(game, z0)?;
    let opts = DriveOptions { perturb: cfg.perturb.enabled, detect_stall: true };
    let name = algorithm.as_str();
    Ok(match algorithm {
        Algorithm::Gda => drive(game, z, cfg, name, &mut Gda, opts),
        Algorithm::Dnd => drive(game, z, cfg, name, &mut Dnd, opts),
        Algorithm::Second => drive(game, z, cfg, name, &mut Second { prev: None }, opts),
        Algorithm::Lss => drive(game, z, cfg, name, &mut Lss, opts),
        Algorithm::Lss2 => {
            let v = DVector::zeros(z.len());
            drive(game, z, cfg, name, &mut Lss2 { v }, opts)
        }
        Algorithm::Cesp => drive(game, z, cfg, name, &mut Cesp, opts),
    })
}

/// The hybrid Gauss-Newton / discrete-dynamics solver.
///
/// The first update is always a Gauss-Newton step. Afterwards a Gauss-Newton
/// step is taken while the last displacement exceeds `epsilon_switch`, and a
/// discrete-dynamics step otherwise. Points with `‖ω‖ ≤ tol` end the run
/// unless the block Hessians certify them as non-Nash.
pub fn run_second<G: Game + ?Sized>(game: &G, z0: &JointPoint, cfg: &SolverConfig) -> Result<IterateTrace> {
    run(Algorithm::Second, game, z0, cfg)
}

struct Euler<'a> {
    dt: f64,
    reg: &'a RegularizerParams,
}
impl Stepper for Euler<'_> {
    fn check<G: Game + ?Sized>(&mut self, _game: &G, _ctx: &Ctx<'_>, _cfg: &SolverConfig) -> Result<Control> {
        Ok(Control::Continue)
    }
    fn step<G: Game + ?Sized>(&mut self, game: &G, ctx: &Ctx<'_>, _cfg: &SolverConfig) -> Result<Action> {
        let g = continuous_rhs(game, ctx.z, self.reg)?;
        Ok(Action { next: ctx.z - g * self.dt, alpha: self.dt, mode: Mode::Euler, warning: None, stop: None })
    }
}

/// Forward-Euler trajectory of `ż = −g_c(z)` with exactly `steps` updates
/// unless the state diverges or the oracle fails first.
pub fn integrate_euler<G: Game + ?Sized>(
    game: &G,
    z0: &JointPoint,
    dt: f64,
    steps: usize,
    reg: &RegularizerParams,
) -> Result<IterateTrace> {
    if !(dt > 0.0) {
        return Err(Error::arg("dt must be positive"));
    }
    reg.validate()?;
    let z = start_point(game, z0)?;
    let cfg = SolverConfig { max_iters: steps, reg: *reg, ..SolverConfig::default() };
    let mut trace = drive(game, z, &cfg, "euler", &mut Euler { dt, reg }, DriveOptions::default());
    if trace.status == Status::MaxIters {
        // running the requested horizon is the normal outcome here
        trace.status = if trace.final_omega_norm() <= cfg.tol { Status::Converged } else { Status::MaxIters };
    }
    Ok(trace)
}
