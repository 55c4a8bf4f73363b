use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::RegularizerParams;

/// Step-size rule for the Gauss-Newton phase of the hybrid solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    /// Backtracking from `armijo_init` until the sufficient-decrease test holds.
    #[default]
    Armijo,
    /// Always use `alpha`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LssParams {
    pub xi1: f64,
    pub xi2: f64,
    /// Two-timescale rate for `z`.
    pub gamma1: f64,
    /// Two-timescale rate for the auxiliary `v`.
    pub gamma2: f64,
    /// Use `ξ1 (1 − e^{−‖ω‖²})`, which is never negative. When false the
    /// regularizer is `ξ1 (1 − e^{‖ω‖²})`.
    pub lambda_sign_corrected: bool,
}

impl Default for LssParams {
    fn default() -> Self {
        LssParams { xi1: 1e-4, xi2: 1e-4, gamma1: 2e-4, gamma2: 1e-5, lambda_sign_corrected: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CespParams {
    /// `1 / (2 ρ_x)`
    pub inv_two_rho_x: f64,
    /// `1 / (2 ρ_y)`
    pub inv_two_rho_y: f64,
}

impl Default for CespParams {
    fn default() -> Self {
        CespParams { inv_two_rho_x: 0.05, inv_two_rho_y: 0.05 }
    }
}

/// Decaying perturbation `h(z, t) = a (1 − e^{−b‖ω‖²}) e^{−t} z̃`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbParams {
    pub enabled: bool,
    pub a: f64,
    pub b: f64,
    /// Direction `z̃`. Empty means the all-ones vector.
    pub z_tilde: Vec<f64>,
}

impl Default for PerturbParams {
    fn default() -> Self {
        PerturbParams { enabled: false, a: 1.0, b: 1.0, z_tilde: Vec::new() }
    }
}

/// Every knob of every solver. Defaults follow the toy-problem experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha: f64,
    /// Convergence threshold on `‖ω‖`.
    pub tol: f64,
    pub max_iters: usize,
    /// Displacement radius below which the hybrid solver leaves Gauss-Newton.
    pub epsilon_switch: f64,
    pub line_search: LineSearch,
    pub armijo_init: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub armijo_max_backtracks: usize,
    /// Cap on the damping `min(cap, ‖ω‖)` of the Gauss-Newton metric.
    /// Zero gives the undamped `JᵀJ`.
    pub gn_damping_cap: f64,
    /// Eigenvalue margin for the strict-Nash test.
    pub nash_margin: f64,
    pub reg: RegularizerParams,
    pub diverge_norm: f64,
    pub lss: LssParams,
    pub cesp: CespParams,
    pub perturb: PerturbParams,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 1e-3,
            tol: 1e-5,
            max_iters: 15_000,
            epsilon_switch: 1e-2,
            line_search: LineSearch::Armijo,
            armijo_init: 1.0,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            armijo_max_backtracks: 40,
            gn_damping_cap: 5.0,
            nash_margin: 1e-8,
            reg: RegularizerParams::default(),
            diverge_norm: 1e8,
            lss: LssParams::default(),
            cesp: CespParams::default(),
            perturb: PerturbParams::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must be positive and finite, got {v}")))
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        positive("tol", self.tol)?;
        positive("epsilon_switch", self.epsilon_switch)?;
        positive("diverge_norm", self.diverge_norm)?;
        if !(self.armijo_init > 0.0 && self.armijo_init <= 1.0) {
            return Err(Error::arg(format!("armijo_init must lie in (0, 1], got {}", self.armijo_init)));
        }
        open_unit("armijo_c", self.armijo_c)?;
        open_unit("armijo_shrink", self.armijo_shrink)?;
        if !(self.gn_damping_cap >= 0.0) {
            return Err(Error::arg("gn_damping_cap must be nonnegative"));
        }
        if !(self.nash_margin >= 0.0) {
            return Err(Error::arg("nash_margin must be nonnegative"));
        }
        self.reg.validate()?;
        positive("lss.xi1", self.lss.xi1)?;
        positive("lss.xi2", self.lss.xi2)?;
        positive("lss.gamma1", self.lss.gamma1)?;
        positive("lss.gamma2", self.lss.gamma2)?;
        if !(self.cesp.inv_two_rho_x >= 0.0 && self.cesp.inv_two_rho_y >= 0.0) {
            return Err(Error::arg("cesp coefficients must be nonnegative"));
        }
        if self.perturb.enabled {
            positive("perturb.a", self.perturb.a)?;
            positive("perturb.b", self.perturb.b)?;
            if !self.perturb.z_tilde.is_empty() && self.perturb.z_tilde.iter().all(|v| *v == 0.0) {
                return Err(Error::arg("perturb.z_tilde must be nonzero"));
            }
        }
        Ok(())
    }

    /// The discrete dynamics are analyzed for `α ∈ (0, 1]`.
    pub fn validate_dnd(&self) -> Result<()> {
        self.validate()?;
        if self.alpha > 1.0 {
            return Err(Error::arg(format!("alpha must lie in (0, 1] for the discrete dynamics, got {}", self.alpha)));
        }
        Ok(())
    }
}
