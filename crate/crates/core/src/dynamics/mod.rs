//! Unconstrained update rules and the iteration runner.
//!
//! With `ω` and `J` from the game oracle:
//!
//! * GDA: `z − α ω`
//! * DND: `z − α [JᵀJ(J + Jᵀ + β) + E]⁻¹ Jᵀω`
//! * Gauss-Newton on `ℓ = ½‖ω‖²`: `z − α (JᵀJ + λI)⁻¹ Jᵀω`
//! * LSS, two-timescale LSS and CESP baselines.
//!
//! `β` and `E` come from [`crate::spectral`]. Every run produces an
//! [`IterateTrace`] whose records hold the iterate and the action taken from
//! it.

mod config;
mod runner;
mod steps;
mod trace;

pub use config::{CespParams, LineSearch, LssParams, PerturbParams, SolverConfig};
pub use runner::{integrate_euler, run, run_second, Algorithm};
pub(crate) use runner::{drive, Action, Control, Ctx, DriveOptions, Stepper};
pub use steps::{
    armijo_search, cesp_step, continuous_rhs, dnd_direction, dnd_matrix, dnd_step, gda_step, gn_direction,
    lss_correction, lss_step, lss_two_timescale_step, time_varying_perturbation, ArmijoOutcome, GnDirection,
};
pub use trace::{IterateTrace, Mode, Status, StepRecord, TraceWarning, WarningKind};
