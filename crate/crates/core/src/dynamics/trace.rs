use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::game::JointPoint;

/// What the solver did at an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "GDA")]
    Gda,
    #[serde(rename = "DND")]
    Dnd,
    #[serde(rename = "GN")]
    GaussNewton,
    #[serde(rename = "LSS")]
    Lss,
    #[serde(rename = "LSS2")]
    Lss2,
    #[serde(rename = "CESP")]
    Cesp,
    #[serde(rename = "EULER")]
    Euler,
    /// Constrained solver, unconstrained step followed by projection.
    #[serde(rename = "INTERIOR")]
    Interior,
    /// Constrained solver, step along `ω` followed by projection.
    #[serde(rename = "BOUNDARY")]
    Boundary,
    /// The hybrid solver stopped at a point passing the strict-Nash test.
    #[serde(rename = "SECOND-BREAK")]
    SecondBreak,
    /// Terminal record, no step taken.
    #[serde(rename = "HALT")]
    Halt,
}

impl Mode {
    pub const ALL: [Mode; 11] = [
        Mode::Gda,
        Mode::Dnd,
        Mode::GaussNewton,
        Mode::Lss,
        Mode::Lss2,
        Mode::Cesp,
        Mode::Euler,
        Mode::Interior,
        Mode::Boundary,
        Mode::SecondBreak,
        Mode::Halt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Gda => "GDA",
            Mode::Dnd => "DND",
            Mode::GaussNewton => "GN",
            Mode::Lss => "LSS",
            Mode::Lss2 => "LSS2",
            Mode::Cesp => "CESP",
            Mode::Euler => "EULER",
            Mode::Interior => "INTERIOR",
            Mode::Boundary => "BOUNDARY",
            Mode::SecondBreak => "SECOND-BREAK",
            Mode::Halt => "HALT",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// `‖ω‖ ≤ tol` at the final point.
    Converged,
    /// Projected iteration stopped moving; `ω` may be nonzero.
    Stationary,
    MaxIters,
    Diverged,
    EvalError,
    NumericError,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Stationary => "stationary",
            Status::MaxIters => "max_iters",
            Status::Diverged => "diverged",
            Status::EvalError => "eval_error",
            Status::NumericError => "numeric_error",
        }
    }

    /// Converged or stationary.
    pub fn is_terminal_point(self) -> bool {
        matches!(self, Status::Converged | Status::Stationary)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        [
            Status::Converged,
            Status::Stationary,
            Status::MaxIters,
            Status::Diverged,
            Status::EvalError,
            Status::NumericError,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| Error::arg(format!("unknown status {s:?}")))
    }
}

/// Iterate `z_k`, its residual, and the action taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub z: DVector<f64>,
    pub omega_norm: f64,
    /// `½‖ω‖²`
    pub merit: f64,
    /// Step size used to leave `z_k`; zero on the terminal record.
    pub alpha: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    /// Line search ran out of backtracks and took its smallest trial.
    ArmijoBudgetExhausted,
    /// The update left a non-critical point unchanged.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceWarning {
    pub k: usize,
    pub kind: WarningKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub algorithm: String,
    pub steps: Vec<StepRecord>,
    pub status: Status,
    pub final_point: JointPoint,
    pub warnings: Vec<TraceWarning>,
    /// Message of the error that ended the run, if any.
    pub error: Option<String>,
}

impl IterateTrace {
    /// Number of updates taken (records minus the terminal one).
    pub fn iterations(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn final_omega_norm(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.omega_norm)
    }

    pub fn count_mode(&self, mode: Mode) -> usize {
        self.steps.iter().filter(|s| s.mode == mode).count()
    }

    pub fn has_warning(&self, kind: WarningKind) -> bool {
        self.warnings.iter().any(|w| w.kind == kind)
    }

    pub fn points(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.steps.iter().map(|s| &s.z)
    }
}
