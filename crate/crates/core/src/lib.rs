//! Second-order dynamics for local Nash equilibria of smooth two-player
//! zero-sum games.
//!
//! The crate is organized around a [`game::Game`] oracle that yields the
//! stacked pseudo-gradient `ω = (∇_x f, −∇_y f)` and its Jacobian `J`.
//!
//! * [`spectral`]: block eigenvalues, the stabilizer `β`, Gershgorin
//!   regularizers and the Gauss-Newton metric.
//! * [`dynamics`]: GDA, the discrete Nash dynamics (DND), the hybrid
//!   Gauss-Newton/DND solver, LSS and CESP baselines, and the runner.
//! * [`constrained`]: convex sets with Euclidean projection and the projected
//!   solver for generalized equilibria.
//! * [`classify`]: verdicts for candidate points and rate estimation.

pub mod classify;
pub mod constrained;
pub mod dynamics;
pub mod error;
pub mod game;
mod linalg;
pub mod spectral;

pub use error::{Error, Result};
pub use game::{Builtin, CallbackGame, Game, JointPoint, ProblemSpec};
