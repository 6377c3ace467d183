//! Finite-volume solver for a coupled bulk/surface drift–diffusion model of
//! active-transport-induced cell polarisation.
//!
//! A cytosolic species `V` diffuses in a bulk domain `B` and drifts up the
//! gradient of a signal `c`; a membrane species `u` diffuses on `Γ = ∂B`,
//! exchanges mass with `V` through the boundary, and acts as the Neumann
//! source for `c`. See the README for the full system.

pub mod acceptance;
pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod geometry;
pub mod io;
pub mod model;
pub mod sparse;
pub mod steady;
pub mod stepper;

pub use config::{InitialCondition, RunConfig};
pub use diagnostics::{DiagnosticsRow, DiagnosticsSink};
pub use error::{Error, Result};
pub use geometry::{Geometry, GeometryKind, Mesh};
pub use model::{ExchangeLaw, Parameters, SourceLaw, State};
pub use steady::SteadyState;
pub use stepper::{RunOutcome, StepperConfig, Termination};
