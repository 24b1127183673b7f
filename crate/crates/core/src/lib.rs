//! Numerics for Einstein-Bogomol'nyi metrics.
//!
//! Computes solutions of the coupled gravity-gauge vortex system on the
//! Riemann sphere and on the plane, through two complementary routes:
//!
//! - a two-chart finite-difference Newton solver for the scalar form of the
//!   equation on the sphere, with continuation in the coupling parameter and
//!   in the target volume,
//! - shooting integrators for the three rotationally symmetric reductions
//!   (compact two-pole profiles, the asymptotically cylindrical solution, and
//!   the planar solution with prescribed conical asymptotics).
//!
//! The [`diagnostics`] module turns converged solutions into geometric
//! certificates: flux and curvature identities, cone-metric comparison
//! bounds, dissolving-limit and large-volume reports, and Gromov-Hausdorff
//! distance upper bounds.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod ode;
pub mod pde;
pub mod sparse;

pub use error::{Error, Result};
