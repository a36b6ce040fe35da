//! Forward simulation and constructive reconstruction for inverse boundary
//! value problems of the nonautonomous heat equation on the unit disc.
//!
//! The crate simulates Dirichlet-to-Neumann (heat-flux) data for
//! `rho du/dt - div(sigma grad u) = 0` and for its Liouville-reduced form
//! `gamma du/dt - Delta u + q u = 0`, and implements a reconstruction
//! pipeline built from special-solution probes:
//!
//! * boundary-localized oscillatory probes recover the Taylor jet of
//!   `(sigma, rho)` on the lateral boundary,
//! * travel-time tomography over the conformal metric `gamma * (dx^2)`
//!   recovers the diffusivity from boundary distance data,
//! * exponentially weighted geodesic probes feed a geodesic ray transform
//!   whose regularized inversion recovers the zeroth-order coefficient,
//! * a fixed-point elliptic sweep maps `(gamma, q)` plus boundary jets back
//!   to `(sigma, rho)`.

pub mod error;
pub mod expr;
pub mod forward;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod oracle;
pub mod probes;
pub mod reduction;
pub mod taylor;
pub mod tomography;

pub use error::{Error, Result};
pub use grid::{BoundaryTrace, Extent, ScalarField, SpaceTimeGrid};
