//! Numerics for the equivariant Chern-Simons-Schrödinger system.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretization;
pub mod dynamics;
pub mod error;
pub mod gauge;
pub mod observables;
pub mod selfdual;
pub mod special;
pub mod state;
pub mod variational;

pub use discretization::{build_spectral_plan, make_grid, Cutoff, GridKind, GridRequest, RadialGrid, SpectralPlan};
pub use error::{CssError, Result};
pub use gauge::{compute_gauge, GaugeFields};
pub use num_complex::Complex64;
pub use observables::DiagnosticsRecord;
pub use state::{free_propagate, EquivariantState};
pub use variational::{minimize_charge, GroundState, GroundStateRow, MinimizeOptions, StandingWave};
