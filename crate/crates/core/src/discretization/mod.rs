//! Radial grids, quadrature and the discrete Hankel transform.

mod grid;
mod hankel;
mod quadrature;
mod resample;
mod stencil;

pub use grid::{integrate_radial, make_grid, GridKind, GridRequest, RadialGrid};
pub use hankel::{build_spectral_plan, Cutoff, SpectralPlan};
pub use quadrature::{corrected_midpoint_weights, CumulativeRule};
pub use resample::resample;
