use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::quadrature::{corrected_midpoint_weights, even_line_weights, CumulativeRule};
use super::stencil::Stencils;
use crate::error::{CssError, Result};
use crate::special::{bessel_j, bessel_zeros};

/// Node layout of a radial grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GridKind {
    /// Cell midpoints `(i - 1/2) rmax / n`.
    UniformMidpoint,
    /// `r_i = j_{order,i} rmax / j_{order,n+1}`, the collocation points of the
    /// order-`order` discrete Hankel transform.
    BesselZero { order: u32 },
    /// Log-uniform midpoints on `[r_min, rmax]`; resolves algebraic tails and
    /// widely separated scales at fixed node count.
    Geometric { r_min: f64 },
}

impl GridKind {
    pub fn label(&self) -> String {
        match self {
            GridKind::UniformMidpoint => "uniform-midpoint".into(),
            GridKind::BesselZero { order } => format!("bessel-zero({order})"),
            GridKind::Geometric { r_min } => format!("geometric({r_min:e})"),
        }
    }
}

/// Requested layout for [`make_grid`]; the Bessel order is taken from `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridRequest {
    UniformMidpoint,
    BesselZero,
    Geometric { r_min: f64 },
}

/// Collocation nodes and `r dr` quadrature weights on `(0, rmax)`.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    kind: GridKind,
    rmax: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `dr/dx` at the nodes for the grid's computational coordinate `x`.
    jacobian: Vec<f64>,
    /// computational coordinate at the nodes
    coord: Vec<f64>,
    cumulative: CumulativeRule,
    /// Bessel zeros `j_{order,1..=n+1}` for Bessel-zero grids.
    zeros: Option<Vec<f64>>,
    /// Fourier-Bessel (transform) weights on Bessel-zero grids.
    spectral_weights: Option<Vec<f64>>,
    /// Weights for the plain measure `dr`.
    line_weights: Vec<f64>,
    stencils: OnceLock<Stencils>,
}

/// Build a radial grid with `n >= 8` nodes on `(0, rmax)`.
pub fn make_grid(n: usize, rmax: f64, kind: GridRequest, m: i64) -> Result<RadialGrid> {
    if n < 8 {
        return Err(CssError::InvalidArgument(format!("grid needs n >= 8, got {n}")));
    }
    if !(rmax > 0.0) || !rmax.is_finite() {
        return Err(CssError::InvalidArgument(format!("rmax must be positive, got {rmax}")));
    }
    match kind {
        GridRequest::UniformMidpoint => Ok(uniform(n, rmax)),
        GridRequest::BesselZero => Ok(bessel(n, rmax, m.unsigned_abs() as u32)),
        GridRequest::Geometric { r_min } => {
            if !(r_min > 0.0 && r_min < rmax) {
                return Err(CssError::InvalidArgument(format!(
                    "geometric grid needs 0 < r_min < rmax, got r_min = {r_min}"
                )));
            }
            Ok(geometric(n, rmax, r_min))
        }
    }
}

fn uniform(n: usize, rmax: f64) -> RadialGrid {
    let h = rmax / n as f64;
    let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let base = corrected_midpoint_weights(n, h);
    let weights = nodes.iter().zip(&base).map(|(r, w)| r * w).collect();
    let cumulative = CumulativeRule::new(&nodes, 0.0, rmax, true, false);
    RadialGrid {
        kind: GridKind::UniformMidpoint,
        rmax,
        line_weights: base,
        jacobian: vec![1.0; n],
        coord: nodes.clone(),
        nodes,
        weights,
        cumulative,
        zeros: None,
        spectral_weights: None,
        stencils: OnceLock::new(),
    }
}

fn geometric(n: usize, rmax: f64, r_min: f64) -> RadialGrid {
    let (s0, s1) = (r_min.ln(), rmax.ln());
    let ds = (s1 - s0) / n as f64;
    let coord: Vec<f64> = (0..n).map(|i| s0 + (i as f64 + 0.5) * ds).collect();
    let nodes: Vec<f64> = coord.iter().map(|s| s.exp()).collect();
    let base = corrected_midpoint_weights(n, ds);
    // int f r dr = int f r^2 ds
    let weights = nodes.iter().zip(&base).map(|(r, w)| r * r * w).collect();
    let line_weights = nodes.iter().zip(&base).map(|(r, w)| r * w).collect();
    let cumulative = CumulativeRule::new(&coord, s0, s1, false, false);
    RadialGrid {
        kind: GridKind::Geometric { r_min },
        rmax,
        line_weights,
        jacobian: nodes.clone(),
        coord,
        nodes,
        weights,
        cumulative,
        zeros: None,
        spectral_weights: None,
        stencils: OnceLock::new(),
    }
}

fn bessel(n: usize, rmax: f64, order: u32) -> RadialGrid {
    let zeros = bessel_zeros(order, n + 1);
    let s = zeros[n];
    let nodes: Vec<f64> = zeros[..n].iter().map(|j| j * rmax / s).collect();
    let spectral = zeros[..n]
        .iter()
        .map(|&j| {
            let jp = bessel_j(order as i64 + 1, j);
            2.0 * rmax * rmax / (s * s * jp * jp)
        })
        .collect();
    // The transform weights integrate products of order-m Fourier-Bessel
    // functions exactly but lose accuracy on integrands that do not vanish
    // like r^{2m} at the origin; general integrals use the local rule,
    // anchored at rmax where Fourier-Bessel profiles vanish.
    let cumulative = CumulativeRule::new(&nodes, 0.0, rmax, true, true);
    let weights = cumulative.total_weights().iter().zip(&nodes).map(|(c, r)| c * r).collect();
    // plain `dr` integrands need not vanish at the origin
    let line_weights = even_line_weights(&nodes, rmax, true);
    RadialGrid {
        kind: GridKind::BesselZero { order },
        rmax,
        line_weights,
        jacobian: vec![1.0; n],
        coord: nodes.clone(),
        nodes,
        weights,
        cumulative,
        zeros: Some(zeros),
        spectral_weights: Some(spectral),
        stencils: OnceLock::new(),
    }
}

impl RadialGrid {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn rmax(&self) -> f64 {
        self.rmax
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights for densities `|u|^2` of order-m profiles: the Fourier-Bessel
    /// weights on Bessel-zero grids (under which the transform is unitary),
    /// the general weights otherwise.
    pub fn density_weights(&self) -> &[f64] {
        self.spectral_weights.as_deref().unwrap_or(&self.weights)
    }

    pub fn integrate_density(&self, samples: &[f64]) -> Result<f64> {
        self.check_len(samples.len())?;
        Ok(self.density_weights().iter().zip(samples).map(|(w, f)| w * f).sum())
    }

    pub(crate) fn bessel_zeros(&self) -> Option<&[f64]> {
        self.zeros.as_deref()
    }

    /// Whether the grid's left end is the origin (parity ghosts apply).
    pub(crate) fn reaches_origin(&self) -> bool {
        !matches!(self.kind, GridKind::Geometric { .. })
    }

    pub(crate) fn coord(&self) -> &[f64] {
        &self.coord
    }

    pub(crate) fn jacobian(&self) -> &[f64] {
        &self.jacobian
    }

    /// `sum_i w_i f(r_i)`, approximating `int_0^rmax f r dr`.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        self.check_len(samples.len())?;
        Ok(self.weights.iter().zip(samples).map(|(w, f)| w * f).sum())
    }

    /// `sum_i l_i g(r_i)`, approximating `int_0^rmax g dr` for integrands
    /// that stay finite (but need not vanish) at the origin.
    pub fn integrate_line(&self, samples: &[f64]) -> Result<f64> {
        self.check_len(samples.len())?;
        Ok(self.line_weights.iter().zip(samples).map(|(w, f)| w * f).sum())
    }

    pub fn integrate_complex(&self, samples: &[Complex64]) -> Result<Complex64> {
        self.check_len(samples.len())?;
        Ok(self.weights.iter().zip(samples).map(|(w, f)| f * *w).sum())
    }

    /// Running integrals `int_0^{r_k} f(s) s ds` at every node, plus the
    /// integral over the whole grid.
    pub fn cumulative(&self, f: &[f64]) -> (Vec<f64>, f64) {
        let g: Vec<f64> = f.iter().zip(&self.nodes).zip(&self.jacobian).map(|((f, r), j)| f * r * j).collect();
        self.cumulative.integrate(&g)
    }

    /// Fourth-order finite-difference `du/dr` for an order-`m` profile.
    pub fn derivative(&self, u: &[Complex64], m: i64) -> Result<Vec<Complex64>> {
        self.check_len(u.len())?;
        Ok(self.stencils.get_or_init(|| Stencils::build(self)).apply(u, m))
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            Err(CssError::LengthMismatch { expected: self.n(), got: len })
        } else {
            Ok(())
        }
    }

    /// Structural equality used to match states against plans.
    pub fn same_layout(&self, other: &RadialGrid) -> bool {
        self.kind == other.kind && self.n() == other.n() && self.rmax == other.rmax
    }
}

/// Free-function form of [`RadialGrid::integrate`].
pub fn integrate_radial(samples: &[f64], grid: &RadialGrid) -> Result<f64> {
    grid.integrate(samples)
}
