//! Five-point (fourth-order) finite-difference derivatives on the grid's
//! computational coordinate. Grids that reach the origin use parity ghost
//! points `u(-r) = (-1)^m u(r)`, so the stencil stays centred near `r = 0`.

use num_complex::Complex64;

use super::grid::RadialGrid;

const POINTS: usize = 5;

/// Derivative weights at `z` of the Lagrange interpolant through `xs`.
fn lagrange_derivative_weights(xs: &[f64], z: f64) -> Vec<f64> {
    let k = xs.len();
    (0..k)
        .map(|j| {
            let mut total = 0.0;
            for a in 0..k {
                if a == j {
                    continue;
                }
                let mut term = 1.0 / (xs[j] - xs[a]);
                for l in 0..k {
                    if l != j && l != a {
                        term *= (z - xs[l]) / (xs[j] - xs[l]);
                    }
                }
                total += term;
            }
            total
        })
        .collect()
}

/// Precomputed stencils: for node `i`, `(first, weights)` index into the
/// extended sample vector `[ghost_2, ghost_1, u_1, ..., u_n]` (ghosts present
/// only for grids reaching the origin).
#[derive(Debug, Clone)]
pub(crate) struct Stencils {
    ghosts: usize,
    rows: Vec<(usize, [f64; POINTS])>,
}

impl Stencils {
    pub(crate) fn build(grid: &RadialGrid) -> Self {
        let x = grid.coord();
        let n = x.len();
        let ghosts = if grid.reaches_origin() { 2 } else { 0 };
        let mut ext = Vec::with_capacity(n + ghosts);
        if ghosts == 2 {
            ext.push(-x[1]);
            ext.push(-x[0]);
        }
        ext.extend_from_slice(x);
        let jac = grid.jacobian();
        let rows = (0..n)
            .map(|i| {
                let centre = i + ghosts;
                let lo = centre.saturating_sub(POINTS / 2).min(ext.len() - POINTS);
                let w = lagrange_derivative_weights(&ext[lo..lo + POINTS], ext[centre]);
                let mut arr = [0.0; POINTS];
                for (a, v) in arr.iter_mut().zip(w) {
                    *a = v / jac[i];
                }
                (lo, arr)
            })
            .collect();
        Stencils { ghosts, rows }
    }

    pub(crate) fn apply(&self, u: &[Complex64], m: i64) -> Vec<Complex64> {
        let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let mut ext = Vec::with_capacity(u.len() + self.ghosts);
        if self.ghosts == 2 {
            ext.push(u[1] * sign);
            ext.push(u[0] * sign);
        }
        ext.extend_from_slice(u);
        self.rows.iter().map(|(lo, w)| w.iter().zip(&ext[*lo..*lo + POINTS]).map(|(c, v)| v * *c).sum()).collect()
    }
}
