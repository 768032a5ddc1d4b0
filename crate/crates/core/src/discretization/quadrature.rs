//! Quadrature building blocks: end-corrected midpoint weights and
//! high-order cumulative integration on arbitrary node sequences.

use nalgebra::{DMatrix, DVector};

/// Number of end nodes carrying Euler-Maclaurin corrections; the largest
/// count for which every corrected weight stays positive.
const END_NODES: usize = 6;
/// Points per local interpolant in the cumulative rule.
const STENCIL: usize = 8;

/// `B_{2q}(1/2)` for q = 1..3.
const BERNOULLI_HALF: [f64; 3] = [-1.0 / 12.0, 7.0 / 240.0, -31.0 / 1344.0];

/// Relative weight corrections (in units of the spacing) for the first
/// `p` midpoint nodes at an interval end. Adding them to the plain midpoint
/// weights makes the composite rule exact for polynomials of degree < p.
pub(crate) fn midpoint_end_corrections(p: usize) -> Vec<f64> {
    let p = p.min(END_NODES);
    let s: Vec<f64> = (0..p).map(|i| i as f64 + 0.5).collect();
    let v = DMatrix::from_fn(p, p, |k, i| s[i].powi(k as i32));
    let rhs = DVector::from_fn(p, |k, _| if k % 2 == 1 { BERNOULLI_HALF[(k - 1) / 2] / (k as f64 + 1.0) } else { 0.0 });
    let sol = v.lu().solve(&rhs).expect("Vandermonde system is nonsingular");
    sol.iter().copied().collect()
}

/// Composite midpoint weights on `n` uniform cells of width `h`, with
/// end corrections applied at both ends.
pub fn corrected_midpoint_weights(n: usize, h: f64) -> Vec<f64> {
    let p = (n / 2).min(END_NODES);
    let delta = midpoint_end_corrections(p);
    let mut w = vec![h; n];
    for (i, d) in delta.iter().enumerate() {
        w[i] += h * d;
        w[n - 1 - i] += h * d;
    }
    w
}

/// Integration weights over `[a, b]` of the polynomial interpolating the
/// data at `xs`.
fn interpolant_weights(xs: &[f64], a: f64, b: f64) -> Vec<f64> {
    let k = xs.len();
    let scale = (b - a).abs().max(f64::MIN_POSITIVE);
    let t: Vec<f64> = xs.iter().map(|x| (x - a) / scale).collect();
    let v = DMatrix::from_fn(k, k, |p, i| t[i].powi(p as i32));
    let mom = DVector::from_fn(k, |p, _| 1.0 / (p as f64 + 1.0));
    let sol = v.lu().solve(&mom).expect("distinct interpolation nodes");
    sol.iter().map(|w| w * scale).collect()
}

/// One cell of the cumulative rule: integrates the local interpolant over
/// `[points[cell], points[cell + 1]]` using `STENCIL` usable points starting at
/// `start` in the extended point list.
#[derive(Debug, Clone)]
struct Cell {
    start: usize,
    weights: Vec<f64>,
}

/// High-order cumulative quadrature `x_k -> int_{x_left}^{x_k} g(x) dx` on a
/// node sequence, with optional anchors at the interval ends where the
/// integrand is known to vanish.
#[derive(Debug, Clone)]
pub struct CumulativeRule {
    n: usize,
    left_anchor: bool,
    right_anchor: bool,
    /// usable points: [anchor_left?] nodes [anchor_right?]
    usable: usize,
    cells: Vec<Cell>,
}

impl CumulativeRule {
    /// `left_edge`/`right_edge` bound the integration interval; when the
    /// matching anchor flag is set the integrand is taken to be zero there and
    /// the edge point joins the interpolation stencils.
    pub fn new(nodes: &[f64], left_edge: f64, right_edge: f64, left_anchor: bool, right_anchor: bool) -> Self {
        let n = nodes.len();
        let mut pts = Vec::with_capacity(n + 2);
        pts.push(left_edge);
        pts.extend_from_slice(nodes);
        pts.push(right_edge);
        // usable points are a contiguous window of `pts`
        let first_usable = if left_anchor { 0 } else { 1 };
        let last_usable = if right_anchor { n + 1 } else { n };
        let usable = last_usable - first_usable + 1;
        let k = STENCIL.min(usable);
        let mut cells = Vec::with_capacity(n + 1);
        for c in 0..=n {
            // centre the stencil on the cell [pts[c], pts[c+1]]
            let centre = c as isize - (k as isize / 2 - 1);
            let lo = centre.clamp(first_usable as isize, (last_usable + 1 - k) as isize) as usize;
            let xs = &pts[lo..lo + k];
            cells.push(Cell { start: lo - first_usable, weights: interpolant_weights(xs, pts[c], pts[c + 1]) });
        }
        CumulativeRule { n, left_anchor, right_anchor, usable, cells }
    }

    /// Coefficients `c` with `total = sum_i c_i g_i`.
    pub fn total_weights(&self) -> Vec<f64> {
        let off = usize::from(self.left_anchor);
        let mut c = vec![0.0; self.n];
        for cell in &self.cells {
            for (j, w) in cell.weights.iter().enumerate() {
                let idx = cell.start + j;
                if idx >= off && idx - off < self.n {
                    c[idx - off] += w;
                }
            }
        }
        c
    }

    /// Cumulative integrals of the integrand samples `g` (one per node):
    /// returns `(running, total)` with `running[k] = int_{left}^{x_k} g` and
    /// `total = int_{left}^{right} g`.
    pub fn integrate(&self, g: &[f64]) -> (Vec<f64>, f64) {
        debug_assert_eq!(g.len(), self.n);
        let mut ext = Vec::with_capacity(self.usable);
        if self.left_anchor {
            ext.push(0.0);
        }
        ext.extend_from_slice(g);
        if self.right_anchor {
            ext.push(0.0);
        }
        let mut running = Vec::with_capacity(self.n);
        let mut acc = 0.0;
        for (c, cell) in self.cells.iter().enumerate() {
            let seg: f64 =
                cell.weights.iter().zip(&ext[cell.start..cell.start + cell.weights.len()]).map(|(w, v)| w * v).sum();
            acc += seg;
            if c < self.n {
                running.push(acc);
            }
        }
        (running, acc)
    }
}

/// Weights for `int_0^{right} g dr` on positive nodes when `g` extends to an
/// even function of `r`: the cell `[0, x_0]` is integrated through the
/// mirrored nodes instead of one-sided extrapolation. `right_anchor` as in
/// [`CumulativeRule::new`].
pub fn even_line_weights(nodes: &[f64], right_edge: f64, right_anchor: bool) -> Vec<f64> {
    let n = nodes.len();
    let rule = CumulativeRule::new(nodes, 0.0, right_edge, false, right_anchor);
    let mut w = rule.total_weights();
    // drop the one-sided first cell
    let first = &rule.cells[0];
    for (j, c) in first.weights.iter().enumerate() {
        let idx = first.start + j;
        if idx < n {
            w[idx] -= c;
        }
    }
    let half = (STENCIL / 2).min(n);
    let xs: Vec<f64> = nodes[..half].iter().rev().map(|x| -x).chain(nodes[..half].iter().copied()).collect();
    let sym = interpolant_weights(&xs, -nodes[0], nodes[0]);
    for (k, c) in sym.iter().enumerate() {
        let idx = if k < half { half - 1 - k } else { k - half };
        w[idx] += 0.5 * c;
    }
    w
}
