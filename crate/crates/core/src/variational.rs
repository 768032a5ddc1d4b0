//! Minimal-charge zero-J states, their Lagrange-multiplier frequency and
//! Pohozaev certificates.
//!
//! For a profile `u` and `beta = alpha^2`,
//! `J(alpha u) = beta (a - beta b + beta^2 c)` with
//! `a = ||d_r u||^2 + m^2 int |u|^2 / r^2 dx`,
//! `b = 2 m int S |u|^2 / r^2 dx + g/2 ||u||_4^4`,
//! `c = int S^2 |u|^2 / r^2 dx` and `S(r) = 1/2 int_0^r |u|^2 s ds`.
//! Zeroing J is therefore an exact quadratic problem.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use crate::discretization::{make_grid, GridRequest, RadialGrid};
use crate::error::{CssError, Result};
use crate::gauge::{compute_a0, compute_a_theta};
use crate::state::EquivariantState;

const TWO_PI: f64 = 2.0 * PI;

/// `J(u) = 2 pi int [ |d_r u|^2 + r^-2 (m - 1/2 int_0^r |u|^2 s ds)^2 |u|^2 - g/2 |u|^4 ] r dr`.
///
/// Equal to `2 E` for the same `m` and `g`.
pub fn j_functional(profile: &EquivariantState, m: i64, g: f64) -> f64 {
    let grid = &profile.grid;
    let rho = profile.density();
    let (run, _) = grid.cumulative(&rho);
    let du = grid.derivative(&profile.u, m).expect("state length matches its grid");
    let m = m as f64;
    let f: Vec<f64> = (0..rho.len())
        .map(|i| {
            let r = grid.nodes()[i];
            let w = m - 0.5 * run[i];
            du[i].norm_sqr() + w * w * rho[i] / (r * r) - 0.5 * g * rho[i] * rho[i]
        })
        .collect();
    TWO_PI * grid.integrate(&f).expect("state length matches its grid")
}

/// Coefficients of `J(alpha u) / alpha^2 = a - beta (b1 + b2) + beta^2 c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JQuadratic {
    pub a: f64,
    /// nonlocal part of `b`, `2 m int S |u|^2 / r^2 dx`
    pub b1: f64,
    /// `g/2 ||u||_4^4`
    pub b2: f64,
    pub c: f64,
}

impl JQuadratic {
    pub fn b(&self) -> f64 {
        self.b1 + self.b2
    }

    /// `J(alpha u) / alpha^2` at `beta = alpha^2`.
    pub fn reduced(&self, beta: f64) -> f64 {
        self.a - beta * self.b() + beta * beta * self.c
    }

    /// Covariant kinetic energy of `alpha u`, divided by `alpha^2`.
    pub fn kinetic(&self, beta: f64) -> f64 {
        self.a - beta * self.b1 + beta * beta * self.c
    }

    pub fn discriminant(&self) -> f64 {
        self.b().powi(2) - 4.0 * self.a * self.c
    }
}

pub fn j_quadratic(profile: &EquivariantState, m: i64, g: f64) -> JQuadratic {
    let grid = &profile.grid;
    let rho = profile.density();
    let (run, _) = grid.cumulative(&rho);
    let du = grid.derivative(&profile.u, m).expect("state length matches its grid");
    let mf = m as f64;
    let r = grid.nodes();
    let n = rho.len();
    let col = |f: &dyn Fn(usize) -> f64| {
        let v: Vec<f64> = (0..n).map(f).collect();
        TWO_PI * grid.integrate(&v).expect("state length matches its grid")
    };
    JQuadratic {
        a: col(&|i| du[i].norm_sqr() + mf * mf * rho[i] / (r[i] * r[i])),
        b1: col(&|i| mf * run[i] * rho[i] / (r[i] * r[i])),
        b2: col(&|i| 0.5 * g * rho[i] * rho[i]),
        c: col(&|i| 0.25 * run[i] * run[i] * rho[i] / (r[i] * r[i])),
    }
}

/// Smallest `alpha > 0` with `J(alpha u) = 0`.
///
/// A double root (the g = 1 soliton) can show up with a slightly negative
/// discriminant; the vertex is accepted when `|J|` there is below
/// `1e-10` of the kinetic energy.
pub fn normalize_to_zero_j(profile: &EquivariantState, m: i64, g: f64) -> Result<f64> {
    if m < 0 || !(g >= 1.0) {
        return Err(CssError::InvalidArgument(format!("zero-J scaling needs m >= 0 and g >= 1, got m = {m}, g = {g}")));
    }
    let q = j_quadratic(profile, m, g);
    if !(q.a > 0.0) {
        return Err(CssError::InvalidArgument("zero-J scaling of the zero profile".into()));
    }
    let d = q.discriminant();
    let beta = if d >= 0.0 {
        2.0 * q.a / (q.b() + d.sqrt())
    } else {
        let v = q.b() / (2.0 * q.c);
        if q.reduced(v) > 1e-10 * q.kinetic(v) {
            return Err(CssError::NoSignChange { alpha_hi: f64::INFINITY });
        }
        v
    };
    Ok(beta.sqrt())
}

/// `L u = -(u'' + u'/r) + (m + A_theta)^2 u / r^2 - g |u|^2 u + A_0 u`.
///
/// Half the first variation of J: `dJ[psi] = 2 Re <psi, L u>`, with the
/// nonlocal contribution collected into `A_0 u`. A standing wave
/// `e^{i lambda t} u` satisfies `L u = -lambda u`.
///
/// With an attached plan of order `|m|` the Laplacian is spectral, otherwise
/// it is built from finite-difference derivatives.
pub fn lagrange_operator(profile: &EquivariantState, m: i64, g: f64) -> Vec<Complex64> {
    let grid = &profile.grid;
    let at = compute_a_theta(&EquivariantState { m, ..profile.clone() });
    let a0 = compute_a0(&EquivariantState { m, ..profile.clone() }, &at);
    let mf = m as f64;
    let r = grid.nodes();
    let lap = neg_laplacian(profile, m);
    (0..profile.u.len())
        .map(|i| {
            let u = profile.u[i];
            let angular = ((mf + at[i]).powi(2) - mf * mf) / (r[i] * r[i]);
            lap[i] + u * (angular - g * u.norm_sqr() + a0[i])
        })
        .collect()
}

/// Nodal first variation `dJ/du`, so that `dJ[psi] = 2 pi int Re(conj(dJ/du) psi) r dr`.
pub fn j_first_variation(profile: &EquivariantState, m: i64, g: f64) -> Vec<Complex64> {
    lagrange_operator(profile, m, g).into_iter().map(|v| 2.0 * v).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub lambda: f64,
    /// `||L u + lambda u|| / ||u||`
    pub residual: f64,
    /// residual relative to `||(L + g|u|^2 - A_0) u||`, the linear part; scale free
    pub relative_residual: f64,
    /// set for the zero profile, where `lambda` is reported as 0
    pub degenerate: bool,
}

/// Rayleigh quotient `lambda = -<u, L u> / <u, u>` of the Lagrange-multiplier equation.
pub fn extract_frequency(profile: &EquivariantState) -> Frequency {
    let grid = &profile.grid;
    let rho = profile.density();
    let q = grid.integrate(&rho).expect("state length matches its grid");
    if !(q > 0.0) {
        return Frequency { lambda: 0.0, residual: 0.0, relative_residual: 0.0, degenerate: true };
    }
    let lu = lagrange_operator(profile, profile.m, profile.g);
    let ip: Vec<f64> = profile.u.iter().zip(&lu).map(|(u, l)| (u.conj() * l).re).collect();
    let lambda = -grid.integrate(&ip).expect("length checked") / q;
    let res: Vec<f64> = lu.iter().zip(&profile.u).map(|(l, u)| (l + u * lambda).norm_sqr()).collect();
    let residual = (grid.integrate(&res).expect("length checked") / q).sqrt();
    let free = lagrange_operator(&profile.clone().with_coupling(0.0), profile.m, 0.0);
    let a0 = compute_a0(profile, &compute_a_theta(profile));
    let lin: Vec<f64> = free.iter().zip(&profile.u).zip(&a0).map(|((l, u), a)| (l - u * *a).norm_sqr()).collect();
    let scale = grid.integrate(&lin).expect("length checked").sqrt();
    let relative_residual = if scale > 0.0 { residual * q.sqrt() / scale } else { 0.0 };
    Frequency { lambda, residual, relative_residual, degenerate: false }
}

/// Relative residuals of the two Pohozaev-type identities of a standing wave
/// with frequency `lambda`:
/// `p1`: `int (lambda + A_0) |u|^2 dx = g/2 int |u|^4 dx`;
/// `p2`: `lambda int |u|^2 dx + 4 pi m A_0(0) + 2 int (m + A_theta)^2 |u|^2 / r^2 dx = g/2 int |u|^4 dx`.
/// `A_0(0)` is extrapolated quadratically from the three innermost nodes.
pub fn pohozaev_residuals(profile: &EquivariantState, lambda: f64) -> (f64, f64) {
    let grid = &profile.grid;
    let rho = profile.density();
    let plane = |f: &[f64]| TWO_PI * grid.integrate(f).expect("state length matches its grid");
    let quartic = 0.5 * profile.g * plane(&rho.iter().map(|d| d * d).collect::<Vec<_>>());
    if rho.iter().all(|d| *d == 0.0) {
        return (0.0, 0.0);
    }
    let at = compute_a_theta(profile);
    let a0 = compute_a0(profile, &at);
    let r = grid.nodes();
    let charge = plane(&rho);
    let lhs1 = lambda * charge + plane(&a0.iter().zip(&rho).map(|(a, d)| a * d).collect::<Vec<_>>());
    let m = profile.m as f64;
    let ang: Vec<f64> = (0..rho.len()).map(|i| (m + at[i]).powi(2) * rho[i] / (r[i] * r[i])).collect();
    let lhs2 = lambda * charge + 4.0 * PI * m * a0_at_origin(r, &a0) + 2.0 * plane(&ang);
    let scale = quartic.abs();
    ((lhs1 - quartic).abs() / scale, (lhs2 - quartic).abs() / scale)
}

fn a0_at_origin(r: &[f64], a0: &[f64]) -> f64 {
    let (x0, x1, x2) = (r[0], r[1], r[2]);
    let l0 = x1 * x2 / ((x0 - x1) * (x0 - x2));
    let l1 = x0 * x2 / ((x1 - x0) * (x1 - x2));
    let l2 = x0 * x1 / ((x2 - x0) * (x2 - x1));
    l0 * a0[0] + l1 * a0[1] + l2 * a0[2]
}

/// A zero-J profile and its standing-wave frequency.
#[derive(Debug, Clone)]
pub struct StandingWave {
    /// real nonnegative profile on a geometric grid
    pub profile: EquivariantState,
    pub frequency: f64,
    pub charge: f64,
    pub j_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeOptions {
    /// geometric grid size
    pub n: usize,
    pub r_min: f64,
    pub rmax: f64,
    /// knot intervals of the cubic spline for `ln(u / r^m)` as a function
    /// of `ln r`; must divide `n`
    pub knots: usize,
    pub max_iterations: usize,
    /// converged when the charge falls by less than `rel_tol` (relative) over `window` iterations
    pub window: usize,
    pub rel_tol: f64,
    /// weight of the relative J gap for shapes with no zero-J scaling
    pub penalty: f64,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            n: 1000,
            r_min: 1e-6,
            rmax: 1e4,
            knots: 100,
            max_iterations: 3000,
            window: 50,
            rel_tol: 1e-8,
            penalty: 1e3,
            seed: 0,
        }
    }
}

impl MinimizeOptions {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CssError::InvalidArgument(msg));
        if self.n < 32 || self.knots < 8 || self.knots > self.n / 2 {
            return bad(format!("need n >= 32 and 8 <= knots <= n/2, got n = {}, knots = {}", self.n, self.knots));
        }
        if !(self.r_min > 0.0 && self.rmax > 10.0 * self.r_min) {
            return bad(format!("need 0 < 10 r_min < rmax, got {} and {}", self.r_min, self.rmax));
        }
        if !self.n.is_multiple_of(self.knots) {
            return bad(format!("knots must divide n, got n = {}, knots = {}", self.n, self.knots));
        }
        if self.window == 0 || !(self.rel_tol > 0.0) || !(self.penalty > 0.0) {
            return bad("window, rel_tol and penalty must be positive".into());
        }
        Ok(())
    }
}

/// Result of [`minimize_charge`].
#[derive(Debug, Clone)]
pub struct GroundState {
    pub wave: StandingWave,
    pub iterations: usize,
    /// charge of the zero-J scaling after every iteration
    pub history: Vec<f64>,
    /// charge of the spline minimizer before [`refine_standing_wave`]
    pub minimized_charge: f64,
}

impl GroundState {
    pub fn row(&self) -> GroundStateRow {
        let (p1, p2) = pohozaev_residuals(&self.wave.profile, self.wave.frequency);
        GroundStateRow {
            m: self.wave.profile.m,
            g: self.wave.profile.g,
            c_estimate: self.wave.charge,
            lambda: self.wave.frequency,
            p1,
            p2,
            iterations: self.iterations,
        }
    }
}

/// One line of the ground-state table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundStateRow {
    pub m: i64,
    pub g: f64,
    pub c_estimate: f64,
    pub lambda: f64,
    pub p1: f64,
    pub p2: f64,
    pub iterations: usize,
}

/// Minimizes the charge over nontrivial zero-J profiles of order `m`.
///
/// Shapes are `u = r^m exp(w(ln r))` with `w` a cubic spline, so `u > 0`.
/// The objective is the charge of the zero-J scaling, `Q(u) beta*(u)`,
/// which is invariant under `u -> k u` and `u -> k u(k r)`. After every
/// step the amplitude is reset to `||d_r u|| = 1` and the profile is
/// re-centred in `ln r` by whole knot shifts.
/// Shapes with no zero-J scaling (all of them at g = 1 except the solitons)
/// are charged `Q beta_v (1 + penalty * gap)` at the vertex `beta_v` of the
/// quadratic, with `gap = J_min / (beta_v a)`. Descent is BFGS.
pub fn minimize_charge(m: i64, g: f64, opts: &MinimizeOptions) -> Result<GroundState> {
    if m < 0 || !(g >= 1.0) || !g.is_finite() {
        return Err(CssError::InvalidArgument(format!("ground states need m >= 0 and g >= 1, got m = {m}, g = {g}")));
    }
    opts.validate()?;
    let problem = Problem::new(m, g, opts)?;
    let p0 = problem.seed(opts.seed);
    let (p, iterations, history) = bfgs(&problem, p0, opts)?;
    let eval = problem.evaluate(&p);
    let shape: Vec<Complex64> = eval.u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let unit = EquivariantState::new(m, g, problem.grid.clone(), shape)?;
    let alpha = normalize_to_zero_j(&unit, m, g).unwrap_or_else(|_| {
        let q = j_quadratic(&unit, m, g);
        (q.b() / (2.0 * q.c)).sqrt()
    });
    let profile = unit.scaled(alpha);
    let wave = refine_standing_wave(&profile)?;
    Ok(GroundState { minimized_charge: crate::observables::charge(&profile), wave, iterations, history })
}

/// `-(u'' + u'/r - m^2 u / r^2)`.
fn neg_laplacian(profile: &EquivariantState, m: i64) -> Vec<Complex64> {
    let grid = &profile.grid;
    let r = grid.nodes();
    let mf = m as f64;
    match &profile.plan {
        Some(plan) if plan.order() == m.unsigned_abs() as u32 => {
            plan.laplacian(&profile.u).expect("plan checked on attach").into_iter().map(|v| -v).collect()
        }
        _ => {
            let du = grid.derivative(&profile.u, m).expect("state length matches its grid");
            let ddu = grid.derivative(&du, m + 1).expect("state length matches its grid");
            (0..r.len()).map(|i| -(ddu[i] + du[i] / r[i]) + profile.u[i] * (mf * mf / (r[i] * r[i]))).collect()
        }
    }
}

/// Newton solve of `L u + lambda u = 0` at the frequency `lambda` of the
/// starting profile, on the profile's grid (spectral Laplacian when a plan is
/// attached). Changing `lambda` only rescales the solution (`u -> k u(k r)`,
/// `lambda -> k^2 lambda`), which leaves its charge unchanged.
pub fn refine_standing_wave(start: &EquivariantState) -> Result<StandingWave> {
    let (m, g) = (start.m, start.g);
    let grid = start.grid.clone();
    let n = grid.n();
    let r = grid.nodes().to_vec();
    let w = grid.weights().to_vec();
    let lambda = extract_frequency(start).lambda;

    let mut neg_lap = DMatrix::zeros(n, n);
    let mut cum = DMatrix::zeros(n, n);
    let mut total = vec![0.0; n];
    let mut unit = EquivariantState { u: vec![Complex64::new(0.0, 0.0); n], ..start.clone() };
    let mut ef = vec![0.0; n];
    for j in 0..n {
        unit.u[j] = Complex64::new(1.0, 0.0);
        ef[j] = 1.0;
        for (i, v) in neg_laplacian(&unit, m).iter().enumerate() {
            neg_lap[(i, j)] = v.re;
        }
        let (run, t) = grid.cumulative(&ef);
        for (i, v) in run.iter().enumerate() {
            cum[(i, j)] = *v;
        }
        total[j] = t;
        unit.u[j] = Complex64::new(0.0, 0.0);
        ef[j] = 0.0;
    }
    let norm = |f: &[f64]| f.iter().zip(&w).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
    let residual = |u: &[f64]| -> Vec<f64> {
        let state = EquivariantState { u: u.iter().map(|&v| Complex64::new(v, 0.0)).collect(), ..start.clone() };
        lagrange_operator(&state, m, g).iter().zip(u).map(|(l, v)| l.re + lambda * v).collect()
    };

    let mf = m as f64;
    let mut u: Vec<f64> = start.u.iter().map(|v| v.re).collect();
    let mut f = residual(&u);
    let scale = norm((&neg_lap * DVector::from_column_slice(&u)).as_slice());
    const MAX_ITERATIONS: usize = 40;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        if norm(&f) < 1e-10 * scale {
            converged = true;
            break;
        }
        let state = EquivariantState { u: u.iter().map(|&v| Complex64::new(v, 0.0)).collect(), ..start.clone() };
        let at = compute_a_theta(&state);
        let a0 = compute_a0(&state, &at);
        // d/du of (((m + A_theta)^2 - m^2) / r^2 - g u^2 + A_0) u, with
        // A_theta = -C(u^2)/2 and A_0 = -(total - C) ((m + A_theta) u^2 / r^2)
        let mut jac = neg_lap.clone();
        for i in 0..n {
            let v = ((mf + at[i]).powi(2) - mf * mf) / (r[i] * r[i]) - 3.0 * g * u[i] * u[i] + a0[i] + lambda;
            jac[(i, i)] += v;
        }
        let tail = DMatrix::from_fn(n, n, |i, k| total[k] - cum[(i, k)]);
        let c_u = DMatrix::from_fn(n, n, |k, j| cum[(k, j)] * u[j]);
        let q: Vec<f64> = (0..n).map(|k| u[k] * u[k] / (r[k] * r[k])).collect();
        let tq_cu = &tail * DMatrix::from_fn(n, n, |k, j| q[k] * c_u[(k, j)]);
        for i in 0..n {
            let ai = 2.0 * (mf + at[i]) / (r[i] * r[i]);
            for j in 0..n {
                let direct = -tail[(i, j)] * 2.0 * (mf + at[j]) * u[j] / (r[j] * r[j]);
                jac[(i, j)] += u[i] * (-ai * c_u[(i, j)] + direct + tq_cu[(i, j)]);
            }
        }
        let Some(step) = jac.lu().solve(&DVector::from_iterator(n, f.iter().map(|v| -v))) else {
            break;
        };
        let mut t = 1.0;
        let before = norm(&f);
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let ft = residual(&trial);
            if norm(&ft) < before {
                u = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || t < 1e-3 {
            break;
        }
    }
    // finite-difference operators on graded grids stall at a roundoff floor
    if !converged && !(norm(&f) < 1e-5 * scale) {
        return Err(CssError::NonConvergence { iterations: MAX_ITERATIONS });
    }
    let profile = EquivariantState { u: u.iter().map(|&v| Complex64::new(v, 0.0)).collect(), ..start.clone() };
    let charge = crate::observables::charge(&profile);
    let j_value = j_functional(&profile, m, g);
    let frequency = extract_frequency(&profile).lambda;
    Ok(StandingWave { profile, frequency, charge, j_value })
}

struct Problem {
    m: f64,
    g: f64,
    mu: f64,
    grid: Arc<RadialGrid>,
    r: Vec<f64>,
    lnr: Vec<f64>,
    /// `2 pi` times the `r dr` weights
    w: Vec<f64>,
    /// dense `run_i = sum_j cum[i][j] f_j` for `int_{r_min}^{r_i} f s ds`
    cum: Vec<Vec<f64>>,
    basis: Basis,
}

struct Eval {
    charge: f64,
    /// mean of `ln r` under `|u|^2 dx`
    mean: f64,
    /// `||d_r u||^2`
    k1: f64,
    grad: Vec<f64>,
    u: Vec<f64>,
}

/// Uniform cubic B-splines in `s = ln r`; each node touches four.
struct Basis {
    k: usize,
    first: Vec<usize>,
    val: Vec<[f64; 4]>,
    der: Vec<[f64; 4]>,
    centres: Vec<f64>,
}

/// Centred cubic B-spline and its derivative.
fn bspline(x: f64) -> (f64, f64) {
    let a = x.abs();
    if a < 1.0 {
        ((4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0, -2.0 * x + 1.5 * x * a)
    } else if a < 2.0 {
        let t = 2.0 - a;
        (t * t * t / 6.0, -x.signum() * t * t / 2.0)
    } else {
        (0.0, 0.0)
    }
}

impl Basis {
    fn new(s: &[f64], s0: f64, s1: f64, intervals: usize) -> Self {
        let k = intervals + 3;
        let h = (s1 - s0) / intervals as f64;
        let centres: Vec<f64> = (0..k).map(|j| s0 + (j as f64 - 1.0) * h).collect();
        let mut first = Vec::with_capacity(s.len());
        let mut val = Vec::with_capacity(s.len());
        let mut der = Vec::with_capacity(s.len());
        for &x in s {
            let cell = (((x - s0) / h).floor() as usize).min(k - 4);
            let mut v = [0.0; 4];
            let mut d = [0.0; 4];
            for q in 0..4 {
                let (b, db) = bspline((x - centres[cell + q]) / h);
                v[q] = b;
                d[q] = db / h;
            }
            first.push(cell);
            val.push(v);
            der.push(d);
        }
        Self { k, first, val, der, centres }
    }

    fn apply(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut w = vec![0.0; self.first.len()];
        let mut dw = vec![0.0; self.first.len()];
        for i in 0..w.len() {
            for q in 0..4 {
                let c = p[self.first[i] + q];
                w[i] += self.val[i][q] * c;
                dw[i] += self.der[i][q] * c;
            }
        }
        (w, dw)
    }
}

impl Problem {
    fn new(m: i64, g: f64, opts: &MinimizeOptions) -> Result<Self> {
        let grid = Arc::new(make_grid(opts.n, opts.rmax, GridRequest::Geometric { r_min: opts.r_min }, m)?);
        let r = grid.nodes().to_vec();
        let lnr: Vec<f64> = r.iter().map(|x| x.ln()).collect();
        let w: Vec<f64> = grid.weights().iter().map(|x| TWO_PI * x).collect();
        let n = r.len();
        // columns of the cumulative rule; rows are the running integrals
        let mut cum = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let (run, _) = grid.cumulative(&e);
            for i in 0..n {
                cum[i][j] = run[i];
            }
            e[j] = 0.0;
        }
        let basis = Basis::new(&lnr, opts.r_min.ln(), opts.rmax.ln(), opts.knots);
        Ok(Self { m: m as f64, g, mu: opts.penalty, grid, r, lnr, w, cum, basis })
    }

    /// Algebraically decaying seed `r^m (1 + (r/s)^2)^-k` with random `s`, `k`
    /// and spline noise, centred and normalized.
    fn seed(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width: f64 = rng.gen_range(-0.5f64..0.5).exp();
        let power = 0.5 * (self.m + 1.0) + rng.gen_range(0.5..1.5);
        let shape = |s: f64| -power * (1.0 + (2.0 * (s - width.ln())).exp()).ln();
        let mut p: Vec<f64> = self.basis.centres.iter().map(|&s| shape(s)).collect();
        for (c, s) in p.iter_mut().zip(&self.basis.centres) {
            *c += rng.gen_range(-0.1..0.1) * crate::special::smooth_cutoff(s.abs() / 2.0);
        }
        // centre ln r under |u|^2 dx by a critical rescaling u -> k u(k r)
        let (u, _) = self.profile(&p);
        let rho: Vec<f64> = u.iter().map(|v| v * v).collect();
        let q: f64 = self.w.iter().zip(&rho).map(|(w, d)| w * d).sum();
        let mean: f64 = self.w.iter().zip(&rho).zip(&self.lnr).map(|((w, d), l)| w * d * l).sum::<f64>() / q;
        let (w0, _) = self.basis.apply(&p);
        let c = mean;
        // ln(u/r^m) at s for the rescaled profile is w(s + c) + (m + 1) c
        let ds = self.lnr[1] - self.lnr[0];
        let shifted: Vec<f64> = self
            .basis
            .centres
            .iter()
            .map(|&s| {
                let x = ((s + c - self.lnr[0]) / ds).clamp(0.0, (w0.len() - 1) as f64);
                let i = (x.floor() as usize).min(w0.len() - 2);
                let t = x - i as f64;
                (1.0 - t) * w0[i] + t * w0[i + 1] + (self.m + 1.0) * c
            })
            .collect();
        let mut p = shifted;
        let (_, du) = self.profile(&p);
        let k1: f64 = self.w.iter().zip(&du).map(|(w, d)| w * d * d).sum();
        let shift = -0.5 * k1.ln();
        p.iter_mut().for_each(|c| *c += shift);
        p
    }

    /// `(u, du/dr)` at the nodes.
    fn profile(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (w, dw) = self.basis.apply(p);
        let u: Vec<f64> = (0..w.len()).map(|i| self.r[i].powf(self.m) * w[i].exp()).collect();
        let du = (0..w.len()).map(|i| u[i] * (self.m + dw[i]) / self.r[i]).collect();
        (u, du)
    }

    /// Dilates `u -> u(k r)` by whole knot spacings when the mean log-radius
    /// has drifted by more than one spacing. With the knot spacing a whole
    /// number of grid cells this is exact away from the two ends.
    fn recentre(&self, p: &mut [f64], mean: f64) -> bool {
        let h = self.basis.centres[1] - self.basis.centres[0];
        let j = (mean / h).round() as i64;
        if j == 0 || mean.abs() < h {
            return false;
        }
        let k = p.len() as i64;
        let old = p.to_vec();
        let at = |i: i64| {
            if i < 0 {
                old[0] + i as f64 * (old[1] - old[0])
            } else if i >= k {
                old[k as usize - 1] + (i - k + 1) as f64 * (old[k as usize - 1] - old[k as usize - 2])
            } else {
                old[i as usize]
            }
        };
        for (i, c) in p.iter_mut().enumerate() {
            *c = at(i as i64 + j) + self.m * j as f64 * h;
        }
        true
    }

    fn cum_apply(&self, f: &[f64]) -> Vec<f64> {
        self.cum.iter().map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum()).collect()
    }

    fn cum_transpose(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for (row, fi) in self.cum.iter().zip(f) {
            if *fi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * fi;
                }
            }
        }
        out
    }

    fn evaluate(&self, p: &[f64]) -> Eval {
        let (m, g, mu) = (self.m, self.g, self.mu);
        let n = self.r.len();
        let (u, du) = self.profile(p);
        let rho: Vec<f64> = u.iter().map(|v| v * v).collect();
        let s: Vec<f64> = self.cum_apply(&rho).into_iter().map(|v| 0.5 * v).collect();
        let inv2: Vec<f64> = self.r.iter().map(|r| 1.0 / (r * r)).collect();
        let w = &self.w;
        let sum = |f: &dyn Fn(usize) -> f64| (0..n).map(|i| w[i] * f(i)).sum::<f64>();

        let q = sum(&|i| rho[i]);
        let k1 = sum(&|i| du[i] * du[i]);
        let a = k1 + m * m * sum(&|i| rho[i] * inv2[i]);
        let b = sum(&|i| 2.0 * m * s[i] * rho[i] * inv2[i] + 0.5 * g * rho[i] * rho[i]);
        let c = sum(&|i| s[i] * s[i] * rho[i] * inv2[i]);

        // beta as a function of (a, b, c), and its partials
        let d = b * b - 4.0 * a * c;
        let (beta, fa, fb, fc) = if d >= 0.0 {
            let sd = d.sqrt();
            let beta = 2.0 * a / (b + sd);
            if sd > 0.0 {
                (beta, 1.0 / sd, -beta / sd, beta * beta / sd)
            } else {
                (beta, 0.0, 0.0, 0.0)
            }
        } else {
            let bv = b / (2.0 * c);
            let gap = 1.0 - b * b / (4.0 * a * c);
            let scale = 1.0 + mu * gap;
            let (va, vb, vc) = (0.0, 1.0 / (2.0 * c), -b / (2.0 * c * c));
            let (ga, gb, gc) = (b * b / (4.0 * a * a * c), -b / (2.0 * a * c), b * b / (4.0 * a * c * c));
            (bv * scale, scale * va + mu * bv * ga, scale * vb + mu * bv * gb, scale * vc + mu * bv * gc)
        };
        let charge = q * beta;

        let mean = sum(&|i| self.lnr[i] * rho[i]) / q;

        // partials with respect to rho and du
        let (ca, cb, cc) = (q * fa, q * fb, q * fc);
        let mut g_rho = vec![0.0; n];
        let mut g_du = vec![0.0; n];
        let mut tb = vec![0.0; n];
        let mut tc = vec![0.0; n];
        for i in 0..n {
            g_rho[i] = w[i]
                * (beta
                    + ca * m * m * inv2[i]
                    + cb * (2.0 * m * s[i] * inv2[i] + g * rho[i])
                    + cc * s[i] * s[i] * inv2[i]);
            g_du[i] = w[i] * du[i] * 2.0 * ca;
            tb[i] = w[i] * 2.0 * m * rho[i] * inv2[i];
            tc[i] = w[i] * 2.0 * s[i] * rho[i] * inv2[i];
        }
        let back: Vec<f64> = (0..n).map(|i| 0.5 * (cb * tb[i] + cc * tc[i])).collect();
        let back = self.cum_transpose(&back);
        let mut grad = vec![0.0; self.basis.k];
        for i in 0..n {
            let gu = 2.0 * u[i] * (g_rho[i] + back[i]);
            // d u / d w = u, d du / d w = du, d du / d w' = u / r
            let gw = gu * u[i] + g_du[i] * du[i];
            let gdw = g_du[i] * u[i] / self.r[i];
            for k in 0..4 {
                grad[self.basis.first[i] + k] += gw * self.basis.val[i][k] + gdw * self.basis.der[i][k];
            }
        }
        Eval { charge, mean, k1, grad, u }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with Armijo backtracking. Returns the final point, iteration count
/// and the charge after each iteration.
fn bfgs(problem: &Problem, mut x: Vec<f64>, opts: &MinimizeOptions) -> Result<(Vec<f64>, usize, Vec<f64>)> {
    let k = x.len();
    let identity = |scale: f64| {
        let mut h = vec![vec![0.0; k]; k];
        (0..k).for_each(|i| h[i][i] = scale);
        h
    };
    let mut h = identity(1.0);
    let mut cur = problem.evaluate(&x);
    let mut history = vec![cur.charge];
    let mut fresh = true;
    for it in 1..=opts.max_iterations {
        let dir: Vec<f64> = h.iter().map(|row| -dot(row, &cur.grad)).collect();
        let slope = dot(&dir, &cur.grad);
        let (dir, slope) = if slope < 0.0 {
            (dir, slope)
        } else {
            h = identity(1.0);
            let d: Vec<f64> = cur.grad.iter().map(|v| -v).collect();
            let s = -dot(&cur.grad, &cur.grad);
            (d, s)
        };
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let e = problem.evaluate(&trial);
            if e.charge.is_finite() && e.charge <= cur.charge + 1e-4 * t * slope {
                next = Some((trial, e));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, en)) = next else {
            if fresh {
                // no descent even along the gradient: stationary to rounding
                return Ok((x, it - 1, history));
            }
            h = identity(1.0);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = en.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                h = identity(sy / dot(&y, &y));
            }
            let hy: Vec<f64> = h.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..k {
                for j in 0..k {
                    h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        x = xn;
        cur = en;
        // the charge is invariant under u -> k u; restore ||d_r u|| = 1 exactly
        let shift = -0.5 * cur.k1.ln();
        x.iter_mut().for_each(|c| *c += shift);
        if problem.recentre(&mut x, cur.mean) {
            cur = problem.evaluate(&x);
            h = identity(1.0);
            fresh = true;
        }
        history.push(cur.charge);
        if history.len() > opts.window {
            let old = history[history.len() - 1 - opts.window];
            if (old - cur.charge) < opts.rel_tol * cur.charge.abs() {
                return Ok((x, it, history));
            }
        }
    }
    Err(CssError::NonConvergence { iterations: opts.max_iterations })
}
