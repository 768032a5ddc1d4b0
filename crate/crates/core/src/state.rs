//! The reduced unknown `u(r)` with `phi = e^{i m theta} u(r)`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::{RadialGrid, SpectralPlan};
use crate::error::{CssError, Result};

#[derive(Debug, Clone)]
pub struct EquivariantState {
    pub m: i64,
    pub g: f64,
    pub grid: Arc<RadialGrid>,
    pub u: Vec<Complex64>,
    pub t: f64,
    /// Transform plan used for spectral derivatives when present.
    pub plan: Option<Arc<SpectralPlan>>,
}

impl EquivariantState {
    pub fn new(m: i64, g: f64, grid: Arc<RadialGrid>, u: Vec<Complex64>) -> Result<Self> {
        grid.check_len(u.len())?;
        if u.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(CssError::InvalidArgument("profile has non-finite samples".into()));
        }
        Ok(Self { m, g, grid, u, t: 0.0, plan: None })
    }

    /// Samples `f(r)` at the grid nodes.
    pub fn from_fn(m: i64, g: f64, grid: Arc<RadialGrid>, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let u = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(m, g, grid, u)
    }

    pub fn zero(m: i64, g: f64, grid: Arc<RadialGrid>) -> Self {
        let n = grid.n();
        Self { m, g, grid, u: vec![Complex64::new(0.0, 0.0); n], t: 0.0, plan: None }
    }

    /// Attach a transform plan; it must be built on this state's grid and order.
    pub fn with_plan(mut self, plan: Arc<SpectralPlan>) -> Result<Self> {
        check_plan(&self, &plan)?;
        self.plan = Some(plan);
        Ok(self)
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn density(&self) -> Vec<f64> {
        self.u.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `du/dr`: spectral with an attached plan, finite differences otherwise.
    pub fn radial_derivative(&self) -> Vec<Complex64> {
        match &self.plan {
            Some(p) => p.derivative(&self.u).expect("plan checked on attach"),
            None => self.grid.derivative(&self.u, self.m).expect("length checked on construction"),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut s = self.clone();
        s.u.iter_mut().for_each(|v| *v *= alpha);
        s
    }

    /// Rolls the profile smoothly to zero between `start * rmax` and `rmax`.
    /// Slowly decaying tails otherwise meet the outer boundary with a jump.
    pub fn tapered(&self, start: f64) -> Self {
        let rmax = self.grid.rmax();
        let r0 = start * rmax;
        let mut s = self.clone();
        for (v, &r) in s.u.iter_mut().zip(self.grid.nodes()) {
            if r > r0 {
                *v *= crate::special::smooth_cutoff(1.0 + (r - r0) / (rmax - r0));
            }
        }
        s
    }

    pub fn with_coupling(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    /// A random smooth, well-localized profile of the form
    /// `r^|m| sum_k c_k exp(-a_k r^2) exp(i b r^2)`.
    pub fn random_smooth(m: i64, g: f64, grid: Arc<RadialGrid>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(Complex64, f64)> = (0..3)
            .map(|_| {
                let c = Complex64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
                (c, rng.gen_range(0.4..2.5))
            })
            .collect();
        let chirp = rng.gen_range(-0.5..0.5);
        let k = m.unsigned_abs() as i32;
        let u = grid
            .nodes()
            .iter()
            .map(|&r| {
                let s: Complex64 = terms.iter().map(|(c, a)| c * (-a * r * r).exp()).sum();
                s * r.powi(k) * Complex64::from_polar(1.0, chirp * r * r)
            })
            .collect();
        Self { m, g, grid, u, t: 0.0, plan: None }
    }
}

pub(crate) fn check_plan(state: &EquivariantState, plan: &SpectralPlan) -> Result<()> {
    if !state.grid.same_layout(plan.grid()) || plan.order() != state.m.unsigned_abs() as u32 {
        return Err(CssError::PlanMismatch(format!(
            "state (m = {}, {} x {}) does not match plan (order {}, {} x {})",
            state.m,
            state.grid.kind().label(),
            state.grid.n(),
            plan.order(),
            plan.grid().kind().label(),
            plan.grid().n()
        )));
    }
    Ok(())
}

/// Exact free Schrödinger evolution of a state by `dt`.
pub fn free_propagate(state: &EquivariantState, dt: f64, plan: &SpectralPlan) -> Result<EquivariantState> {
    check_plan(state, plan)?;
    let mut out = state.clone();
    out.u = plan.free_propagate_profile(&state.u, dt)?;
    out.t += dt;
    Ok(out)
}
