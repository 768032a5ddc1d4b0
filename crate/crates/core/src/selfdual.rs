//! The explicit self-dual soliton family and the focusing-threshold experiment.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{build_spectral_plan, make_grid, GridRequest, RadialGrid, SpectralPlan};
use crate::dynamics::{classify_endstate, evolve, Absorber, ClassifierThresholds, EndState, EvolveOptions};
use crate::error::{CssError, Result};
use crate::gauge::{compute_gauge, d_plus};
use crate::observables::{charge, energy_direct, kinetic_parts};
use crate::state::EquivariantState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub m: i64,
    pub lambda: f64,
}

impl SolitonParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 0 || !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(CssError::InvalidArgument(format!(
                "solitons need m >= 0 and lambda > 0, got m = {}, lambda = {}",
                self.m, self.lambda
            )));
        }
        Ok(())
    }

    /// `sqrt(8) lambda (m+1) (lambda r)^m / (1 + (lambda r)^{2m+2})`.
    pub fn value(&self, r: f64) -> f64 {
        let m = self.m as f64;
        let x = self.lambda * r;
        8f64.sqrt() * self.lambda * (m + 1.0) * x.powf(m) / (1.0 + x.powf(2.0 * m + 2.0))
    }

    /// Charge `8 pi (m + 1)`, independent of `lambda`.
    pub fn charge(&self) -> f64 {
        8.0 * std::f64::consts::PI * (self.m as f64 + 1.0)
    }
}

/// Samples the soliton on `grid` with `g = 1`, `t = 0`.
pub fn soliton_profile(params: SolitonParams, grid: Arc<RadialGrid>) -> Result<EquivariantState> {
    params.validate()?;
    EquivariantState::from_fn(params.m, 1.0, grid, |r| Complex64::new(params.value(r), 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfDualResiduals {
    /// `||D_+ u|| / ||d_r u||`
    pub r_dplus: f64,
    /// `||A_0 - |u|^2/2|| / |||u|^2/2||`
    pub r_a0: f64,
    /// `|E| / kinetic`
    pub r_energy: f64,
}

impl SelfDualResiduals {
    pub fn max(&self) -> f64 {
        self.r_dplus.max(self.r_a0).max(self.r_energy)
    }
}

pub fn selfdual_residuals(state: &EquivariantState) -> Result<SelfDualResiduals> {
    if state.g != 1.0 {
        return Err(CssError::WrongCoupling { expected: 1.0, got: state.g });
    }
    if state.u.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Ok(SelfDualResiduals { r_dplus: 0.0, r_a0: 0.0, r_energy: 0.0 });
    }
    let grid = &state.grid;
    let norm = |f: &[f64]| grid.integrate(f).map(f64::sqrt);
    let fields = compute_gauge(state);
    let dp: Vec<f64> = d_plus(state, &fields).iter().map(|z| z.norm_sqr()).collect();
    let dr: Vec<f64> = state.radial_derivative().iter().map(|z| z.norm_sqr()).collect();
    let half: Vec<f64> = state.u.iter().map(|z| 0.5 * z.norm_sqr()).collect();
    let diff: Vec<f64> = fields.a0.iter().zip(&half).map(|(a, h)| (a - h).powi(2)).collect();
    let half2: Vec<f64> = half.iter().map(|h| h * h).collect();
    let kinetic = 0.5 * kinetic_parts(state, &fields).total();
    Ok(SelfDualResiduals {
        r_dplus: norm(&dp)? / norm(&dr)?,
        r_a0: norm(&diff)? / norm(&half2)?,
        r_energy: energy_direct(state, &fields).abs() / kinetic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeFamily {
    /// `alpha * soliton(m, 1)`
    ScaledSoliton,
    /// `alpha * r^m exp(-r^2 / 2)`
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    pub n: usize,
    pub rmax: f64,
    pub dt: f64,
    pub t_final: f64,
    pub sample_every: usize,
    /// Initial amplitude bracket.
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Stop once `(Q_hi - Q_lo) / Q_mid` drops below this.
    pub rel_tol: f64,
    /// Probes per round, run concurrently.
    pub probes_per_round: usize,
    pub max_rounds: usize,
    pub thresholds: ClassifierThresholds,
    pub absorber: Option<Absorber>,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            n: 512,
            rmax: 40.0,
            dt: 2e-3,
            t_final: 10.0,
            sample_every: 25,
            alpha_lo: 0.6,
            alpha_hi: 1.6,
            rel_tol: 0.05,
            probes_per_round: 3,
            max_rounds: 8,
            thresholds: ClassifierThresholds::default(),
            absorber: Some(Absorber::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub alpha: f64,
    pub charge: f64,
    pub outcome: EndState,
    /// Whether the outcome needed the longer, finer retry.
    pub retried: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub m: i64,
    pub g: f64,
    pub family: ProbeFamily,
    pub critical_charge: f64,
    /// `(lo, hi)` charges.
    pub bracket: (f64, f64),
    pub runs: Vec<Probe>,
}

struct ProbeSetup {
    base: EquivariantState,
    plan: Arc<SpectralPlan>,
    base_charge: f64,
}

impl ProbeSetup {
    fn new(m: i64, g: f64, family: ProbeFamily, opts: &ThresholdOptions) -> Result<Self> {
        let grid = Arc::new(make_grid(opts.n, opts.rmax, GridRequest::BesselZero, m)?);
        let plan = Arc::new(build_spectral_plan(grid.clone(), m)?);
        let base = match family {
            ProbeFamily::ScaledSoliton => soliton_profile(SolitonParams { m, lambda: 1.0 }, grid)?,
            ProbeFamily::Gaussian => {
                EquivariantState::from_fn(m, g, grid, |r| Complex64::new(r.powi(m as i32) * (-r * r / 2.0).exp(), 0.0))?
            }
        }
        .with_coupling(g)
        .with_plan(plan.clone())?;
        let base_charge = charge(&base);
        Ok(Self { base, plan, base_charge })
    }

    fn run(&self, alpha: f64, opts: &ThresholdOptions) -> Result<Probe> {
        let state = self.base.scaled(alpha);
        let mut ev = EvolveOptions {
            dt: opts.dt,
            t_final: opts.t_final,
            sample_every: opts.sample_every,
            snapshot_every: 0,
            thresholds: opts.thresholds,
            absorber: opts.absorber,
            halt_on_blowup: true,
            ..Default::default()
        };
        let classify = |ev: &EvolveOptions| -> Result<EndState> {
            match evolve(&state, ev, &self.plan) {
                Ok(traj) => Ok(classify_endstate(&traj)),
                // runaway concentration beyond grid resolution
                Err(CssError::IntegrationDiverged { .. }) => Ok(EndState::Blowup),
                Err(e) => Err(e),
            }
        };
        let mut outcome = classify(&ev)?;
        let mut retried = false;
        if outcome == EndState::Undecided {
            ev.t_final *= 2.0;
            ev.dt *= 0.5;
            ev.sample_every *= 2;
            outcome = classify(&ev)?;
            retried = true;
        }
        log::debug!("probe alpha = {alpha:.5}: {outcome:?}");
        Ok(Probe { alpha, charge: alpha * alpha * self.base_charge, outcome, retried })
    }
}

/// Brackets the critical charge between dispersing and blowup probes by
/// repeated k-section in the amplitude multiplier.
pub fn threshold_bisection(m: i64, g: f64, family: ProbeFamily, opts: &ThresholdOptions) -> Result<ThresholdEstimate> {
    if m < 0 || g < 1.0 {
        return Err(CssError::InvalidArgument(format!(
            "threshold search needs m >= 0 and g >= 1, got m = {m}, g = {g}"
        )));
    }
    if !(opts.alpha_lo > 0.0 && opts.alpha_hi > opts.alpha_lo) || opts.probes_per_round == 0 {
        return Err(CssError::InvalidArgument("need 0 < alpha_lo < alpha_hi and at least one probe per round".into()));
    }
    let setup = ProbeSetup::new(m, g, family, opts)?;
    let mut runs: Vec<Probe> =
        [opts.alpha_lo, opts.alpha_hi].par_iter().map(|&a| setup.run(a, opts)).collect::<Result<_>>()?;
    let undecided_check = |runs: &[Probe]| -> Result<()> {
        let u = runs.iter().filter(|p| p.outcome == EndState::Undecided).count();
        if 2 * u > runs.len() {
            return Err(CssError::UndecidedDominated { undecided: u, total: runs.len() });
        }
        Ok(())
    };
    if runs[0].outcome != EndState::Dispersing || runs[1].outcome != EndState::Blowup {
        undecided_check(&runs)?;
        return Err(CssError::BracketNotFound(format!(
            "endpoints classify as {:?} (alpha = {}) and {:?} (alpha = {})",
            runs[0].outcome, opts.alpha_lo, runs[1].outcome, opts.alpha_hi
        )));
    }
    let (mut lo, mut hi) = (opts.alpha_lo, opts.alpha_hi);
    let k = opts.probes_per_round;
    for _ in 0..opts.max_rounds {
        let width = (hi * hi - lo * lo) / (0.5 * (hi * hi + lo * lo));
        if width < opts.rel_tol {
            break;
        }
        let alphas: Vec<f64> = (1..=k)
            .map(|i| lo + (hi - lo) * i as f64 / (k + 1) as f64)
            .filter(|a| runs.iter().all(|p| (p.alpha - a).abs() > 1e-12 * a))
            .collect();
        let before = (lo, hi);
        let round: Vec<Probe> = alphas.par_iter().map(|&a| setup.run(a, opts)).collect::<Result<_>>()?;
        // new bracket: smallest blowup, then the largest dispersing probe below it
        if let Some(b) = round.iter().filter(|p| p.outcome == EndState::Blowup).map(|p| p.alpha).reduce(f64::min) {
            hi = hi.min(b);
        }
        if let Some(d) =
            round.iter().filter(|p| p.outcome == EndState::Dispersing && p.alpha < hi).map(|p| p.alpha).reduce(f64::max)
        {
            lo = lo.max(d);
        }
        let stalled = lo == before.0 && hi == before.1;
        runs.extend(round);
        undecided_check(&runs)?;
        // an undecided band inside the bracket cannot be narrowed further
        if stalled {
            break;
        }
    }
    runs.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let (q_lo, q_hi) = (lo * lo * setup.base_charge, hi * hi * setup.base_charge);
    Ok(ThresholdEstimate { m, g, family, critical_charge: 0.5 * (q_lo + q_hi), bracket: (q_lo, q_hi), runs })
}
