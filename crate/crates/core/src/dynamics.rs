//! Strang-split evolution of `i u_t + Delta_m u = V u`, trajectory
//! recording, identity checks and end-state classification.
//!
//! The potential `V` is real and depends on `u` only through `|u|`, so the
//! potential substep `u <- exp(-i V dt / 2) u` is an exact flow; the kinetic
//! substep is the exact spectral propagator.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::SpectralPlan;
use crate::error::{CssError, Result};
use crate::gauge::{compute_a0, compute_a_theta, compute_gauge, potential, GaugeFields};
use crate::observables::{diagnostics_with, energy_direct, kinetic_parts, morawetz_rhs, DiagnosticsRecord};
use crate::special::smooth_cutoff_jet;
use crate::state::{check_plan, EquivariantState};

/// Finite-time surrogates for dispersion and blowup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierThresholds {
    /// Dispersing needs `max|u|` at the end below `peak / decay_factor`.
    pub decay_factor: f64,
    /// Blowup needs `max|u|` above `growth_factor` times its initial value.
    pub growth_factor: f64,
    /// ... with at least `core_fraction` of the charge on the first `core_cells` nodes.
    pub core_cells: usize,
    pub core_fraction: f64,
    /// Trailing fraction of the run over which the L^4 accumulation rate must decay.
    pub window_fraction: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        Self { decay_factor: 4.0, growth_factor: 10.0, core_cells: 8, core_fraction: 0.5, window_fraction: 1.0 / 3.0 }
    }
}

/// Smooth damping `exp(-strength * sigma(r) * dt)` on the outer `width` fraction of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Absorber {
    pub width: f64,
    pub strength: f64,
}

impl Default for Absorber {
    fn default() -> Self {
        Self { width: 0.1, strength: 4.0 }
    }
}

impl Absorber {
    fn profile(&self, r: f64, rmax: f64) -> f64 {
        let start = rmax * (1.0 - self.width);
        if r <= start {
            return 0.0;
        }
        // 1 - psi maps [1, 2] onto a smooth ramp from 0 to 1
        1.0 - crate::special::smooth_cutoff(1.0 + (r - start) / (rmax - start))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Steps between diagnostic rows.
    pub sample_every: usize,
    /// Diagnostic rows between stored snapshots (0 keeps only the initial and final states).
    pub snapshot_every: usize,
    pub thresholds: ClassifierThresholds,
    /// Drop the potential: pure free evolution.
    pub free_only: bool,
    /// Keep `A_theta`, `A_0` at their initial values; only `-g |u|^2` is refreshed.
    pub freeze_gauge: bool,
    pub absorber: Option<Absorber>,
    pub v2_cap: Option<f64>,
    /// Stop as soon as the blowup criterion is met.
    pub halt_on_blowup: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            sample_every: 10,
            snapshot_every: 0,
            thresholds: ClassifierThresholds::default(),
            free_only: false,
            freeze_gauge: false,
            absorber: None,
            v2_cap: None,
            halt_on_blowup: true,
        }
    }
}

impl EvolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CssError::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(CssError::InvalidArgument(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.sample_every == 0 {
            return Err(CssError::InvalidArgument("sample_every must be at least 1".into()));
        }
        if let Some(a) = self.absorber {
            if !(a.width > 0.0 && a.width < 1.0 && a.strength >= 0.0) {
                return Err(CssError::InvalidArgument(format!("bad absorber {a:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// `max|u|` first fell below `peak / decay_factor`.
    DecayReached,
    /// Blowup criterion met.
    Blowup,
    /// Moment cap exceeded; the run stops.
    MomentOverflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndState {
    Dispersing,
    Blowup,
    Undecided,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Stored snapshots; `snapshot_rows[k]` is the record row of `states[k]`.
    pub states: Vec<EquivariantState>,
    pub snapshot_rows: Vec<usize>,
    pub records: Vec<DiagnosticsRecord>,
    pub dt: f64,
    pub events: Vec<(f64, EventKind)>,
    /// Charge fraction on the first `core_cells` nodes, per record.
    pub core_fraction: Vec<f64>,
    /// Energy driving the virial identity per record (free energy for free runs).
    pub virial_energy: Vec<f64>,
    /// Right side of the Morawetz identity per record.
    pub morawetz: Vec<f64>,
    pub m: i64,
    pub thresholds: ClassifierThresholds,
}

impl Trajectory {
    pub fn final_state(&self) -> &EquivariantState {
        self.states.last().expect("trajectory keeps its final state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

/// Potential of the current flow, honouring the ablation toggles.
struct Flow<'a> {
    plan: &'a SpectralPlan,
    free_only: bool,
    frozen: Option<(Vec<f64>, Vec<f64>)>,
    damping: Option<Vec<f64>>,
}

impl<'a> Flow<'a> {
    fn new(state: &EquivariantState, plan: &'a SpectralPlan, opts: &EvolveOptions) -> Self {
        let frozen = opts.freeze_gauge.then(|| {
            let a = compute_a_theta(state);
            let a0 = compute_a0(state, &a);
            (a, a0)
        });
        let damping = opts
            .absorber
            .map(|ab| state.nodes().iter().map(|&r| ab.strength * ab.profile(r, state.grid.rmax())).collect());
        Self { plan, free_only: opts.free_only, frozen, damping }
    }

    fn potential(&self, state: &EquivariantState) -> Vec<f64> {
        if self.free_only {
            return vec![0.0; state.u.len()];
        }
        match &self.frozen {
            Some((a, a0)) => potential(state, a, a0),
            None => compute_gauge(state).potential,
        }
    }

    fn rotate(&self, state: &mut EquivariantState, v: &[f64], tau: f64) {
        for (i, u) in state.u.iter_mut().enumerate() {
            let decay = self.damping.as_ref().map_or(0.0, |d| d[i]);
            *u *= Complex64::from_polar((-decay * tau).exp(), -v[i] * tau);
        }
    }

    /// One Strang step; `v` holds the potential of the incoming state and is
    /// replaced by that of the outgoing state.
    fn step(&self, state: &mut EquivariantState, v: &mut Vec<f64>, dt: f64) -> Result<()> {
        self.rotate(state, v, 0.5 * dt);
        state.u = self.plan.free_propagate_profile(&state.u, dt)?;
        *v = self.potential(state);
        self.rotate(state, v, 0.5 * dt);
        state.t += dt;
        if state.u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || v.iter().any(|x| !x.is_finite()) {
            return Err(CssError::IntegrationDiverged { t: state.t });
        }
        Ok(())
    }
}

/// One Strang step `exp(-i V dt/2) exp(i Delta dt) exp(-i V dt/2)` with `V`
/// recomputed before each half rotation.
pub fn step_strang(state: &EquivariantState, dt: f64, plan: &SpectralPlan) -> Result<EquivariantState> {
    check_plan(state, plan)?;
    let opts = EvolveOptions { dt, ..Default::default() };
    let flow = Flow::new(state, plan, &opts);
    let mut out = state.clone();
    let mut v = flow.potential(&out);
    flow.step(&mut out, &mut v, dt)?;
    Ok(out)
}

fn core_fraction(state: &EquivariantState, cells: usize) -> f64 {
    let w = state.grid.density_weights();
    let total: f64 = state.u.iter().zip(w).map(|(u, w)| w * u.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let core: f64 = state.u.iter().zip(w).take(cells).map(|(u, w)| w * u.norm_sqr()).sum();
    core / total
}

fn free_energy(state: &EquivariantState) -> f64 {
    let zero = GaugeFields {
        a_theta: vec![0.0; state.u.len()],
        a0: vec![0.0; state.u.len()],
        potential: vec![0.0; state.u.len()],
    };
    0.5 * kinetic_parts(state, &zero).total()
}

/// Integrate `state` to `opts.t_final`, sampling diagnostics every
/// `opts.sample_every` steps.
pub fn evolve(state: &EquivariantState, opts: &EvolveOptions, plan: &SpectralPlan) -> Result<Trajectory> {
    opts.validate()?;
    check_plan(state, plan)?;
    // diagnostics use the state's attached plan for derivatives when present
    let mut cur = state.clone();
    let flow = Flow::new(state, plan, opts);
    let steps = (opts.t_final / opts.dt).round().max(1.0) as usize;
    let th = opts.thresholds;
    let mut traj = Trajectory {
        states: vec![cur.clone()],
        snapshot_rows: vec![0],
        records: Vec::new(),
        dt: opts.dt,
        events: Vec::new(),
        core_fraction: Vec::new(),
        virial_energy: Vec::new(),
        morawetz: Vec::new(),
        m: state.m,
        thresholds: th,
    };
    let sample_dt = opts.dt * opts.sample_every as f64;
    let mut v = flow.potential(&cur);
    let initial_max = cur.u.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let mut peak = initial_max;
    let mut decay_seen = false;

    let mut record = |cur: &EquivariantState, traj: &mut Trajectory| -> Result<bool> {
        let fields = compute_gauge(cur);
        let mut rec = match diagnostics_with(cur, &fields, opts.v2_cap) {
            Ok(r) => r,
            Err(CssError::MomentOverflow { .. }) => {
                traj.events.push((cur.t, EventKind::MomentOverflow));
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let (e_virial, mora) = if opts.free_only {
            let zero = vec![0.0; cur.u.len()];
            let free = GaugeFields { a_theta: zero.clone(), a0: zero.clone(), potential: zero };
            let mut free_state = cur.clone();
            free_state.g = 0.0;
            (free_energy(cur), morawetz_rhs(&free_state, &free).value)
        } else {
            (rec.energy_direct, morawetz_rhs(cur, &fields).value)
        };
        let n = traj.records.len();
        if n >= 2 {
            let (a, b) = (traj.records[n - 2].v2, traj.records[n - 1].v2);
            traj.records[n - 1].virial_residual =
                (rec.v2 - 2.0 * b + a) / (sample_dt * sample_dt) - 8.0 * traj.virial_energy[n - 1];
        }
        rec.virial_residual = f64::NAN;
        traj.records.push(rec);
        traj.core_fraction.push(core_fraction(cur, th.core_cells));
        traj.virial_energy.push(e_virial);
        traj.morawetz.push(mora);
        peak = peak.max(rec.max_abs_u);
        if !decay_seen && rec.max_abs_u <= peak / th.decay_factor {
            decay_seen = true;
            traj.events.push((cur.t, EventKind::DecayReached));
        }
        let blown =
            rec.max_abs_u >= th.growth_factor * initial_max && *traj.core_fraction.last().unwrap() >= th.core_fraction;
        if blown {
            traj.events.push((cur.t, EventKind::Blowup));
            return Ok(!opts.halt_on_blowup);
        }
        Ok(true)
    };

    if !record(&cur, &mut traj)? {
        return Ok(traj);
    }
    let mut rows_since_snapshot = 0;
    for k in 1..=steps {
        flow.step(&mut cur, &mut v, opts.dt)?;
        if k % opts.sample_every == 0 || k == steps {
            let go_on = record(&cur, &mut traj)?;
            rows_since_snapshot += 1;
            let last = k == steps || !go_on;
            if last || (opts.snapshot_every > 0 && rows_since_snapshot >= opts.snapshot_every) {
                rows_since_snapshot = 0;
                traj.states.push(cur.clone());
                traj.snapshot_rows.push(traj.records.len() - 1);
            }
            if !go_on {
                break;
            }
        }
    }
    if *traj.snapshot_rows.last().unwrap() != traj.records.len() - 1 {
        traj.states.push(cur);
        traj.snapshot_rows.push(traj.records.len() - 1);
    }
    Ok(traj)
}

/// One identity-check sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub t: f64,
    /// Centred second difference of the moment.
    pub second_difference: f64,
    /// The identity's right side at the same time.
    pub expected: f64,
    pub residual: f64,
}

fn uniform_spacing(traj: &Trajectory) -> Result<f64> {
    let t = traj.times();
    if t.len() < 5 {
        return Err(CssError::TooFewSamples { need: 5, have: t.len() });
    }
    let h = t[1] - t[0];
    if t.windows(2).any(|p| ((p[1] - p[0]) - h).abs() > 1e-9 * h.abs().max(1e-300)) {
        return Err(CssError::NonuniformSampling);
    }
    Ok(h)
}

fn second_differences(
    traj: &Trajectory,
    moment: impl Fn(&DiagnosticsRecord) -> f64,
    rhs: &[f64],
) -> Result<Vec<IdentityResidual>> {
    let h = uniform_spacing(traj)?;
    let r = &traj.records;
    Ok((1..r.len() - 1)
        .map(|k| {
            let d2 = (moment(&r[k + 1]) - 2.0 * moment(&r[k]) + moment(&r[k - 1])) / (h * h);
            IdentityResidual { t: r[k].t, second_difference: d2, expected: rhs[k], residual: d2 - rhs[k] }
        })
        .collect())
}

/// `d^2 v2 / dt^2 - 8 E` at every interior sample.
pub fn check_virial(traj: &Trajectory) -> Result<Vec<IdentityResidual>> {
    let rhs: Vec<f64> = traj.virial_energy.iter().map(|e| 8.0 * e).collect();
    second_differences(traj, |r| r.v2, &rhs)
}

/// `d^2 v1 / dt^2` minus the Morawetz right side at every interior sample.
/// Radial runs are rejected: the `|u|^2 / r^2` term is not integrable at `m = 0`.
pub fn check_morawetz(traj: &Trajectory) -> Result<Vec<IdentityResidual>> {
    if traj.m == 0 {
        return Err(CssError::InvalidArgument("the Morawetz check needs m != 0".into()));
    }
    second_differences(traj, |r| r.v1, &traj.morawetz)
}

/// Both sides of the localized virial identity for
/// `I_R = 2 pi int T_0r chi_R r dr` with `chi_R(r) = psi(r / R)`.
///
/// `lhs` integrates the pointwise expression for `d_t T_0r` against
/// `chi_R`, with radial derivatives of the densities taken numerically.
/// `rhs` is the integrated-by-parts form
/// `4E + 2 pi [ 2 int e (chi - 1) r dr + 2 int (|D_r|^2 - 3/4 |u|^2/r^2 - g/4 |u|^4) r chi' r dr
///  - 5/2 int |u|^2 chi'' r dr - 1/2 int |u|^2 r chi''' r dr ]`
/// with `e = |D_r|^2 + r^-2 |D_theta|^2 - g/2 |u|^4`.
pub fn localized_virial_rate(state: &EquivariantState, fields: &GaugeFields, radius: f64) -> Result<(f64, f64)> {
    let rmax = state.grid.rmax();
    if !(radius > 0.0 && radius < rmax / 2.0) {
        return Err(CssError::InvalidArgument(format!("cutoff radius {radius} outside (0, {})", rmax / 2.0)));
    }
    let r = state.nodes();
    let n = r.len();
    let m = state.m as f64;
    let g = state.g;
    let du = state.radial_derivative();
    let rho: Vec<f64> = state.density();
    let a: Vec<f64> = du.iter().map(|d| d.norm_sqr()).collect();
    let b: Vec<f64> = rho.iter().map(|x| x * x).collect();
    let c: Vec<f64> = (0..n).map(|i| (m + fields.a_theta[i]).powi(2) * rho[i]).collect();
    let jets: Vec<[f64; 4]> = r
        .iter()
        .map(|&x| {
            let j = smooth_cutoff_jet(x / radius).0;
            [j[0], j[1] / radius, j[2] / radius.powi(2), j[3] / radius.powi(3)]
        })
        .collect();

    // even densities differentiate with even parity ghosts, odd ones with odd
    let d = |f: &[f64], parity: i64| -> Vec<f64> {
        let z: Vec<Complex64> = f.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        state.grid.derivative(&z, parity).expect("length matches").into_iter().map(|z| z.re).collect()
    };
    let a1 = d(&a, 0);
    let b1 = d(&b, 0);
    let c1 = d(&c, 0);
    let c_over: Vec<f64> = (0..n).map(|i| c[i] / (r[i] * r[i])).collect();
    let c_over1 = d(&c_over, 0);
    let rho1 = d(&rho, 0);
    let rho2 = d(&rho1, 1);
    let rho3 = d(&rho2, 0);

    let dt_t0r: Vec<f64> = (0..n)
        .map(|i| {
            let x = r[i];
            -(2.0 * a[i] + 2.0 * x * a1[i]) + 0.5 * x * g * b1[i] + c1[i] / x - x * c_over1[i]
                + 0.5 * x * rho3[i]
                + 0.5 * rho2[i]
                - rho1[i] / (2.0 * x)
        })
        .collect();
    let integrand: Vec<f64> = dt_t0r.iter().zip(&jets).map(|(v, j)| v * j[0]).collect();
    let lhs = 2.0 * PI * state.grid.integrate(&integrand)?;

    let mut terms = vec![0.0; n];
    for i in 0..n {
        let x = r[i];
        let j = jets[i];
        let e = a[i] + c[i] / (x * x) - 0.5 * g * b[i];
        terms[i] = 2.0 * e * (j[0] - 1.0) + 2.0 * (a[i] - 0.75 * rho[i] / (x * x) - 0.25 * g * b[i]) * x * j[1]
            - 2.5 * rho[i] * j[2]
            - 0.5 * rho[i] * x * j[3];
    }
    let rhs = 4.0 * energy_direct(state, fields) + 2.0 * PI * state.grid.integrate(&terms)?;
    Ok((lhs, rhs))
}

/// Apply the finite-time dispersion/blowup criteria to a finished run.
pub fn classify_endstate(traj: &Trajectory) -> EndState {
    let th = traj.thresholds;
    let recs = &traj.records;
    if recs.is_empty() {
        return EndState::Undecided;
    }
    let initial = recs[0].max_abs_u;
    if recs
        .iter()
        .zip(&traj.core_fraction)
        .any(|(r, f)| r.max_abs_u >= th.growth_factor * initial && *f >= th.core_fraction)
    {
        return EndState::Blowup;
    }
    let peak = recs.iter().fold(0.0f64, |p, r| p.max(r.max_abs_u));
    let last = recs.last().unwrap();
    if peak > 0.0 && last.max_abs_u <= peak / th.decay_factor && l4_rate_decays(traj) {
        return EndState::Dispersing;
    }
    if peak == 0.0 {
        return EndState::Dispersing;
    }
    EndState::Undecided
}

/// The spacetime L^4 accumulated over the second half of the trailing window
/// is smaller than over its first half.
fn l4_rate_decays(traj: &Trajectory) -> bool {
    let recs = &traj.records;
    let t_end = recs.last().unwrap().t;
    let t0 = recs[0].t;
    let start = t_end - traj.thresholds.window_fraction * (t_end - t0);
    let mid = 0.5 * (start + t_end);
    let accumulate = |lo: f64, hi: f64| -> f64 {
        recs.windows(2)
            .filter(|p| p[0].t >= lo - 1e-12 && p[1].t <= hi + 1e-12)
            .map(|p| 0.5 * (p[0].l4x + p[1].l4x) * (p[1].t - p[0].t))
            .sum()
    };
    let (first, second) = (accumulate(start, mid), accumulate(mid, t_end));
    second < first
}
