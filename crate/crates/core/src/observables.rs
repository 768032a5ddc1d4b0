//! Scalar functionals of an equivariant state. All integrals are over the
//! plane, `int ... dx = 2 pi int ... r dr`, truncated at `rmax`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::Cutoff;
use crate::error::{CssError, Result};
use crate::gauge::{compute_gauge, d_plus_with, GaugeFields};
use crate::state::EquivariantState;

/// Per-time scalar record; one CSV row of the diagnostics stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub charge: f64,
    pub energy_direct: f64,
    pub energy_bogo: f64,
    pub l4x: f64,
    pub v2: f64,
    pub v1: f64,
    /// Filled in by the virial check once neighbouring samples exist; NaN otherwise.
    pub virial_residual: f64,
    pub max_abs_u: f64,
    /// Charge fraction above `rho_max / 4`; NaN without a transform plan.
    pub lp_tail: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "t,charge,energy_direct,energy_bogo,l4x,v2,v1,virial_residual,max_abs_u,lp_tail";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.t,
            self.charge,
            self.energy_direct,
            self.energy_bogo,
            self.l4x,
            self.v2,
            self.v1,
            self.virial_residual,
            self.max_abs_u,
            self.lp_tail
        )
    }
}

fn plane(state: &EquivariantState, f: &[f64]) -> f64 {
    2.0 * PI * state.grid.integrate(f).expect("state length matches its grid")
}

/// `2 pi int |u|^2 r dr`.
pub fn charge(state: &EquivariantState) -> f64 {
    2.0 * PI * state.grid.integrate_density(&state.density()).expect("state length matches its grid")
}

/// `2 pi int |u|^4 r dr`.
pub fn l4x(state: &EquivariantState) -> f64 {
    let f: Vec<f64> = state.u.iter().map(|v| v.norm_sqr().powi(2)).collect();
    plane(state, &f)
}

pub fn max_abs(state: &EquivariantState) -> f64 {
    state.u.iter().fold(0.0, |m, v| m.max(v.norm()))
}

/// Plane integrals of the covariant kinetic pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticParts {
    /// `||D_r phi||^2`
    pub radial: f64,
    /// `||r^-1 D_theta phi||^2`
    pub angular: f64,
    /// `int Im(conj(r^-1 D_theta phi) D_r phi) dx`, orientation chosen so that it equals `||phi||_4^4 / 4`.
    pub cross: f64,
}

impl KineticParts {
    pub fn total(&self) -> f64 {
        self.radial + self.angular
    }
}

pub fn kinetic_parts(state: &EquivariantState, fields: &GaugeFields) -> KineticParts {
    kinetic_with(state, fields, &state.radial_derivative())
}

fn kinetic_with(state: &EquivariantState, fields: &GaugeFields, dr: &[Complex64]) -> KineticParts {
    let m = state.m as f64;
    let r = state.nodes();
    let radial: Vec<f64> = dr.iter().map(|d| d.norm_sqr()).collect();
    let angular: Vec<f64> =
        (0..r.len()).map(|i| (m + fields.a_theta[i]).powi(2) * state.u[i].norm_sqr() / (r[i] * r[i])).collect();
    let cross: Vec<f64> =
        (0..r.len()).map(|i| (m + fields.a_theta[i]) * (state.u[i].conj() * dr[i]).re / r[i]).collect();
    KineticParts { radial: plane(state, &radial), angular: plane(state, &angular), cross: plane(state, &cross) }
}

/// `E = 1/2 ||D_x phi||^2 - g/4 ||phi||_4^4`.
pub fn energy_direct(state: &EquivariantState, fields: &GaugeFields) -> f64 {
    let k = kinetic_parts(state, fields);
    0.5 * k.total() - 0.25 * state.g * l4x(state)
}

/// Bogomol'nyi form `E = 1/2 ||D_+ phi||^2 + (1 - g)/4 ||phi||_4^4`.
pub fn energy_bogo(state: &EquivariantState, fields: &GaugeFields) -> f64 {
    let dp = d_plus_with(state, fields, &state.radial_derivative());
    let f: Vec<f64> = dp.iter().map(|v| v.norm_sqr()).collect();
    0.5 * plane(state, &f) + 0.25 * (1.0 - state.g) * l4x(state)
}

/// `(v2, v1) = (pi int r^2 |u|^2 r dr, pi int r |u|^2 r dr)`, the r^2 and r
/// moments of `T_00 = |phi|^2 / 2`. Fails when `v2` exceeds `cap`.
pub fn virial_moments(state: &EquivariantState, cap: Option<f64>) -> Result<(f64, f64)> {
    let rho = state.density();
    let r = state.nodes();
    let f2: Vec<f64> = rho.iter().zip(r).map(|(d, r)| d * r * r).collect();
    let f1: Vec<f64> = rho.iter().zip(r).map(|(d, r)| d * r).collect();
    let v2 = 0.5 * plane(state, &f2);
    let v1 = 0.5 * plane(state, &f1);
    if let Some(cap) = cap {
        if v2 > cap {
            return Err(CssError::MomentOverflow { value: v2, cap });
        }
    }
    Ok((v2, v1))
}

/// `T_0r = r Im(conj(u) d_r u)` at the nodes.
pub fn t0r_slice(state: &EquivariantState) -> Vec<f64> {
    let dr = state.radial_derivative();
    state.u.iter().zip(&dr).zip(state.nodes()).map(|((v, d), r)| r * (v.conj() * d).im).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnResiduals {
    /// `4 ||D_r phi|| ||r^-1 D_theta phi|| - ||phi||_4^4`, nonnegative.
    pub gn4: f64,
    /// `2 ||D_x phi||^2 - ||phi||_4^4`, nonnegative.
    pub cov_sobo: f64,
    /// `||phi||_4^4 / (||D_x phi||^2 ||phi||^2)`; 0 for the zero state.
    pub cov_gn_ratio: f64,
}

pub fn gn_residuals(state: &EquivariantState, fields: &GaugeFields) -> GnResiduals {
    let k = kinetic_parts(state, fields);
    let l4 = l4x(state);
    let q = charge(state);
    let denom = k.total() * q;
    GnResiduals {
        gn4: 4.0 * (k.radial * k.angular).sqrt() - l4,
        cov_sobo: 2.0 * k.total() - l4,
        cov_gn_ratio: if denom > 0.0 { l4 / denom } else { 0.0 },
    }
}

/// Both sides of the reverse Cauchy-Schwarz inequality
/// `||D_x phi||^2 <= 2 g int Im(conj(r^-1 D_theta phi) D_r phi) dx`,
/// which every state with `E <= 0` satisfies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseCsWitness {
    pub lhs: f64,
    pub rhs: f64,
}

impl ReverseCsWitness {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.lhs <= self.rhs + rel_tol * self.lhs.abs().max(self.rhs.abs())
    }
}

pub fn reverse_cs(state: &EquivariantState, fields: &GaugeFields) -> ReverseCsWitness {
    let k = kinetic_parts(state, fields);
    ReverseCsWitness { lhs: k.total(), rhs: 2.0 * state.g * k.cross }
}

/// Right side of the Morawetz identity for `v1`,
/// `d^2/dt^2 v1 = 2 pi int (2 (m + A_theta)^2 - 1/2) |u|^2 / r^2 - g/2 |u|^4 dr`.
/// For `m = 0` the `|u|^2 / r^2` term is not integrable at the origin; the sum
/// then starts at the first node and `flagged` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorawetzRhs {
    pub value: f64,
    pub flagged: bool,
}

pub fn morawetz_rhs(state: &EquivariantState, fields: &GaugeFields) -> MorawetzRhs {
    let m = state.m as f64;
    let f: Vec<f64> = (0..state.u.len())
        .map(|i| {
            let r = state.nodes()[i];
            let d = state.u[i].norm_sqr();
            (2.0 * (m + fields.a_theta[i]).powi(2) - 0.5) * d / (r * r) - 0.5 * state.g * d * d
        })
        .collect();
    let value = 2.0 * PI * state.grid.integrate_line(&f).expect("state length matches its grid");
    MorawetzRhs { value, flagged: state.m == 0 }
}

/// Fraction of the charge carried by frequencies above `rho_max / 4`.
pub fn lp_tail(state: &EquivariantState) -> f64 {
    let Some(plan) = &state.plan else { return f64::NAN };
    let spec = plan.forward(&state.u).expect("plan checked on attach");
    let cut = Cutoff::High(plan.rho_max() / 4.0);
    let (mut hi, mut all) = (0.0, 0.0);
    for ((v, w), rho) in spec.iter().zip(plan.dual_weights()).zip(plan.rho()) {
        let e = w * v.norm_sqr();
        all += e;
        hi += e * cut.multiplier(*rho);
    }
    if all > 0.0 {
        hi / all
    } else {
        0.0
    }
}

/// All per-sample scalars with one gauge reconstruction and one derivative.
pub fn diagnostics(state: &EquivariantState, v2_cap: Option<f64>) -> Result<DiagnosticsRecord> {
    let fields = compute_gauge(state);
    diagnostics_with(state, &fields, v2_cap)
}

pub fn diagnostics_with(
    state: &EquivariantState,
    fields: &GaugeFields,
    v2_cap: Option<f64>,
) -> Result<DiagnosticsRecord> {
    let dr = state.radial_derivative();
    let k = kinetic_with(state, fields, &dr);
    let l4 = l4x(state);
    let dp = d_plus_with(state, fields, &dr);
    let bogo: Vec<f64> = dp.iter().map(|v| v.norm_sqr()).collect();
    let (v2, v1) = virial_moments(state, v2_cap)?;
    Ok(DiagnosticsRecord {
        t: state.t,
        charge: charge(state),
        energy_direct: 0.5 * k.total() - 0.25 * state.g * l4,
        energy_bogo: 0.5 * plane(state, &bogo) + 0.25 * (1.0 - state.g) * l4,
        l4x: l4,
        v2,
        v1,
        virial_residual: f64::NAN,
        max_abs_u: max_abs(state),
        lp_tail: lp_tail(state),
    })
}
