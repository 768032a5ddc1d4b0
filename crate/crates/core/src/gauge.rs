//! Coulomb-gauge potentials of an equivariant state. `A_r` vanishes
//! identically and is not stored.

use num_complex::Complex64;

use crate::discretization::SpectralPlan;
use crate::error::Result;
use crate::state::EquivariantState;

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeFields {
    pub a_theta: Vec<f64>,
    pub a0: Vec<f64>,
    pub potential: Vec<f64>,
}

/// `A_theta(r) = -1/2 int_0^r |u|^2 s ds`.
pub fn compute_a_theta(state: &EquivariantState) -> Vec<f64> {
    let (run, _) = state.grid.cumulative(&state.density());
    run.into_iter().map(|v| -0.5 * v).collect()
}

/// `A_0(r) = -int_r^rmax (m + A_theta(s)) |u(s)|^2 ds / s`, so `A_0(rmax) = 0`.
pub fn compute_a0(state: &EquivariantState, a_theta: &[f64]) -> Vec<f64> {
    let m = state.m as f64;
    let f: Vec<f64> =
        state.u.iter().zip(a_theta).zip(state.nodes()).map(|((v, a), r)| (m + a) * v.norm_sqr() / (r * r)).collect();
    let (run, total) = state.grid.cumulative(&f);
    run.into_iter().map(|v| -(total - v)).collect()
}

/// `V = (2 m A_theta + A_theta^2) / r^2 + A_0 - g |u|^2`.
pub fn potential(state: &EquivariantState, a_theta: &[f64], a0: &[f64]) -> Vec<f64> {
    let m = state.m as f64;
    state
        .u
        .iter()
        .zip(state.nodes())
        .zip(a_theta.iter().zip(a0))
        .map(|((v, r), (a, a0))| (2.0 * m * a + a * a) / (r * r) + a0 - state.g * v.norm_sqr())
        .collect()
}

pub fn compute_gauge(state: &EquivariantState) -> GaugeFields {
    let a_theta = compute_a_theta(state);
    let a0 = compute_a0(state, &a_theta);
    let potential = potential(state, &a_theta, &a0);
    GaugeFields { a_theta, a0, potential }
}

/// `(d_r u, i (m + A_theta) u / r)`, the radial factors of `D_r phi` and `r^-1 D_theta phi`.
pub fn covariant_factors(state: &EquivariantState, fields: &GaugeFields) -> (Vec<Complex64>, Vec<Complex64>) {
    let m = state.m as f64;
    let dr = state.radial_derivative();
    let dth = state
        .u
        .iter()
        .zip(state.nodes())
        .zip(&fields.a_theta)
        .map(|((v, r), a)| Complex64::new(0.0, (m + a) / r) * v)
        .collect();
    (dr, dth)
}

/// `d_r u - (m + A_theta) u / r`; vanishes exactly on self-dual states.
pub fn d_plus(state: &EquivariantState, fields: &GaugeFields) -> Vec<Complex64> {
    d_plus_with(state, fields, &state.radial_derivative())
}

pub(crate) fn d_plus_with(state: &EquivariantState, fields: &GaugeFields, dr: &[Complex64]) -> Vec<Complex64> {
    let m = state.m as f64;
    dr.iter()
        .zip(&state.u)
        .zip(state.nodes().iter().zip(&fields.a_theta))
        .map(|((d, v), (r, a))| d - v * ((m + a) / r))
        .collect()
}

/// Relative discrepancy of `A^_theta = rho^-1 d_rho f^` with `f = -|u|^2 / 2`,
/// both sides taken with the order-0 transform. `A_theta` is shifted by its
/// value at `rmax` so that it decays; `d_rho` is a three-point difference on
/// the frequency nodes. Compared on interior frequencies below `rho_max / 2`.
pub fn spectral_relation_residual(state: &EquivariantState, plan: &SpectralPlan) -> Result<f64> {
    let a = compute_a_theta(state);
    let tail = state.grid.cumulative(&state.density()).1 * -0.5;
    let shifted: Vec<Complex64> = a.iter().map(|v| Complex64::new(v - tail, 0.0)).collect();
    let f: Vec<Complex64> = state.u.iter().map(|v| Complex64::new(-0.5 * v.norm_sqr(), 0.0)).collect();
    let a_hat = plan.forward(&shifted)?;
    let f_hat = plan.forward(&f)?;
    let rho = plan.rho();
    let half = plan.rho_max() / 2.0;
    let (mut num, mut den) = (0.0, 0.0);
    for j in 1..rho.len() - 1 {
        if rho[j] >= half {
            break;
        }
        let (h0, h1) = (rho[j] - rho[j - 1], rho[j + 1] - rho[j]);
        let d = (-h1 / (h0 * (h0 + h1))) * f_hat[j - 1].re
            + ((h1 - h0) / (h0 * h1)) * f_hat[j].re
            + (h0 / (h1 * (h0 + h1))) * f_hat[j + 1].re;
        let rhs = d / rho[j];
        num += (a_hat[j].re - rhs).powi(2);
        den += a_hat[j].re.powi(2);
    }
    Ok((num / den).sqrt())
}
