use std::f64::consts::PI;
use std::sync::Arc;

use css_core::dynamics::{
    check_morawetz, check_virial, classify_endstate, evolve, localized_virial_rate, step_strang, Absorber, EndState,
    EventKind, EvolveOptions,
};
use css_core::observables::{charge, energy_direct, kinetic_parts, t0r_slice};
use css_core::selfdual::{soliton_profile, SolitonParams};
use css_core::special::smooth_cutoff;
use css_core::{
    build_spectral_plan, compute_gauge, make_grid, Complex64, CssError, EquivariantState, GridRequest, SpectralPlan,
};

fn setup(n: usize, rmax: f64, m: i64) -> (Arc<css_core::RadialGrid>, Arc<SpectralPlan>) {
    let grid = Arc::new(make_grid(n, rmax, GridRequest::BesselZero, m).unwrap());
    let plan = Arc::new(build_spectral_plan(grid.clone(), m).unwrap());
    (grid, plan)
}

fn gaussian(m: i64, g: f64, amp: f64, width: f64, n: usize, rmax: f64) -> (EquivariantState, Arc<SpectralPlan>) {
    let (grid, plan) = setup(n, rmax, m);
    let s = EquivariantState::from_fn(m, g, grid, |r| {
        Complex64::new(amp * r.powi(m as i32) * (-r * r / (2.0 * width * width)).exp(), 0.0)
    })
    .unwrap()
    .with_plan(plan.clone())
    .unwrap();
    (s, plan)
}

fn rel_l2(a: &EquivariantState, b: &EquivariantState) -> f64 {
    let w = a.grid.density_weights();
    let num: f64 = a.u.iter().zip(&b.u).zip(w).map(|((x, y), w)| w * (x - y).norm_sqr()).sum();
    let den: f64 = b.u.iter().zip(w).map(|(y, w)| w * y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn run(s: &EquivariantState, plan: &SpectralPlan, opts: EvolveOptions) -> css_core::dynamics::Trajectory {
    evolve(s, &opts, plan).unwrap()
}

#[test]
fn zero_state_stays_zero() {
    let (grid, plan) = setup(64, 10.0, 0);
    let z = EquivariantState::zero(0, 1.0, grid);
    let out = step_strang(&z, 1e-2, &plan).unwrap();
    assert!(out.u.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    assert!((out.t - 1e-2).abs() < 1e-15);
}

#[test]
fn step_rejects_foreign_plan() {
    let (s, _) = gaussian(0, 0.5, 1.0, 1.0, 64, 10.0);
    let (_, other) = setup(64, 10.0, 1);
    assert!(matches!(step_strang(&s, 1e-3, &other), Err(CssError::PlanMismatch(_))));
}

#[test]
fn non_finite_values_diverge() {
    let (mut s, plan) = gaussian(0, 0.5, 1.0, 1.0, 64, 10.0);
    s.u[3] = Complex64::new(f64::NAN, 0.0);
    assert!(matches!(step_strang(&s, 1e-3, &plan), Err(CssError::IntegrationDiverged { .. })));
}

#[test]
fn options_are_validated() {
    let (s, plan) = gaussian(0, 0.5, 1.0, 1.0, 64, 10.0);
    for opts in [
        EvolveOptions { dt: 0.0, ..Default::default() },
        EvolveOptions { t_final: -1.0, ..Default::default() },
        EvolveOptions { sample_every: 0, ..Default::default() },
    ] {
        assert!(matches!(evolve(&s, &opts, &plan), Err(CssError::InvalidArgument(_))));
    }
}

#[test]
fn charge_drift_over_many_steps() {
    let (mut s, plan) = gaussian(0, 0.5, 2.0, 1.0, 64, 12.0);
    let q0 = charge(&s);
    for _ in 0..100_000 {
        s = step_strang(&s, 1e-3, &plan).unwrap();
    }
    let drift = (charge(&s) - q0).abs() / q0;
    assert!(drift < 1e-11, "charge drift {drift:e}");
}

fn energy_drift(dt: f64) -> f64 {
    // at n = 128 a spatial floor of 2e-7 hides the time step dependence
    let (s, plan) = gaussian(0, 0.5, 2.0, 1.0, 512, 24.0);
    let f = compute_gauge(&s);
    let e0 = energy_direct(&s, &f);
    let scale = e0.abs().max(0.5 * kinetic_parts(&s, &f).total());
    let traj = run(
        &s,
        &plan,
        EvolveOptions { dt, t_final: 1.0, sample_every: (0.1 / dt).round() as usize, ..Default::default() },
    );
    traj.records.iter().map(|r| (r.energy_direct - e0).abs() / scale).fold(0.0, f64::max)
}

#[test]
fn energy_drift_is_second_order() {
    let coarse = energy_drift(1e-4);
    let fine = energy_drift(5e-5);
    assert!(coarse < 1e-5, "dt = 1e-4: {coarse:e}");
    assert!(fine < 2.5e-6, "dt = 5e-5: {fine:e}");
    assert!(coarse / fine >= 2.0, "{coarse:e} -> {fine:e}");
}

#[test]
fn conjugation_reverses_time() {
    let (grid, plan) = setup(128, 12.0, 1);
    let s = EquivariantState::random_smooth(1, 1.5, grid, 7).with_plan(plan.clone()).unwrap();
    let err = |dt: f64| {
        let steps = (0.5 / dt).round() as usize;
        let mut x = s.clone();
        for _ in 0..steps {
            x = step_strang(&x, dt, &plan).unwrap();
        }
        x.u.iter_mut().for_each(|z| *z = z.conj());
        for _ in 0..steps {
            x = step_strang(&x, dt, &plan).unwrap();
        }
        let mut target = s.clone();
        target.u.iter_mut().for_each(|z| *z = z.conj());
        rel_l2(&x, &target)
    };
    let (e1, e2) = (err(2e-3), err(1e-3));
    // Strang splitting is symmetric, so the reversal is exact up to round-off
    assert!(e1 < 1e-9 && e2 < 1e-9, "{e1:e} {e2:e}");
}

#[test]
fn radial_soliton_is_static() {
    let (grid, plan) = setup(1024, 100.0, 0);
    let s = soliton_profile(SolitonParams { m: 0, lambda: 1.0 }, grid)
        .unwrap()
        .tapered(0.5)
        .with_plan(plan.clone())
        .unwrap();
    let mut x = s.clone();
    for _ in 0..10_000 {
        x = step_strang(&x, 1e-4, &plan).unwrap();
    }
    let drift = rel_l2(&x, &s);
    assert!(drift < 1e-4, "drift {drift:e}");
}

fn virial_max_rel(dt: f64, sample: f64) -> f64 {
    // fine enough that splitting error, not the spatial floor, dominates
    let (s, plan) = gaussian(0, 0.5, 2.0, 1.0, 384, 15.0);
    let opts = EvolveOptions { dt, t_final: 1.0, sample_every: (sample / dt).round() as usize, ..Default::default() };
    let traj = run(&s, &plan, opts);
    let res = check_virial(&traj).unwrap();
    res.iter().map(|r| (r.residual / r.expected).abs()).fold(0.0, f64::max)
}

#[test]
fn virial_identity_converges() {
    let coarse = virial_max_rel(1e-3, 1e-2);
    let fine = virial_max_rel(5e-4, 5e-3);
    assert!(coarse < 0.01, "coarse {coarse:e}");
    assert!(coarse / fine >= 3.0, "{coarse:e} -> {fine:e}");
}

#[test]
fn free_virial() {
    let (s, plan) = gaussian(0, 1.0, 2.0, 0.8, 128, 15.0);
    let opts = EvolveOptions { dt: 1e-3, t_final: 1.0, sample_every: 10, free_only: true, ..Default::default() };
    let traj = run(&s, &plan, opts);
    for r in check_virial(&traj).unwrap() {
        assert!((r.residual / r.expected).abs() < 5e-3, "{r:?}");
    }
}

#[test]
fn recorded_virial_residual_matches_check() {
    let (s, plan) = gaussian(0, 0.5, 2.0, 1.0, 96, 15.0);
    let traj = run(&s, &plan, EvolveOptions { dt: 1e-3, t_final: 0.2, sample_every: 10, ..Default::default() });
    let res = check_virial(&traj).unwrap();
    assert!(traj.records[0].virial_residual.is_nan());
    assert!(traj.records.last().unwrap().virial_residual.is_nan());
    for (k, r) in res.iter().enumerate() {
        let rec = traj.records[k + 1].virial_residual;
        assert!((rec - r.residual).abs() <= 1e-9 * r.expected.abs().max(1.0));
    }
}

#[test]
fn static_soliton_virial_and_morawetz() {
    // a wide soliton keeps both the Strang and the spatial error of the
    // stationary state well below the bound
    let (grid, plan) = setup(1024, 160.0, 1);
    let s = soliton_profile(SolitonParams { m: 1, lambda: 0.25 }, grid)
        .unwrap()
        .tapered(0.5)
        .with_plan(plan.clone())
        .unwrap();
    let traj = run(&s, &plan, EvolveOptions { dt: 1e-4, t_final: 0.06, sample_every: 100, ..Default::default() });
    for r in check_virial(&traj).unwrap() {
        assert!(r.second_difference.abs() < 1e-6, "{r:?}");
    }
    for r in check_morawetz(&traj).unwrap() {
        assert!(r.second_difference.abs() < 1e-6, "{r:?}");
        assert!(r.expected.abs() < 1e-6, "{r:?}");
    }
}

#[test]
fn morawetz_identity() {
    let (s, plan) = gaussian(1, 0.5, 2.0, 1.0, 128, 15.0);
    let traj = run(&s, &plan, EvolveOptions { dt: 1e-3, t_final: 1.0, sample_every: 10, ..Default::default() });
    for r in check_morawetz(&traj).unwrap() {
        assert!((r.residual / r.expected).abs() < 0.02, "{r:?}");
    }
    let free = run(
        &s,
        &plan,
        EvolveOptions { dt: 1e-3, t_final: 1.0, sample_every: 10, free_only: true, ..Default::default() },
    );
    for r in check_morawetz(&free).unwrap() {
        assert!((r.residual / r.expected).abs() < 0.02, "{r:?}");
    }
}

#[test]
fn morawetz_rejects_radial_runs() {
    let (s, plan) = gaussian(0, 0.5, 1.0, 1.0, 64, 10.0);
    let traj = run(&s, &plan, EvolveOptions { dt: 1e-3, t_final: 0.1, sample_every: 10, ..Default::default() });
    assert!(matches!(check_morawetz(&traj), Err(CssError::InvalidArgument(_))));
}

#[test]
fn identity_checks_need_uniform_samples() {
    let (s, plan) = gaussian(0, 0.5, 1.0, 1.0, 64, 10.0);
    let short = run(&s, &plan, EvolveOptions { dt: 1e-3, t_final: 0.03, sample_every: 10, ..Default::default() });
    assert!(matches!(check_virial(&short), Err(CssError::TooFewSamples { need: 5, have: 4 })));
    // the final row lands off the sampling lattice
    let ragged = run(&s, &plan, EvolveOptions { dt: 1e-3, t_final: 0.105, sample_every: 10, ..Default::default() });
    assert!(matches!(check_virial(&ragged), Err(CssError::NonuniformSampling)));
}

#[test]
fn localized_virial_far_field() {
    let (s, _) = gaussian(0, 0.5, 2.0, 1.0, 256, 30.0);
    let f = compute_gauge(&s);
    let e = energy_direct(&s, &f);
    let (lhs, rhs) = localized_virial_rate(&s, &f, 12.0).unwrap();
    assert!((lhs - 4.0 * e).abs() < 0.01 * (4.0 * e).abs(), "lhs {lhs} 4E {}", 4.0 * e);
    assert!((rhs - 4.0 * e).abs() < 0.01 * (4.0 * e).abs(), "rhs {rhs} 4E {}", 4.0 * e);
}

#[test]
fn localized_virial_sides_agree() {
    for (m, g, seed) in [(0, 0.5, 1), (1, 1.5, 2), (2, -1.0, 3)] {
        let (grid, plan) = setup(512, 20.0, m);
        let s = EquivariantState::random_smooth(m, g, grid, seed).with_plan(plan).unwrap();
        let f = compute_gauge(&s);
        for radius in [1.0, 2.0, 4.0] {
            let (lhs, rhs) = localized_virial_rate(&s, &f, radius).unwrap();
            assert!((lhs - rhs).abs() < 0.01 * rhs.abs().max(lhs.abs()), "m {m} R {radius}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn localized_virial_tracks_the_flow() {
    // d/dt I_R by finite differences of the momentum flux integral
    let (s, plan) = gaussian(0, 0.5, 2.0, 1.0, 256, 20.0);
    let radius = 2.0;
    let flux = |x: &EquivariantState| -> f64 {
        let vals: Vec<f64> = t0r_slice(x).iter().zip(x.nodes()).map(|(t, r)| t * smooth_cutoff(r / radius)).collect();
        2.0 * PI * x.grid.integrate(&vals).unwrap()
    };
    let h = 1e-3;
    let mut fwd = s.clone();
    let mut bwd = s.clone();
    bwd.u.iter_mut().for_each(|z| *z = z.conj());
    for _ in 0..10 {
        fwd = step_strang(&fwd, h / 10.0, &plan).unwrap();
        bwd = step_strang(&bwd, h / 10.0, &plan).unwrap();
    }
    bwd.u.iter_mut().for_each(|z| *z = z.conj());
    let rate = (flux(&fwd) - flux(&bwd)) / (2.0 * h);
    let f = compute_gauge(&s);
    let (lhs, _) = localized_virial_rate(&s, &f, radius).unwrap();
    assert!((rate - lhs).abs() < 0.01 * lhs.abs(), "{rate} vs {lhs}");
}

#[test]
fn localized_virial_edge_cases() {
    let (grid, _) = setup(128, 20.0, 0);
    let z = EquivariantState::zero(0, 1.0, grid);
    let f = compute_gauge(&z);
    assert_eq!(localized_virial_rate(&z, &f, 2.0).unwrap(), (0.0, 0.0));
    assert!(matches!(localized_virial_rate(&z, &f, 10.0), Err(CssError::InvalidArgument(_))));
    assert!(matches!(localized_virial_rate(&z, &f, 0.0), Err(CssError::InvalidArgument(_))));
}

#[test]
fn small_data_disperses() {
    // e^{-r^2/4} spreads freely as (1 + t^2)^{-1/2} at the origin
    let (grid, plan) = setup(512, 200.0, 0);
    let shape = EquivariantState::from_fn(0, 1.0, grid, |r| Complex64::new((-r * r / 4.0).exp(), 0.0)).unwrap();
    let amp = (0.01 / charge(&shape)).sqrt();
    let s = shape.scaled(amp).with_plan(plan.clone()).unwrap();
    assert!((charge(&s) - 0.01).abs() < 1e-12);
    let opts = EvolveOptions {
        dt: 1e-2,
        t_final: 20.0,
        sample_every: 10,
        absorber: Some(Absorber::default()),
        ..Default::default()
    };
    let traj = run(&s, &plan, opts);
    assert_eq!(classify_endstate(&traj), EndState::Dispersing);
    let after: Vec<_> = traj.records.iter().filter(|r| r.t >= 1.0).collect();
    assert!(after.windows(2).all(|p| p[1].max_abs_u <= p[0].max_abs_u));
    for r in traj.records.iter().filter(|r| r.t >= 2.0) {
        let envelope = amp / (1.0 + r.t * r.t).sqrt();
        assert!((r.max_abs_u / envelope - 1.0).abs() < 0.2, "t {}: {} vs {envelope}", r.t, r.max_abs_u);
    }
}

#[test]
fn defocusing_large_charge_does_not_blow_up() {
    let (shape, plan) = gaussian(0, 0.5, 1.0, 1.0, 256, 40.0);
    let s = shape.scaled((30.0 / charge(&shape)).sqrt());
    let traj = run(
        &s,
        &plan,
        EvolveOptions {
            dt: 1e-3,
            t_final: 10.0,
            sample_every: 50,
            absorber: Some(Absorber::default()),
            ..Default::default()
        },
    );
    assert!(traj.events.iter().all(|(_, k)| *k != EventKind::Blowup));
    assert_ne!(classify_endstate(&traj), EndState::Blowup);
}

fn scaled_soliton_run(alpha: f64, t_final: f64) -> css_core::dynamics::Trajectory {
    let (grid, plan) = setup(512, 40.0, 0);
    let s = soliton_profile(SolitonParams { m: 0, lambda: 1.0 }, grid)
        .unwrap()
        .with_plan(plan.clone())
        .unwrap()
        .scaled(alpha);
    let opts = EvolveOptions {
        dt: 1e-3,
        t_final,
        sample_every: 20,
        absorber: Some(Absorber::default()),
        halt_on_blowup: true,
        ..Default::default()
    };
    run(&s, &plan, opts)
}

#[test]
fn marginal_soliton_is_undecided() {
    assert_eq!(classify_endstate(&scaled_soliton_run(1.0, 2.0)), EndState::Undecided);
}

#[test]
fn supercritical_scaled_soliton_at_self_dual_coupling() {
    // At g = 1 the energy is a perfect square, so E > 0 off the soliton and the
    // virial identity drives v2 upward: the amplitude-1.3 profile disperses.
    let traj = scaled_soliton_run(1.3, 10.0);
    assert!(traj.records[0].energy_direct > 0.0);
    assert_eq!(classify_endstate(&traj), EndState::Dispersing);
}

#[test]
fn classifier_thresholds_are_configurable() {
    let traj = scaled_soliton_run(1.3, 10.0);
    let mut strict = traj.clone();
    strict.thresholds.decay_factor = 100.0;
    assert_eq!(classify_endstate(&strict), EndState::Undecided);
    let mut loose = traj;
    loose.thresholds.growth_factor = 1.0;
    loose.thresholds.core_fraction = 0.0;
    assert_eq!(classify_endstate(&loose), EndState::Blowup);
}

#[test]
fn trajectory_bookkeeping() {
    let (s, plan) = gaussian(0, 0.5, 1.0, 1.0, 64, 10.0);
    let opts = EvolveOptions { dt: 1e-3, t_final: 0.5, sample_every: 10, snapshot_every: 10, ..Default::default() };
    let traj = run(&s, &plan, opts);
    let t = traj.times();
    assert_eq!(t.len(), 51);
    assert!(t.windows(2).all(|p| p[1] > p[0]));
    assert_eq!(traj.states.len(), traj.snapshot_rows.len());
    for (st, &row) in traj.states.iter().zip(&traj.snapshot_rows) {
        assert!((st.t - traj.records[row].t).abs() < 1e-12);
    }
    assert!((traj.final_state().t - 0.5).abs() < 1e-12);
}

#[test]
fn frozen_gauge_differs_from_full_flow() {
    let (s, plan) = gaussian(0, 1.5, 2.0, 1.0, 96, 12.0);
    let base = EvolveOptions { dt: 1e-3, t_final: 0.3, sample_every: 100, ..Default::default() };
    let full = run(&s, &plan, base);
    let frozen = run(&s, &plan, EvolveOptions { freeze_gauge: true, ..base });
    let d = rel_l2(full.final_state(), frozen.final_state());
    assert!(d > 1e-6 && d < 0.5, "{d:e}");
}
