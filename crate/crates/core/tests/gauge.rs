use std::sync::Arc;

use css_core::discretization::{build_spectral_plan, make_grid, GridRequest, RadialGrid};
use css_core::gauge::{
    compute_a0, compute_a_theta, compute_gauge, covariant_factors, d_plus, spectral_relation_residual,
};
use css_core::{Complex64, EquivariantState};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn soliton(m: i64, lambda: f64, r: f64) -> f64 {
    let mf = m as f64;
    let x = lambda * r;
    8f64.sqrt() * lambda * (mf + 1.0) * x.powf(mf) / (1.0 + x.powf(2.0 * mf + 2.0))
}

fn geometric(n: usize) -> Arc<RadialGrid> {
    Arc::new(make_grid(n, 1e6, GridRequest::Geometric { r_min: 1e-6 }, 0).unwrap())
}

fn l2(v: &[f64], g: &RadialGrid) -> f64 {
    v.iter().zip(g.weights()).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

#[test]
fn zero_state_has_zero_fields() {
    let g = Arc::new(make_grid(64, 5.0, GridRequest::UniformMidpoint, 0).unwrap());
    let s = EquivariantState::zero(1, 1.0, g);
    let f = compute_gauge(&s);
    assert!(f.a_theta.iter().chain(&f.a0).chain(&f.potential).all(|v| *v == 0.0));
    assert!(d_plus(&s, &f).iter().all(|v| *v == c(0.0)));
}

#[test]
fn gaussian_a_theta_closed_form() {
    for req in [GridRequest::UniformMidpoint, GridRequest::BesselZero] {
        let g = Arc::new(make_grid(512, 12.0, req, 0).unwrap());
        let s = EquivariantState::from_fn(0, 1.0, g.clone(), |r| c((-r * r / 2.0).exp())).unwrap();
        let a = compute_a_theta(&s);
        for (v, &r) in a.iter().zip(g.nodes()) {
            assert!((v + (1.0 - (-r * r).exp()) / 4.0).abs() < 1e-10, "{req:?} r={r}");
        }
        assert!((a.last().unwrap() + 0.25).abs() < 1e-10);
        assert!(a.windows(2).all(|p| p[1] <= p[0] + 1e-15));
    }
}

#[test]
fn soliton_gauge_fields() {
    let g = geometric(4096);
    for m in 0..3i64 {
        let s = EquivariantState::from_fn(m, 1.0, g.clone(), |r| c(soliton(m, 1.0, r))).unwrap();
        let f = compute_gauge(&s);
        let limit = -2.0 * (m as f64 + 1.0);
        assert!((f.a_theta.last().unwrap() - limit).abs() < 1e-6, "m={m}: {}", f.a_theta.last().unwrap());
        let half: Vec<f64> = s.u.iter().map(|v| 0.5 * v.norm_sqr()).collect();
        let diff: Vec<f64> = f.a0.iter().zip(&half).map(|(a, b)| a - b).collect();
        assert!(l2(&diff, &g) / l2(&half, &g) < 1e-5, "m={m}");
        for (a, h) in f.a0.iter().zip(&half) {
            assert!((a - h).abs() < 1e-5, "m={m}");
        }
        let dp = d_plus(&s, &f);
        let dr = s.radial_derivative();
        let norm = |v: &[Complex64]| v.iter().zip(g.weights()).map(|(x, w)| w * x.norm_sqr()).sum::<f64>().sqrt();
        assert!(norm(&dp) / norm(&dr) < 1e-5, "m={m}");
    }
    let s = EquivariantState::from_fn(0, 1.0, g.clone(), |r| c(soliton(0, 1.0, r))).unwrap();
    let f = compute_gauge(&s);
    assert!((f.a0[0] - 4.0).abs() < 1e-6);
}

#[test]
fn a0_is_flat_inside_a_shell() {
    let g = Arc::new(make_grid(800, 4.0, GridRequest::UniformMidpoint, 1).unwrap());
    let bump = |r: f64| if r > 1.0 && r < 2.0 { (-1.0 / ((r - 1.0) * (2.0 - r))).exp() } else { 0.0 };
    let s = EquivariantState::from_fn(1, 1.0, g.clone(), |r| c(bump(r))).unwrap();
    let a = compute_a_theta(&s);
    let a0 = compute_a0(&s, &a);
    let inside: Vec<f64> = g.nodes().iter().zip(&a0).filter(|(r, _)| **r < 1.0).map(|(_, v)| *v).collect();
    assert!(inside[0] < 0.0);
    assert!(inside.iter().all(|v| (v - inside[0]).abs() < 1e-14 * inside[0].abs().max(1.0)));
    assert_eq!(*a0.last().unwrap(), 0.0);
}

#[test]
fn dtheta_factor_for_radial_gaussian_is_imaginary() {
    let g = Arc::new(make_grid(256, 10.0, GridRequest::UniformMidpoint, 0).unwrap());
    let s = EquivariantState::from_fn(0, 1.0, g.clone(), |r| c((-r * r / 2.0).exp())).unwrap();
    let f = compute_gauge(&s);
    let (_, dth) = covariant_factors(&s, &f);
    assert!(dth.iter().all(|v| v.re == 0.0));
    let dp = d_plus(&s, &f);
    assert!(dp.iter().zip(g.weights()).map(|(v, w)| w * v.norm_sqr()).sum::<f64>() > 0.1);
}

#[test]
fn potential_for_uncoupled_gaussian() {
    let g = Arc::new(make_grid(512, 12.0, GridRequest::UniformMidpoint, 0).unwrap());
    let s = EquivariantState::from_fn(0, 0.0, g.clone(), |r| c((-r * r / 2.0).exp())).unwrap();
    let f = compute_gauge(&s);
    let a_exact = |r: f64| -(1.0 - (-r * r).exp()) / 4.0;
    // A_0(r) = -int_r^12 A(s) e^{-s^2} / s ds by Simpson
    let a0_exact = |r: f64| {
        let n = 4000;
        let h = (12.0 - r) / n as f64;
        let f = |s: f64| a_exact(s) * (-s * s).exp() / s;
        -(0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(r + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    for i in (0..512).step_by(37) {
        let r = g.nodes()[i];
        let expect = a0_exact(r) + a_exact(r).powi(2) / (r * r);
        assert!((f.potential[i] - expect).abs() < 1e-9, "r={r}: {} vs {expect}", f.potential[i]);
    }
}

#[test]
fn a_theta_bounded_by_charge() {
    let g = Arc::new(make_grid(400, 10.0, GridRequest::UniformMidpoint, 0).unwrap());
    for seed in 0..50 {
        let s = EquivariantState::random_smooth((seed % 3) as i64, 1.0, g.clone(), seed);
        let a = compute_a_theta(&s);
        let charge = 2.0 * std::f64::consts::PI * g.integrate(&s.density()).unwrap();
        let max = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // A_theta uses the cumulative rule and the charge the grid weights;
        // the two agree to quadrature accuracy
        assert!(max <= charge / (4.0 * std::f64::consts::PI) * (1.0 + 1e-7), "seed {seed}");
    }
}

#[test]
fn phase_invariance_is_exact() {
    let g = Arc::new(make_grid(300, 10.0, GridRequest::UniformMidpoint, 0).unwrap());
    for seed in 0..10 {
        let s = EquivariantState::random_smooth(1, 1.5, g.clone(), seed);
        let mut t = s.clone();
        let rot = Complex64::from_polar(1.0, 0.7);
        t.u.iter_mut().for_each(|v| *v *= rot);
        let (f, h) = (compute_gauge(&s), compute_gauge(&t));
        for (a, b) in f.potential.iter().zip(&h.potential) {
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }
}

#[test]
fn scaling_covariance() {
    let lambda = 2.0;
    let g1 = Arc::new(make_grid(400, 10.0, GridRequest::UniformMidpoint, 0).unwrap());
    let g2 = Arc::new(make_grid(400, 10.0 / lambda, GridRequest::UniformMidpoint, 0).unwrap());
    for seed in 0..6 {
        let m = (seed % 3) as i64;
        let s1 = EquivariantState::random_smooth(m, 1.0, g1.clone(), seed);
        let s2 = EquivariantState::new(m, 1.0, g2.clone(), s1.u.iter().map(|v| v * lambda).collect()).unwrap();
        let (f1, f2) = (compute_gauge(&s1), compute_gauge(&s2));
        for i in 0..400 {
            assert!((f2.a_theta[i] - f1.a_theta[i]).abs() < 1e-12);
            assert!((f2.a0[i] - lambda * lambda * f1.a0[i]).abs() < 1e-11 * f1.a0[i].abs().max(1.0));
        }
    }
}

#[test]
fn spectral_relation_improves_with_rmax() {
    let states: [fn(f64) -> Complex64; 3] = [
        |r| c((-r * r / 2.0).exp()),
        |r| Complex64::new(1.0, 0.5 * r) * (-r * r / 3.0).exp(),
        |r| c((1.0 + r * r) * (-r * r).exp()),
    ];
    for f in states {
        let mut prev = f64::INFINITY;
        for rmax in [10.0, 20.0, 40.0, 80.0] {
            let g = Arc::new(make_grid((rmax * 12.0) as usize, rmax, GridRequest::BesselZero, 0).unwrap());
            let plan = build_spectral_plan(g.clone(), 0).unwrap();
            let s = EquivariantState::from_fn(0, 1.0, g, f).unwrap();
            let res = spectral_relation_residual(&s, &plan).unwrap();
            // centred differences in rho: second order in pi / rmax
            assert!(res * 3.0 < prev, "{res} after {prev}");
            prev = res;
        }
        assert!(prev < 1e-3, "{prev}");
    }
}
