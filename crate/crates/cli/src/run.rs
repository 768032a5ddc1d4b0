//! Experiment drivers. Each writes its artifacts under `output_dir` and a
//! `summary.json`; nothing depends on wall-clock time, so identical configs
//! give byte-identical files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};

use css_core::dynamics::{classify_endstate, evolve, Absorber, ClassifierThresholds, EvolveOptions};
use css_core::observables::{diagnostics, energy_bogo, energy_direct, gn_residuals, kinetic_parts};
use css_core::selfdual::{
    selfdual_residuals, soliton_profile, threshold_bisection, ProbeFamily, SolitonParams, ThresholdOptions,
};
use css_core::variational::{extract_frequency, j_functional, pohozaev_residuals};
use css_core::{
    build_spectral_plan, compute_gauge, make_grid, minimize_charge, Complex64, DiagnosticsRecord, EquivariantState,
    GridRequest, MinimizeOptions,
};

use crate::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::config::{Experiment, RunConfig};
use crate::error::{CliError, CliResult};

/// Runs the configured experiment and returns its summary.
pub fn run(cfg: &RunConfig) -> CliResult<Value> {
    create_dir(&cfg.output_dir)?;
    let body = match cfg.experiment {
        Experiment::Evolve => run_evolve(cfg)?,
        Experiment::SolitonCheck => run_soliton_check(cfg)?,
        Experiment::Threshold => run_threshold(cfg)?,
        Experiment::Groundstate => run_groundstate(cfg)?,
        Experiment::Selftest => run_selftest(cfg)?,
    };
    let summary = json!({ "experiment": cfg.experiment, "config": config_echo(cfg), "result": body });
    write_json(&cfg.output_dir.join("summary.json"), &summary)?;
    if cfg.experiment == Experiment::Selftest {
        let failed: Vec<String> = body["checks"]
            .as_array()
            .into_iter()
            .flatten()
            .filter(|c| c["pass"] != Value::Bool(true))
            .map(|c| c["name"].as_str().unwrap_or("?").to_string())
            .collect();
        if !failed.is_empty() {
            return Err(CliError::SelftestFailed(failed));
        }
    }
    Ok(summary)
}

/// The configuration without `output_dir`, so that summaries of identical
/// runs in different directories match byte for byte.
fn config_echo(cfg: &RunConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    v.as_object_mut().expect("config is an object").remove("output_dir");
    v
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    write_text(path, &text)
}

fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::from(DiagnosticsRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn profile_csv(state: &EquivariantState) -> String {
    let mut out = String::from("r,re_u,im_u\n");
    for (r, u) in state.nodes().iter().zip(&state.u) {
        writeln!(out, "{r:e},{:e},{:e}", u.re, u.im).expect("writing to a string");
    }
    out
}

fn thresholds(cfg: &RunConfig) -> ClassifierThresholds {
    ClassifierThresholds {
        decay_factor: cfg.decay_factor,
        growth_factor: cfg.growth_factor,
        core_cells: cfg.core_cells,
        core_fraction: cfg.core_fraction,
        ..Default::default()
    }
}

fn absorber(cfg: &RunConfig) -> Option<Absorber> {
    cfg.absorber.then_some(Absorber { width: cfg.absorber_width, strength: cfg.absorber_strength })
}

fn grid_request(cfg: &RunConfig) -> GridRequest {
    match cfg.grid.as_str() {
        "bessel-zero" => GridRequest::BesselZero,
        "uniform" => GridRequest::UniformMidpoint,
        _ => GridRequest::Geometric { r_min: cfg.r_min },
    }
}

fn initial_state(cfg: &RunConfig) -> CliResult<EquivariantState> {
    if let Some(path) = &cfg.resume {
        // m, g, t, n and rmax come from the checkpoint
        return read_checkpoint(path)?.to_state(GridRequest::BesselZero);
    }
    let (m, g) = (cfg.m, cfg.g);
    let grid = Arc::new(make_grid(cfg.n, cfg.rmax, GridRequest::BesselZero, m)?);
    let state = match cfg.initial.as_str() {
        "soliton" => soliton_profile(SolitonParams { m, lambda: cfg.lambda }, grid)?.with_coupling(g),
        "random" => EquivariantState::random_smooth(m, g, grid, cfg.seed),
        _ => {
            let k = m.unsigned_abs() as i32;
            EquivariantState::from_fn(m, g, grid, |r| Complex64::new(r.powi(k) * (-r * r / 2.0).exp(), 0.0))?
        }
    };
    Ok(state.scaled(cfg.amplitude))
}

fn run_evolve(cfg: &RunConfig) -> CliResult<Value> {
    let start = initial_state(cfg)?;
    let plan = Arc::new(build_spectral_plan(start.grid.clone(), start.m)?);
    let start = start.with_plan(plan.clone())?;
    let opts = EvolveOptions {
        dt: cfg.dt,
        t_final: cfg.t_final,
        sample_every: cfg.sample_every,
        snapshot_every: cfg.checkpoint_every,
        thresholds: thresholds(cfg),
        absorber: absorber(cfg),
        v2_cap: (cfg.v2_cap > 0.0).then_some(cfg.v2_cap),
        halt_on_blowup: cfg.halt_on_blowup,
        ..Default::default()
    };
    let traj = evolve(&start, &opts, &plan)?;
    write_text(&cfg.output_dir.join("diagnostics.csv"), &diagnostics_csv(&traj.records))?;
    let mut checkpoints = Vec::new();
    if cfg.checkpoint_every > 0 {
        let dir = cfg.output_dir.join("checkpoints");
        create_dir(&dir)?;
        for (state, row) in traj.states.iter().zip(&traj.snapshot_rows) {
            let name = format!("row{row:06}.css1");
            write_checkpoint(state, &dir.join(&name))?;
            checkpoints.push(format!("checkpoints/{name}"));
        }
    }
    write_checkpoint(traj.final_state(), &cfg.output_dir.join("final.css1"))?;

    let first = traj.records.first().expect("evolve records the initial state");
    let last = traj.records.last().expect("evolve records the initial state");
    let virial_max = traj
        .records
        .iter()
        .filter(|r| r.virial_residual.is_finite())
        .fold(0.0f64, |a, r| a.max(r.virial_residual.abs()));
    let events: Vec<Value> = traj.events.iter().map(|(t, k)| json!({ "t": t, "kind": k })).collect();
    Ok(json!({
        "m": start.m,
        "g": start.g,
        "n": start.grid.n(),
        "rmax": start.grid.rmax(),
        "t_start": start.t,
        "t_end": traj.final_state().t,
        "rows": traj.records.len(),
        "end_state": classify_endstate(&traj),
        "events": events,
        "charge_initial": first.charge,
        "charge_final": last.charge,
        "charge_drift_rel": (last.charge - first.charge).abs() / first.charge.abs().max(f64::MIN_POSITIVE),
        "energy_initial": first.energy_direct,
        "energy_final": last.energy_direct,
        "energy_drift": (last.energy_direct - first.energy_direct).abs(),
        "max_abs_virial_residual": virial_max,
        "checkpoints": checkpoints,
        "final_checkpoint": "final.css1",
    }))
}

fn run_soliton_check(cfg: &RunConfig) -> CliResult<Value> {
    let params = SolitonParams { m: cfg.m, lambda: cfg.lambda };
    let grid = Arc::new(make_grid(cfg.n, cfg.rmax, grid_request(cfg), cfg.m)?);
    let s = soliton_profile(params, grid)?;
    let fields = compute_gauge(&s);
    let q = css_core::observables::charge(&s);
    let expected = params.charge();
    let res = selfdual_residuals(&s)?;
    let kinetic = kinetic_parts(&s, &fields).total();
    let gn = gn_residuals(&s, &fields);
    let freq = extract_frequency(&s);
    let (p1, p2) = pohozaev_residuals(&s, 0.0);
    let charge_rel_err = (q - expected).abs() / expected;
    write_text(&cfg.output_dir.join("profile.csv"), &profile_csv(&s))?;
    Ok(json!({
        "m": cfg.m,
        "lambda": cfg.lambda,
        "grid": s.grid.kind().label(),
        "n": cfg.n,
        "rmax": cfg.rmax,
        "charge": q,
        "expected_charge": expected,
        "charge_rel_err": charge_rel_err,
        "residuals": res,
        "energy_direct": energy_direct(&s, &fields),
        "energy_bogo": energy_bogo(&s, &fields),
        "cov_sobo_rel": gn.cov_sobo / kinetic,
        "j_rel": j_functional(&s, cfg.m, 1.0) / kinetic,
        "frequency": freq,
        "pohozaev": { "p1": p1, "p2": p2 },
        "pass": charge_rel_err < 1e-5 && res.max() < 1e-4,
    }))
}

fn run_threshold(cfg: &RunConfig) -> CliResult<Value> {
    let family = match cfg.family.as_str() {
        "gaussian" => ProbeFamily::Gaussian,
        _ => ProbeFamily::ScaledSoliton,
    };
    let opts = ThresholdOptions {
        n: cfg.n,
        rmax: cfg.rmax,
        dt: cfg.dt,
        t_final: cfg.t_final,
        sample_every: cfg.sample_every,
        alpha_lo: cfg.alpha_lo,
        alpha_hi: cfg.alpha_hi,
        rel_tol: cfg.rel_tol,
        probes_per_round: cfg.probes_per_round,
        max_rounds: cfg.max_rounds,
        thresholds: thresholds(cfg),
        absorber: absorber(cfg),
    };
    let est = threshold_bisection(cfg.m, cfg.g, family, &opts)?;
    let mut csv = String::from("alpha,charge,outcome,retried\n");
    for p in &est.runs {
        let outcome = serde_json::to_value(p.outcome).expect("outcome serializes");
        writeln!(csv, "{:e},{:e},{},{}", p.alpha, p.charge, outcome.as_str().unwrap_or("?"), p.retried)
            .expect("writing to a string");
    }
    write_text(&cfg.output_dir.join("probes.csv"), &csv)?;
    let reference = 8.0 * PI * (cfg.m as f64 + 1.0);
    let rel_err = (est.critical_charge - reference) / reference;
    Ok(json!({
        "m": est.m,
        "g": est.g,
        "family": est.family,
        "critical_charge": est.critical_charge,
        "bracket": [est.bracket.0, est.bracket.1],
        "probes": est.runs.len(),
        "reference_charge": reference,
        "rel_err": rel_err,
        "tolerance": cfg.tolerance,
        "within_tolerance": rel_err.abs() <= cfg.tolerance,
    }))
}

fn run_groundstate(cfg: &RunConfig) -> CliResult<Value> {
    let couplings = if cfg.sweep_g.is_empty() { vec![cfg.g] } else { cfg.sweep_g.clone() };
    let points: Vec<(f64, u64)> = couplings
        .iter()
        .flat_map(|&g| (0..cfg.sweep_seeds as u64).map(move |k| (g, cfg.seed.wrapping_add(k))))
        .collect();
    let single = points.len() == 1;
    let results: Vec<Value> = points
        .par_iter()
        .map(|&(g, seed)| {
            let dir: PathBuf =
                if single { cfg.output_dir.clone() } else { cfg.output_dir.join(format!("g{g}_seed{seed}")) };
            groundstate_point(cfg, g, seed, &dir)
        })
        .collect::<CliResult<_>>()?;
    let table: Vec<Value> = results.iter().map(|r| r["row"].clone()).collect();
    write_json(&cfg.output_dir.join("groundstate.json"), &Value::Array(table.clone()))?;
    let mut spreads = Vec::new();
    for &g in &couplings {
        let c: Vec<f64> = results
            .iter()
            .filter(|r| r["row"]["g"].as_f64() == Some(g))
            .filter_map(|r| r["row"]["c_estimate"].as_f64())
            .collect();
        let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        spreads.push(json!({ "g": g, "seeds": c.len(), "rel_spread": (hi - lo) / hi }));
    }
    Ok(json!({ "points": results, "seed_spread": spreads }))
}

fn groundstate_point(cfg: &RunConfig, g: f64, seed: u64, dir: &Path) -> CliResult<Value> {
    create_dir(dir)?;
    let opts = MinimizeOptions {
        n: cfg.n,
        r_min: cfg.r_min,
        rmax: cfg.rmax,
        knots: cfg.knots,
        max_iterations: cfg.max_iterations,
        window: cfg.window,
        rel_tol: cfg.rel_tol,
        penalty: cfg.penalty,
        seed,
    };
    let gs = minimize_charge(cfg.m, g, &opts)?;
    let freq = extract_frequency(&gs.wave.profile);
    write_text(&dir.join("profile.csv"), &profile_csv(&gs.wave.profile))?;
    write_checkpoint(&gs.wave.profile, &dir.join("wave.css1"))?;
    let mut history = String::from("iteration,charge\n");
    for (i, c) in gs.history.iter().enumerate() {
        writeln!(history, "{i},{c:e}").expect("writing to a string");
    }
    write_text(&dir.join("history.csv"), &history)?;
    let point = json!({
        "seed": seed,
        "row": gs.row(),
        "minimized_charge": gs.minimized_charge,
        "j_value": gs.wave.j_value,
        "frequency": freq,
    });
    if dir != cfg.output_dir {
        write_json(&dir.join("summary.json"), &point)?;
    }
    Ok(point)
}

fn check(name: &str, value: f64, bound: f64) -> Value {
    json!({ "name": name, "value": value, "bound": bound, "pass": value.abs() < bound })
}

fn run_selftest(cfg: &RunConfig) -> CliResult<Value> {
    let mut checks = Vec::new();

    let wide = Arc::new(make_grid(4096, 1e6, GridRequest::Geometric { r_min: 1e-6 }, 0)?);
    let mut worst = 0.0f64;
    for lambda in [0.5, 1.0, 2.0] {
        let p = SolitonParams { m: 0, lambda };
        let q = css_core::observables::charge(&soliton_profile(p, wide.clone())?);
        worst = worst.max((q - p.charge()).abs() / p.charge());
    }
    checks.push(check("soliton-charge", worst, 1e-5));

    let mut worst = 0.0f64;
    let mut worst_j = 0.0f64;
    for k in 0..12u64 {
        let m = (k % 3) as i64;
        let g = [-1.0, 0.5, 2.0][(k / 3 % 3) as usize];
        let seed = cfg.seed.wrapping_add(k);
        let grid = Arc::new(make_grid(512, 12.0, GridRequest::BesselZero, m)?);
        let plan = Arc::new(build_spectral_plan(grid.clone(), m)?);
        let s = EquivariantState::random_smooth(m, g, grid, seed).with_plan(plan)?;
        let f = compute_gauge(&s);
        let e = energy_direct(&s, &f);
        worst = worst.max((e - energy_bogo(&s, &f)).abs() / (e.abs() + kinetic_parts(&s, &f).total()));

        let grid = Arc::new(make_grid(256, 10.0, GridRequest::UniformMidpoint, m)?);
        let s = EquivariantState::random_smooth(m, g, grid, seed);
        let f = compute_gauge(&s);
        let scale = kinetic_parts(&s, &f).total();
        worst_j = worst_j.max((j_functional(&s, m, g) - 2.0 * energy_direct(&s, &f)).abs() / scale);
    }
    checks.push(check("bogomolnyi-identity", worst, 1e-7));
    checks.push(check("j-equals-twice-energy", worst_j, 1e-9));

    let grid = Arc::new(make_grid(128, 15.0, GridRequest::BesselZero, 0)?);
    let plan = Arc::new(build_spectral_plan(grid.clone(), 0)?);
    let s = EquivariantState::from_fn(0, 0.5, grid, |r| Complex64::new((-r * r / 2.0).exp(), 0.0))?
        .with_plan(plan.clone())?;
    let back = Checkpoint::decode(&Checkpoint::from_state(&s).encode())?.to_state(GridRequest::BesselZero)?;
    let same =
        back.u.iter().zip(&s.u).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
    checks.push(json!({ "name": "checkpoint-round-trip", "value": same, "pass": same }));

    let traj = evolve(&s, &EvolveOptions { dt: 1e-3, t_final: 0.2, sample_every: 50, ..Default::default() }, &plan)?;
    let (a, b) = (traj.records[0], *traj.records.last().expect("records"));
    checks.push(check("charge-drift", (b.charge - a.charge).abs() / a.charge, 1e-10));
    checks.push(check("energy-drift", (b.energy_direct - a.energy_direct).abs() / a.energy_direct.abs(), 1e-4));
    let d = diagnostics(&s, None)?;
    checks.push(check("diagnostics-charge", (d.charge - a.charge).abs() / a.charge, 1e-14));

    let pass = checks.iter().all(|c| c["pass"] == Value::Bool(true));
    Ok(json!({ "checks": checks, "pass": pass }))
}
