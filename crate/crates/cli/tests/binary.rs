use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn css_lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_css-lab"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .env_remove("CSS_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

/// The machine-readable last line of stderr.
fn error_report(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().expect("stderr has a report")).unwrap()
}

fn assert_fails(out: &Output, category: &str, code: i32) {
    assert_eq!(out.status.code(), Some(code), "{}", String::from_utf8_lossy(&out.stderr));
    let report = error_report(out);
    assert_eq!(report["category"], category);
    assert_eq!(report["exit_code"], code);
}

const SHORT_EVOLVE: &[&str] =
    &["evolve", "--m", "1", "--g", "0.5", "--n", "128", "--rmax", "12", "--dt", "1e-3", "--t-final", "0.2"];

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = css_lab(&["selftest"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    assert_eq!(s["experiment"], "selftest");
    let checks = s["result"]["checks"].as_array().unwrap();
    assert!(checks.len() >= 5);
    assert!(checks.iter().all(|c| c["pass"] == true), "{checks:?}");
}

#[test]
fn nonpositive_time_step_is_a_type_error() {
    let dir = tempfile::tempdir().unwrap();
    for dt in ["0", "-1", "-1e-4"] {
        let out = css_lab(&["evolve", "--dt", dt], dir.path());
        assert_fails(&out, "type-error", 11);
    }
    assert!(!dir.path().join("summary.json").exists());
}

#[test]
fn unknown_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_fails(&css_lab(&["evolve", "--frobnicate", "1"], dir.path()), "unknown-key", 10);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    std::fs::write(&file, "# short run\nexperiment=evolve\nm=1\ng=0.5\nn=128\nrmax=12\nt_final=0.2\n").unwrap();
    let a = dir.path().join("a");
    let out = css_lab(&["evolve", "--config", file.to_str().unwrap(), "--dt=2e-3"], &a);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&a);
    assert_eq!(s["config"]["dt"], 2e-3);
    assert_eq!(s["config"]["m"], 1);

    let out = css_lab(&["threshold", "--config", file.to_str().unwrap()], &dir.path().join("b"));
    assert_fails(&out, "invalid-value", 15);

    let out =
        Command::new(env!("CARGO_BIN_EXE_css-lab")).arg("run").arg(dir.path().join("absent.cfg")).output().unwrap();
    assert_fails(&out, "io", 20);
}

#[test]
fn evolve_writes_diagnostics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SHORT_EVOLVE.to_vec();
    args.extend(["--checkpoint-every", "5", "--sample-every", "10"]);
    let out = css_lab(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,charge,energy_direct,energy_bogo,l4x,v2,v1,virial_residual,max_abs_u,lp_tail");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 21);
    assert!(rows.iter().all(|r| r.len() == 10));
    let q0 = rows[0][1];
    assert!(rows.iter().all(|r| ((r[1] - q0) / q0).abs() < 1e-11));

    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["row000000.css1", "row000005.css1", "row000010.css1", "row000015.css1", "row000020.css1"]);

    let s = summary(dir.path());
    assert!(s["result"]["charge_drift_rel"].as_f64().unwrap() < 1e-11);
    assert_eq!(s["result"]["final_checkpoint"], "final.css1");
}

#[test]
fn identical_configs_give_identical_bytes() {
    let root = tempfile::tempdir().unwrap();
    let mut args = SHORT_EVOLVE.to_vec();
    args.extend(["--initial", "random", "--seed", "7"]);
    for sub in ["a", "b"] {
        assert!(css_lab(&args, &root.path().join(sub)).status.success());
    }
    for file in ["diagnostics.csv", "summary.json", "final.css1"] {
        let a = std::fs::read(root.path().join("a").join(file)).unwrap();
        let b = std::fs::read(root.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
    let mut other = args.clone();
    *other.last_mut().unwrap() = "8";
    assert!(css_lab(&other, &root.path().join("c")).status.success());
    assert_ne!(
        std::fs::read(root.path().join("a/diagnostics.csv")).unwrap(),
        std::fs::read(root.path().join("c/diagnostics.csv")).unwrap()
    );
}

#[test]
fn resume_continues_the_clock() {
    let root = tempfile::tempdir().unwrap();
    let first = root.path().join("first");
    assert!(css_lab(SHORT_EVOLVE, &first).status.success());
    let resume = first.join("final.css1");
    let out =
        css_lab(&["evolve", "--resume", resume.to_str().unwrap(), "--t-final", "0.1"], &root.path().join("second"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = summary(&first)["result"].clone();
    let b = summary(&root.path().join("second"))["result"].clone();
    assert_eq!(b["m"], 1);
    assert_eq!(b["n"], 128);
    assert_eq!(b["t_start"], a["t_end"]);
    assert!((b["t_end"].as_f64().unwrap() - 0.3).abs() < 1e-9);
    assert_eq!(b["charge_initial"], a["charge_final"]);

    std::fs::write(root.path().join("junk.css1"), b"not a checkpoint").unwrap();
    let junk = root.path().join("junk.css1");
    let out = css_lab(&["evolve", "--resume", junk.to_str().unwrap()], &root.path().join("third"));
    assert_fails(&out, "bad-magic", 30);
}

#[test]
fn soliton_check_reports_the_exact_charge() {
    let dir = tempfile::tempdir().unwrap();
    let out = css_lab(&["soliton-check", "--m", "0"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &summary(dir.path())["result"];
    assert!(r["charge_rel_err"].as_f64().unwrap() < 1e-5, "{r}");
    for key in ["r_dplus", "r_a0", "r_energy"] {
        assert!(r["residuals"][key].as_f64().unwrap() < 1e-4, "{key}: {r}");
    }
    assert_eq!(r["pass"], true);
    assert!(dir.path().join("profile.csv").exists());
}

#[test]
fn self_dual_threshold_run_reports_the_missing_bracket() {
    // scaled solitons at g = 1 all disperse, so there is nothing to bisect
    let dir = tempfile::tempdir().unwrap();
    let out = css_lab(
        &["threshold", "--g", "1", "--m", "0", "--n", "128", "--rmax", "20", "--dt", "4e-3", "--t-final", "4"],
        dir.path(),
    );
    assert_fails(&out, "bracket-not-found", 50);
}

#[test]
fn focusing_threshold_run_writes_probes() {
    let dir = tempfile::tempdir().unwrap();
    let out = css_lab(
        &[
            "threshold",
            "--g",
            "2",
            "--n",
            "128",
            "--rmax",
            "20",
            "--dt",
            "4e-3",
            "--t-final",
            "4",
            "--sample-every",
            "10",
            "--alpha-lo",
            "0.2",
            "--alpha-hi",
            "1.0",
            "--rel-tol",
            "0.15",
            "--growth-factor",
            "3",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = &summary(dir.path())["result"];
    let (lo, hi) = (r["bracket"][0].as_f64().unwrap(), r["bracket"][1].as_f64().unwrap());
    let c = r["critical_charge"].as_f64().unwrap();
    assert!(lo < c && c < hi, "{r}");
    let csv = std::fs::read_to_string(dir.path().join("probes.csv")).unwrap();
    assert!(csv.starts_with("alpha,charge,outcome,retried\n"));
    assert_eq!(csv.lines().count() - 1, r["probes"].as_u64().unwrap() as usize);
}

#[test]
fn sweep_points_are_isolated() {
    let root = tempfile::tempdir().unwrap();
    let sweep = root.path().join("sweep");
    let out = css_lab(&["groundstate", "--sweep-g", "2,3", "--sweep-seeds", "2", "--seed", "4"], &sweep);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for sub in ["g2_seed4", "g2_seed5", "g3_seed4", "g3_seed5"] {
        for file in ["profile.csv", "wave.css1", "history.csv", "summary.json"] {
            assert!(sweep.join(sub).join(file).exists(), "{sub}/{file}");
        }
    }
    let table: Value = serde_json::from_str(&std::fs::read_to_string(sweep.join("groundstate.json")).unwrap()).unwrap();
    assert_eq!(table.as_array().unwrap().len(), 4);

    // a point run alone, on one thread, matches the same point inside the sweep
    let alone = root.path().join("alone");
    let out = Command::new(env!("CARGO_BIN_EXE_css-lab"))
        .args(["groundstate", "--g", "3", "--seed", "5", "--output-dir"])
        .arg(&alone)
        .env("CSS_LAB_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["profile.csv", "wave.css1", "history.csv"] {
        assert!(
            std::fs::read(alone.join(file)).unwrap() == std::fs::read(sweep.join("g3_seed5").join(file)).unwrap(),
            "{file}"
        );
    }
    for s in summary(&sweep)["result"]["seed_spread"].as_array().unwrap() {
        assert!(s["rel_spread"].as_f64().unwrap() < 1e-2, "{s}");
    }
}

#[test]
fn thread_cap_must_be_a_positive_integer() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["0", "-2", "many"] {
        let out = Command::new(env!("CARGO_BIN_EXE_css-lab"))
            .args(["selftest", "--output-dir"])
            .arg(dir.path())
            .env("CSS_LAB_THREADS", bad)
            .output()
            .unwrap();
        assert_fails(&out, "type-error", 11);
    }
}
