use std::path::PathBuf;

use css_lab::config::{parse_pairs, schema_text, SCHEMA};
use css_lab::{parse_config, CliError, Experiment};

#[test]
fn bare_selftest_takes_defaults() {
    let cfg = parse_config("experiment=selftest").unwrap();
    assert_eq!(cfg.experiment, Experiment::Selftest);
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.output_dir, PathBuf::from("css-lab-out"));
    assert_eq!((cfg.m, cfg.g, cfg.n), (0, 1.0, 512));
}

#[test]
fn evolve_keys_are_typed() {
    let cfg = parse_config("experiment=evolve\nm=1\ng=1.0\ndt=1e-4").unwrap();
    assert_eq!(cfg.experiment, Experiment::Evolve);
    assert_eq!(cfg.m, 1);
    assert_eq!(cfg.g, 1.0);
    assert_eq!(cfg.dt, 1e-4);
    assert_eq!(cfg.t_final, 1.0);
}

#[test]
fn unknown_key() {
    let err = parse_config("frobnicate=1").unwrap_err();
    assert!(matches!(&err, CliError::UnknownKey { key, line: 1 } if key == "frobnicate"), "{err:?}");
    assert_eq!(err.category(), "unknown-key");
    let err = parse_config("experiment=evolve\nfrobnicate=1").unwrap_err();
    assert!(matches!(err, CliError::UnknownKey { line: 2, .. }));
}

#[test]
fn missing_experiment() {
    let err = parse_config("m=1\ng=2").unwrap_err();
    assert!(matches!(&err, CliError::MissingRequired(k) if k == "experiment"), "{err:?}");
    assert_eq!(err.category(), "missing-required");
}

#[test]
fn type_errors() {
    for text in [
        "experiment=evolve\ndt=0",
        "experiment=evolve\ndt=-1e-4",
        "experiment=evolve\ndt=fast",
        "experiment=evolve\nm=1.5",
        "experiment=evolve\ng=nan",
        "experiment=evolve\nn=0",
        "experiment=evolve\nseed=-3",
        "experiment=evolve\nabsorber=maybe",
        "experiment=threshold\nfamily=cauchy",
        "experiment=teleport",
    ] {
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, CliError::TypeError { .. }), "{text:?}: {err:?}");
        assert_eq!(err.category(), "type-error");
        assert_eq!(err.exit_code(), 11);
    }
}

#[test]
fn syntax_and_duplicates() {
    assert!(matches!(parse_config("experiment evolve"), Err(CliError::Syntax { line: 1, .. })));
    assert!(matches!(parse_config("experiment=evolve\n=3"), Err(CliError::Syntax { line: 2, .. })));
    assert!(matches!(parse_config("experiment=evolve\nm=1\nm=2"), Err(CliError::DuplicateKey { line: 3, .. })));
}

#[test]
fn schema_lists_every_key_once() {
    let text = schema_text();
    for spec in SCHEMA {
        assert_eq!(text.lines().filter(|l| l.split_whitespace().next() == Some(spec.name)).count(), 1, "{}", spec.name);
    }
    let names: std::collections::BTreeSet<_> = SCHEMA.iter().map(|s| s.name).collect();
    assert_eq!(names.len(), SCHEMA.len());
}

#[test]
fn every_schema_key_is_accepted() {
    // the default of each key, spelled out explicitly, parses to the same config
    let base = parse_config("experiment=groundstate").unwrap();
    for spec in SCHEMA.iter().filter(|s| s.name != "experiment") {
        let text = format!("experiment=groundstate\n{}={}", spec.name, spec.default);
        let pairs = parse_pairs(&text).unwrap();
        let cfg = css_lab::RunConfig::from_pairs(&pairs).unwrap_or_else(|e| panic!("{}: {e}", spec.name));
        if spec.per.is_empty() {
            assert_eq!(serde_json::to_value(&cfg).unwrap(), serde_json::to_value(&base).unwrap(), "{}", spec.name);
        }
    }
}
