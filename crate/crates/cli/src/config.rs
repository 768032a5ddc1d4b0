//! `key=value` run configuration. Every key is checked against [`SCHEMA`];
//! defaults can depend on the experiment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Evolve,
    SolitonCheck,
    Threshold,
    Groundstate,
    Selftest,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Evolve,
        Experiment::SolitonCheck,
        Experiment::Threshold,
        Experiment::Groundstate,
        Experiment::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Evolve => "evolve",
            Experiment::SolitonCheck => "soliton-check",
            Experiment::Threshold => "threshold",
            Experiment::Groundstate => "groundstate",
            Experiment::Selftest => "selftest",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Int,
    Uint,
    PosUint,
    Float,
    PosFloat,
    NonNegFloat,
    Bool,
    Choice(&'static [&'static str]),
    /// empty means unset
    Path,
    /// comma separated; empty means unset
    PosFloatList,
}

impl Kind {
    fn expected(&self) -> String {
        match self {
            Kind::Int => "an integer".into(),
            Kind::Uint => "a nonnegative integer".into(),
            Kind::PosUint => "a positive integer".into(),
            Kind::Float => "a finite number".into(),
            Kind::PosFloat => "a positive number".into(),
            Kind::NonNegFloat => "a nonnegative number".into(),
            Kind::Bool => "true or false".into(),
            Kind::Choice(c) => format!("one of {}", c.join(", ")),
            Kind::Path => "a path".into(),
            Kind::PosFloatList => "a comma-separated list of positive numbers".into(),
        }
    }
}

pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    /// experiment-specific defaults overriding `default`
    pub per: &'static [(Experiment, &'static str)],
    pub help: &'static str,
}

use Experiment::*;

pub const SCHEMA: &[KeySpec] = &[
    KeySpec {
        name: "experiment",
        kind: Kind::Choice(&["evolve", "soliton-check", "threshold", "groundstate", "selftest"]),
        default: "",
        per: &[],
        help: "what to run (required)",
    },
    KeySpec { name: "seed", kind: Kind::Uint, default: "0", per: &[], help: "random seed" },
    KeySpec { name: "output_dir", kind: Kind::Path, default: "css-lab-out", per: &[], help: "artifact directory" },
    KeySpec { name: "m", kind: Kind::Int, default: "0", per: &[], help: "equivariance index" },
    KeySpec { name: "g", kind: Kind::Float, default: "1", per: &[], help: "coupling" },
    KeySpec {
        name: "grid",
        kind: Kind::Choice(&["bessel-zero", "uniform", "geometric"]),
        default: "geometric",
        per: &[],
        help: "soliton-check grid kind",
    },
    KeySpec {
        name: "n",
        kind: Kind::PosUint,
        default: "512",
        per: &[(SolitonCheck, "4096"), (Groundstate, "1000")],
        help: "grid size",
    },
    KeySpec {
        name: "rmax",
        kind: Kind::PosFloat,
        default: "40",
        per: &[(SolitonCheck, "1e6"), (Groundstate, "1e4")],
        help: "outer radius",
    },
    KeySpec { name: "r_min", kind: Kind::PosFloat, default: "1e-6", per: &[], help: "inner radius of geometric grids" },
    KeySpec {
        name: "initial",
        kind: Kind::Choice(&["gaussian", "soliton", "random"]),
        default: "gaussian",
        per: &[],
        help: "evolve datum: amplitude * r^|m| exp(-r^2/2), amplitude * soliton, or a random smooth profile",
    },
    KeySpec { name: "amplitude", kind: Kind::PosFloat, default: "1", per: &[], help: "datum multiplier" },
    KeySpec { name: "lambda", kind: Kind::PosFloat, default: "1", per: &[], help: "soliton scale" },
    KeySpec { name: "dt", kind: Kind::PosFloat, default: "1e-3", per: &[(Threshold, "2e-3")], help: "time step" },
    KeySpec { name: "t_final", kind: Kind::PosFloat, default: "1", per: &[(Threshold, "10")], help: "run length" },
    KeySpec {
        name: "sample_every",
        kind: Kind::PosUint,
        default: "10",
        per: &[(Threshold, "25")],
        help: "steps between diagnostic rows",
    },
    KeySpec {
        name: "checkpoint_every",
        kind: Kind::Uint,
        default: "0",
        per: &[],
        help: "diagnostic rows between checkpoints; 0 writes only the final state",
    },
    KeySpec { name: "resume", kind: Kind::Path, default: "", per: &[], help: "evolve from this checkpoint" },
    KeySpec {
        name: "absorber",
        kind: Kind::Bool,
        default: "false",
        per: &[(Threshold, "true")],
        help: "damping layer at the outer edge",
    },
    KeySpec { name: "absorber_width", kind: Kind::PosFloat, default: "0.1", per: &[], help: "layer width / rmax" },
    KeySpec { name: "absorber_strength", kind: Kind::NonNegFloat, default: "4", per: &[], help: "damping rate" },
    KeySpec {
        name: "halt_on_blowup",
        kind: Kind::Bool,
        default: "true",
        per: &[],
        help: "stop at the blowup criterion",
    },
    KeySpec {
        name: "v2_cap",
        kind: Kind::NonNegFloat,
        default: "0",
        per: &[],
        help: "stop when the second moment exceeds this; 0 disables",
    },
    KeySpec { name: "decay_factor", kind: Kind::PosFloat, default: "4", per: &[], help: "dispersal: max|u| drop" },
    KeySpec { name: "growth_factor", kind: Kind::PosFloat, default: "10", per: &[], help: "blowup: max|u| growth" },
    KeySpec { name: "core_cells", kind: Kind::PosUint, default: "8", per: &[], help: "blowup: core size in nodes" },
    KeySpec {
        name: "core_fraction",
        kind: Kind::PosFloat,
        default: "0.5",
        per: &[],
        help: "blowup: core charge share",
    },
    KeySpec {
        name: "family",
        kind: Kind::Choice(&["scaled-soliton", "gaussian"]),
        default: "scaled-soliton",
        per: &[],
        help: "threshold probe family",
    },
    KeySpec { name: "alpha_lo", kind: Kind::PosFloat, default: "0.6", per: &[], help: "initial amplitude bracket" },
    KeySpec { name: "alpha_hi", kind: Kind::PosFloat, default: "1.6", per: &[], help: "initial amplitude bracket" },
    KeySpec {
        name: "rel_tol",
        kind: Kind::PosFloat,
        default: "0.05",
        per: &[(Groundstate, "1e-8")],
        help: "threshold bracket width / ground-state charge decrease per window",
    },
    KeySpec { name: "probes_per_round", kind: Kind::PosUint, default: "3", per: &[], help: "concurrent probes" },
    KeySpec { name: "max_rounds", kind: Kind::PosUint, default: "8", per: &[], help: "bisection rounds" },
    KeySpec {
        name: "tolerance",
        kind: Kind::PosFloat,
        default: "0.1",
        per: &[],
        help: "accepted relative distance of the threshold from 8 pi (m+1)",
    },
    KeySpec { name: "knots", kind: Kind::PosUint, default: "100", per: &[], help: "spline intervals; must divide n" },
    KeySpec { name: "max_iterations", kind: Kind::PosUint, default: "3000", per: &[], help: "descent iterations" },
    KeySpec { name: "window", kind: Kind::PosUint, default: "50", per: &[], help: "convergence window" },
    KeySpec { name: "penalty", kind: Kind::PosFloat, default: "1e3", per: &[], help: "infeasible-shape weight" },
    KeySpec {
        name: "sweep_g",
        kind: Kind::PosFloatList,
        default: "",
        per: &[],
        help: "couplings to sweep; empty uses g",
    },
    KeySpec { name: "sweep_seeds", kind: Kind::PosUint, default: "1", per: &[], help: "seeds per coupling" },
];

fn spec(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.name == key)
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    List(Vec<f64>),
}

fn parse_value(key: &str, raw: &str, kind: Kind) -> CliResult<Value> {
    let bad = || CliError::TypeError { key: key.into(), value: raw.into(), expected: kind.expected() };
    let float = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    Ok(match kind {
        Kind::Int => Value::Int(raw.parse().map_err(|_| bad())?),
        Kind::Uint => Value::Int(raw.parse::<u32>().map_err(|_| bad())? as i64),
        Kind::PosUint => Value::Int(raw.parse::<u32>().ok().filter(|v| *v > 0).ok_or_else(bad)? as i64),
        Kind::Float => Value::Float(float(raw).ok_or_else(bad)?),
        Kind::PosFloat => Value::Float(float(raw).filter(|v| *v > 0.0).ok_or_else(bad)?),
        Kind::NonNegFloat => Value::Float(float(raw).filter(|v| *v >= 0.0).ok_or_else(bad)?),
        Kind::Bool => Value::Bool(match raw {
            "true" => true,
            "false" => false,
            _ => return Err(bad()),
        }),
        Kind::Choice(c) => {
            if !c.contains(&raw) {
                return Err(bad());
            }
            Value::Text(raw.into())
        }
        Kind::Path => Value::Text(raw.into()),
        Kind::PosFloatList => {
            if raw.is_empty() {
                Value::List(Vec::new())
            } else {
                let v: Option<Vec<f64>> = raw.split(',').map(|s| float(s).filter(|v| *v > 0.0)).collect();
                Value::List(v.ok_or_else(bad)?)
            }
        }
    })
}

/// Validated configuration with defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub m: i64,
    pub g: f64,
    pub grid: String,
    pub n: usize,
    pub rmax: f64,
    pub r_min: f64,
    pub initial: String,
    pub amplitude: f64,
    pub lambda: f64,
    pub dt: f64,
    pub t_final: f64,
    pub sample_every: usize,
    pub checkpoint_every: usize,
    pub resume: Option<PathBuf>,
    pub absorber: bool,
    pub absorber_width: f64,
    pub absorber_strength: f64,
    pub halt_on_blowup: bool,
    pub v2_cap: f64,
    pub decay_factor: f64,
    pub growth_factor: f64,
    pub core_cells: usize,
    pub core_fraction: f64,
    pub family: String,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub rel_tol: f64,
    pub probes_per_round: usize,
    pub max_rounds: usize,
    pub tolerance: f64,
    pub knots: usize,
    pub max_iterations: usize,
    pub window: usize,
    pub penalty: f64,
    pub sweep_g: Vec<f64>,
    pub sweep_seeds: usize,
}

/// Raw `key -> (value, line)` pairs before typing.
pub type Pairs = BTreeMap<String, (String, usize)>;

/// Splits `key=value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> CliResult<Pairs> {
    let mut out = Pairs::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(CliError::Syntax { line: line_no, text: line.into() });
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(CliError::Syntax { line: line_no, text: line.into() });
        }
        if out.insert(key.clone(), (v.trim().to_string(), line_no)).is_some() {
            return Err(CliError::DuplicateKey { key, line: line_no });
        }
    }
    Ok(out)
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    RunConfig::from_pairs(&parse_pairs(text)?)
}

impl RunConfig {
    pub fn from_pairs(pairs: &Pairs) -> CliResult<Self> {
        let mut typed = BTreeMap::new();
        for (key, (raw, line)) in pairs {
            let Some(s) = spec(key) else {
                return Err(CliError::UnknownKey { key: key.clone(), line: *line });
            };
            typed.insert(s.name, parse_value(key, raw, s.kind)?);
        }
        let experiment = match typed.get("experiment") {
            Some(Value::Text(t)) => Experiment::from_name(t).expect("choice checked"),
            _ => return Err(CliError::MissingRequired("experiment".into())),
        };
        for s in SCHEMA.iter().filter(|s| s.name != "experiment") {
            if !typed.contains_key(s.name) {
                let d = s.per.iter().find(|(e, _)| *e == experiment).map_or(s.default, |(_, d)| *d);
                typed.insert(s.name, parse_value(s.name, d, s.kind).expect("schema defaults parse"));
            }
        }
        let int = |k: &str| match typed[k] {
            Value::Int(v) => v,
            _ => unreachable!("{k} is an integer key"),
        };
        let float = |k: &str| match typed[k] {
            Value::Float(v) => v,
            _ => unreachable!("{k} is a float key"),
        };
        let flag = |k: &str| match typed[k] {
            Value::Bool(v) => v,
            _ => unreachable!("{k} is a bool key"),
        };
        let text = |k: &str| match &typed[k] {
            Value::Text(v) => v.clone(),
            _ => unreachable!("{k} is a text key"),
        };
        let cfg = RunConfig {
            experiment,
            seed: int("seed") as u64,
            output_dir: PathBuf::from(text("output_dir")),
            m: int("m"),
            g: float("g"),
            grid: text("grid"),
            n: int("n") as usize,
            rmax: float("rmax"),
            r_min: float("r_min"),
            initial: text("initial"),
            amplitude: float("amplitude"),
            lambda: float("lambda"),
            dt: float("dt"),
            t_final: float("t_final"),
            sample_every: int("sample_every") as usize,
            checkpoint_every: int("checkpoint_every") as usize,
            resume: Some(text("resume")).filter(|p| !p.is_empty()).map(PathBuf::from),
            absorber: flag("absorber"),
            absorber_width: float("absorber_width"),
            absorber_strength: float("absorber_strength"),
            halt_on_blowup: flag("halt_on_blowup"),
            v2_cap: float("v2_cap"),
            decay_factor: float("decay_factor"),
            growth_factor: float("growth_factor"),
            core_cells: int("core_cells") as usize,
            core_fraction: float("core_fraction"),
            family: text("family"),
            alpha_lo: float("alpha_lo"),
            alpha_hi: float("alpha_hi"),
            rel_tol: float("rel_tol"),
            probes_per_round: int("probes_per_round") as usize,
            max_rounds: int("max_rounds") as usize,
            tolerance: float("tolerance"),
            knots: int("knots") as usize,
            max_iterations: int("max_iterations") as usize,
            window: int("window") as usize,
            penalty: float("penalty"),
            sweep_g: match &typed["sweep_g"] {
                Value::List(v) => v.clone(),
                _ => unreachable!("sweep_g is a list key"),
            },
            sweep_seeds: int("sweep_seeds") as usize,
        };
        if cfg.output_dir.as_os_str().is_empty() {
            return Err(CliError::InvalidValue { key: "output_dir".into(), message: "must not be empty".into() });
        }
        Ok(cfg)
    }
}

/// Human-readable schema table.
pub fn schema_text() -> String {
    let mut out = String::new();
    for s in SCHEMA {
        let mut default = if s.default.is_empty() { "-".to_string() } else { s.default.to_string() };
        for (e, d) in s.per {
            default.push_str(&format!(", {e}: {d}"));
        }
        out.push_str(&format!("{:<18} {:<44} [{}]  {}\n", s.name, s.kind.expected(), default, s.help));
    }
    out
}
