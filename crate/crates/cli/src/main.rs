use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use css_lab::config::{parse_pairs, schema_text, Pairs};
use css_lab::{init_threads, run, CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "css-lab", version, about = "Equivariant Chern-Simons-Schrödinger experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Keys come from `--config FILE` and from `--key value` / `--key=value`
/// flags, which override the file. `css-lab schema` lists every key.
#[derive(clap::Args)]
struct Keys {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    args: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a datum; writes diagnostics.csv, checkpoints and summary.json
    Evolve(Keys),
    /// Certify an explicit soliton
    SolitonCheck(Keys),
    /// Bracket the critical charge by dynamic bisection
    Threshold(Keys),
    /// Minimal-charge zero-J standing waves, optionally swept over g and seeds
    Groundstate(Keys),
    /// Quick internal consistency checks
    Selftest(Keys),
    /// Run a configuration file that names its own experiment
    Run { config: PathBuf },
    /// Print the configuration schema
    Schema,
}

/// Turns `[--config F] --key v --other=w` into key/value pairs.
fn collect(experiment: Option<&str>, args: &[String]) -> CliResult<Pairs> {
    let mut file: Option<PathBuf> = None;
    let mut flags: Vec<(String, String)> = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            return Err(CliError::Syntax { line: 0, text: a.clone() });
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::Syntax { line: 0, text: a.clone() })?;
                (flag.to_string(), v.clone())
            }
        };
        if key == "config" {
            file = Some(PathBuf::from(value));
        } else {
            flags.push((key.replace('-', "_"), value));
        }
    }
    let mut pairs = match &file {
        Some(path) => parse_pairs(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)?,
        None => Pairs::new(),
    };
    if let Some(e) = experiment {
        if let Some((given, _)) = pairs.get("experiment") {
            if given != e {
                return Err(CliError::InvalidValue {
                    key: "experiment".into(),
                    message: format!("config file says `{given}` but the subcommand is `{e}`"),
                });
            }
        }
        pairs.insert("experiment".into(), (e.into(), 0));
    }
    for (k, v) in flags {
        pairs.insert(k, (v, 0));
    }
    Ok(pairs)
}

fn execute(cli: Cli) -> CliResult<()> {
    let (experiment, args) = match &cli.command {
        Command::Evolve(k) => ("evolve", k.args.clone()),
        Command::SolitonCheck(k) => ("soliton-check", k.args.clone()),
        Command::Threshold(k) => ("threshold", k.args.clone()),
        Command::Groundstate(k) => ("groundstate", k.args.clone()),
        Command::Selftest(k) => ("selftest", k.args.clone()),
        Command::Run { config } => {
            let cfg = RunConfig::from_pairs(&collect(None, &["--config".into(), config.display().to_string()])?)?;
            init_threads()?;
            run(&cfg)?;
            return Ok(());
        }
        Command::Schema => {
            print!("{}", schema_text());
            return Ok(());
        }
    };
    let cfg = RunConfig::from_pairs(&collect(Some(experiment), &args)?)?;
    init_threads()?;
    run(&cfg)?;
    println!("{}", cfg.output_dir.join("summary.json").display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("css-lab: {e}");
            let report =
                serde_json::json!({ "category": e.category(), "exit_code": e.exit_code(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
