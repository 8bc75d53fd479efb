use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use fblsec_cli::config::{parse_assignment, read_file, CampaignConfig, ConfigError};
use fblsec_cli::output::{manifest, write_outputs};
use fblsec_cli::{run_scenario, EXIT_CONFIG, EXIT_RUNTIME, WORKERS_ENV};
use serde_json::{Map, Value};

#[derive(Parser)]
#[command(name = "fblsec", version, about = "Secure finite-blocklength feedback coding campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV files and manifest.
    Run(RunArgs),
    /// Print the merged configuration as JSON without running anything.
    Config(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Flat JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    realizations: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// "synthetic" or a directory with the MNIST IDX files.
    #[arg(long)]
    dataset: Option<String>,
    /// Any config key, as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn numeric(key: &str, raw: &str) -> Result<Value, ConfigError> {
    raw.parse::<u64>().map(Value::from).map_err(|_| ConfigError::BadValue {
        key: key.into(),
        reason: format!("expected an unsigned integer, got {raw:?}"),
    })
}

fn merged(args: &RunArgs) -> Result<CampaignConfig, ConfigError> {
    let file = match &args.config {
        Some(p) => read_file(p)?,
        None => Map::new(),
    };
    let mut flags = Map::new();
    for s in &args.set {
        let (k, v) = parse_assignment(s)?;
        flags.insert(k, v);
    }
    if let Some(v) = &args.scenario {
        flags.insert("scenario".into(), Value::String(v.clone()));
    }
    if let Some(v) = &args.seed {
        flags.insert("seed".into(), numeric("seed", v)?);
    }
    if let Some(v) = &args.realizations {
        flags.insert("realizations".into(), numeric("realizations", v)?);
    }
    if let Some(v) = &args.out {
        flags.insert("output_dir".into(), Value::String(v.clone()));
    }
    if let Some(v) = &args.dataset {
        flags.insert("dataset".into(), Value::String(v.clone()));
    }
    CampaignConfig::from_layers(&[file, flags])
}

fn configure_workers() -> Result<(), String> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = raw.parse().map_err(|_| format!("{WORKERS_ENV} must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err(format!("{WORKERS_ENV} must be a positive integer, got 0"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let (args, dry) = match &cli.command {
        Command::Run(a) => (a, false),
        Command::Config(a) => (a, true),
    };
    let cfg = match merged(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if dry {
        println!("{}", serde_json::to_string_pretty(&Value::Object(cfg.to_flat())).unwrap_or_default());
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let out = match run_scenario(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME as u8);
        }
    };
    let m = manifest(&cfg, &out, start.elapsed().as_secs_f64());
    match write_outputs(&cfg.campaign.output_dir, &m, &out) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: cannot write outputs: {e}");
            ExitCode::from(EXIT_RUNTIME as u8)
        }
    }
}
