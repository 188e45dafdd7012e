use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cuspform::cli::{self, parse_config, RunConfig, SweepAxis, EXIT_CONFIG};
use cuspform::{Error, Result};

#[derive(Parser)]
#[command(name = "cuspform", version, about = "Lagrangian cusp-formation solver and bound monitor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for compatibility; every run is deterministic.
    #[arg(long)]
    seedless: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate to blowup and write snapshots, theta and the report.
    Run(Common),
    /// Fit the K-bounds, select the constants and write the certificate.
    Certify(Common),
    /// Re-analyze the snapshots of a previous run.
    Analyze(Common),
    /// Run one job per value of an axis and write summary.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// N, eps0, beta-margin or profile-param.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; may be empty.
        #[arg(long, allow_hyphen_values = true, num_args = 0..=1, default_value = "", default_missing_value = "")]
        values: String,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let text = fs::read_to_string(&common.config)?;
    parse_config(&text)
}

fn out_dir(common: &Common, cfg: Option<&RunConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.map(|c| c.outputs.directory.clone()))
        .unwrap_or_else(|| Path::new("out").to_path_buf())
}

fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| Error::InvalidArgument(format!("bad sweep value `{v}`"))))
        .collect()
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(c) => {
            let cfg = load(&c);
            let out = out_dir(&c, cfg.as_ref().ok());
            if let Err(e) = &cfg {
                log::error!("{e}");
            }
            cli::cmd_run(cfg, &out)
        }
        Command::Certify(c) => {
            let cfg = load(&c)?;
            cli::cmd_certify(&cfg, &out_dir(&c, Some(&cfg)))
        }
        Command::Analyze(c) => {
            let cfg = load(&c)?;
            cli::cmd_analyze(&cfg, &out_dir(&c, Some(&cfg)))
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load(&common)?;
            let axis: SweepAxis = axis.parse()?;
            let values = parse_values(&values)?;
            let (_, code) = cli::cmd_sweep(&cfg, axis, &values, &out_dir(&common, Some(&cfg)))?;
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Cli::parse();
    let code = dispatch(args.command).unwrap_or_else(|e| {
        log::error!("{e}");
        EXIT_CONFIG
    });
    ExitCode::from(code as u8)
}
