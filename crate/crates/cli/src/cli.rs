//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cvqkd_core::protocol::{DetEffPlacement, SubtractionMode};
use cvqkd_core::verify::{VerifyOptions, ORACLE_N_MAX};

use crate::commands::{self, CommandOutput};
use crate::config::{parse_list, Format, RunConfig, Settings};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cvqkd", version, about = "Key rates of CV-QKD with receiver-side photon subtraction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key rate at one operating point.
    Keyrate(CommonArgs),
    /// Key rate against distance.
    Sweep(CommonArgs),
    /// Maximum distance against channel noise.
    Maxdistance(CommonArgs),
    /// Cross-check the closed forms against the Fock-space oracle.
    Verify(VerifyArgs),
}

fn parse_mode(s: &str) -> Result<SubtractionMode, String> {
    s.parse().map_err(|e: cvqkd_core::Error| e.to_string())
}

fn parse_placement(s: &str) -> Result<DetEffPlacement, String> {
    s.parse().map_err(|e: cvqkd_core::Error| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with run settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write output here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Optimize Alice's modulation per point (`--optimize-alpha=false` to disable).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub optimize_alpha: Option<bool>,
    /// none, counter:S or detector; repeat or separate with commas.
    #[arg(long = "variant", value_delimiter = ',', value_parser = parse_mode)]
    pub variants: Vec<SubtractionMode>,
    /// Distance grid `lo:hi:step` in km.
    #[arg(long)]
    pub distances: Option<String>,
    /// Noise grid `v1,v2,...`.
    #[arg(long = "beta2-grid")]
    pub beta2_grid: Option<String>,
    #[arg(long)]
    pub loss_db_per_km: Option<f64>,
    /// Distance in km; sets the channel transmittance.
    #[arg(long)]
    pub distance: Option<f64>,
    #[arg(long)]
    pub alpha_sq: Option<f64>,
    #[arg(long)]
    pub beta_sq: Option<f64>,
    #[arg(long)]
    pub channel_t: Option<f64>,
    #[arg(long)]
    pub tap_t1: Option<f64>,
    #[arg(long)]
    pub recon_eff: Option<f64>,
    #[arg(long)]
    pub det_eff: Option<f64>,
    /// subtraction_tap, homodyne or none.
    #[arg(long, value_parser = parse_placement)]
    pub det_eff_placement: Option<DetEffPlacement>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub tail_tolerance: Option<f64>,
    /// Seed of the random parameter draws.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Truncation of the oracle; `--n-max` sets the closed form's.
    #[arg(long, default_value_t = ORACLE_N_MAX)]
    pub oracle_n_max: usize,
    /// Extra random Gaussian-dominance cases.
    #[arg(long, default_value_t = 0)]
    pub draws: usize,
    #[arg(long, hide = true)]
    pub corrupt_tap: bool,
}

impl CommonArgs {
    fn settings(&self) -> CliResult<Settings> {
        let beta2_grid = self.beta2_grid.as_deref().map(parse_list).transpose()?;
        Ok(Settings {
            alpha_sq: self.alpha_sq,
            beta_sq: self.beta_sq,
            channel_t: self.channel_t,
            tap_t1: self.tap_t1,
            recon_eff: self.recon_eff,
            det_eff: self.det_eff,
            det_eff_placement: self.det_eff_placement,
            n_max: self.n_max,
            tail_tolerance: self.tail_tolerance,
            variants: (!self.variants.is_empty()).then(|| self.variants.clone()),
            distance_km: self.distance,
            distances: self.distances.clone(),
            beta2_grid,
            loss_db_per_km: self.loss_db_per_km,
            optimize_alpha: self.optimize_alpha,
            format: self.format,
            out: self.out.clone(),
            jobs: self.jobs,
            seed: self.seed,
        })
    }

    pub fn resolve(&self, default_format: Format) -> CliResult<RunConfig> {
        let file = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        RunConfig::resolve(file.overlay(self.settings()?), default_format)
    }
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::BadInput(format!("cannot start {n} workers: {e}"))),
    }
}

fn emit(cfg_out: Option<&PathBuf>, output: &CommandOutput) -> CliResult<()> {
    match cfg_out {
        Some(path) => std::fs::write(path, &output.body)?,
        None => print!("{}", output.body),
    }
    Ok(())
}

/// Runs one command, writes its output and returns the process exit code.
pub fn run(cli: &Cli) -> CliResult<i32> {
    let (output, out_path) = match &cli.command {
        Command::Keyrate(a) | Command::Sweep(a) | Command::Maxdistance(a) => {
            let default_format = match cli.command {
                Command::Keyrate(_) => Format::Json,
                _ => Format::Csv,
            };
            let cfg = a.resolve(default_format)?;
            if let Some(w) = cfg.params.truncation_warning() {
                eprintln!("warning: {w}");
            }
            let output = in_pool(cfg.jobs, || match cli.command {
                Command::Keyrate(_) => commands::keyrate(&cfg),
                Command::Sweep(_) => commands::sweep(&cfg),
                _ => commands::maxdistance(&cfg),
            })??;
            (output, cfg.out)
        }
        Command::Verify(v) => {
            let cfg = v.common.resolve(Format::Csv)?;
            let opts = VerifyOptions {
                n_max: v.common.n_max.unwrap_or(v.oracle_n_max),
                oracle_n_max: v.oracle_n_max,
                corrupt_tap: v.corrupt_tap,
                ..Default::default()
            };
            let output = in_pool(cfg.jobs, || commands::verify(&opts, v.draws, cfg.seed, cfg.format))??;
            (output, cfg.out)
        }
    };
    emit(out_path.as_ref(), &output)?;
    Ok(if output.failed { 1 } else { 0 })
}
