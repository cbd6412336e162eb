//! Run configuration: a flat TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;

use cvqkd_core::coeffs::TruncationConfig;
use cvqkd_core::protocol::{DetEffPlacement, ProtocolParams, SubtractionMode};

use crate::error::{CliError, CliResult};

pub const DEFAULT_LOSS_DB_PER_KM: f64 = 0.2;
pub const DEFAULT_DISTANCES: &str = "0:100:5";
pub const DEFAULT_BETA2_GRID: [f64; 5] = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Keys accepted in a config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub alpha_sq: Option<f64>,
    pub beta_sq: Option<f64>,
    pub channel_t: Option<f64>,
    pub tap_t1: Option<f64>,
    pub recon_eff: Option<f64>,
    pub det_eff: Option<f64>,
    pub det_eff_placement: Option<DetEffPlacement>,
    pub n_max: Option<usize>,
    pub tail_tolerance: Option<f64>,
    pub variants: Option<Vec<SubtractionMode>>,
    pub distance_km: Option<f64>,
    /// `lo:hi:step` in km.
    pub distances: Option<String>,
    pub beta2_grid: Option<Vec<f64>>,
    pub loss_db_per_km: Option<f64>,
    pub optimize_alpha: Option<bool>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        Settings { $($field: $top.$field.or($base.$field)),* }
    };
}

impl Settings {
    /// Values of `top` win over those of `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        let base = self;
        overlay!(
            base, top, alpha_sq, beta_sq, channel_t, tap_t1, recon_eff, det_eff,
            det_eff_placement, n_max, tail_tolerance, variants, distance_km, distances,
            beta2_grid, loss_db_per_km, optimize_alpha, format, out, jobs, seed
        )
    }

    pub fn from_toml(text: &str, origin: &Path) -> CliResult<Settings> {
        toml::from_str(text)
            .map_err(|e| CliError::BadInput(format!("{}: {}", origin.display(), e.to_string().trim_end())))
    }

    pub fn load(path: &Path) -> CliResult<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::BadInput(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text, path)
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ProtocolParams,
    /// `None` lets each command pick its own default variants.
    pub variants: Option<Vec<SubtractionMode>>,
    pub distance_km: Option<f64>,
    pub distances: Vec<f64>,
    pub beta2_grid: Vec<f64>,
    pub loss_db_per_km: f64,
    pub optimize_alpha: bool,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: u64,
}

impl RunConfig {
    pub fn resolve(s: Settings, default_format: Format) -> CliResult<RunConfig> {
        let d = ProtocolParams::default();
        let trunc = TruncationConfig::new(
            s.n_max.unwrap_or(d.trunc.n_max),
            s.tail_tolerance.unwrap_or(d.trunc.tail_tolerance),
        )?;
        let params = ProtocolParams {
            alpha_sq: s.alpha_sq.unwrap_or(d.alpha_sq),
            beta_sq: s.beta_sq.unwrap_or(d.beta_sq),
            channel_t: s.channel_t.unwrap_or(d.channel_t),
            tap_t1: s.tap_t1.unwrap_or(d.tap_t1),
            recon_eff: s.recon_eff.unwrap_or(d.recon_eff),
            det_eff: s.det_eff.unwrap_or(d.det_eff),
            det_eff_placement: s.det_eff_placement.unwrap_or(d.det_eff_placement),
            trunc,
        };
        params.validate()?;
        let distances = parse_range(s.distances.as_deref().unwrap_or(DEFAULT_DISTANCES))?;
        check_grid("distances", &distances)?;
        let beta2_grid = s.beta2_grid.unwrap_or_else(|| DEFAULT_BETA2_GRID.to_vec());
        check_grid("beta2_grid", &beta2_grid)?;
        if let Some(v) = &s.variants {
            if v.is_empty() {
                return Err(CliError::BadInput("at least one variant is required".into()));
            }
        }
        if let Some(d) = s.distance_km {
            if !(d >= 0.0) || !d.is_finite() {
                return Err(CliError::BadInput(format!("distance must be non-negative, got {d}")));
            }
        }
        let loss_db_per_km = s.loss_db_per_km.unwrap_or(DEFAULT_LOSS_DB_PER_KM);
        if !(loss_db_per_km > 0.0) || !loss_db_per_km.is_finite() {
            return Err(CliError::BadInput(format!(
                "loss_db_per_km must be positive, got {loss_db_per_km}"
            )));
        }
        if s.jobs == Some(0) {
            return Err(CliError::BadInput("jobs must be at least 1".into()));
        }
        Ok(RunConfig {
            params,
            variants: s.variants,
            distance_km: s.distance_km,
            distances,
            beta2_grid,
            loss_db_per_km,
            optimize_alpha: s.optimize_alpha.unwrap_or(false),
            format: s.format.unwrap_or(default_format),
            out: s.out,
            jobs: s.jobs,
            seed: s.seed.unwrap_or(0),
        })
    }

    pub fn variants_or(&self, default: &[SubtractionMode]) -> Vec<SubtractionMode> {
        self.variants.clone().unwrap_or_else(|| default.to_vec())
    }
}

/// Parses `lo:hi:step` into `lo, lo + step, ...` up to `hi` inclusive. An
/// empty string is an empty grid.
pub fn parse_range(spec: &str) -> CliResult<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let bad = || CliError::BadInput(format!("expected lo:hi:step, got '{spec}'"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + step * i as f64).collect())
}

/// Parses `v1,v2,...`. An empty string is an empty grid.
pub fn parse_list(spec: &str) -> CliResult<Vec<f64>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::BadInput(format!("not a number: '{s}'")))
        })
        .collect()
}

fn check_grid(name: &str, grid: &[f64]) -> CliResult<()> {
    if grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(CliError::BadInput(format!("{name} must be finite and non-negative")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::BadInput(format!("{name} must be strictly increasing")));
    }
    Ok(())
}
