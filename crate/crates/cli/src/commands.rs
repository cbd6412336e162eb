//! Subcommand drivers. Each returns the rendered output; the caller decides
//! where it goes.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use cvqkd_core::coeffs::TruncationConfig;
use cvqkd_core::covariance::CovarianceElements;
use cvqkd_core::optimize::{max_distance, optimize_with};
use cvqkd_core::protocol::{
    distance_to_transmittance, key_rate_vs_distance, DetEffPlacement, KeyRateEvaluator,
    KeyRateResult, ProtocolParams, SubtractionMode,
};
use cvqkd_core::verify::{self, DominanceReport, VerifyOptions, VerifyReport};

use crate::config::{Format, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Table};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    pub body: String,
    /// Set by `verify` when a check fails (exit code 1).
    pub failed: bool,
}

impl CommandOutput {
    fn ok(body: String) -> Self {
        Self { body, failed: false }
    }
}

pub const KEYRATE_VARIANT: SubtractionMode = SubtractionMode::Detector;
pub const SWEEP_VARIANTS: [SubtractionMode; 3] = [
    SubtractionMode::None,
    SubtractionMode::Counter(1),
    SubtractionMode::Detector,
];
pub const MAXDISTANCE_VARIANTS: [SubtractionMode; 2] =
    [SubtractionMode::None, SubtractionMode::Detector];

fn evaluate_point(params: &ProtocolParams, mode: SubtractionMode, optimize: bool) -> CliResult<KeyRateResult> {
    let eval = KeyRateEvaluator::new(params, mode)?;
    let alpha_sq = if optimize {
        optimize_with(&eval)?.best_alpha_sq
    } else {
        params.alpha_sq
    };
    Ok(eval.evaluate(alpha_sq)?)
}

/// Params of the run with the channel set from `distance_km` when given.
fn point_params(cfg: &RunConfig) -> CliResult<ProtocolParams> {
    Ok(match cfg.distance_km {
        Some(d) => cfg
            .params
            .with_channel_t(distance_to_transmittance(d, cfg.loss_db_per_km)?),
        None => cfg.params,
    })
}

const KEYRATE_COLUMNS: [&str; 12] = [
    "variant",
    "alpha_sq",
    "beta_sq",
    "channel_t",
    "tap_t1",
    "recon_eff",
    "det_eff",
    "det_eff_placement",
    "post_select_prob",
    "mutual_info",
    "holevo",
    "key_rate",
];

fn placement_name(p: DetEffPlacement) -> &'static str {
    match p {
        DetEffPlacement::SubtractionTap => "subtraction_tap",
        DetEffPlacement::Homodyne => "homodyne",
        DetEffPlacement::None => "none",
    }
}

fn keyrate_table(results: &[KeyRateResult]) -> Table {
    let columns: Vec<&str> = KEYRATE_COLUMNS
        .iter()
        .copied()
        .chain(CovarianceElements::NAMES)
        .collect();
    let mut t = Table::new(&columns);
    for r in results {
        let p = &r.params_echo;
        let mut row: Vec<Cell> = vec![
            r.mode.to_string().into(),
            p.alpha_sq.into(),
            p.beta_sq.into(),
            p.channel_t.into(),
            p.tap_t1.into(),
            p.recon_eff.into(),
            p.det_eff.into(),
            placement_name(p.det_eff_placement).to_string().into(),
            r.post_select_prob.into(),
            r.mutual_info.into(),
            r.holevo.into(),
            r.key_rate.into(),
        ];
        row.extend(r.elements.as_array().map(Cell::Num));
        t.push(row);
    }
    t
}

/// One key-rate record per requested variant (default: detector).
pub fn keyrate(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let params = point_params(cfg)?;
    let results = cfg
        .variants_or(&[KEYRATE_VARIANT])
        .into_iter()
        .map(|mode| evaluate_point(&params, mode, cfg.optimize_alpha))
        .collect::<CliResult<Vec<_>>>()?;
    let body = match cfg.format {
        Format::Csv => keyrate_table(&results).to_csv()?,
        Format::Json => {
            let value = if results.len() == 1 {
                serde_json::to_value(&results[0])
            } else {
                serde_json::to_value(&results)
            }
            .map_err(|e| CliError::Numerical(e.to_string()))?;
            let mut s = serde_json::to_string_pretty(&value)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    Ok(CommandOutput::ok(body))
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "distance_km",
    "variant",
    "channel_t",
    "alpha_sq",
    "post_select_prob",
    "mutual_info",
    "holevo",
    "key_rate",
];

/// Key rate against distance for each variant, variant-major row order.
pub fn sweep_table(cfg: &RunConfig) -> CliResult<Table> {
    let mut t = Table::new(&SWEEP_COLUMNS);
    for mode in cfg.variants_or(&SWEEP_VARIANTS) {
        let results = key_rate_vs_distance(
            &cfg.params,
            mode,
            &cfg.distances,
            cfg.loss_db_per_km,
            cfg.optimize_alpha,
        )?;
        for (d, r) in cfg.distances.iter().zip(&results) {
            t.push(vec![
                (*d).into(),
                mode.to_string().into(),
                r.params_echo.channel_t.into(),
                r.params_echo.alpha_sq.into(),
                r.post_select_prob.into(),
                r.mutual_info.into(),
                r.holevo.into(),
                r.key_rate.into(),
            ]);
        }
    }
    Ok(t)
}

pub fn sweep(cfg: &RunConfig) -> CliResult<CommandOutput> {
    Ok(CommandOutput::ok(sweep_table(cfg)?.render(cfg.format)?))
}

pub const MAXDISTANCE_COLUMNS: [&str; 3] = ["beta_sq", "variant", "max_distance_km"];

/// Maximum distance over the noise grid for each variant, in parallel over
/// grid points.
pub fn maxdistance_table(cfg: &RunConfig) -> CliResult<Table> {
    let variants = cfg.variants_or(&MAXDISTANCE_VARIANTS);
    let points: Vec<(f64, SubtractionMode)> = cfg
        .beta2_grid
        .iter()
        .flat_map(|&b| variants.iter().map(move |&m| (b, m)))
        .collect();
    let distances = points
        .par_iter()
        .map(|&(beta_sq, mode)| {
            let params = ProtocolParams { beta_sq, ..cfg.params };
            max_distance(&params, mode, cfg.loss_db_per_km)
        })
        .collect::<cvqkd_core::Result<Vec<f64>>>()?;
    let mut t = Table::new(&MAXDISTANCE_COLUMNS);
    for ((b, m), d) in points.iter().zip(distances) {
        t.push(vec![(*b).into(), m.to_string().into(), d.into()]);
    }
    Ok(t)
}

pub fn maxdistance(cfg: &RunConfig) -> CliResult<CommandOutput> {
    Ok(CommandOutput::ok(maxdistance_table(cfg)?.render(cfg.format)?))
}

/// Random parameter draws for the Gaussian-dominance suite.
pub fn dominance_draws(seed: u64, count: usize, n_max: usize) -> Vec<(ProtocolParams, SubtractionMode)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let params = ProtocolParams {
                alpha_sq: rng.gen_range(0.1..1.5),
                beta_sq: rng.gen_range(0.0..0.02),
                channel_t: rng.gen_range(0.2..1.0),
                tap_t1: rng.gen_range(0.7..0.95),
                recon_eff: 0.95,
                det_eff: rng.gen_range(0.5..1.0),
                det_eff_placement: DetEffPlacement::SubtractionTap,
                trunc: TruncationConfig {
                    n_max,
                    tail_tolerance: 1.0,
                },
            };
            let mode = match rng.gen_range(0..3) {
                0 => SubtractionMode::Counter(1),
                1 => SubtractionMode::Counter(2),
                _ => SubtractionMode::Detector,
            };
            (params, mode)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DrawReport {
    pub params: ProtocolParams,
    pub mode: SubtractionMode,
    pub dominance: DominanceReport,
}

pub fn run_draws(draws: &[(ProtocolParams, SubtractionMode)]) -> CliResult<Vec<DrawReport>> {
    draws
        .par_iter()
        .map(|(params, mode)| {
            Ok(DrawReport {
                params: *params,
                mode: *mode,
                dominance: verify::gaussian_dominance(params, *mode)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct FullReport<'a> {
    passed: bool,
    suite: &'a VerifyReport,
    draws: &'a [DrawReport],
}

fn dominance_ok(d: &DominanceReport, tol: f64) -> bool {
    d.entropy_slack() >= -tol && d.purified_holevo_slack() >= -tol
}

fn write_dominance(out: &mut String, label: &str, d: &DominanceReport) {
    let _ = writeln!(
        out,
        "  {label}: entropy slack {:+.3e}, purification holevo slack {:+.3e}, eve-mode holevo slack {:+.3e}",
        d.entropy_slack(),
        d.purified_holevo_slack(),
        d.holevo_slack()
    );
}

/// Oracle equivalence and Gaussian dominance, plus `draws` random
/// dominance cases.
pub fn verify(opts: &VerifyOptions, draws: usize, seed: u64, format: Format) -> CliResult<CommandOutput> {
    let report = verify::run_verification(opts)?;
    let draw_reports = run_draws(&dominance_draws(seed, draws, opts.oracle_n_max))?;
    let passed = report.passed()
        && draw_reports
            .iter()
            .all(|d| dominance_ok(&d.dominance, report.tolerance));
    let body = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&FullReport {
                passed,
                suite: &report,
                draws: &draw_reports,
            })
            .map_err(|e| CliError::Numerical(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "oracle equivalence (n_max = {}, tolerance {:e})",
                opts.oracle_n_max, report.tolerance
            );
            for c in &report.cases {
                let _ = writeln!(
                    out,
                    "  {:<10} alpha_sq={} beta_sq={} T={}: max error {:.3e}",
                    c.mode.to_string(),
                    c.params.alpha_sq,
                    c.params.beta_sq,
                    c.params.channel_t,
                    c.max_error()
                );
            }
            let _ = writeln!(out, "max error per element");
            for (name, e) in CovarianceElements::NAMES.iter().zip(report.max_element_errors) {
                let _ = writeln!(out, "  {name:<6} {e:.3e}");
            }
            let _ = writeln!(out, "  {:<6} {:.3e}", "P", report.max_probability_error);
            let _ = writeln!(out, "gaussian dominance");
            for (i, d) in report.dominance.iter().enumerate() {
                write_dominance(&mut out, &format!("case {}", i + 1), d);
            }
            for (i, d) in draw_reports.iter().enumerate() {
                write_dominance(&mut out, &format!("draw {} {}", i + 1, d.mode), &d.dominance);
            }
            let _ = writeln!(out, "result: {}", if passed { "PASS" } else { "FAIL" });
            out
        }
    };
    Ok(CommandOutput { body, failed: !passed })
}
