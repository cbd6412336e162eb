//! Optimization of Alice's modulation and the maximum-distance search.

use crate::error::Result;
use crate::protocol::{distance_to_transmittance, KeyRateEvaluator, ProtocolParams, SubtractionMode};

/// Search interval for `log10(alpha^2)`.
pub const LOG_ALPHA_RANGE: (f64, f64) = (-2.0, 2.0);
/// Coarse grid size over [`LOG_ALPHA_RANGE`].
pub const GRID_POINTS: usize = 17;
/// Relative tolerance on the optimal `alpha^2`.
pub const ALPHA_REL_TOL: f64 = 1e-3;

/// Coarse scan step of the maximum-distance search, in km.
pub const DISTANCE_SCAN_STEP: f64 = 5.0;
/// Final resolution of the maximum-distance search, in km.
pub const DISTANCE_RESOLUTION: f64 = 0.01;
/// The scan gives up here and reports this distance.
pub const DISTANCE_SCAN_LIMIT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptResult {
    pub best_alpha_sq: f64,
    pub best_key_rate: f64,
    pub evaluations: usize,
    /// `alpha^2` interval of the final golden-section bracket.
    pub bracket: (f64, f64),
    /// No positive key rate anywhere in the search interval.
    pub all_negative: bool,
}

/// Maximizes the key rate over `alpha^2` in `[1e-2, 1e2]` at `distance_km`.
pub fn optimize_alpha(
    params_base: &ProtocolParams,
    mode: SubtractionMode,
    distance_km: f64,
    loss_db_per_km: f64,
) -> Result<OptResult> {
    let t = distance_to_transmittance(distance_km, loss_db_per_km)?;
    let eval = KeyRateEvaluator::new(&params_base.with_channel_t(t), mode)?;
    optimize_with(&eval)
}

/// Log-scale grid followed by golden-section refinement around the best
/// grid cell.
pub fn optimize_with(eval: &KeyRateEvaluator) -> Result<OptResult> {
    let mut evaluations = 0usize;
    let mut f = |x: f64| -> Result<f64> {
        evaluations += 1;
        Ok(eval.evaluate(10f64.powf(x))?.key_rate)
    };

    let (lo, hi) = LOG_ALPHA_RANGE;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let mut values = Vec::with_capacity(GRID_POINTS);
    for &x in &grid {
        values.push(f(x)?);
    }
    let best_i = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > values[b] { i } else { b });
    let mut best = (grid[best_i], values[best_i]);

    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(GRID_POINTS - 1)];
    let tol = ALPHA_REL_TOL / std::f64::consts::LN_10;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(OptResult {
        best_alpha_sq: 10f64.powf(best.0),
        best_key_rate: best.1,
        evaluations,
        bracket: (10f64.powf(a), 10f64.powf(b)),
        all_negative: best.1 <= 0.0,
    })
}

fn optimized_rate(
    params_base: &ProtocolParams,
    mode: SubtractionMode,
    distance_km: f64,
    loss_db_per_km: f64,
) -> Result<f64> {
    Ok(optimize_alpha(params_base, mode, distance_km, loss_db_per_km)?.best_key_rate)
}

/// Largest distance with a positive optimized key rate: 5 km scan, then
/// bisection to 0.01 km. Returns 0 when no key is possible at zero distance.
pub fn max_distance(
    params_base: &ProtocolParams,
    mode: SubtractionMode,
    loss_db_per_km: f64,
) -> Result<f64> {
    if optimized_rate(params_base, mode, 0.0, loss_db_per_km)? <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = loop {
        let d = lo + DISTANCE_SCAN_STEP;
        if d > DISTANCE_SCAN_LIMIT {
            return Ok(DISTANCE_SCAN_LIMIT);
        }
        if optimized_rate(params_base, mode, d, loss_db_per_km)? <= 0.0 {
            break d;
        }
        lo = d;
    };
    while hi - lo > DISTANCE_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if optimized_rate(params_base, mode, mid, loss_db_per_km)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::TruncationConfig;
    use crate::protocol::key_rate;

    fn reference_params(n_max: usize) -> ProtocolParams {
        ProtocolParams {
            trunc: TruncationConfig::new(n_max, 1e-6).unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn optimum_dominates_a_fine_grid() {
        let base = reference_params(16);
        for (mode, d) in [(SubtractionMode::None, 40.0), (SubtractionMode::Detector, 60.0)] {
            let opt = optimize_alpha(&base, mode, d, 0.2).unwrap();
            let t = distance_to_transmittance(d, 0.2).unwrap();
            for i in 0..50 {
                let a = 10f64.powf(-2.0 + 4.0 * i as f64 / 49.0);
                let k = key_rate(&base.with_channel_t(t).with_alpha_sq(a), mode)
                    .unwrap()
                    .key_rate;
                assert!(opt.best_key_rate >= k - 1e-4, "{mode}: {} < {k} at {a}", opt.best_key_rate);
            }
            assert!(opt.bracket.0 <= opt.best_alpha_sq && opt.best_alpha_sq <= opt.bracket.1);
        }
    }

    #[test]
    fn conventional_optimum_shrinks_with_distance() {
        let base = reference_params(10);
        let alphas: Vec<f64> = [0.0, 20.0, 40.0, 60.0, 80.0]
            .iter()
            .map(|&d| optimize_alpha(&base, SubtractionMode::None, d, 0.2).unwrap().best_alpha_sq)
            .collect();
        for w in alphas.windows(2) {
            assert!(w[1] < w[0], "{alphas:?}");
        }
    }

    #[test]
    fn optimization_is_deterministic() {
        let base = reference_params(10);
        let a = optimize_alpha(&base, SubtractionMode::None, 25.0, 0.2).unwrap();
        let b = optimize_alpha(&base, SubtractionMode::None, 25.0, 0.2).unwrap();
        assert_eq!(a.best_alpha_sq.to_bits(), b.best_alpha_sq.to_bits());
        assert_eq!(a.best_key_rate.to_bits(), b.best_key_rate.to_bits());
    }

    #[test]
    fn heavy_noise_kills_the_key() {
        let base = ProtocolParams {
            beta_sq: 10.0,
            ..reference_params(10)
        };
        let opt = optimize_alpha(&base, SubtractionMode::None, 20.0, 0.2).unwrap();
        assert!(opt.all_negative);
        assert!(max_distance(&base, SubtractionMode::None, 0.2).unwrap() < DISTANCE_SCAN_STEP);
    }

    #[test]
    fn bisection_brackets_the_cutoff() {
        let base = reference_params(10);
        let d = max_distance(&base, SubtractionMode::None, 0.2).unwrap();
        assert!(d > 0.0);
        let inside = optimize_alpha(&base, SubtractionMode::None, d - DISTANCE_RESOLUTION, 0.2).unwrap();
        let outside = optimize_alpha(&base, SubtractionMode::None, d + DISTANCE_RESOLUTION, 0.2).unwrap();
        assert!(inside.best_key_rate > 0.0);
        assert!(outside.best_key_rate <= 0.0);
    }
}
