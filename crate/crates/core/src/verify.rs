//! Cross-checks of the closed forms against the Fock-space oracle.

use serde::Serialize;

use crate::coeffs::TruncationConfig;
use crate::covariance::{self, CovarianceElements, MODE_A, MODE_B2, MODE_E, MODE_F};
use crate::error::{Error, Result};
use crate::gausinfo::{
    condition_on_homodyne, holevo_information, symplectic_eigenvalues, Quadrature,
};
use crate::oracle::{self, Ensemble, Outcome, FOUR_MODES};
use crate::protocol::{DetEffPlacement, ProtocolParams, SubtractionMode};

/// Default truncation of the oracle suites.
pub const ORACLE_N_MAX: usize = 8;

/// Error of `value` against `reference`, relative to `max(|reference|, 1)`.
///
/// Variances are at least one, so for them this is the plain relative
/// error; correlations that vanish are compared on the vacuum scale.
pub fn scaled_error(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(1.0)
}

/// The three parameter sets of the equivalence suite.
pub fn standard_cases(n_max: usize) -> Vec<ProtocolParams> {
    [(0.2, 0.0, 0.3), (0.5, 0.001, 0.5), (1.0, 0.01, 0.9)]
        .into_iter()
        .map(|(alpha_sq, beta_sq, channel_t)| ProtocolParams {
            alpha_sq,
            beta_sq,
            channel_t,
            tap_t1: 0.9,
            recon_eff: 0.95,
            det_eff: 1.0,
            det_eff_placement: DetEffPlacement::SubtractionTap,
            trunc: TruncationConfig {
                n_max,
                tail_tolerance: 1.0,
            },
        })
        .collect()
}

pub fn standard_modes() -> [SubtractionMode; 3] {
    [
        SubtractionMode::Counter(1),
        SubtractionMode::Counter(2),
        SubtractionMode::Detector,
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub params: ProtocolParams,
    pub mode: SubtractionMode,
    pub closed_form: CovarianceElements,
    pub oracle: CovarianceElements,
    pub element_errors: [f64; 8],
    /// Relative error of the acceptance probability (zero for the baseline).
    pub probability_error: f64,
    /// Deviation of the oracle covariance from the assumed block structure.
    pub structure_residual: f64,
}

impl CaseReport {
    pub fn max_error(&self) -> f64 {
        self.element_errors
            .iter()
            .copied()
            .fold(self.probability_error, f64::max)
    }
}

fn detector_efficiency(params: &ProtocolParams) -> f64 {
    match params.det_eff_placement {
        DetEffPlacement::SubtractionTap => params.det_eff,
        DetEffPlacement::Homodyne | DetEffPlacement::None => 1.0,
    }
}

fn outcome(mode: SubtractionMode) -> Option<Outcome> {
    match mode {
        SubtractionMode::None => None,
        SubtractionMode::Counter(s) => Some(Outcome::Exact(s)),
        SubtractionMode::Detector => Some(Outcome::Threshold),
    }
}

/// Oracle ensemble on `A, B2, E, F` and its acceptance probability.
pub fn oracle_ensemble(params: &ProtocolParams, mode: SubtractionMode) -> Result<(Ensemble, f64)> {
    match outcome(mode) {
        None => oracle::baseline_ensemble(params),
        Some(o) => oracle::subtracted_ensemble(params, o, detector_efficiency(params)),
    }
}

/// Compares `closed_params` against the oracle run at `oracle_params`.
/// The two differ only when a deliberately corrupted run is requested.
fn compare(
    closed_params: &ProtocolParams,
    oracle_params: &ProtocolParams,
    mode: SubtractionMode,
) -> Result<CaseReport> {
    let (closed, closed_p) = match mode {
        SubtractionMode::None => {
            let s = covariance::truncated_baseline(closed_params)?;
            (s.elements, s.probability)
        }
        _ => {
            let s = covariance::subtracted(closed_params, mode)?;
            (s.elements, s.probability)
        }
    };
    let (ens, p) = oracle_ensemble(oracle_params, mode)?;
    let gamma = oracle::covariance_from_state(&ens, &FOUR_MODES)?;
    let (reference, structure_residual) = oracle::elements_from_covariance(&gamma)?;
    let mut element_errors = [0.0; 8];
    for (slot, (a, b)) in element_errors
        .iter_mut()
        .zip(closed.as_array().iter().zip(reference.as_array()))
    {
        *slot = scaled_error(*a, b);
    }
    Ok(CaseReport {
        params: *oracle_params,
        mode,
        closed_form: closed,
        oracle: reference,
        element_errors,
        probability_error: (closed_p - p).abs() / p,
        structure_residual,
    })
}

pub fn oracle_case(params: &ProtocolParams, mode: SubtractionMode) -> Result<CaseReport> {
    compare(params, params, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceReport {
    /// Entropy of `E F` from the g-function on the exact covariance.
    pub entropy_gaussian: f64,
    /// Exact von Neumann entropy of `E F`.
    pub entropy_exact: f64,
    /// Holevo bound of the key rate: Gaussian state with the exact
    /// covariance of `E, F, B2`, `q` homodyne on `B2`.
    pub holevo_gaussian: f64,
    /// Exact Holevo information between the `B2` outcome and `E F`.
    pub holevo_exact: f64,
    /// Gaussian Holevo bound for an Eve holding a purification of `A B2`:
    /// `S_G(A B2) - S_G(A | x_B2)`.
    pub holevo_gaussian_purified: f64,
    /// Exact `S(A B2) - int p(x) S(A | x) dx`.
    pub holevo_exact_purified: f64,
}

impl DominanceReport {
    pub fn entropy_slack(&self) -> f64 {
        self.entropy_gaussian - self.entropy_exact
    }

    /// Slack of the `E, F, B2` bound used by the key rate.
    pub fn holevo_slack(&self) -> f64 {
        self.holevo_gaussian - self.holevo_exact
    }

    /// Slack of the purification bound.
    pub fn purified_holevo_slack(&self) -> f64 {
        self.holevo_gaussian_purified - self.holevo_exact_purified
    }
}

pub fn gaussian_dominance(params: &ProtocolParams, mode: SubtractionMode) -> Result<DominanceReport> {
    let (ens, _) = oracle_ensemble(params, mode)?;
    let gamma = oracle::covariance_from_state(&ens, &[MODE_E, MODE_F, MODE_B2])?;
    let gamma_ef = gamma.select(&[MODE_E, MODE_F])?;
    let entropy_gaussian = symplectic_eigenvalues(&gamma_ef)?.entropy()?;
    let entropy_exact = oracle::entropy_exact(&oracle::reduce(&ens, &[MODE_E, MODE_F])?)?;
    let holevo_gaussian = holevo_information(&gamma)?;
    let holevo_exact = oracle::holevo_exact(&ens, MODE_B2, &[MODE_E, MODE_F])?;

    let gamma_ab = oracle::covariance_from_state(&ens, &[MODE_A, MODE_B2])?;
    let holevo_gaussian_purified = symplectic_eigenvalues(&gamma_ab)?.entropy()?
        - symplectic_eigenvalues(&condition_on_homodyne(&gamma_ab, MODE_B2, Quadrature::Q)?)?
            .entropy()?;
    let s_ab = oracle::entropy_exact(&oracle::reduce(&ens, &[MODE_A, MODE_B2])?)?;
    let s_a_given_x = oracle::homodyne_conditional_entropy(&ens, MODE_B2, &[MODE_A], Quadrature::Q)?;
    Ok(DominanceReport {
        entropy_gaussian,
        entropy_exact,
        holevo_gaussian,
        holevo_exact,
        holevo_gaussian_purified,
        holevo_exact_purified: s_ab - s_a_given_x,
    })
}

/// Parameters of a verification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub n_max: usize,
    pub oracle_n_max: usize,
    pub tolerance: f64,
    /// Runs the closed form of the first case with a perturbed tap
    /// transmittance, so the suite must fail.
    pub corrupt_tap: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_max: ORACLE_N_MAX,
            oracle_n_max: ORACLE_N_MAX,
            tolerance: 1e-9,
            corrupt_tap: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub cases: Vec<CaseReport>,
    pub dominance: Vec<DominanceReport>,
    pub tolerance: f64,
    /// Largest error per element over all cases, in [`CovarianceElements::NAMES`] order.
    pub max_element_errors: [f64; 8],
    pub max_probability_error: f64,
}

impl VerifyReport {
    /// Equivalence within tolerance, entropy dominance and the purification
    /// Holevo bound. The `E, F, B2` Holevo bound is reported but not
    /// required: it can fall below the exact value for non-Gaussian states.
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.max_error() <= self.tolerance)
            && self.dominance.iter().all(|d| {
                d.entropy_slack() >= -self.tolerance && d.purified_holevo_slack() >= -self.tolerance
            })
    }

    pub fn min_eve_mode_holevo_slack(&self) -> f64 {
        self.dominance
            .iter()
            .map(|d| d.holevo_slack())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Equivalence suite over [`standard_cases`] and [`standard_modes`] plus the
/// baseline, and the Gaussian-dominance suite on the same cases.
pub fn run_verification(opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.n_max != opts.oracle_n_max {
        return Err(Error::Contract(format!(
            "closed form (n_max = {}) and oracle (n_max = {}) must use the same truncation",
            opts.n_max, opts.oracle_n_max
        )));
    }
    let mut cases = Vec::new();
    let mut dominance = Vec::new();
    for (i, params) in standard_cases(opts.oracle_n_max).iter().enumerate() {
        for mode in std::iter::once(SubtractionMode::None).chain(standard_modes()) {
            let mut closed = *params;
            if opts.corrupt_tap && i == 0 {
                closed.tap_t1 *= 1.0 - 1e-3;
            }
            cases.push(compare(&closed, params, mode)?);
        }
        dominance.push(gaussian_dominance(params, SubtractionMode::Detector)?);
    }
    let mut max_element_errors = [0.0f64; 8];
    for c in &cases {
        for (m, e) in max_element_errors.iter_mut().zip(c.element_errors) {
            *m = m.max(e);
        }
    }
    let max_probability_error = cases.iter().map(|c| c.probability_error).fold(0.0, f64::max);
    Ok(VerifyReport {
        cases,
        dominance,
        tolerance: opts.tolerance,
        max_element_errors,
        max_probability_error,
    })
}
