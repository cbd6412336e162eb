//! Protocol parameters and the reverse-reconciliation key rate
//! `K = P (beta I(A:B2) - chi(B2:EF))` evaluated on Gaussian surrogates.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{TruncationConfig, TruncationWarning};
use crate::covariance::{
    assemble_gamma_ab2, assemble_gamma_efb2, baseline_elements, CovarianceElements,
    SubtractedChannel,
};
use crate::error::{Error, Result};
use crate::gausinfo::{holevo_information, mutual_information};
use crate::optimize;

/// Where the detector efficiency acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetEffPlacement {
    /// Loss in front of the subtraction detector.
    SubtractionTap,
    /// Loss in front of Bob's homodyne detector.
    Homodyne,
    /// Ideal detectors.
    None,
}

impl FromStr for DetEffPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subtraction_tap" => Ok(Self::SubtractionTap),
            "homodyne" => Ok(Self::Homodyne),
            "none" => Ok(Self::None),
            other => Err(Error::Domain(format!(
                "unknown detector-efficiency placement '{other}' (expected subtraction_tap, homodyne or none)"
            ))),
        }
    }
}

/// Physical and post-processing parameters of one protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Mean photon number of Alice's TMSV.
    pub alpha_sq: f64,
    /// Mean photon number of Eve's TMSV (channel noise).
    pub beta_sq: f64,
    /// Channel transmittance.
    pub channel_t: f64,
    /// Transmittance of Bob's subtraction beam splitter.
    pub tap_t1: f64,
    /// Reconciliation efficiency.
    pub recon_eff: f64,
    /// Detector efficiency.
    pub det_eff: f64,
    pub det_eff_placement: DetEffPlacement,
    pub trunc: TruncationConfig,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            alpha_sq: 1.0,
            beta_sq: 0.001,
            channel_t: 1.0,
            tap_t1: 0.9,
            recon_eff: 0.95,
            det_eff: 0.68,
            det_eff_placement: DetEffPlacement::SubtractionTap,
            trunc: TruncationConfig::default(),
        }
    }
}

fn in_half_open_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::Domain(format!("{name} must lie in (0, 1], got {v}")));
    }
    Ok(())
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_sq", self.alpha_sq), ("beta_sq", self.beta_sq)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        in_half_open_unit("channel_t", self.channel_t)?;
        in_half_open_unit("tap_t1", self.tap_t1)?;
        in_half_open_unit("recon_eff", self.recon_eff)?;
        in_half_open_unit("det_eff", self.det_eff)?;
        if self.trunc.n_max < 1 {
            return Err(Error::Domain("n_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Truncation warning for the larger of the two input mean photon numbers.
    pub fn truncation_warning(&self) -> Option<TruncationWarning> {
        self.trunc.check(self.alpha_sq.max(self.beta_sq))
    }

    pub fn with_alpha_sq(self, alpha_sq: f64) -> Self {
        Self { alpha_sq, ..self }
    }

    pub fn with_channel_t(self, channel_t: f64) -> Self {
        Self { channel_t, ..self }
    }
}

/// Protocol variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubtractionMode {
    /// Conventional protocol without subtraction.
    None,
    /// Photon-number-resolving counter accepting exactly `s` clicks.
    Counter(usize),
    /// Threshold detector accepting any click.
    Detector,
}

impl fmt::Display for SubtractionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::Counter(s) => write!(f, "counter:{s}"),
            Self::Detector => write!(f, "detector"),
        }
    }
}

impl FromStr for SubtractionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "none" => return Ok(Self::None),
            "detector" => return Ok(Self::Detector),
            "counter" => return Ok(Self::Counter(1)),
            _ => {}
        }
        if let Some(n) = s.strip_prefix("counter:") {
            let n: usize = n
                .parse()
                .map_err(|_| Error::Domain(format!("invalid photon count in '{s}'")))?;
            if n == 0 {
                return Err(Error::Domain("counter outcome must be >= 1".into()));
            }
            return Ok(Self::Counter(n));
        }
        Err(Error::Domain(format!(
            "unknown variant '{s}' (expected none, counter:S or detector)"
        )))
    }
}

impl Serialize for SubtractionMode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SubtractionMode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub mode: SubtractionMode,
    /// Secret bits per channel use (negative values are reported as is).
    pub key_rate: f64,
    pub post_select_prob: f64,
    pub mutual_info: f64,
    pub holevo: f64,
    pub elements: CovarianceElements,
    pub params_echo: ProtocolParams,
}

impl KeyRateResult {
    /// `|K - P (beta I - chi)|`.
    pub fn identity_residual(&self) -> f64 {
        let expect = self.post_select_prob
            * (self.params_echo.recon_eff * self.mutual_info - self.holevo);
        (self.key_rate - expect).abs()
    }
}

/// `T = 10^(-loss d / 10)`.
pub fn distance_to_transmittance(distance_km: f64, loss_db_per_km: f64) -> Result<f64> {
    if !(distance_km >= 0.0) || !distance_km.is_finite() {
        return Err(Error::Domain(format!(
            "distance must be finite and non-negative, got {distance_km}"
        )));
    }
    if !(loss_db_per_km > 0.0) || !loss_db_per_km.is_finite() {
        return Err(Error::Domain(format!(
            "fiber loss must be positive, got {loss_db_per_km}"
        )));
    }
    Ok(10f64.powf(-loss_db_per_km * distance_km / 10.0))
}

/// Key-rate evaluator at fixed channel, tap and noise, reusable across
/// values of Alice's modulation.
#[derive(Debug, Clone)]
pub struct KeyRateEvaluator {
    params: ProtocolParams,
    mode: SubtractionMode,
    channel: Option<SubtractedChannel>,
}

impl KeyRateEvaluator {
    pub fn new(params: &ProtocolParams, mode: SubtractionMode) -> Result<Self> {
        params.validate()?;
        let channel = match mode {
            SubtractionMode::None => None,
            _ => Some(SubtractedChannel::for_params(params, mode)?),
        };
        Ok(Self {
            params: *params,
            mode,
            channel,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn mode(&self) -> SubtractionMode {
        self.mode
    }

    pub fn evaluate(&self, alpha_sq: f64) -> Result<KeyRateResult> {
        let params = self.params.with_alpha_sq(alpha_sq);
        params.validate()?;
        let (elements, probability) = match &self.channel {
            None => (baseline_elements(&params), 1.0),
            Some(channel) => {
                let sub = channel.evaluate(alpha_sq, params.beta_sq)?;
                if !(sub.probability > 1e-300) {
                    return Err(Error::PostSelectionImpossible {
                        probability: sub.probability,
                    });
                }
                let e = match params.det_eff_placement {
                    DetEffPlacement::Homodyne => sub.elements.with_homodyne_efficiency(params.det_eff),
                    _ => sub.elements,
                };
                (e, sub.probability)
            }
        };
        assemble_gamma_ab2(&elements)?;
        let mutual_info = mutual_information(&elements)?;
        let holevo = holevo_information(&assemble_gamma_efb2(&elements)?)?;
        Ok(KeyRateResult {
            mode: self.mode,
            key_rate: probability * (params.recon_eff * mutual_info - holevo),
            post_select_prob: probability,
            mutual_info,
            holevo,
            elements,
            params_echo: params,
        })
    }
}

/// Key rate for one parameter set and protocol variant.
pub fn key_rate(params: &ProtocolParams, mode: SubtractionMode) -> Result<KeyRateResult> {
    KeyRateEvaluator::new(params, mode)?.evaluate(params.alpha_sq)
}

/// Key rate along a list of distances, with Alice's modulation either taken
/// from `params_base` or optimized per point. Output order follows
/// `distances`.
pub fn key_rate_vs_distance(
    params_base: &ProtocolParams,
    mode: SubtractionMode,
    distances: &[f64],
    loss_db_per_km: f64,
    optimize_alpha: bool,
) -> Result<Vec<KeyRateResult>> {
    distances
        .par_iter()
        .map(|&d| {
            let t = distance_to_transmittance(d, loss_db_per_km)?;
            let params = params_base.with_channel_t(t);
            if optimize_alpha {
                let eval = KeyRateEvaluator::new(&params, mode)?;
                let opt = optimize::optimize_with(&eval)?;
                eval.evaluate(opt.best_alpha_sq)
            } else {
                key_rate(&params, mode)
            }
        })
        .collect()
}
