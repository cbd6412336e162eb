//! Scalar kernels of the Fock-basis expansion of the protocol state.
//!
//! Alice's two-mode squeezed vacuum and Eve's purifying ancilla are written
//! in the number basis, mixed on the channel beam splitter (transmittance
//! `T`) and then tapped by Bob's subtraction beam splitter (transmittance
//! `T1`). Every amplitude of the resulting five-mode state is a product of
//! the kernels in this module:
//!
//! * [`tmsv_coeff`]: number-state amplitude of a two-mode squeezed vacuum,
//! * [`bs_coeff`]: `sqrt(C(n,k)) T^((n-k)/2) (1-T)^(k/2)`,
//! * [`zeta_coeff`]: the re-normalisation factor from merging creation
//!   operators on the same output port,
//! * [`j_plus`] / [`j_minus`]: overlaps between expansion terms that land on
//!   the same output ket.
//!
//! All combinatorics go through a log-factorial table so that `C(60, 30)`
//! and friends never overflow.

use crate::error::{Error, Result};
use crate::protocol::{DetEffPlacement, ProtocolParams, SubtractionMode};

/// Truncation of every infinite photon-number sum.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TruncationConfig {
    /// Largest photon number kept in Alice's and Eve's input states.
    pub n_max: usize,
    /// Largest geometric tail mass beyond `n_max` accepted without a warning.
    pub tail_tolerance: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            n_max: 30,
            tail_tolerance: 1e-6,
        }
    }
}

/// The thermal tail beyond the truncation point exceeds the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationWarning {
    pub mean_photons: f64,
    pub n_max: usize,
    pub tail_mass: f64,
    pub tolerance: f64,
}

impl std::fmt::Display for TruncationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "truncation at n_max={} leaves tail mass {:.3e} for mean photon number {} (tolerance {:.1e})",
            self.n_max, self.tail_mass, self.mean_photons, self.tolerance
        )
    }
}

impl TruncationConfig {
    pub fn new(n_max: usize, tail_tolerance: f64) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::Domain("n_max must be at least 1".into()));
        }
        if !(tail_tolerance > 0.0) {
            return Err(Error::Domain(format!(
                "tail tolerance must be positive, got {tail_tolerance}"
            )));
        }
        Ok(Self {
            n_max,
            tail_tolerance,
        })
    }

    /// Probability mass of a thermal distribution with mean `mean_photons`
    /// above `n_max`.
    pub fn tail_mass(&self, mean_photons: f64) -> f64 {
        if mean_photons <= 0.0 {
            return 0.0;
        }
        (mean_photons / (1.0 + mean_photons)).powi(self.n_max as i32 + 1)
    }

    pub fn check(&self, mean_photons: f64) -> Option<TruncationWarning> {
        let tail_mass = self.tail_mass(mean_photons);
        (tail_mass > self.tail_tolerance).then_some(TruncationWarning {
            mean_photons,
            n_max: self.n_max,
            tail_mass,
            tolerance: self.tail_tolerance,
        })
    }
}

/// `ln(i!)` for `i = 0..=max`.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    pub fn new(max: usize) -> Self {
        let mut table = Vec::with_capacity(max + 1);
        let mut acc = 0.0f64;
        table.push(0.0);
        for i in 1..=max {
            acc += (i as f64).ln();
            table.push(acc);
        }
        Self { table }
    }

    pub fn max(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn ln_factorial(&self, n: usize) -> f64 {
        self.table[n]
    }

    /// `ln C(n, k)`; `-inf` when `k > n`.
    #[inline]
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

fn ln_factorial_direct(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn ln_binomial_direct(n: usize, k: usize) -> f64 {
    ln_factorial_direct(n) - ln_factorial_direct(k) - ln_factorial_direct(n - k)
}

/// `x^p` for `p >= 0` with `0^0 = 1`, in the log domain.
#[inline]
fn ln_pow(ln_x: f64, p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * ln_x
    }
}

fn check_unit_interval(name: &str, t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("{name} must lie in [0, 1], got {t}")));
    }
    Ok(())
}

/// Number-state amplitude `sqrt(mu^n / (1+mu)^(n+1))` of a two-mode squeezed
/// vacuum with mean photon number `mean_photons` per mode.
pub fn tmsv_coeff(n: usize, mean_photons: f64) -> Result<f64> {
    if !(mean_photons >= 0.0) || !mean_photons.is_finite() {
        return Err(Error::Domain(format!(
            "mean photon number must be finite and non-negative, got {mean_photons}"
        )));
    }
    if mean_photons == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let ln = 0.5 * (n as f64 * mean_photons.ln() - (n as f64 + 1.0) * mean_photons.ln_1p());
    Ok(ln.exp())
}

fn bs_coeff_unchecked(ln_binom: f64, t: f64, n: usize, k: usize) -> f64 {
    let up = (n - k) as f64 / 2.0;
    let down = k as f64 / 2.0;
    if (t == 0.0 && up > 0.0) || (t == 1.0 && down > 0.0) {
        return 0.0;
    }
    (0.5 * ln_binom + ln_pow(t.ln(), up) + ln_pow((1.0 - t).ln(), down)).exp()
}

/// Beam-splitter coefficient `sqrt(C(n,k)) T^((n-k)/2) (1-T)^(k/2)`: the
/// amplitude for `k` of `n` photons leaving through the reflected port.
pub fn bs_coeff(t: f64, n: usize, k: usize) -> Result<f64> {
    check_unit_interval("transmittance", t)?;
    if k > n {
        return Err(Error::Domain(format!("bs_coeff requires k <= n, got k={k}, n={n}")));
    }
    Ok(bs_coeff_unchecked(ln_binomial_direct(n, k), t, n, k))
}

/// `sqrt(C(n-k+l, l)) * sqrt(C(k+m-l, k))`.
pub fn zeta_coeff(n: usize, k: usize, m: usize, l: usize) -> Result<f64> {
    if k > n || l > m {
        return Err(Error::Domain(format!(
            "zeta_coeff requires k <= n and l <= m, got ({n},{k},{m},{l})"
        )));
    }
    Ok(zeta_unchecked(n, k, m, l))
}

fn zeta_unchecked(n: usize, k: usize, m: usize, l: usize) -> f64 {
    (0.5 * (ln_binomial_direct(n - k + l, l) + ln_binomial_direct(k + m - l, k))).exp()
}

/// Expansion indices: `n` photons from Alice's TMSV of which `k` are
/// reflected to Eve, `m` from Eve's ancilla of which `l` are reflected to
/// Bob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexTuple {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub l: usize,
}

impl IndexTuple {
    pub fn new(n: usize, k: usize, m: usize, l: usize) -> Result<Self> {
        if k > n || l > m {
            return Err(Error::Domain(format!(
                "index tuple requires k <= n and l <= m, got ({n},{k},{m},{l})"
            )));
        }
        Ok(Self { n, k, m, l })
    }

    /// Photons entering the subtraction beam splitter: `n - k + l`.
    pub fn bob_photons(&self) -> usize {
        self.n - self.k + self.l
    }

    /// Photons in Eve's channel output: `k + m - l`.
    pub fn eve_photons(&self) -> usize {
        self.k + self.m - self.l
    }
}

// The second tuple of an overlap may carry `l = m + 1`: the E-B2 cross
// correlation pairs (n,k,m,l) with (n,k,m,l+1) for every l <= m, and only
// the downward shifts of the latter are in range.
fn check_pair(idx1: &IndexTuple, idx2: &IndexTuple) -> Result<()> {
    if idx1.k > idx1.n || idx1.l > idx1.m {
        return Err(Error::Domain(format!("invalid first index tuple {idx1:?}")));
    }
    if idx2.k > idx2.n || idx2.l > idx2.m + 1 {
        return Err(Error::Domain(format!("invalid second index tuple {idx2:?}")));
    }
    Ok(())
}

fn gamma_or_zero(t: f64, n: usize, k: usize) -> f64 {
    if k > n {
        0.0
    } else {
        bs_coeff_unchecked(ln_binomial_direct(n, k), t, n, k)
    }
}

fn zeta_or_zero(n: usize, k: usize, m: usize, l: usize) -> f64 {
    if k > n || l > m {
        0.0
    } else {
        zeta_unchecked(n, k, m, l)
    }
}

fn overlap_term(
    idx1: &IndexTuple,
    n2: usize,
    k2: usize,
    m2: usize,
    l2: usize,
    t: f64,
) -> f64 {
    gamma_or_zero(t, idx1.n, idx1.k)
        * gamma_or_zero(t, n2, k2)
        * gamma_or_zero(t, idx1.m, idx1.l)
        * gamma_or_zero(t, m2, l2)
        * zeta_or_zero(idx1.n, idx1.k, idx1.m, idx1.l)
        * zeta_or_zero(n2, k2, m2, l2)
}

fn tap_factor(idx1: &IndexTuple, idx2: &IndexTuple, t1: f64, s: usize) -> f64 {
    let b1 = idx1.bob_photons();
    let b2 = idx2.n + idx2.l - idx2.k;
    gamma_or_zero(t1, b1, s) * gamma_or_zero(t1, b2, s)
}

/// Overlap of expansion term `idx1` with the terms `idx2 + (j, j)`,
/// `j = 0..=min(n2-k2, m2-l2)`, for `s` photons tapped off.
pub fn j_plus(
    idx1: &IndexTuple,
    idx2: &IndexTuple,
    t: f64,
    t1: f64,
    s: usize,
) -> Result<f64> {
    check_unit_interval("channel transmittance", t)?;
    check_unit_interval("tap transmittance", t1)?;
    check_pair(idx1, idx2)?;
    let tap = tap_factor(idx1, idx2, t1, s);
    if tap == 0.0 || idx2.l > idx2.m {
        return Ok(0.0);
    }
    let upper = (idx2.n - idx2.k).min(idx2.m - idx2.l);
    let mut acc = 0.0;
    for j in 0..=upper {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * overlap_term(idx1, idx2.n, idx2.k + j, idx2.m, idx2.l + j, t);
    }
    Ok(acc * tap)
}

/// Overlap of expansion term `idx1` with the terms `idx2 - (j, j)`,
/// `j = 1..=min(k2, l2)`, for `s` photons tapped off.
pub fn j_minus(
    idx1: &IndexTuple,
    idx2: &IndexTuple,
    t: f64,
    t1: f64,
    s: usize,
) -> Result<f64> {
    check_unit_interval("channel transmittance", t)?;
    check_unit_interval("tap transmittance", t1)?;
    check_pair(idx1, idx2)?;
    let tap = tap_factor(idx1, idx2, t1, s);
    if tap == 0.0 {
        return Ok(0.0);
    }
    let upper = idx2.k.min(idx2.l);
    let mut acc = 0.0;
    for j in 1..=upper {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * overlap_term(idx1, idx2.n, idx2.k - j, idx2.m, idx2.l - j, t);
    }
    Ok(acc * tap)
}

/// Number-state amplitudes of a truncated TMSV; zero beyond `n_max`.
#[derive(Debug, Clone)]
pub struct TmsvTable {
    amps: Vec<f64>,
}

impl TmsvTable {
    pub fn new(mean_photons: f64, n_max: usize) -> Result<Self> {
        let amps = (0..=n_max)
            .map(|n| tmsv_coeff(n, mean_photons))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { amps })
    }

    #[inline]
    pub fn get(&self, n: usize) -> f64 {
        self.amps.get(n).copied().unwrap_or(0.0)
    }

    #[inline]
    pub fn sq(&self, n: usize) -> f64 {
        let a = self.get(n);
        a * a
    }
}

/// Read-only tables of the beam-splitter and merge coefficients for one
/// `(n_max, T, T1)` triple.
#[derive(Debug, Clone)]
pub struct Kernels {
    n_max: usize,
    channel_t: f64,
    tap_t1: f64,
    sqrt_binom: Vec<Vec<f64>>,
    gamma_t: Vec<Vec<f64>>,
    gamma_t1: Vec<Vec<f64>>,
}

impl Kernels {
    pub fn new(n_max: usize, channel_t: f64, tap_t1: f64) -> Result<Self> {
        check_unit_interval("channel transmittance", channel_t)?;
        check_unit_interval("tap transmittance", tap_t1)?;
        let top = 2 * n_max + 2;
        let lf = LogFactorials::new(top);
        let sqrt_binom = (0..=top)
            .map(|a| (0..=a).map(|b| (0.5 * lf.ln_binomial(a, b)).exp()).collect())
            .collect();
        let gamma_row = |t: f64, n: usize| -> Vec<f64> {
            (0..=n)
                .map(|k| bs_coeff_unchecked(lf.ln_binomial(n, k), t, n, k))
                .collect()
        };
        let gamma_t = (0..=n_max + 1).map(|n| gamma_row(channel_t, n)).collect();
        let gamma_t1 = (0..=top).map(|n| gamma_row(tap_t1, n)).collect();
        Ok(Self {
            n_max,
            channel_t,
            tap_t1,
            sqrt_binom,
            gamma_t,
            gamma_t1,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn channel_t(&self) -> f64 {
        self.channel_t
    }

    pub fn tap_t1(&self) -> f64 {
        self.tap_t1
    }

    #[inline]
    pub fn gamma_t(&self, n: usize, k: usize) -> f64 {
        if k > n {
            0.0
        } else {
            self.gamma_t[n][k]
        }
    }

    #[inline]
    pub fn gamma_t1(&self, n: usize, s: usize) -> f64 {
        if s > n {
            0.0
        } else {
            self.gamma_t1[n][s]
        }
    }

    #[inline]
    pub fn zeta(&self, n: usize, k: usize, m: usize, l: usize) -> f64 {
        if k > n || l > m {
            return 0.0;
        }
        self.sqrt_binom[n - k + l][l] * self.sqrt_binom[k + m - l][k]
    }

    /// Unsigned channel amplitude `gamma(n,k) gamma(m,l) zeta(n,k,m,l)`.
    #[inline]
    pub fn channel_amp(&self, n: usize, k: usize, m: usize, l: usize) -> f64 {
        if k > n || l > m {
            return 0.0;
        }
        self.gamma_t[n][k] * self.gamma_t[m][l] * self.zeta(n, k, m, l)
    }

    /// `j_plus` without the two tap factors.
    pub fn channel_plus(&self, idx1: &IndexTuple, idx2: &IndexTuple) -> f64 {
        if idx2.l > idx2.m {
            return 0.0;
        }
        let head = self.channel_amp(idx1.n, idx1.k, idx1.m, idx1.l);
        let upper = (idx2.n - idx2.k).min(idx2.m - idx2.l);
        let mut acc = 0.0;
        for j in 0..=upper {
            let term = self.channel_amp(idx2.n, idx2.k + j, idx2.m, idx2.l + j);
            if j % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        head * acc
    }

    /// `j_minus` without the two tap factors.
    pub fn channel_minus(&self, idx1: &IndexTuple, idx2: &IndexTuple) -> f64 {
        let head = self.channel_amp(idx1.n, idx1.k, idx1.m, idx1.l);
        let upper = idx2.k.min(idx2.l);
        let mut acc = 0.0;
        for j in 1..=upper {
            let term = self.channel_amp(idx2.n, idx2.k - j, idx2.m, idx2.l - j);
            if j % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        head * acc
    }

    fn tap(&self, idx1: &IndexTuple, idx2: &IndexTuple, s: usize) -> f64 {
        self.gamma_t1(idx1.bob_photons(), s) * self.gamma_t1(idx2.n + idx2.l - idx2.k, s)
    }

    pub fn j_plus(&self, idx1: &IndexTuple, idx2: &IndexTuple, s: usize) -> f64 {
        self.channel_plus(idx1, idx2) * self.tap(idx1, idx2, s)
    }

    pub fn j_minus(&self, idx1: &IndexTuple, idx2: &IndexTuple, s: usize) -> f64 {
        self.channel_minus(idx1, idx2) * self.tap(idx1, idx2, s)
    }
}

/// Probability that the tap detector accepts, given the true number of
/// photons in the tapped mode.
///
/// An inefficient detector of efficiency `eta` is a lossy channel followed
/// by an ideal one, so `j` tapped photons produce `s` detections with
/// probability `C(j,s) eta^s (1-eta)^(j-s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickModel {
    weights: Vec<f64>,
}

impl ClickModel {
    pub fn new(mode: SubtractionMode, efficiency: f64, max_photons: usize) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::Domain(format!(
                "detector efficiency must lie in (0, 1], got {efficiency}"
            )));
        }
        let lf = LogFactorials::new(max_photons);
        let miss = 1.0 - efficiency;
        let weights = match mode {
            SubtractionMode::None => {
                return Err(Error::Contract(
                    "no click model for the protocol without subtraction".into(),
                ))
            }
            SubtractionMode::Counter(s) => {
                if s == 0 {
                    return Err(Error::Domain("photon counter outcome must be >= 1".into()));
                }
                (0..=max_photons)
                    .map(|j| {
                        if j < s {
                            0.0
                        } else if miss == 0.0 {
                            if j == s {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            (lf.ln_binomial(j, s)
                                + s as f64 * efficiency.ln()
                                + (j - s) as f64 * miss.ln())
                            .exp()
                        }
                    })
                    .collect()
            }
            SubtractionMode::Detector => (0..=max_photons)
                .map(|j| if j == 0 { 0.0 } else { 1.0 - miss.powi(j as i32) })
                .collect(),
        };
        Ok(Self { weights })
    }

    /// Accepts only the vacuum outcome.
    pub fn no_click() -> Self {
        Self { weights: vec![1.0] }
    }

    /// Click model for `mode` with the efficiency that `params` places on
    /// the tap detector.
    pub fn for_params(params: &ProtocolParams, mode: SubtractionMode) -> Result<Self> {
        let eta = match params.det_eff_placement {
            DetEffPlacement::SubtractionTap => params.det_eff,
            DetEffPlacement::Homodyne | DetEffPlacement::None => 1.0,
        };
        Self::new(mode, eta, 2 * params.trunc.n_max + 2)
    }

    #[inline]
    pub fn weight(&self, photons: usize) -> f64 {
        self.weights.get(photons).copied().unwrap_or(0.0)
    }

    pub fn max_photons(&self) -> usize {
        self.weights.len() - 1
    }
}

/// Probability that the tap detector accepts, for the truncated state.
///
/// Distinct tapped photon numbers are orthogonal, so the probability is the
/// click-weighted sum of the exact-`s` probabilities `P_s`, each of which is
/// the diagonal quadruple sum of `J+ + J-`.
pub fn subtraction_probability(params: &ProtocolParams, mode: SubtractionMode) -> Result<f64> {
    if mode == SubtractionMode::None {
        return Err(Error::Contract(
            "subtraction probability requested for the protocol without subtraction".into(),
        ));
    }
    params.validate()?;
    let n_max = params.trunc.n_max;
    let kernels = Kernels::new(n_max, params.channel_t, params.tap_t1)?;
    let clicks = ClickModel::for_params(params, mode)?;
    let alpha = TmsvTable::new(params.alpha_sq, n_max)?;
    let beta = TmsvTable::new(params.beta_sq, n_max)?;

    let tap: Vec<f64> = (0..=2 * n_max)
        .map(|b| {
            (1..=b)
                .map(|s| clicks.weight(s) * kernels.gamma_t1(b, s).powi(2))
                .sum()
        })
        .collect();

    let mut total = 0.0;
    for n in 0..=n_max {
        let wa = alpha.sq(n);
        if wa == 0.0 {
            continue;
        }
        for k in 0..=n {
            for m in 0..=n_max {
                let wb = beta.sq(m);
                if wb == 0.0 {
                    continue;
                }
                for l in 0..=m {
                    let idx = IndexTuple { n, k, m, l };
                    let diag = kernels.channel_plus(&idx, &idx) + kernels.channel_minus(&idx, &idx);
                    total += wa * wb * diag * tap[idx.bob_photons()];
                }
            }
        }
    }
    Ok(total)
}
