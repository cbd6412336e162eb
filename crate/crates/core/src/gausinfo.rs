//! Gaussian information measures computed from covariance matrices.

use nalgebra::DMatrix;

use crate::covariance::{CovarianceElements, CovarianceMatrix, MODE_B2};
use crate::error::{Error, Result};

/// Symplectic eigenvalues, one per mode, in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpectrum {
    pub values: Vec<f64>,
}

impl SymplecticSpectrum {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Von Neumann entropy of the Gaussian state with this spectrum, in bits.
    pub fn entropy(&self) -> Result<f64> {
        self.values.iter().map(|&v| g_function(v)).sum()
    }
}

/// Symplectic form `Omega = (+) [[0, 1], [-1, 0]]` for `modes` modes.
pub fn omega(modes: usize) -> DMatrix<f64> {
    let mut om = DMatrix::zeros(2 * modes, 2 * modes);
    for i in 0..modes {
        om[(2 * i, 2 * i + 1)] = 1.0;
        om[(2 * i + 1, 2 * i)] = -1.0;
    }
    om
}

/// Moduli of the eigenvalues of `i Omega Gamma`, paired up.
///
/// The spectrum of `Omega Gamma` comes in `+/- i nu` pairs; sorting the
/// moduli and taking every second value picks one representative per mode.
pub fn symplectic_eigenvalues(gamma: &CovarianceMatrix) -> Result<SymplecticSpectrum> {
    let n = gamma.num_modes();
    let product = omega(n) * gamma.entries();
    let mut moduli: Vec<f64> = product
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let mut values = Vec::with_capacity(n);
    for pair in moduli.chunks(2) {
        let (a, b) = (pair[0], pair[1]);
        if (a - b).abs() > 1e-9 * a.max(1.0) {
            // Near-degenerate spectra can interleave slightly; fall back to a
            // looser pairing before giving up.
            if (a - b).abs() > 1e-6 * a.max(1.0) {
                return Err(Error::InvalidMatrix(format!(
                    "eigenvalues of Omega Gamma do not pair: {a} vs {b}"
                )));
            }
        }
        values.push(0.5 * (a + b));
    }
    Ok(SymplecticSpectrum { values })
}

/// Entropy in bits of a thermal mode with symplectic eigenvalue `x`.
///
/// Values in `[1 - 1e-6, 1]` are clamped to 1 to absorb round-off on
/// near-pure states.
pub fn g_function(x: f64) -> Result<f64> {
    if !(x >= 1.0 - 1e-6) {
        return Err(Error::Unphysical { nu: x });
    }
    if x <= 1.0 {
        return Ok(0.0);
    }
    let up = 0.5 * (x + 1.0);
    let down = 0.5 * (x - 1.0);
    Ok(up * up.log2() - down * down.log2())
}

/// Homodyne quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Q,
    P,
}

/// Covariance of the remaining modes after a homodyne measurement of
/// `quadrature` on `measured_mode`:
/// `Gamma' = Gamma_rest - L (Pi Gamma_m Pi)^MP L^T`.
///
/// `(Pi Gamma_m Pi)^MP` is `Pi / Gamma_m[qq]` (resp. `[pp]`), so only the
/// measured column of `L` contributes.
pub fn condition_on_homodyne(
    gamma: &CovarianceMatrix,
    measured_mode: &str,
    quadrature: Quadrature,
) -> Result<CovarianceMatrix> {
    let mi = gamma.mode_index(measured_mode)?;
    let col = 2 * mi
        + match quadrature {
            Quadrature::Q => 0,
            Quadrature::P => 1,
        };
    let g = gamma.entries();
    let var = g[(col, col)];
    if !(var > 0.0) {
        return Err(Error::Domain(format!(
            "measured quadrature variance must be positive, got {var}"
        )));
    }
    let rest: Vec<usize> = (0..gamma.num_modes()).filter(|&i| i != mi).collect();
    let rows: Vec<usize> = rest.iter().flat_map(|&i| [2 * i, 2 * i + 1]).collect();
    let d = rows.len();
    let mut out = DMatrix::zeros(d, d);
    for (a, &ra) in rows.iter().enumerate() {
        for (b, &rb) in rows.iter().enumerate() {
            out[(a, b)] = g[(ra, rb)] - g[(ra, col)] * g[(rb, col)] / var;
        }
    }
    // Restore exact symmetry lost to rounding in the rank-one update.
    let out = (&out + out.transpose()) * 0.5;
    let modes = rest.iter().map(|&i| gamma.modes()[i].clone()).collect();
    CovarianceMatrix::new(out, modes)
}

/// `I(A:B2) = 0.5 log2(V_B2 / V_B2|A)` with `V_B2|A = V_B2 - C_AB2^2 / V_A`.
pub fn mutual_information(e: &CovarianceElements) -> Result<f64> {
    let cond = e.v_b2 - e.c_ab2 * e.c_ab2 / e.v_a;
    if !(cond > 0.0) {
        return Err(Error::Domain(format!(
            "conditional variance V_B2|A = {cond} is not positive"
        )));
    }
    Ok(0.5 * (e.v_b2 / cond).log2())
}

/// Holevo bound on Eve's information about Bob's `q` homodyne outcome,
/// `sum g(nu_EF) - sum g(nu_EF|B2)`, for a matrix containing a `B2` mode.
pub fn holevo_information(gamma_efb2: &CovarianceMatrix) -> Result<f64> {
    holevo_information_with(gamma_efb2, MODE_B2, Quadrature::Q)
}

pub fn holevo_information_with(
    gamma: &CovarianceMatrix,
    measured_mode: &str,
    quadrature: Quadrature,
) -> Result<f64> {
    let mi = gamma.mode_index(measured_mode)?;
    let eve: Vec<&str> = gamma
        .modes()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != mi)
        .map(|(_, m)| m.as_str())
        .collect();
    let gamma_eve = gamma.select(&eve)?;
    let before = symplectic_eigenvalues(&gamma_eve)?.entropy()?;
    let conditioned = condition_on_homodyne(gamma, measured_mode, quadrature)?;
    let after = symplectic_eigenvalues(&conditioned)?.entropy()?;
    Ok(before - after)
}
