//! Brute-force truncated Fock-space simulator of the five-mode protocol.
//!
//! The simulator shares no code with the closed forms: beam-splitter matrix
//! elements come from expanding the input creation operators as polynomials
//! in the output ones, and all moments are read off the state tensor with
//! explicit ladder operators. Its purpose is to validate the closed-form
//! kernels and covariance sums at matched truncation.
//!
//! Mode dimensions are `n_max + 1` for Alice (`A`) and Eve's idler (`F`) and
//! `2 n_max + 1` for the modes that receive photons from both inputs (`B2`,
//! `E`, `C`), so no amplitude is lost inside the simulation.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::covariance::{CovarianceElements, CovarianceMatrix, MODE_A, MODE_B2, MODE_E, MODE_F};
use crate::error::{Error, Result};
use crate::gausinfo::Quadrature;
use crate::protocol::ProtocolParams;

pub const MODE_C: &str = "C";

/// Eigenvalues below this are treated as zero in entropies.
pub const EIGEN_FLOOR: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Two-mode beam splitter with `o1^dag = sqrt(T) i1^dag + sqrt(1-T) i2^dag`,
/// `o2^dag = sqrt(T) i2^dag - sqrt(1-T) i1^dag`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitter {
    pub transmittance: f64,
}

impl BeamSplitter {
    pub fn new(transmittance: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&transmittance) {
            return Err(Error::Domain(format!(
                "beam-splitter transmittance must lie in [0, 1], got {transmittance}"
            )));
        }
        Ok(Self { transmittance })
    }

    /// `<p, N-p| U |a, N-a>` as a row-major `(N+1) x (N+1)` matrix indexed
    /// `[p * (N+1) + a]`.
    ///
    /// `|a, b>` is `(i1^dag)^a (i2^dag)^b / sqrt(a! b!) |0>` with
    /// `i1^dag = sqrt(T) o1^dag - sqrt(1-T) o2^dag` and
    /// `i2^dag = sqrt(1-T) o1^dag + sqrt(T) o2^dag`; the product is expanded
    /// numerically as a polynomial in `o1^dag` and `o2^dag`.
    pub fn matrix(&self, total: usize) -> Vec<f64> {
        let t = self.transmittance.sqrt();
        let r = (1.0 - self.transmittance).sqrt();
        let dim = total + 1;
        let mut out = vec![0.0; dim * dim];
        for a in 0..=total {
            let b = total - a;
            // poly[p]: coefficient of (o1^dag)^p (o2^dag)^(deg - p)
            let mut poly = vec![1.0];
            let multiply = |poly: &mut Vec<f64>, cx: f64, cy: f64| {
                let mut next = vec![0.0; poly.len() + 1];
                for (p, &c) in poly.iter().enumerate() {
                    next[p + 1] += cx * c;
                    next[p] += cy * c;
                }
                *poly = next;
            };
            for _ in 0..a {
                multiply(&mut poly, t, -r);
            }
            for _ in 0..b {
                multiply(&mut poly, r, t);
            }
            let ln_in = ln_factorial(a) + ln_factorial(b);
            for (p, &c) in poly.iter().enumerate() {
                if c != 0.0 {
                    let ln_out = ln_factorial(p) + ln_factorial(total - p);
                    out[p * dim + a] = c * (0.5 * (ln_out - ln_in)).exp();
                }
            }
        }
        out
    }
}

/// Pure state on a truncated multimode number basis, row-major over modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    labels: Vec<String>,
    dims: Vec<usize>,
    amps: Vec<Complex64>,
}

impl FockState {
    pub fn vacuum(labels: &[&str], dims: &[usize]) -> Self {
        assert_eq!(labels.len(), dims.len());
        let size = dims.iter().product();
        let mut amps = vec![ZERO; size];
        amps[0] = Complex64::new(1.0, 0.0);
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            dims: dims.to_vec(),
            amps,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn amplitude(&self, idx: &[usize]) -> Complex64 {
        self.amps[self.flat(idx)]
    }

    pub fn set_amplitude(&mut self, idx: &[usize], value: Complex64) {
        let f = self.flat(idx);
        self.amps[f] = value;
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn mode_index(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::Domain(format!("state has no mode named {name}")))
    }

    fn scale(&mut self, factor: f64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }

    /// Applies `bs` with input ports `(mode1, mode2)` and returns the squared
    /// norm pushed beyond the truncation (zero for adequately sized modes).
    pub fn apply_beam_splitter(&mut self, mode1: &str, mode2: &str, bs: &BeamSplitter) -> Result<f64> {
        let m1 = self.mode_index(mode1)?;
        let m2 = self.mode_index(mode2)?;
        if m1 == m2 {
            return Err(Error::Domain("beam splitter needs two distinct modes".into()));
        }
        let strides = self.strides();
        let (s1, s2) = (strides[m1], strides[m2]);
        let (d1, d2) = (self.dims[m1], self.dims[m2]);
        let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
        let mut out = vec![ZERO; self.amps.len()];
        let mut lost = 0.0;
        for (flat, &amp) in self.amps.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            let a = (flat / s1) % d1;
            let b = (flat / s2) % d2;
            let total = a + b;
            let base = flat - a * s1 - b * s2;
            let mat = cache.entry(total).or_insert_with(|| bs.matrix(total));
            for p in 0..=total {
                let c = mat[p * (total + 1) + a];
                if c == 0.0 {
                    continue;
                }
                let q = total - p;
                if p >= d1 || q >= d2 {
                    lost += (amp * c).norm_sqr();
                    continue;
                }
                out[base + p * s1 + q * s2] += amp * c;
            }
        }
        self.amps = out;
        Ok(lost)
    }

    /// `a_mode |psi>` on the same basis.
    pub fn lowered(&self, mode: usize) -> Vec<Complex64> {
        let strides = self.strides();
        let s = strides[mode];
        let d = self.dims[mode];
        let mut out = vec![ZERO; self.amps.len()];
        for (flat, &amp) in self.amps.iter().enumerate() {
            let n = (flat / s) % d;
            if n > 0 && amp != ZERO {
                out[flat - s] = amp * (n as f64).sqrt();
            }
        }
        out
    }

    fn lower_vec(&self, v: &[Complex64], mode: usize) -> Vec<Complex64> {
        let s = self.strides()[mode];
        let d = self.dims[mode];
        let mut out = vec![ZERO; v.len()];
        for (flat, &amp) in v.iter().enumerate() {
            let n = (flat / s) % d;
            if n > 0 && amp != ZERO {
                out[flat - s] = amp * (n as f64).sqrt();
            }
        }
        out
    }

    /// Mean photon number of `mode`.
    pub fn mean_photons(&self, mode: &str) -> Result<f64> {
        let m = self.mode_index(mode)?;
        let s = self.strides()[m];
        let d = self.dims[m];
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(f, a)| ((f / s) % d) as f64 * a.norm_sqr())
            .sum::<f64>()
            / self.norm_sqr())
    }

    /// Slice with `mode` fixed to `value`, with that mode removed.
    fn slice(&self, mode: usize, value: usize) -> FockState {
        let strides = self.strides();
        let s = strides[mode];
        let d = self.dims[mode];
        let mut labels = self.labels.clone();
        labels.remove(mode);
        let mut dims = self.dims.clone();
        dims.remove(mode);
        let amps = self
            .amps
            .iter()
            .enumerate()
            .filter(|(f, _)| (f / s) % d == value)
            .map(|(_, &a)| a)
            .collect();
        FockState { labels, dims, amps }
    }
}

fn thermal_amplitude(n: usize, mean: f64) -> f64 {
    (mean.powi(n as i32) / (1.0 + mean).powi(n as i32 + 1)).sqrt()
}

/// Two-mode squeezed vacuum `sum_n c_n |n, n>` on `(mode1, mode2)` of an
/// otherwise-vacuum state.
pub fn tmsv_state(labels: &[&str], dims: &[usize], mode1: usize, mode2: usize, mean: f64) -> FockState {
    let mut st = FockState::vacuum(labels, dims);
    st.amps[0] = ZERO;
    let top = dims[mode1].min(dims[mode2]);
    let mut idx = vec![0; dims.len()];
    for n in 0..top {
        idx[mode1] = n;
        idx[mode2] = n;
        st.set_amplitude(&idx, Complex64::new(thermal_amplitude(n, mean), 0.0));
    }
    st
}

/// The five-mode state `A, B2, E, F, C` before any post-selection.
pub fn build_joint_state(params: &ProtocolParams) -> Result<FockState> {
    let n = params.trunc.n_max;
    let wide = 2 * n + 1;
    let labels = [MODE_A, MODE_B2, MODE_E, MODE_F, MODE_C];
    let dims = [n + 1, wide, wide, n + 1, wide];
    let mut st = FockState::vacuum(&labels, &dims);
    st.amps[0] = ZERO;
    for i in 0..=n {
        for j in 0..=n {
            let idx = [i, i, j, j, 0];
            let a = thermal_amplitude(i, params.alpha_sq) * thermal_amplitude(j, params.beta_sq);
            st.set_amplitude(&idx, Complex64::new(a, 0.0));
        }
    }
    let lost = st.apply_beam_splitter(MODE_B2, MODE_E, &BeamSplitter::new(params.channel_t)?)?
        + st.apply_beam_splitter(MODE_B2, MODE_C, &BeamSplitter::new(params.tap_t1)?)?;
    if lost > 1e-12 {
        return Err(Error::Consistency(format!(
            "oracle state lost {lost:e} of its norm to truncation"
        )));
    }
    Ok(st)
}

/// Accepted detector outcome on the tapped mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Exactly `s` photons (photon counter).
    Exact(usize),
    /// At least one photon (threshold detector).
    Threshold,
}

/// Normalized pure state with a classical weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub state: FockState,
}

/// Classical mixture of pure states with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub branches: Vec<Branch>,
}

impl Ensemble {
    pub fn pure(mut state: FockState) -> Self {
        let norm = state.norm_sqr();
        state.scale(1.0 / norm.sqrt());
        Self {
            branches: vec![Branch { weight: 1.0, state }],
        }
    }

    fn first(&self) -> &FockState {
        &self.branches[0].state
    }
}

/// Post-selection with an ideal detector on `mode`.
pub fn postselect(state: &FockState, mode: &str, outcome: Outcome) -> Result<(Ensemble, f64)> {
    postselect_lossy(state, mode, outcome, 1.0)
}

/// Post-selection with a detector of efficiency `efficiency` on `mode`.
///
/// The returned probability is the projected squared norm, so for a
/// truncated (subnormalized) input it carries the same truncation as the
/// closed-form sums.
///
/// The loss is simulated as a beam splitter into an unobserved vacuum
/// port; distinct photon numbers in `mode` become orthogonal branches
/// weighted by their probability times the click probability.
pub fn postselect_lossy(
    state: &FockState,
    mode: &str,
    outcome: Outcome,
    efficiency: f64,
) -> Result<(Ensemble, f64)> {
    let m = state.mode_index(mode)?;
    let loss = BeamSplitter::new(efficiency)?;
    let mut branches = Vec::new();
    let mut probability = 0.0;
    for j in 0..state.dims[m] {
        let mat = loss.matrix(j);
        // Port 1 of |j, 0> is the detected output.
        let click: f64 = (0..=j)
            .filter(|&s| match outcome {
                Outcome::Exact(k) => s == k,
                Outcome::Threshold => s >= 1,
            })
            .map(|s| mat[s * (j + 1) + j].powi(2))
            .sum();
        if click == 0.0 {
            continue;
        }
        let mut slice = state.slice(m, j);
        let p = slice.norm_sqr();
        if p == 0.0 {
            continue;
        }
        slice.scale(1.0 / slice.norm_sqr().sqrt());
        probability += p * click;
        branches.push(Branch {
            weight: p * click,
            state: slice,
        });
    }
    if !(probability > 1e-300) {
        return Err(Error::PostSelectionImpossible { probability });
    }
    for b in &mut branches {
        b.weight /= probability;
    }
    Ok((Ensemble { branches }, probability))
}

/// Density matrix over a subset of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub labels: Vec<String>,
    pub dims: Vec<usize>,
    pub matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }
}

fn hermiticity_error(m: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Reshapes a state into a `keep x rest` matrix.
fn bipartition(state: &FockState, keep: &[usize]) -> DMatrix<Complex64> {
    let n = state.dims.len();
    let rest: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
    let dk: usize = keep.iter().map(|&i| state.dims[i]).product();
    let dr: usize = rest.iter().map(|&i| state.dims[i]).product();
    let strides = state.strides();
    let mut out = DMatrix::from_element(dk, dr, ZERO);
    for (flat, &a) in state.amps.iter().enumerate() {
        if a == ZERO {
            continue;
        }
        let digit = |i: usize| (flat / strides[i]) % state.dims[i];
        let row = keep.iter().fold(0, |acc, &i| acc * state.dims[i] + digit(i));
        let col = rest.iter().fold(0, |acc, &i| acc * state.dims[i] + digit(i));
        out[(row, col)] = a;
    }
    out
}

fn mode_indices(state: &FockState, modes: &[&str]) -> Result<Vec<usize>> {
    modes.iter().map(|m| state.mode_index(m)).collect()
}

/// Partial trace onto `keep_modes` (in the given order).
pub fn reduce(ensemble: &Ensemble, keep_modes: &[&str]) -> Result<DensityMatrix> {
    let first = ensemble.first();
    let keep = mode_indices(first, keep_modes)?;
    let dims: Vec<usize> = keep.iter().map(|&i| first.dims[i]).collect();
    let d: usize = dims.iter().product();
    let mut rho = DMatrix::from_element(d, d, ZERO);
    for b in &ensemble.branches {
        let psi = bipartition(&b.state, &keep);
        rho += (&psi * psi.adjoint()) * Complex64::new(b.weight, 0.0);
    }
    Ok(DensityMatrix {
        labels: keep_modes.iter().map(|s| s.to_string()).collect(),
        dims,
        matrix: rho,
    })
}

/// Quadrature covariance matrix over `modes`, vacuum variance 1.
pub fn covariance_from_state(ensemble: &Ensemble, modes: &[&str]) -> Result<CovarianceMatrix> {
    let k = modes.len();
    let mut mean = vec![ZERO; k];
    let mut m_mat = vec![vec![ZERO; k]; k];
    let mut n_mat = vec![vec![ZERO; k]; k];
    let dot = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
        x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
    };
    for branch in &ensemble.branches {
        let st = &branch.state;
        let idx = mode_indices(st, modes)?;
        let w = branch.weight;
        let lowered: Vec<Vec<Complex64>> = idx.iter().map(|&i| st.lowered(i)).collect();
        for i in 0..k {
            mean[i] += dot(&st.amps, &lowered[i]) * w;
            for j in 0..k {
                m_mat[i][j] += dot(&lowered[i], &lowered[j]) * w;
                let aa = st.lower_vec(&lowered[j], idx[i]);
                n_mat[i][j] += dot(&st.amps, &aa) * w;
            }
        }
    }
    let q_mean: Vec<f64> = mean.iter().map(|m| 2.0 * m.re).collect();
    let p_mean: Vec<f64> = mean.iter().map(|m| 2.0 * m.im).collect();
    let mut g = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            let delta = if i == j { 1.0 } else { 0.0 };
            let (m, n) = (m_mat[i][j], n_mat[i][j]);
            g[(2 * i, 2 * j)] = 2.0 * n.re + 2.0 * m.re + delta - q_mean[i] * q_mean[j];
            g[(2 * i + 1, 2 * j + 1)] = 2.0 * m.re - 2.0 * n.re + delta - p_mean[i] * p_mean[j];
            g[(2 * i, 2 * j + 1)] = 2.0 * m.im + 2.0 * n.im - q_mean[i] * p_mean[j];
        }
    }
    for i in 0..k {
        for j in 0..k {
            g[(2 * j + 1, 2 * i)] = g[(2 * i, 2 * j + 1)];
        }
    }
    let g = (&g + g.transpose()) * 0.5;
    CovarianceMatrix::new(g, modes.iter().map(|s| s.to_string()).collect())
}

fn entropy_of_eigenvalues(values: impl Iterator<Item = f64>) -> f64 {
    values
        .filter(|&l| l >= EIGEN_FLOOR)
        .map(|l| -l * l.log2())
        .sum()
}

/// Von Neumann entropy in bits of a Hermitian matrix with unit trace.
pub fn entropy_of_matrix(m: &DMatrix<Complex64>) -> Result<f64> {
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let err = hermiticity_error(m);
    if err > 1e-12 * scale {
        return Err(Error::InvalidMatrix(format!(
            "density matrix is not Hermitian (error {err:e})"
        )));
    }
    let eigenvalues = hermitian_eigenvalues(m)?;
    if let Some(min) = eigenvalues.iter().copied().reduce(f64::min) {
        if min < -1e-10 {
            return Err(Error::InvalidMatrix(format!(
                "density matrix has negative eigenvalue {min}"
            )));
        }
    }
    Ok(entropy_of_eigenvalues(eigenvalues.into_iter()))
}

/// Eigenvalues of a Hermitian matrix.
///
/// All-zero rows only contribute zero eigenvalues and are dropped. The rest
/// is diagonalized with a unit shift: nalgebra's solver can return NaN on
/// sparse matrices whose spectrum is mostly exact zeros.
fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let live: Vec<usize> = (0..m.nrows())
        .filter(|&i| m.row(i).iter().any(|z| *z != ZERO))
        .collect();
    let d = live.len();
    let mut sub = DMatrix::from_fn(d, d, |i, j| m[(live[i], live[j])]);
    for i in 0..d {
        sub[(i, i)] += 1.0;
    }
    let values: Vec<f64> = SymmetricEigen::new(sub).eigenvalues.iter().map(|l| l - 1.0).collect();
    if values.iter().any(|l| !l.is_finite()) {
        return Err(Error::Consistency("eigensolver returned non-finite values".into()));
    }
    Ok(values)
}

pub fn entropy_exact(rho: &DensityMatrix) -> Result<f64> {
    entropy_of_matrix(&rho.matrix)
}

/// Entropy of `M M^dag / tr`, using whichever Gram matrix is smaller.
fn entropy_of_factor(m: &DMatrix<Complex64>) -> Result<f64> {
    let tr: f64 = m.iter().map(|z| z.norm_sqr()).sum();
    let gram = if m.nrows() <= m.ncols() {
        m * m.adjoint()
    } else {
        m.adjoint() * m
    };
    let values = hermitian_eigenvalues(&(gram / Complex64::new(tr, 0.0)))?;
    Ok(entropy_of_eigenvalues(values.into_iter()))
}

/// Wavefunctions `<x|n>`, `n < dim`, of the quadrature `q = a + a^dag`
/// (vacuum variance 1); `p` picks up the phase `(-i)^n`.
fn quadrature_wavefunctions(x: f64, dim: usize, quadrature: Quadrature) -> Vec<Complex64> {
    let mut h = vec![0.0; dim];
    h[0] = (2.0 * std::f64::consts::PI).powf(-0.25) * (-x * x / 4.0).exp();
    if dim > 1 {
        h[1] = x * h[0];
    }
    for n in 1..dim.saturating_sub(1) {
        h[n + 1] = (x * h[n] - (n as f64).sqrt() * h[n - 1]) / ((n + 1) as f64).sqrt();
    }
    let phase = match quadrature {
        Quadrature::Q => Complex64::new(1.0, 0.0),
        Quadrature::P => Complex64::new(0.0, -1.0),
    };
    let mut ph = Complex64::new(1.0, 0.0);
    h.into_iter()
        .map(|v| {
            let out = ph * v;
            ph *= phase;
            out
        })
        .collect()
}

/// `int p(x) S(rho_keep | x) dx` for a homodyne measurement on `measured`.
pub fn homodyne_conditional_entropy(
    ensemble: &Ensemble,
    measured: &str,
    keep_modes: &[&str],
    quadrature: Quadrature,
) -> Result<f64> {
    let first = ensemble.first();
    let mi = first.mode_index(measured)?;
    let keep = mode_indices(first, keep_modes)?;
    let dm = first.dims[mi];
    let mut order = vec![mi];
    order.extend(&keep);
    // Per branch: rows (measured, keep...), columns (rest).
    let dk: usize = keep.iter().map(|&i| first.dims[i]).product();
    let parts: Vec<(f64, DMatrix<Complex64>)> = ensemble
        .branches
        .iter()
        .map(|b| (b.weight.sqrt(), bipartition(&b.state, &order)))
        .collect();
    let dr = parts[0].1.ncols();

    let half_width = (4.0 * dm as f64 + 2.0).sqrt() + 8.0;
    let step = 0.05;
    let points = (2.0 * half_width / step).round() as usize;
    let mut prob = 0.0;
    let mut entropy = 0.0;
    let mut factor = DMatrix::from_element(dk, dr * parts.len(), ZERO);
    for i in 0..=points {
        let x = -half_width + step * i as f64;
        let h = quadrature_wavefunctions(x, dm, quadrature);
        factor.fill(ZERO);
        for (b, (sw, psi)) in parts.iter().enumerate() {
            for n in 0..dm {
                let c = h[n].conj() * *sw;
                if c == ZERO {
                    continue;
                }
                for r in 0..dk {
                    for col in 0..dr {
                        factor[(r, b * dr + col)] += c * psi[(n * dk + r, col)];
                    }
                }
            }
        }
        let p: f64 = factor.iter().map(|z| z.norm_sqr()).sum();
        if p < 1e-300 {
            continue;
        }
        prob += step * p;
        entropy += step * p * entropy_of_factor(&factor)?;
    }
    if (prob - 1.0).abs() > 1e-8 {
        return Err(Error::Consistency(format!(
            "homodyne outcome density integrates to {prob}"
        )));
    }
    Ok(entropy)
}

/// Exact Holevo information `S(rho_eve) - int p(x) S(rho_eve|x) dx` between
/// a homodyne outcome on `measured` and the modes `eve`.
pub fn holevo_exact(ensemble: &Ensemble, measured: &str, eve: &[&str]) -> Result<f64> {
    let s_eve = entropy_exact(&reduce(ensemble, eve)?)?;
    let s_cond = homodyne_conditional_entropy(ensemble, measured, eve, Quadrature::Q)?;
    Ok(s_eve - s_cond)
}

/// Post-selected four-mode ensemble on `A, B2, E, F` for the given
/// detector outcome, with the detector efficiency applied when asked.
pub fn subtracted_ensemble(
    params: &ProtocolParams,
    outcome: Outcome,
    efficiency: f64,
) -> Result<(Ensemble, f64)> {
    let st = build_joint_state(params)?;
    postselect_lossy(&st, MODE_C, outcome, efficiency)
}

/// Mode order used for the four-mode covariance.
pub const FOUR_MODES: [&str; 4] = [MODE_A, MODE_B2, MODE_E, MODE_F];

/// Reads the eight closed-form elements off a covariance over
/// [`FOUR_MODES`], together with the largest deviation of the `AB2`, `EF`,
/// `EB2`, `FB2` and single-mode blocks from their assumed `I2`/`sigma_z`
/// patterns.
pub fn elements_from_covariance(gamma: &CovarianceMatrix) -> Result<(CovarianceElements, f64)> {
    let ix = |m: &str| gamma.mode_index(m).map(|i| 2 * i);
    let (a, b, e, f) = (ix(MODE_A)?, ix(MODE_B2)?, ix(MODE_E)?, ix(MODE_F)?);
    let g = gamma.entries();
    let el = CovarianceElements {
        v_a: g[(a, a)],
        v_b2: g[(b, b)],
        v_e: g[(e, e)],
        v_f: g[(f, f)],
        c_ab2: g[(a, b)],
        c_ef: g[(e, f)],
        c_eb2: g[(e, b)],
        c_fb2: g[(f, b)],
    };
    // (row, col, value, p-quadrature sign)
    let blocks = [
        (a, a, el.v_a, 1.0),
        (b, b, el.v_b2, 1.0),
        (e, e, el.v_e, 1.0),
        (f, f, el.v_f, 1.0),
        (a, b, el.c_ab2, -1.0),
        (e, f, el.c_ef, -1.0),
        (e, b, el.c_eb2, 1.0),
        (f, b, el.c_fb2, -1.0),
    ];
    let mut residual = 0.0f64;
    for (r, c, v, sign) in blocks {
        residual = residual
            .max((g[(r + 1, c + 1)] - sign * v).abs())
            .max(g[(r, c + 1)].abs())
            .max(g[(r + 1, c)].abs());
    }
    Ok((el, residual))
}

/// State of the conventional protocol (no tap) as an ensemble on
/// [`FOUR_MODES`], with its truncated norm.
pub fn baseline_ensemble(params: &ProtocolParams) -> Result<(Ensemble, f64)> {
    let untapped = ProtocolParams {
        tap_t1: 1.0,
        ..*params
    };
    let st = build_joint_state(&untapped)?;
    postselect(&st, MODE_C, Outcome::Exact(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::TruncationConfig;
    use crate::protocol::DetEffPlacement;

    fn params(alpha_sq: f64, beta_sq: f64, t: f64, t1: f64, n_max: usize) -> ProtocolParams {
        ProtocolParams {
            alpha_sq,
            beta_sq,
            channel_t: t,
            tap_t1: t1,
            recon_eff: 1.0,
            det_eff: 1.0,
            det_eff_placement: DetEffPlacement::None,
            trunc: TruncationConfig::new(n_max, 1.0).unwrap(),
        }
    }

    #[test]
    fn beam_splitter_is_unitary() {
        for &t in &[0.0, 0.3, 0.5, 0.9, 1.0] {
            let bs = BeamSplitter::new(t).unwrap();
            for total in 0..12 {
                let m = bs.matrix(total);
                let d = total + 1;
                for a in 0..d {
                    for b in 0..d {
                        let dot: f64 = (0..d).map(|p| m[p * d + a] * m[p * d + b]).sum();
                        let expect = if a == b { 1.0 } else { 0.0 };
                        assert!((dot - expect).abs() < 1e-12, "t={t} N={total} ({a},{b}) {dot}");
                    }
                }
            }
        }
    }

    #[test]
    fn beam_splitter_single_photon() {
        let bs = BeamSplitter::new(0.3).unwrap();
        let m = bs.matrix(1);
        // |1,0> -> sqrt(T)|1,0> - sqrt(1-T)|0,1>
        assert!((m[3] - 0.3f64.sqrt()).abs() < 1e-15);
        assert!((m[1] + 0.7f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn vacuum_inputs_stay_vacuum() {
        let st = build_joint_state(&params(0.0, 0.0, 0.5, 0.9, 4)).unwrap();
        assert!((st.amplitude(&[0, 0, 0, 0, 0]).re - 1.0).abs() < 1e-15);
        assert!((st.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_splitters_leave_product_of_tmsv() {
        let (a, b) = (0.6, 0.2);
        let st = build_joint_state(&params(a, b, 1.0, 1.0, 5)).unwrap();
        for i in 0..=5 {
            for j in 0..=5 {
                let expect = thermal_amplitude(i, a) * thermal_amplitude(j, b);
                assert!((st.amplitude(&[i, i, j, j, 0]).re - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn beam_splitters_preserve_norm() {
        let p = params(0.9, 0.05, 0.37, 0.8, 6);
        let st = build_joint_state(&p).unwrap();
        let expect = (1.0 - (0.9f64 / 1.9).powi(7)) * (1.0 - (0.05f64 / 1.05).powi(7));
        assert!((st.norm_sqr() - expect).abs() < 1e-10);
    }

    #[test]
    fn postselection_edge_cases() {
        let st = build_joint_state(&params(0.5, 0.01, 0.5, 1.0, 4)).unwrap();
        let (ens, p) = postselect(&st, MODE_C, Outcome::Exact(0)).unwrap();
        assert!((p - st.norm_sqr()).abs() < 1e-14);
        assert_eq!(ens.branches.len(), 1);
        assert!(matches!(
            postselect(&st, MODE_C, Outcome::Exact(1)),
            Err(Error::PostSelectionImpossible { .. })
        ));
        assert!(postselect(&st, "Z", Outcome::Threshold).is_err());
    }

    #[test]
    fn thermal_reduction_and_entropy() {
        let mu = 1.0;
        let st = tmsv_state(&["x", "y"], &[60, 60], 0, 1, mu);
        let ens = Ensemble::pure(st);
        let rho = reduce(&ens, &["x"]).unwrap();
        for n in 0..10 {
            let expect = mu.powi(n) / (1.0 + mu).powi(n + 1);
            assert!((rho.matrix[(n as usize, n as usize)].re - expect).abs() < 1e-12);
        }
        // g(3) = 2 bits, up to the 2^-60 tail.
        assert!((entropy_exact(&rho).unwrap() - 2.0).abs() < 1e-12);
        let whole = reduce(&ens, &["x", "y"]).unwrap();
        assert!(entropy_exact(&whole).unwrap().abs() < 1e-10);
    }

    #[test]
    fn non_hermitian_matrix_is_rejected() {
        let mut m = DMatrix::from_element(2, 2, ZERO);
        m[(0, 0)] = Complex64::new(0.5, 0.0);
        m[(1, 1)] = Complex64::new(0.5, 0.0);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(entropy_of_matrix(&m), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn schmidt_symmetry_of_pure_bipartition() {
        let (ens, _) = subtracted_ensemble(&params(0.5, 0.02, 0.6, 0.9, 5), Outcome::Exact(1), 1.0).unwrap();
        let ab = reduce(&ens, &[MODE_A, MODE_B2]).unwrap();
        let ef = reduce(&ens, &[MODE_E, MODE_F]).unwrap();
        assert!((ab.purity() - ef.purity()).abs() < 1e-12);
        assert!((entropy_exact(&ab).unwrap() - entropy_exact(&ef).unwrap()).abs() < 1e-9);
        assert!((ab.trace() - 1.0).abs() < 1e-12);
        assert!(ab.hermiticity_error() < 1e-14);
    }

    #[test]
    fn vacuum_and_tmsv_covariances() {
        let vac = Ensemble::pure(FockState::vacuum(&["x", "y"], &[3, 3]));
        let g = covariance_from_state(&vac, &["x", "y"]).unwrap();
        assert!((g.entries() - DMatrix::identity(4, 4)).amax() < 1e-15);

        let mu = 0.7;
        let ens = Ensemble::pure(tmsv_state(&["x", "y"], &[80, 80], 0, 1, mu));
        let g = covariance_from_state(&ens, &["x", "y"]).unwrap();
        let v = 2.0 * mu + 1.0;
        let c = 2.0 * (mu * (mu + 1.0)).sqrt();
        let m = g.entries();
        assert!((m[(0, 0)] - v).abs() < 1e-10);
        assert!((m[(1, 1)] - v).abs() < 1e-10);
        assert!((m[(0, 2)] - c).abs() < 1e-10);
        assert!((m[(1, 3)] + c).abs() < 1e-10);
        assert!(m[(0, 3)].abs() < 1e-12);
    }

    #[test]
    fn homodyne_outcome_density_is_normalized_and_pure_state_is_certain() {
        let ens = Ensemble::pure(tmsv_state(&["x", "y"], &[30, 30], 0, 1, 0.5));
        // Conditioning one half of a pure two-mode state leaves a pure state.
        let s = homodyne_conditional_entropy(&ens, "y", &["x"], Quadrature::Q).unwrap();
        assert!(s.abs() < 1e-9);
    }
}
