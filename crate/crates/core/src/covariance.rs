//! Covariance elements of the post-selected state in shot-noise units.
//!
//! Every second moment of the photon-subtracted state is a quadruple sum
//! over the expansion indices `(n, k, m, l)` of Alice's and Eve's inputs,
//! with the inner `j` sums carried by the `J+`/`J-` overlaps. Alice's and
//! Eve's amplitudes only enter as outer weights, so [`SubtractedChannel`]
//! accumulates the `(k, l, j)` part once per `(n, m)` and a given
//! `(alpha^2, beta^2)` is then a cheap contraction.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{ClickModel, IndexTuple, Kernels, TmsvTable};
use crate::error::{Error, Result};
use crate::gausinfo;
use crate::protocol::{ProtocolParams, SubtractionMode};

/// Mode labels used throughout the crate.
pub const MODE_A: &str = "A";
pub const MODE_B2: &str = "B2";
pub const MODE_E: &str = "E";
pub const MODE_F: &str = "F";

/// The eight independent second moments of the four-mode state
/// `A, B2, E, F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceElements {
    pub v_a: f64,
    pub v_b2: f64,
    pub v_e: f64,
    pub v_f: f64,
    pub c_ab2: f64,
    pub c_ef: f64,
    pub c_eb2: f64,
    pub c_fb2: f64,
}

impl CovarianceElements {
    pub const NAMES: [&'static str; 8] =
        ["V_A", "V_B2", "V_E", "V_F", "C_AB2", "C_EF", "C_EB2", "C_FB2"];

    pub fn as_array(&self) -> [f64; 8] {
        [
            self.v_a, self.v_b2, self.v_e, self.v_f, self.c_ab2, self.c_ef, self.c_eb2,
            self.c_fb2,
        ]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        Self {
            v_a: v[0],
            v_b2: v[1],
            v_e: v[2],
            v_f: v[3],
            c_ab2: v[4],
            c_ef: v[5],
            c_eb2: v[6],
            c_fb2: v[7],
        }
    }

    /// Checks the vacuum floor on each variance (tolerance `floor_tol`) and
    /// the Cauchy-Schwarz bound on each correlation.
    pub fn check(&self, floor_tol: f64) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.as_array()).take(4) {
            if !v.is_finite() || v < 1.0 - floor_tol {
                return Err(Error::Consistency(format!(
                    "{name} = {v} lies below the vacuum floor"
                )));
            }
        }
        let pairs = [
            ("C_AB2", self.c_ab2, self.v_a, self.v_b2),
            ("C_EF", self.c_ef, self.v_e, self.v_f),
            ("C_EB2", self.c_eb2, self.v_e, self.v_b2),
            ("C_FB2", self.c_fb2, self.v_f, self.v_b2),
        ];
        for (name, c, vx, vy) in pairs {
            if !c.is_finite() || c.abs() > (vx * vy).sqrt() + 1e-9 {
                return Err(Error::Consistency(format!(
                    "{name} = {c} violates |C| <= sqrt(V V) = {}",
                    (vx * vy).sqrt()
                )));
            }
        }
        Ok(())
    }

    /// Inefficient homodyne detection on `B2`: `Gamma_B2 -> eta Gamma_B2 +
    /// (1 - eta) I`, correlations with `B2` scaled by `sqrt(eta)`.
    pub fn with_homodyne_efficiency(&self, eta: f64) -> Self {
        let r = eta.sqrt();
        Self {
            v_b2: eta * self.v_b2 + (1.0 - eta),
            c_ab2: r * self.c_ab2,
            c_eb2: r * self.c_eb2,
            c_fb2: r * self.c_fb2,
            ..*self
        }
    }

    /// Mixture of zero-mean states: probability-weighted average.
    pub fn mixture(parts: &[(f64, CovarianceElements)]) -> Result<Self> {
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if !(total > 0.0) {
            return Err(Error::PostSelectionImpossible { probability: total });
        }
        let mut acc = [0.0; 8];
        for (w, e) in parts {
            for (a, v) in acc.iter_mut().zip(e.as_array()) {
                *a += w * v;
            }
        }
        Ok(Self::from_array(acc.map(|a| a / total)))
    }
}

/// Symmetric `2N x 2N` quadrature covariance matrix ordered
/// `(q_1, p_1, ..., q_N, p_N)`; vacuum is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
    modes: Vec<String>,
}

impl CovarianceMatrix {
    pub fn new(entries: DMatrix<f64>, modes: Vec<String>) -> Result<Self> {
        let (r, c) = entries.shape();
        if r != c || r % 2 != 0 {
            return Err(Error::InvalidMatrix(format!(
                "covariance matrix must be square with even dimension, got {r}x{c}"
            )));
        }
        if modes.len() != r / 2 {
            return Err(Error::InvalidMatrix(format!(
                "{} mode labels for a {r}x{r} matrix",
                modes.len()
            )));
        }
        let scale = entries.amax().max(1.0);
        for i in 0..r {
            for j in (i + 1)..r {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidMatrix(format!(
                        "asymmetric entry ({i},{j}): {} vs {}",
                        entries[(i, j)],
                        entries[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { entries, modes })
    }

    pub fn identity(modes: &[&str]) -> Self {
        let n = 2 * modes.len();
        Self {
            entries: DMatrix::identity(n, n),
            modes: modes.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn modes(&self) -> &[String] {
        &self.modes
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode_index(&self, name: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| Error::InvalidMatrix(format!("no mode named {name}")))
    }

    /// Sub-matrix over `modes`, in the given order.
    pub fn select(&self, modes: &[&str]) -> Result<Self> {
        let idx = modes
            .iter()
            .map(|m| self.mode_index(m))
            .collect::<Result<Vec<_>>>()?;
        let n = 2 * idx.len();
        let mut out = DMatrix::zeros(n, n);
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                for u in 0..2 {
                    for v in 0..2 {
                        out[(2 * a + u, 2 * b + v)] = self.entries[(2 * ia + u, 2 * ib + v)];
                    }
                }
            }
        }
        Ok(Self {
            entries: out,
            modes: modes.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Errors with the smallest symplectic eigenvalue when it falls below
    /// `1 - 1e-8`.
    pub fn check_physical(&self) -> Result<()> {
        let spectrum = gausinfo::symplectic_eigenvalues(self)?;
        let nu = spectrum.min();
        if nu < 1.0 - 1e-8 {
            return Err(Error::Unphysical { nu });
        }
        Ok(())
    }
}

fn block_i2(m: &mut DMatrix<f64>, r: usize, c: usize, v: f64) {
    m[(2 * r, 2 * c)] = v;
    m[(2 * r + 1, 2 * c + 1)] = v;
}

fn block_sz(m: &mut DMatrix<f64>, r: usize, c: usize, v: f64) {
    m[(2 * r, 2 * c)] = v;
    m[(2 * r + 1, 2 * c + 1)] = -v;
}

/// `Gamma_EFB2` in mode order `E, F, B2`:
///
/// ```text
/// [ V_E I       C_EF sz    C_EB2 I  ]
/// [ C_EF sz     V_F I      C_FB2 sz ]
/// [ C_EB2 I     C_FB2 sz   V_B2 I   ]
/// ```
pub fn assemble_gamma_efb2(e: &CovarianceElements) -> Result<CovarianceMatrix> {
    let mut m = DMatrix::zeros(6, 6);
    block_i2(&mut m, 0, 0, e.v_e);
    block_i2(&mut m, 1, 1, e.v_f);
    block_i2(&mut m, 2, 2, e.v_b2);
    block_sz(&mut m, 0, 1, e.c_ef);
    block_sz(&mut m, 1, 0, e.c_ef);
    block_i2(&mut m, 0, 2, e.c_eb2);
    block_i2(&mut m, 2, 0, e.c_eb2);
    block_sz(&mut m, 1, 2, e.c_fb2);
    block_sz(&mut m, 2, 1, e.c_fb2);
    let gamma = CovarianceMatrix::new(m, vec![MODE_E.into(), MODE_F.into(), MODE_B2.into()])?;
    gamma.check_physical()?;
    Ok(gamma)
}

/// `Gamma_AB2` in mode order `A, B2` with `C_AB2 sz` off the diagonal.
pub fn assemble_gamma_ab2(e: &CovarianceElements) -> Result<CovarianceMatrix> {
    let mut m = DMatrix::zeros(4, 4);
    block_i2(&mut m, 0, 0, e.v_a);
    block_i2(&mut m, 1, 1, e.v_b2);
    block_sz(&mut m, 0, 1, e.c_ab2);
    block_sz(&mut m, 1, 0, e.c_ab2);
    let gamma = CovarianceMatrix::new(m, vec![MODE_A.into(), MODE_B2.into()])?;
    gamma.check_physical()?;
    Ok(gamma)
}

/// Conventional protocol: TMSV through a thermal-loss channel, no tap.
pub fn baseline_elements(params: &ProtocolParams) -> CovarianceElements {
    let a = params.alpha_sq;
    let b = params.beta_sq;
    let t = params.channel_t;
    let va = 2.0 * a + 1.0;
    let vn = 2.0 * b + 1.0;
    let ca = 2.0 * (a * (a + 1.0)).sqrt();
    let cb = 2.0 * (b * (b + 1.0)).sqrt();
    CovarianceElements {
        v_a: va,
        v_b2: t * va + (1.0 - t) * vn,
        v_e: (1.0 - t) * va + t * vn,
        v_f: vn,
        c_ab2: t.sqrt() * ca,
        c_ef: t.sqrt() * cb,
        c_eb2: 2.0 * (t * (1.0 - t)).sqrt() * (b - a),
        c_fb2: (1.0 - t).sqrt() * cb,
    }
}

/// Covariance elements and acceptance probability of a post-selected state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subtracted {
    pub elements: CovarianceElements,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct PairSums {
    norm: f64,
    bob: f64,
    eve: f64,
    ab: f64,
    ef: f64,
    eb: f64,
    fb: f64,
}

/// Channel- and tap-dependent part of every quadruple sum, indexed by
/// Alice's and Eve's photon numbers `(n, m)`.
#[derive(Debug, Clone)]
pub struct SubtractedChannel {
    n_max: usize,
    sums: Vec<PairSums>,
}

impl SubtractedChannel {
    pub fn new(kernels: &Kernels, clicks: &ClickModel) -> Self {
        let n_max = kernels.n_max();
        let top = 2 * n_max + 1;
        // Tap weights summed over the accepted outcomes:
        //   same[b]  = sum_s w(s) g(b,s)^2
        //   bob[b]   = sum_s w(s) g(b,s)^2 (b - s)
        //   cross[b] = sum_s w(s) g(b,s) g(b+1,s) sqrt(b + 1 - s)
        let mut same = vec![0.0; top + 1];
        let mut bob = vec![0.0; top + 1];
        let mut cross = vec![0.0; top + 1];
        for b in 0..=top {
            for s in 0..=b + 1 {
                let w = clicks.weight(s);
                if w == 0.0 {
                    continue;
                }
                let g0 = kernels.gamma_t1(b, s);
                let g1 = kernels.gamma_t1(b + 1, s);
                same[b] += w * g0 * g0;
                if b >= s {
                    bob[b] += w * g0 * g0 * (b - s) as f64;
                }
                cross[b] += w * g0 * g1 * ((b + 1 - s) as f64).sqrt();
            }
        }

        let rows: Vec<Vec<PairSums>> = (0..=n_max)
            .into_par_iter()
            .map(|n| {
                (0..=n_max)
                    .map(|m| pair_sums(kernels, n, m, &same, &bob, &cross))
                    .collect()
            })
            .collect();
        Self {
            n_max,
            sums: rows.into_iter().flatten().collect(),
        }
    }

    pub fn for_params(params: &ProtocolParams, mode: SubtractionMode) -> Result<Self> {
        let kernels = Kernels::new(params.trunc.n_max, params.channel_t, params.tap_t1)?;
        let clicks = ClickModel::for_params(params, mode)?;
        Ok(Self::new(&kernels, &clicks))
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    #[inline]
    fn at(&self, n: usize, m: usize) -> &PairSums {
        &self.sums[n * (self.n_max + 1) + m]
    }

    /// Acceptance probability alone.
    pub fn probability(&self, alpha_sq: f64, beta_sq: f64) -> Result<f64> {
        let alpha = TmsvTable::new(alpha_sq, self.n_max)?;
        let beta = TmsvTable::new(beta_sq, self.n_max)?;
        let mut p = 0.0;
        for n in 0..=self.n_max {
            for m in 0..=self.n_max {
                p += alpha.sq(n) * beta.sq(m) * self.at(n, m).norm;
            }
        }
        Ok(p)
    }

    pub fn evaluate(&self, alpha_sq: f64, beta_sq: f64) -> Result<Subtracted> {
        let alpha = TmsvTable::new(alpha_sq, self.n_max)?;
        let beta = TmsvTable::new(beta_sq, self.n_max)?;
        let mut p = 0.0;
        let mut s = [0.0f64; 8];
        for n in 0..=self.n_max {
            let wa = alpha.sq(n);
            let wa_up = alpha.get(n) * alpha.get(n + 1);
            for m in 0..=self.n_max {
                let wb = beta.sq(m);
                let wb_up = beta.get(m) * beta.get(m + 1);
                let ps = self.at(n, m);
                let w = wa * wb;
                p += w * ps.norm;
                s[0] += w * n as f64 * ps.norm;
                s[1] += w * ps.bob;
                s[2] += w * ps.eve;
                s[3] += w * m as f64 * ps.norm;
                s[4] += wa_up * wb * ps.ab;
                s[5] += wa * wb_up * ps.ef;
                s[6] += w * ps.eb;
                s[7] += wa * wb_up * ps.fb;
            }
        }
        if !(p > 0.0) {
            return Err(Error::PostSelectionImpossible { probability: p });
        }
        let mut v = [0.0; 8];
        for i in 0..8 {
            v[i] = 2.0 * s[i] / p;
            if i < 4 {
                v[i] += 1.0;
            }
        }
        let elements = CovarianceElements::from_array(v);
        elements.check(1e-6)?;
        Ok(Subtracted {
            elements,
            probability: p,
        })
    }
}

fn pair_sums(
    kern: &Kernels,
    n: usize,
    m: usize,
    same: &[f64],
    bob: &[f64],
    cross: &[f64],
) -> PairSums {
    let mut out = PairSums::default();
    for k in 0..=n {
        for l in 0..=m {
            let idx = IndexTuple { n, k, m, l };
            let b = idx.bob_photons();
            let e = idx.eve_photons() as f64;

            let diag = kern.channel_plus(&idx, &idx) + kern.channel_minus(&idx, &idx);
            out.norm += diag * same[b];
            out.bob += diag * bob[b];
            out.eve += diag * e * same[b];

            // <a b>: Alice and Bob each one photon higher in the ket.
            let up_a = IndexTuple { n: n + 1, ..idx };
            let j = kern.channel_plus(&idx, &up_a) + kern.channel_minus(&idx, &up_a);
            out.ab += ((n + 1) as f64).sqrt() * j * cross[b];

            // <e f>: Eve's ancilla and channel output one photon higher.
            let up_f = IndexTuple { m: m + 1, ..idx };
            let j = kern.channel_plus(&idx, &up_f) + kern.channel_minus(&idx, &up_f);
            out.ef += ((m + 1) as f64).sqrt() * (e + 1.0).sqrt() * j * same[b];

            // <e^dag b>: one photon moved from Eve's output to Bob.
            let up_l = IndexTuple { l: l + 1, ..idx };
            let j = kern.channel_plus(&idx, &up_l) + kern.channel_minus(&idx, &up_l);
            out.eb += e.sqrt() * j * cross[b];

            // <f b>: Eve's ancilla and Bob one photon higher.
            let up_fl = IndexTuple {
                m: m + 1,
                l: l + 1,
                ..idx
            };
            let j = kern.channel_plus(&idx, &up_fl) + kern.channel_minus(&idx, &up_fl);
            out.fb += ((m + 1) as f64).sqrt() * j * cross[b];
        }
    }
    out
}

/// Conventional protocol evaluated through the truncated sums: an identity
/// tap whose detector sees vacuum. Differs from [`baseline_elements`] only
/// by the truncation tail.
pub fn truncated_baseline(params: &ProtocolParams) -> Result<Subtracted> {
    params.validate()?;
    let kernels = Kernels::new(params.trunc.n_max, params.channel_t, 1.0)?;
    SubtractedChannel::new(&kernels, &ClickModel::no_click()).evaluate(params.alpha_sq, params.beta_sq)
}

/// Covariance elements of the post-selected state for a subtraction mode.
pub fn elements(params: &ProtocolParams, mode: SubtractionMode) -> Result<CovarianceElements> {
    subtracted(params, mode).map(|s| s.elements)
}

/// Elements together with the acceptance probability.
pub fn subtracted(params: &ProtocolParams, mode: SubtractionMode) -> Result<Subtracted> {
    if mode == SubtractionMode::None {
        return Err(Error::Contract(
            "closed-form subtraction sums requested for the protocol without subtraction".into(),
        ));
    }
    params.validate()?;
    SubtractedChannel::for_params(params, mode)?.evaluate(params.alpha_sq, params.beta_sq)
}
