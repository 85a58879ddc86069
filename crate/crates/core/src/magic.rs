//! Perfect Pauli-string sampling from an MPS and Monte Carlo SRE estimates.
//!
//! Strings are drawn from `Xi(sigma) = <sigma>^2 / 2^N` one site at a time.
//! With the state right-canonical beyond the current site, the marginal of a
//! prefix is `||L_k||_F^2 / 2^k`, where `L_k` is the left environment of the
//! prefix: the transfer matrix of `<psi| sigma_1..sigma_k |psi>` with the
//! remaining bonds left open. The environment is renormalized after every
//! site, so the conditional probabilities read `||L(p)||^2 / 2`.

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, MatRef};
use crate::mps::{MpsState, PHYS_DIM};
use crate::oracle::{self, SreRank};
use crate::pauli::{Pauli, PauliString};
use crate::stats;

/// Strings with `c^2` below this are treated as numerical noise and redrawn.
pub const MIN_C2: f64 = 1e-24;

const SUM_TOL: f64 = 1e-8;
const IMAG_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub string: PauliString,
    /// `<psi|sigma|psi>`, real.
    pub c: f64,
    /// `c^2 / 2^N`.
    pub xi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SreEstimate {
    pub m1: f64,
    pub m2: f64,
    pub se1: f64,
    pub se2: f64,
    pub n_samples: usize,
    /// Draws rejected for `c^2 < MIN_C2`.
    pub redraws: usize,
}

/// Reusable sampler over one immutable state.
pub struct PauliSampler<'a> {
    state: &'a MpsState,
    conj: Vec<Vec<C64>>,
    env: Vec<C64>,
    t0: Vec<C64>,
    t1: Vec<C64>,
    m00: Vec<C64>,
    m01: Vec<C64>,
    m11: Vec<C64>,
}

impl<'a> PauliSampler<'a> {
    /// The state must be centered on site 0 (all other sites right-canonical).
    pub fn new(state: &'a MpsState) -> Result<Self> {
        if state.ortho_center() != Some(0) {
            return Err(Error::NotRightCanonical { center: state.ortho_center() });
        }
        let conj = state
            .sites()
            .iter()
            .map(|t| t.data.iter().map(|z| z.conj()).collect())
            .collect();
        Ok(Self {
            state,
            conj,
            env: Vec::new(),
            t0: Vec::new(),
            t1: Vec::new(),
            m00: Vec::new(),
            m01: Vec::new(),
            m11: Vec::new(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<SampleRecord> {
        let zero = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let n = self.state.len();
        let mut letters = Vec::with_capacity(n);
        let mut c2 = 1.0;
        self.env.clear();
        self.env.push(one);

        for (k, site) in self.state.sites().iter().enumerate() {
            let (dl, dr) = (site.left, site.right);
            let row = PHYS_DIM * dr;
            for buf in [&mut self.t0, &mut self.t1] {
                buf.clear();
                buf.resize(dl * dr, zero);
            }
            for buf in [&mut self.m00, &mut self.m01, &mut self.m11] {
                buf.clear();
                buf.resize(dr * dr, zero);
            }
            let env = MatRef::new(&self.env, dl, dl);
            // T_s[a, b] = sum_a' L[a, a'] A[a', s, b]
            let a0 = MatRef::strided(&site.data, 0, dl, dr, row, 1);
            let a1 = MatRef::strided(&site.data, dr, dl, dr, row, 1);
            linalg::gemm(one, env, a0, zero, &mut self.t0);
            linalg::gemm(one, env, a1, zero, &mut self.t1);
            // M_{ss'}[b, b'] = sum_a conj(A[a, s, b]) T_s'[a, b']
            let conj = &self.conj[k];
            let c0 = MatRef::strided(conj, 0, dl, dr, row, 1).t();
            let c1 = MatRef::strided(conj, dr, dl, dr, row, 1).t();
            let t0 = MatRef::new(&self.t0, dl, dr);
            let t1 = MatRef::new(&self.t1, dl, dr);
            linalg::gemm(one, c0, t0, zero, &mut self.m00);
            linalg::gemm(one, c0, t1, zero, &mut self.m01);
            linalg::gemm(one, c1, t1, zero, &mut self.m11);

            // Squared norms of I = M00 + M11, Z = M00 - M11,
            // X = M01 + M10, Y = -i M01 + i M10, with M10 = M01^dag.
            let mut weights = [0.0f64; 4];
            for b in 0..dr {
                for b2 in 0..dr {
                    let d00 = self.m00[b * dr + b2];
                    let d11 = self.m11[b * dr + b2];
                    let d01 = self.m01[b * dr + b2];
                    let d10 = self.m01[b2 * dr + b].conj();
                    weights[0] += (d00 + d11).norm_sqr();
                    weights[1] += (d01 + d10).norm_sqr();
                    weights[2] += (d10 - d01).norm_sqr();
                    weights[3] += (d00 - d11).norm_sqr();
                }
            }
            let total: f64 = weights.iter().sum::<f64>() / 2.0;
            if (total - 1.0).abs() > SUM_TOL {
                return Err(Error::NumericalFault(format!(
                    "conditional probabilities at site {k} sum to {total}"
                )));
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut choice = None;
            for (i, w) in weights.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                acc += w / 2.0;
                choice = Some(i);
                if u < acc {
                    break;
                }
            }
            let choice = choice.ok_or_else(|| Error::NumericalFault(format!("no weight at site {k}")))?;
            let p = Pauli::ALL[choice];
            let q = weights[choice] / 2.0;
            c2 *= 2.0 * q;

            let norm = (2.0 * q).sqrt();
            self.env.clear();
            self.env.reserve(dr * dr);
            for b in 0..dr {
                for b2 in 0..dr {
                    let d00 = self.m00[b * dr + b2];
                    let d11 = self.m11[b * dr + b2];
                    let d01 = self.m01[b * dr + b2];
                    let d10 = self.m01[b2 * dr + b].conj();
                    let v = match p {
                        Pauli::I => d00 + d11,
                        Pauli::X => d01 + d10,
                        Pauli::Y => (d10 - d01) * C64::new(0.0, 1.0),
                        Pauli::Z => d00 - d11,
                    };
                    self.env.push(v / norm);
                }
            }
            letters.push(p);
        }

        let phase = self.env[0];
        let magnitude = c2.sqrt();
        if (phase.im * magnitude).abs() > IMAG_TOL {
            return Err(Error::NumericalFault(format!(
                "expectation has imaginary part {:e}",
                phase.im * magnitude
            )));
        }
        let c = magnitude * phase.re.signum();
        let xi = c2 / 2f64.powi(n as i32);
        Ok(SampleRecord { string: PauliString(letters), c, xi })
    }
}

/// Draw one string with probability `Xi`.
pub fn pauli_sample<R: Rng + ?Sized>(state: &MpsState, rng: &mut R) -> Result<SampleRecord> {
    PauliSampler::new(state)?.sample(rng)
}

/// Monte Carlo estimate of `M1` and `M2` from `n_samples` perfect samples.
///
/// `M1 = mean(-ln c^2)`, `M2 = -ln(mean c^2)`; the `M2` standard error comes
/// from the delta method.
pub fn estimate_sre<R: Rng + ?Sized>(
    state: &MpsState,
    n_samples: usize,
    rng: &mut R,
) -> Result<SreEstimate> {
    if n_samples < 2 {
        return Err(Error::TooFewSamples(n_samples));
    }
    let mut sampler = PauliSampler::new(state)?;
    let mut neg_log = Vec::with_capacity(n_samples);
    let mut c2s = Vec::with_capacity(n_samples);
    let mut redraws = 0usize;
    let max_redraws = 10 * n_samples + 1000;
    while c2s.len() < n_samples {
        let rec = sampler.sample(rng)?;
        let c2 = rec.c * rec.c;
        if c2 < MIN_C2 {
            redraws += 1;
            if redraws > max_redraws {
                return Err(Error::NumericalFault(format!("{redraws} draws below c^2 = {MIN_C2:e}")));
            }
            continue;
        }
        neg_log.push(-c2.ln());
        c2s.push(c2);
    }
    if redraws > 0 {
        log::debug!("estimate_sre: {redraws} near-zero draws redrawn");
    }
    let root_n = (n_samples as f64).sqrt();
    let mean_c2 = stats::mean(&c2s);
    Ok(SreEstimate {
        m1: stats::mean(&neg_log).max(0.0),
        m2: (-mean_c2.ln()).max(0.0),
        se1: stats::sample_std(&neg_log) / root_n,
        se2: stats::sample_std(&c2s) / (mean_c2 * root_n),
        n_samples,
        redraws,
    })
}

/// Exact SRE by enumerating all `4^N` strings (`N <= 8`).
pub fn exact_sre_small(state: &MpsState, rank: SreRank) -> Result<f64> {
    if state.len() > oracle::MAX_SRE_SITES {
        return Err(Error::TooManySites {
            what: "exact SRE",
            len: state.len(),
            max: oracle::MAX_SRE_SITES,
        });
    }
    let sv = oracle::Statevector::from_amplitudes(state.to_statevector()?)?;
    oracle::exact_sre(&sv, rank)
}
