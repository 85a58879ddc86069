//! Brute-force statevector reference for small chains.
//!
//! Amplitudes are indexed big-endian: site 0 is the most significant bit.

use std::collections::BTreeMap;

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::haar::BrickworkSchedule;
use crate::linalg;
use crate::pauli::PauliString;

pub const MAX_EVOLVE_SITES: usize = 14;
pub const MAX_XI_SITES: usize = 6;
pub const MAX_SRE_SITES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    n_sites: usize,
    amps: Vec<C64>,
}

impl Statevector {
    /// `|0...0>`.
    pub fn zeros(n_sites: usize) -> Result<Self> {
        if n_sites > MAX_EVOLVE_SITES {
            return Err(Error::TooManySites {
                what: "exact evolution",
                len: n_sites,
                max: MAX_EVOLVE_SITES,
            });
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_sites];
        amps[0] = C64::new(1.0, 0.0);
        Ok(Self { n_sites, amps })
    }

    /// Wrap amplitudes; the norm must be 1 within `1e-10`.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidInput(format!("{len} amplitudes is not a power of two")));
        }
        let norm = linalg::frobenius_norm_sqr(&amps).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { site: 0, norm });
        }
        Ok(Self { n_sites: len.trailing_zeros() as usize, amps })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        linalg::frobenius_norm_sqr(&self.amps)
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &[C64]) -> f64 {
        assert_eq!(other.len(), self.amps.len());
        self.amps.iter().zip(other).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr()
    }

    /// Apply a two-qubit gate on `(left_site, left_site + 1)`.
    pub fn apply_two_qubit_gate(&mut self, gate: &Matrix4<C64>, left_site: usize) -> Result<()> {
        let n = self.n_sites;
        if left_site + 1 >= n {
            return Err(Error::SiteOutOfRange { index: left_site, len: n });
        }
        let hi = 1usize << (n - 1 - left_site);
        let lo = 1usize << (n - 2 - left_site);
        for base in 0..self.amps.len() {
            if base & (hi | lo) != 0 {
                continue;
            }
            let idx = [base, base | lo, base | hi, base | hi | lo];
            let v = idx.map(|i| self.amps[i]);
            for (r, &i) in idx.iter().enumerate() {
                self.amps[i] = (0..4).map(|c| gate[(r, c)] * v[c]).sum();
            }
        }
        Ok(())
    }
}

/// Exact evolution of `|0...0>` through `schedule`, one gate per slot.
pub fn evolve_exact(
    n_sites: usize,
    schedule: &BrickworkSchedule,
    gates: &[Matrix4<C64>],
) -> Result<Statevector> {
    if schedule.n_sites != n_sites {
        return Err(Error::InvalidInput("schedule built for a different chain".into()));
    }
    if gates.len() != schedule.gate_count() {
        return Err(Error::InvalidInput(format!(
            "{} gates for {} slots",
            gates.len(),
            schedule.gate_count()
        )));
    }
    let mut sv = Statevector::zeros(n_sites)?;
    for (slot, gate) in schedule.slots().zip(gates) {
        sv.apply_two_qubit_gate(gate, slot.left_site)?;
    }
    Ok(sv)
}

/// Visit `<psi|sigma|psi>` for all `4^N` Pauli strings as `(x_mask, z_mask, c)`.
///
/// For each X-pattern the products `conj(psi[i ^ x]) psi[i]` are
/// Walsh-Hadamard transformed, which yields every Z-pattern at once.
pub fn for_each_pauli_expectation<F: FnMut(usize, usize, f64)>(sv: &Statevector, mut f: F) {
    let dim = sv.amps.len();
    let mut w = vec![C64::new(0.0, 0.0); dim];
    for x in 0..dim {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = sv.amps[i ^ x].conj() * sv.amps[i];
        }
        walsh_hadamard(&mut w);
        for (z, wz) in w.iter().enumerate() {
            let c = match (x & z).count_ones() % 4 {
                0 => wz.re,
                1 => -wz.im,
                2 => -wz.re,
                _ => wz.im,
            };
            f(x, z, c);
        }
    }
}

fn walsh_hadamard(v: &mut [C64]) {
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_exact_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        h *= 2;
    }
}

/// `Xi(sigma) = <sigma>^2 / 2^N` for every string.
pub fn exact_xi_distribution(sv: &Statevector) -> Result<BTreeMap<PauliString, f64>> {
    let n = sv.n_sites;
    if n > MAX_XI_SITES {
        return Err(Error::TooManySites { what: "the exact Xi map", len: n, max: MAX_XI_SITES });
    }
    let norm = (1u64 << n) as f64;
    let mut out = BTreeMap::new();
    for_each_pauli_expectation(sv, |x, z, c| {
        out.insert(PauliString::from_masks(n, x, z), c * c / norm);
    });
    Ok(out)
}

/// Stabilizer Renyi entropy of rank 1 or 2 by full enumeration.
pub fn exact_sre(sv: &Statevector, rank: SreRank) -> Result<f64> {
    let n = sv.n_sites;
    if n > MAX_SRE_SITES {
        return Err(Error::TooManySites { what: "exact SRE", len: n, max: MAX_SRE_SITES });
    }
    let norm = (1u64 << n) as f64;
    let mut terms = Vec::with_capacity(1 << (2 * n));
    for_each_pauli_expectation(sv, |_, _, c| {
        let c2 = c * c;
        terms.push(match rank {
            // -sum Xi ln(c^2)
            SreRank::One if c2 > 0.0 => -(c2 / norm) * c2.ln(),
            SreRank::One => 0.0,
            SreRank::Two => c2 * c2 / norm,
        });
    });
    let total = crate::stats::pairwise_sum(&terms);
    Ok(match rank {
        SreRank::One => total,
        SreRank::Two => -total.ln(),
    })
}

/// Renyi rank of the stabilizer entropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SreRank {
    One,
    Two,
}

impl SreRank {
    pub fn order(self) -> u32 {
        match self {
            SreRank::One => 1,
            SreRank::Two => 2,
        }
    }
}

/// `M2` of an `N`-qubit Haar-random state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaarSaturation {
    pub n_sites: usize,
    pub m2_haar: f64,
}

impl HaarSaturation {
    pub fn new(n_sites: usize) -> Self {
        Self { n_sites, m2_haar: m2_haar(n_sites) }
    }
}

/// `-ln(4 / (2^N + 3))`.
pub fn m2_haar(n_sites: usize) -> f64 {
    assert!(n_sites >= 1, "need at least one site");
    -(4.0 / (2f64.powi(n_sites as i32) + 3.0)).ln()
}

/// Entropy in bits between the first `left_sites` sites and the rest.
pub fn exact_entropy(sv: &Statevector, left_sites: usize) -> Result<f64> {
    let n = sv.n_sites;
    if left_sites == 0 || left_sites >= n {
        return Err(Error::SiteOutOfRange { index: left_sites, len: n });
    }
    let rows = 1 << left_sites;
    let cols = 1 << (n - left_sites);
    let s = linalg::singular_values(&sv.amps, rows, cols);
    Ok(linalg::entropy_bits(&s))
}
