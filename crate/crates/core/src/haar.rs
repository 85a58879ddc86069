//! Haar-random unitaries, brick-wall schedules and reproducible streams.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// Generator used for every stream; recorded in run metadata.
pub const RNG_ID: &str = "ChaCha8Rng (rand_chacha 0.9), 256-bit key from SplitMix64(master_seed, trajectory_index, gate_index)";

/// Stream indices at or above this value are reserved for Pauli sampling,
/// offset by the time step at which the state is measured.
pub const SAMPLING_STREAM_BASE: u64 = 1 << 62;

/// Draw a Haar-distributed unitary of size `dim` (2 or 4).
///
/// Complex Ginibre matrix, QR factorization, then the phases of `R`'s
/// diagonal are pushed into `Q` so the result is exactly Haar.
pub fn sample_haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<C64> {
    assert!(dim == 2 || dim == 4, "only U(2) and U(4) are supported");
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let ginibre = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    });
    let qr = ginibre.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn sample_haar_u4<R: Rng + ?Sized>(rng: &mut R) -> Matrix4<C64> {
    let u = sample_haar_unitary(4, rng);
    Matrix4::from_fn(|r, c| u[(r, c)])
}

/// Alternating layers of two-qubit gates on a chain.
///
/// Sites and bonds are 0-based: a gate with left site `j` acts on `(j, j+1)`.
/// Layer 0 covers bonds `0, 2, 4, ...`; layer 1 covers `1, 3, 5, ...`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BrickworkSchedule {
    pub n_sites: usize,
    pub layers: Vec<Vec<usize>>,
}

/// One gate slot of a schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateSlot {
    pub layer: usize,
    pub left_site: usize,
    /// Running index over all gates in schedule order.
    pub gate_index: u64,
}

impl BrickworkSchedule {
    pub fn new(n_sites: usize, depth: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::TooFewSites { what: "a brick-wall circuit", len: n_sites, min: 2 });
        }
        let layers = (0..depth)
            .map(|layer| (layer % 2..n_sites - 1).step_by(2).collect())
            .collect();
        Ok(Self { n_sites, layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Slots of one layer, with their global gate indices.
    pub fn layer_slots(&self, layer: usize) -> impl Iterator<Item = GateSlot> + '_ {
        let offset: usize = self.layers[..layer].iter().map(Vec::len).sum();
        self.layers[layer].iter().enumerate().map(move |(i, &left_site)| GateSlot {
            layer,
            left_site,
            gate_index: (offset + i) as u64,
        })
    }

    pub fn slots(&self) -> impl Iterator<Item = GateSlot> + '_ {
        (0..self.depth()).flat_map(move |layer| self.layer_slots(layer))
    }
}

/// Address of an independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct SeedTree {
    pub master_seed: u64,
    pub trajectory_index: u64,
    pub gate_index: u64,
}

impl SeedTree {
    pub fn new(master_seed: u64, trajectory_index: u64, gate_index: u64) -> Self {
        Self { master_seed, trajectory_index, gate_index }
    }

    /// Stream for the `gate_index`-th gate of this trajectory.
    pub fn gate(master_seed: u64, trajectory_index: u64, gate_index: u64) -> Self {
        Self::new(master_seed, trajectory_index, gate_index)
    }

    /// Stream for Pauli sampling of this trajectory's state at time `t`.
    pub fn sampling(master_seed: u64, trajectory_index: u64, t: u64) -> Self {
        Self::new(master_seed, trajectory_index, SAMPLING_STREAM_BASE + t)
    }

    pub fn derive_stream(&self) -> ChaCha8Rng {
        let mut h = splitmix64(self.master_seed);
        h = splitmix64(h ^ self.trajectory_index);
        h = splitmix64(h ^ self.gate_index);
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let w = splitmix64(h.wrapping_add(i as u64));
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All gates of one trajectory, in schedule order.
pub fn trajectory_gates(
    schedule: &BrickworkSchedule,
    master_seed: u64,
    trajectory_index: u64,
) -> Vec<Matrix4<C64>> {
    schedule
        .slots()
        .map(|slot| {
            let mut rng = SeedTree::gate(master_seed, trajectory_index, slot.gate_index).derive_stream();
            sample_haar_u4(&mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;

    fn flat(u: &DMatrix<C64>) -> Vec<C64> {
        let n = u.nrows();
        (0..n * n).map(|i| u[(i / n, i % n)]).collect()
    }

    #[test]
    fn sampled_unitaries_are_unitary() {
        let mut rng = SeedTree::new(7, 0, 0).derive_stream();
        for dim in [2, 4] {
            for _ in 0..50 {
                let u = sample_haar_unitary(dim, &mut rng);
                assert!(unitarity_defect(&flat(&u), dim) < 1e-12);
            }
        }
    }

    #[test]
    fn u2_columns_orthonormal() {
        let mut rng = SeedTree::new(99, 3, 1).derive_stream();
        let u = sample_haar_unitary(2, &mut rng);
        let c0 = u.column(0);
        let c1 = u.column(1);
        assert!((c0.norm() - 1.0).abs() < 1e-12);
        assert!((c1.norm() - 1.0).abs() < 1e-12);
        assert!(c0.dotc(&c1).norm() < 1e-12);
    }

    #[test]
    fn brickwork_layers() {
        let s = BrickworkSchedule::new(4, 2).unwrap();
        assert_eq!(s.layers, vec![vec![0, 2], vec![1]]);
        let s = BrickworkSchedule::new(5, 2).unwrap();
        assert_eq!(s.layers, vec![vec![0, 2], vec![1, 3]]);
        let s = BrickworkSchedule::new(2, 3).unwrap();
        assert_eq!(s.layers, vec![vec![0], vec![], vec![0]]);
        assert!(BrickworkSchedule::new(1, 3).is_err());
    }

    #[test]
    fn slots_are_numbered_in_order() {
        let s = BrickworkSchedule::new(5, 3).unwrap();
        let idx: Vec<u64> = s.slots().map(|g| g.gate_index).collect();
        assert_eq!(idx, (0..s.gate_count() as u64).collect::<Vec<_>>());
        let second: Vec<usize> = s.layer_slots(1).map(|g| g.left_site).collect();
        assert_eq!(second, vec![1, 3]);
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a = sample_haar_u4(&mut SeedTree::new(11, 1, 0).derive_stream());
        let b = sample_haar_u4(&mut SeedTree::new(11, 1, 0).derive_stream());
        let c = sample_haar_u4(&mut SeedTree::new(11, 2, 0).derive_stream());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
