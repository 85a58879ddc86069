//! Open-boundary matrix product states of qubit chains.
//!
//! Each site holds a rank-3 tensor `A[left, physical, right]` stored
//! row-major. The state tracks its orthogonality center: when the center is
//! at `k`, sites `< k` are left-canonical and sites `> k` right-canonical, so
//! the norm of the state is the Frobenius norm of the center tensor and the
//! singular values of a two-site block are the exact Schmidt coefficients.
//!
//! Site `0` is the leftmost site and the most significant bit of the
//! statevector index.

use std::fmt;
use std::io::{Read, Write};

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, MatRef};

pub const PHYS_DIM: usize = 2;

/// Default discarded-weight tolerance for SVD truncation.
pub const DEFAULT_SVD_TOL: f64 = 1e-8;

/// Largest chain `to_statevector` will expand.
pub const MAX_STATEVECTOR_SITES: usize = 14;

/// Singular values below this fraction of the largest are treated as exact
/// zeros: dropped without counting toward the discarded weight.
const NUMERICAL_ZERO: f64 = 1e-14;

/// Singular values within this distance of the cut value count as tied.
const TIE_TOL: f64 = 1e-12;

const UNITARITY_TOL: f64 = 1e-10;
const LOCAL_NORM_TOL: f64 = 1e-12;

/// Upper bound on the bond dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BondCap {
    Finite(usize),
    Infinite,
}

impl BondCap {
    pub fn limit(self) -> usize {
        match self {
            BondCap::Finite(chi) => chi,
            BondCap::Infinite => usize::MAX,
        }
    }
}

impl fmt::Display for BondCap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BondCap::Finite(chi) => write!(f, "{chi}"),
            BondCap::Infinite => f.write_str("inf"),
        }
    }
}

/// One site tensor, shape `(left, 2, right)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor {
    pub left: usize,
    pub right: usize,
    pub data: Vec<C64>,
}

impl SiteTensor {
    pub fn new(left: usize, right: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), left * PHYS_DIM * right, "site tensor shape mismatch");
        Self { left, right, data }
    }

    #[inline]
    pub fn at(&self, a: usize, s: usize, b: usize) -> C64 {
        self.data[(a * PHYS_DIM + s) * self.right + b]
    }

    /// View as a `(left*2) x right` matrix.
    fn as_left_matrix(&self) -> MatRef<'_> {
        MatRef::new(&self.data, self.left * PHYS_DIM, self.right)
    }

    /// View as a `left x (2*right)` matrix.
    fn as_right_matrix(&self) -> MatRef<'_> {
        MatRef::new(&self.data, self.left, PHYS_DIM * self.right)
    }

    /// Max deviation of `sum_{a,s} conj(A[a,s,b]) A[a,s,b']` from the identity.
    pub fn left_isometry_defect(&self) -> f64 {
        let rows = self.left * PHYS_DIM;
        let adj = linalg::adjoint(&self.data, rows, self.right);
        let g = linalg::matmul(MatRef::new(&adj, self.right, rows), self.as_left_matrix());
        identity_defect(&g, self.right)
    }

    /// Max deviation of `sum_{s,b} A[a,s,b] conj(A[a',s,b])` from the identity.
    pub fn right_isometry_defect(&self) -> f64 {
        let cols = PHYS_DIM * self.right;
        let adj = linalg::adjoint(&self.data, self.left, cols);
        let g = linalg::matmul(self.as_right_matrix(), MatRef::new(&adj, cols, self.left));
        identity_defect(&g, self.left)
    }
}

fn max_entry<'a, I: IntoIterator<Item = &'a C64>>(m: I) -> f64 {
    m.into_iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn identity_defect(g: &[C64], dim: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[i * dim + j] - want).norm());
        }
    }
    worst
}

/// Result of one truncated two-site update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationReport {
    /// Fraction of the squared Schmidt weight dropped, in `[0, 1]`.
    pub discarded_weight: f64,
    pub new_bond: usize,
    /// Bond the tolerance alone would have kept.
    pub required_bond: usize,
    /// Whether the bond cap, rather than the tolerance, set `new_bond`.
    pub capped: bool,
}

/// Von Neumann entanglement entropy (bits) at every cut of the chain.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyProfile {
    /// `per_cut[l]` is the entropy between sites `..=l` and `l+1..`.
    pub per_cut: Vec<f64>,
    pub max_cut_value: f64,
    pub max_cut_index: usize,
}

impl EntropyProfile {
    fn from_cuts(per_cut: Vec<f64>) -> Self {
        let (max_cut_index, max_cut_value) = per_cut
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        Self { per_cut, max_cut_value, max_cut_index }
    }
}

/// Number of singular values to keep and the discarded weight.
///
/// `s` must be sorted descending.
pub(crate) fn truncation_rank(s: &[f64], svd_tol: f64, cap: BondCap) -> Result<TruncationReport> {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::NumericalFault(format!("two-site block has total weight {total}")));
    }
    let exact_rank = s.iter().take_while(|&&x| x > NUMERICAL_ZERO * s[0]).count().max(1);

    // smallest k whose tail weight is within tolerance
    let mut tail = 0.0;
    let mut keep = exact_rank;
    for k in (1..exact_rank).rev() {
        tail += s[k] * s[k];
        if tail / total > svd_tol {
            break;
        }
        keep = k;
    }
    let scale = total.sqrt();
    while keep < exact_rank && (s[keep - 1] - s[keep]) / scale <= TIE_TOL {
        keep += 1;
    }

    let required_bond = keep;
    let limit = cap.limit();
    let capped = keep > limit;
    if capped {
        keep = limit;
    }
    let discarded: f64 = s[keep..exact_rank].iter().map(|x| x * x).sum::<f64>() / total;
    Ok(TruncationReport { discarded_weight: discarded.clamp(0.0, 1.0), new_bond: keep, required_bond, capped })
}

/// Open-boundary MPS of `N` qubits.
#[derive(Clone, Debug)]
pub struct MpsState {
    sites: Vec<SiteTensor>,
    center: Option<usize>,
    cap: BondCap,
    svd_tol: f64,
}

impl MpsState {
    /// Product state from one normalized 2-vector per site.
    pub fn from_product_state(local_states: &[[C64; 2]]) -> Result<Self> {
        if local_states.is_empty() {
            return Err(Error::TooFewSites { what: "an MPS", len: 0, min: 1 });
        }
        let mut sites = Vec::with_capacity(local_states.len());
        for (site, v) in local_states.iter().enumerate() {
            let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            if (norm - 1.0).abs() > LOCAL_NORM_TOL {
                return Err(Error::NotNormalized { site, norm });
            }
            sites.push(SiteTensor::new(1, 1, v.to_vec()));
        }
        Ok(Self { sites, center: Some(0), cap: BondCap::Infinite, svd_tol: DEFAULT_SVD_TOL })
    }

    /// `|0...0>` on `n` sites.
    pub fn zeros(n: usize) -> Result<Self> {
        let zero = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        Self::from_product_state(&vec![zero; n])
    }

    /// Arbitrary tensors with matching bonds; the state is left uncanonicalized.
    pub fn from_tensors(sites: Vec<SiteTensor>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::TooFewSites { what: "an MPS", len: 0, min: 1 });
        }
        if sites[0].left != 1 || sites[sites.len() - 1].right != 1 {
            return Err(Error::InvalidInput("boundary bonds must be 1".into()));
        }
        for (k, w) in sites.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::InvalidInput(format!(
                    "bond {k} mismatch: {} vs {}",
                    w[0].right, w[1].left
                )));
            }
        }
        Ok(Self { sites, center: None, cap: BondCap::Infinite, svd_tol: DEFAULT_SVD_TOL })
    }

    pub fn with_bond_cap(mut self, cap: BondCap) -> Self {
        if let BondCap::Finite(chi) = cap {
            assert!(chi >= 1, "bond cap must be positive");
        }
        self.cap = cap;
        self
    }

    pub fn with_svd_tol(mut self, svd_tol: f64) -> Self {
        assert!(svd_tol >= 0.0, "svd tolerance must be nonnegative");
        self.svd_tol = svd_tol;
        self
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, k: usize) -> &SiteTensor {
        &self.sites[k]
    }

    pub fn sites(&self) -> &[SiteTensor] {
        &self.sites
    }

    pub fn ortho_center(&self) -> Option<usize> {
        self.center
    }

    pub fn bond_cap(&self) -> BondCap {
        self.cap
    }

    pub fn svd_tol(&self) -> f64 {
        self.svd_tol
    }

    /// Bond sizes at the `N-1` internal cuts.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.len() - 1].iter().map(|t| t.right).collect()
    }

    /// Largest bond dimension across all cuts (1 for a single site).
    pub fn max_required_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// `<psi|psi>` by full transfer-matrix contraction.
    pub fn norm_sqr(&self) -> f64 {
        let mut env = vec![C64::new(1.0, 0.0)];
        let mut dim = 1;
        for t in &self.sites {
            let mut next = vec![C64::new(0.0, 0.0); t.right * t.right];
            for a in 0..dim {
                for a2 in 0..dim {
                    let e = env[a * dim + a2];
                    if e == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for s in 0..PHYS_DIM {
                        for b in 0..t.right {
                            let x = e * t.at(a, s, b).conj();
                            for b2 in 0..t.right {
                                next[b * t.right + b2] += x * t.at(a2, s, b2);
                            }
                        }
                    }
                }
            }
            env = next;
            dim = t.right;
        }
        env[0].re
    }

    /// Bring the state into mixed canonical form centered at `target`.
    pub fn move_center(&mut self, target: usize) {
        assert!(target < self.len(), "center target out of range");
        let mut c = match self.center {
            Some(c) => c,
            None => {
                self.canonicalize();
                0
            }
        };
        while c < target {
            self.shift_right(c);
            c += 1;
        }
        while c > target {
            self.shift_left(c);
            c -= 1;
        }
        self.center = Some(target);
    }

    /// Right-canonicalize every site, normalize, and center at site 0.
    pub fn canonicalize(&mut self) {
        for k in (1..self.len()).rev() {
            self.shift_left(k);
        }
        let norm = linalg::frobenius_norm_sqr(&self.sites[0].data).sqrt();
        if norm > 0.0 {
            for z in &mut self.sites[0].data {
                *z /= norm;
            }
        }
        self.center = Some(0);
    }

    /// QR at site `k`, absorbing `R` into site `k+1`.
    fn shift_right(&mut self, k: usize) {
        let t = &self.sites[k];
        let (rows, cols) = (t.left * PHYS_DIM, t.right);
        let (q, r, rank) = linalg::qr(&t.data, rows, cols);
        let next = &self.sites[k + 1];
        let merged = linalg::matmul(MatRef::new(&r, rank, cols), next.as_right_matrix());
        let next_right = next.right;
        let left = self.sites[k].left;
        self.sites[k] = SiteTensor::new(left, rank, q);
        self.sites[k + 1] = SiteTensor::new(rank, next_right, merged);
    }

    /// LQ at site `k` (via QR of the adjoint), absorbing `L` into site `k-1`.
    fn shift_left(&mut self, k: usize) {
        let t = &self.sites[k];
        let (rows, cols) = (t.left, PHYS_DIM * t.right);
        let adj = linalg::adjoint(&t.data, rows, cols);
        let (q, r, rank) = linalg::qr(&adj, cols, rows);
        // t = r^dag q^dag
        let q_dag = linalg::adjoint(&q, cols, rank);
        let r_dag = linalg::adjoint(&r, rank, rows);
        let prev = &self.sites[k - 1];
        let merged = linalg::matmul(prev.as_left_matrix(), MatRef::new(&r_dag, rows, rank));
        let prev_left = prev.left;
        let right = self.sites[k].right;
        self.sites[k] = SiteTensor::new(rank, right, q_dag);
        self.sites[k - 1] = SiteTensor::new(prev_left, rank, merged);
    }

    /// Apply a single-qubit unitary on `site`. Canonical form is preserved.
    pub fn apply_single_qubit_gate(&mut self, gate: &Matrix2<C64>, site: usize) -> Result<()> {
        if site >= self.len() {
            return Err(Error::SiteOutOfRange { index: site, len: self.len() });
        }
        let defect = max_entry(&(gate.adjoint() * gate - Matrix2::identity()));
        if defect > UNITARITY_TOL {
            return Err(Error::NotUnitary { deviation: defect });
        }
        let t = &mut self.sites[site];
        for a in 0..t.left {
            for b in 0..t.right {
                let i0 = (a * PHYS_DIM) * t.right + b;
                let i1 = (a * PHYS_DIM + 1) * t.right + b;
                let (x0, x1) = (t.data[i0], t.data[i1]);
                t.data[i0] = gate[(0, 0)] * x0 + gate[(0, 1)] * x1;
                t.data[i1] = gate[(1, 0)] * x0 + gate[(1, 1)] * x1;
            }
        }
        Ok(())
    }

    /// Apply a two-qubit unitary on sites `(left_site, left_site + 1)`.
    ///
    /// The gate acts on the basis `|s_left s_right>` with index
    /// `2*s_left + s_right`. The new bond is truncated to the smallest set of
    /// Schmidt values whose discarded weight is within `svd_tol`, then capped,
    /// and the state is renormalized. The center ends on `left_site + 1`.
    pub fn apply_two_qubit_gate(
        &mut self,
        gate: &Matrix4<C64>,
        left_site: usize,
    ) -> Result<TruncationReport> {
        if left_site + 1 >= self.len() {
            return Err(Error::SiteOutOfRange { index: left_site, len: self.len() });
        }
        let defect = max_entry(&(gate.adjoint() * gate - Matrix4::identity()));
        if defect > UNITARITY_TOL {
            return Err(Error::NotUnitary { deviation: defect });
        }
        match self.center {
            Some(c) if c == left_site || c == left_site + 1 => {}
            Some(c) if c > left_site + 1 => self.move_center(left_site + 1),
            _ => self.move_center(left_site),
        }

        let (a, b) = (&self.sites[left_site], &self.sites[left_site + 1]);
        let (dl, dr) = (a.left, b.right);
        // theta[l, s1, s2, r]
        let theta = linalg::matmul(a.as_left_matrix(), b.as_right_matrix());
        let mut rotated = vec![C64::new(0.0, 0.0); theta.len()];
        for l in 0..dl {
            let base = l * 4 * dr;
            for out in 0..4 {
                let dst = &mut rotated[base + out * dr..base + (out + 1) * dr];
                for inp in 0..4 {
                    let g = gate[(out, inp)];
                    if g == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let src = &theta[base + inp * dr..base + (inp + 1) * dr];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += g * s;
                    }
                }
            }
        }

        let (rows, cols) = (dl * PHYS_DIM, PHYS_DIM * dr);
        let dec = linalg::svd(&rotated, rows, cols);
        let report = truncation_rank(&dec.s, self.svd_tol, self.cap)?;
        let keep = report.new_bond;
        let kept_norm = dec.s[..keep].iter().map(|x| x * x).sum::<f64>().sqrt();

        let rank = dec.rank();
        let mut left = Vec::with_capacity(rows * keep);
        for r in 0..rows {
            left.extend_from_slice(&dec.u[r * rank..r * rank + keep]);
        }
        let mut right = Vec::with_capacity(keep * cols);
        for (k, sv) in dec.s[..keep].iter().enumerate() {
            let w = sv / kept_norm;
            right.extend(dec.vt[k * cols..(k + 1) * cols].iter().map(|z| z * w));
        }
        self.sites[left_site] = SiteTensor::new(dl, keep, left);
        self.sites[left_site + 1] = SiteTensor::new(keep, dr, right);
        self.center = Some(left_site + 1);
        Ok(report)
    }

    /// Entanglement entropy in bits at every cut, with the maximal cut.
    pub fn entanglement_profile(&self) -> EntropyProfile {
        let n = self.len();
        if n < 2 {
            return EntropyProfile::from_cuts(Vec::new());
        }
        let mut work = self.clone();
        work.move_center(0);
        let mut per_cut = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let t = &work.sites[k];
            let (rows, cols) = (t.left * PHYS_DIM, t.right);
            let dec = linalg::svd(&t.data, rows, cols);
            per_cut.push(linalg::entropy_bits(&dec.s));
            let rank = dec.rank();
            let mut sv = dec.vt;
            for (r, s) in dec.s.iter().enumerate() {
                for z in &mut sv[r * cols..(r + 1) * cols] {
                    *z *= s;
                }
            }
            let next = &work.sites[k + 1];
            let merged = linalg::matmul(MatRef::new(&sv, rank, cols), next.as_right_matrix());
            let next_right = next.right;
            let left = t.left;
            work.sites[k] = SiteTensor::new(left, rank, dec.u);
            work.sites[k + 1] = SiteTensor::new(rank, next_right, merged);
        }
        EntropyProfile::from_cuts(per_cut)
    }

    /// Dense amplitudes in big-endian site order (site 0 most significant).
    pub fn to_statevector(&self) -> Result<Vec<C64>> {
        let n = self.len();
        if n > MAX_STATEVECTOR_SITES {
            return Err(Error::TooManySites {
                what: "statevector expansion",
                len: n,
                max: MAX_STATEVECTOR_SITES,
            });
        }
        let mut acc = vec![C64::new(1.0, 0.0)];
        let mut prefixes = 1;
        for t in &self.sites {
            // acc: prefixes x left  ->  (prefixes*2) x right
            let next = linalg::matmul(MatRef::new(&acc, prefixes, t.left), t.as_right_matrix());
            acc = next;
            prefixes *= PHYS_DIM;
        }
        Ok(acc)
    }

    /// Check bond consistency, the bond cap, and canonical isometries.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let n = self.len();
        if self.sites[0].left != 1 || self.sites[n - 1].right != 1 {
            return Err(Error::NumericalFault("boundary bond is not 1".into()));
        }
        for (k, w) in self.sites.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::NumericalFault(format!("bond {k} sizes disagree")));
            }
            if w[0].right > self.cap.limit() {
                return Err(Error::NumericalFault(format!("bond {k} exceeds the cap")));
            }
        }
        if let Some(c) = self.center {
            for k in 0..c {
                let d = self.sites[k].left_isometry_defect();
                if d > tol {
                    return Err(Error::NumericalFault(format!("site {k} not left-canonical ({d:e})")));
                }
            }
            for k in c + 1..n {
                let d = self.sites[k].right_isometry_defect();
                if d > tol {
                    return Err(Error::NumericalFault(format!("site {k} not right-canonical ({d:e})")));
                }
            }
            let norm = linalg::frobenius_norm_sqr(&self.sites[c].data);
            if (norm - 1.0).abs() > tol {
                return Err(Error::NumericalFault(format!("norm {norm} != 1")));
            }
        }
        Ok(())
    }

    /// Binary snapshot: magic, version, N, d, cap (0 = infinite), svd_tol,
    /// center (u64::MAX = none), per-site `(left, right)`, then row-major
    /// tensor data as little-endian `(re, im)` f64 pairs.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        let cap = match self.cap {
            BondCap::Finite(chi) => chi as u64,
            BondCap::Infinite => 0,
        };
        let center = self.center.map_or(u64::MAX, |c| c as u64);
        for v in [self.len() as u64, PHYS_DIM as u64, cap] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.svd_tol.to_le_bytes())?;
        w.write_all(&center.to_le_bytes())?;
        for t in &self.sites {
            w.write_all(&(t.left as u64).to_le_bytes())?;
            w.write_all(&(t.right as u64).to_le_bytes())?;
        }
        for t in &self.sites {
            for z in &t.data {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::InvalidInput("not an MPS snapshot".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != SNAPSHOT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported snapshot version {version}")));
        }
        let read_u64 = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let n = read_u64(&mut r)? as usize;
        let d = read_u64(&mut r)? as usize;
        if d != PHYS_DIM {
            return Err(Error::InvalidInput(format!("local dimension {d} unsupported")));
        }
        let cap = match read_u64(&mut r)? {
            0 => BondCap::Infinite,
            chi => BondCap::Finite(chi as usize),
        };
        let svd_tol = f64::from_bits(read_u64(&mut r)?);
        let center = match read_u64(&mut r)? {
            u64::MAX => None,
            c => Some(c as usize),
        };
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let left = read_u64(&mut r)? as usize;
            let right = read_u64(&mut r)? as usize;
            shapes.push((left, right));
        }
        let mut sites = Vec::with_capacity(n);
        for (left, right) in shapes {
            let mut data = Vec::with_capacity(left * PHYS_DIM * right);
            for _ in 0..left * PHYS_DIM * right {
                let re = f64::from_bits(read_u64(&mut r)?);
                let im = f64::from_bits(read_u64(&mut r)?);
                data.push(C64::new(re, im));
            }
            sites.push(SiteTensor::new(left, right, data));
        }
        let mut state = Self::from_tensors(sites)?.with_svd_tol(svd_tol).with_bond_cap(cap);
        if let Some(c) = center {
            if c >= n {
                return Err(Error::InvalidInput(format!("center {c} out of range")));
            }
        }
        state.center = center;
        Ok(state)
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"MPSQ";
const SNAPSHOT_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn bell() -> MpsState {
        let mut psi = MpsState::zeros(2).unwrap();
        psi.apply_two_qubit_gate(&gates::bell_preparation(), 0).unwrap();
        psi
    }

    #[test]
    fn product_state_has_unit_bonds_and_zero_entropy() {
        let psi = MpsState::zeros(4).unwrap();
        assert_eq!(psi.bond_dims(), vec![1, 1, 1]);
        assert_eq!(psi.ortho_center(), Some(0));
        let prof = psi.entanglement_profile();
        assert_eq!(prof.per_cut, vec![0.0; 3]);
        assert_eq!(prof.max_cut_value, 0.0);
        assert_eq!(psi.max_required_bond(), 1);
        psi.check_invariants(1e-12).unwrap();
    }

    #[test]
    fn single_site_t_state() {
        let h = FRAC_1_SQRT_2;
        let phase = C64::from_polar(h, FRAC_PI_4);
        let psi = MpsState::from_product_state(&[[c(h, 0.0), phase]]).unwrap();
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-14);
        assert_eq!(psi.entanglement_profile().per_cut, Vec::<f64>::new());
    }

    #[test]
    fn rejects_unnormalized_local_state() {
        let err = MpsState::from_product_state(&[[c(1.0, 0.0), c(0.1, 0.0)]]).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { site: 0, .. }));
    }

    #[test]
    fn product_statevector_is_big_endian() {
        let psi = MpsState::from_product_state(&[
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(1.0, 0.0)],
        ])
        .unwrap();
        let sv = psi.to_statevector().unwrap();
        assert_eq!(sv[1], c(1.0, 0.0));
        assert_eq!(sv.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn bell_preparation_gives_one_bit() {
        let psi = bell();
        assert_eq!(psi.bond_dims(), vec![2]);
        let prof = psi.entanglement_profile();
        assert!((prof.per_cut[0] - 1.0).abs() < 1e-12);
        let sv = psi.to_statevector().unwrap();
        let h = FRAC_1_SQRT_2;
        let want = [h, 0.0, 0.0, h];
        for (z, w) in sv.iter().zip(want) {
            assert!((z - c(w, 0.0)).norm() < 1e-12);
        }
        psi.check_invariants(1e-12).unwrap();
    }

    #[test]
    fn identity_gate_leaves_bell_pair_unchanged() {
        let mut psi = bell();
        let before = psi.to_statevector().unwrap();
        let rep = psi.apply_two_qubit_gate(&Matrix4::identity(), 0).unwrap();
        assert_eq!(rep.discarded_weight, 0.0);
        assert!(!rep.capped);
        let after = psi.to_statevector().unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).norm() < 1e-10);
        }
        assert_eq!(psi.bond_dims(), vec![2]);
    }

    #[test]
    fn rejects_bad_gate_and_index() {
        let mut psi = MpsState::zeros(3).unwrap();
        let mut g = Matrix4::<C64>::identity();
        g[(0, 0)] = c(2.0, 0.0);
        assert!(matches!(psi.apply_two_qubit_gate(&g, 0), Err(Error::NotUnitary { .. })));
        assert!(matches!(
            psi.apply_two_qubit_gate(&Matrix4::identity(), 2),
            Err(Error::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn cap_one_keeps_dominant_product_component() {
        // Exact two-qubit state with Schmidt values cos(0.3), sin(0.3):
        // (cos|00> + sin|11>) prepared by a rotation then CNOT.
        let theta: f64 = 0.3;
        let ry = Matrix2::new(
            c(theta.cos(), 0.0),
            c(-theta.sin(), 0.0),
            c(theta.sin(), 0.0),
            c(theta.cos(), 0.0),
        );
        let gate = gates::cnot() * gates::kron(&ry, &Matrix2::identity());
        let mut psi = MpsState::zeros(2).unwrap().with_bond_cap(BondCap::Finite(1));
        let rep = psi.apply_two_qubit_gate(&gate, 0).unwrap();
        assert!(rep.capped);
        assert_eq!(rep.new_bond, 1);
        assert!((rep.discarded_weight - theta.sin().powi(2)).abs() < 1e-12);
        let sv = psi.to_statevector().unwrap();
        assert!((sv[0].norm() - 1.0).abs() < 1e-12);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_rank_rules() {
        // tolerance drops a tiny tail, not capped
        let s = [0.8, 0.6, 1e-6];
        let rep = truncation_rank(&s, 1e-8, BondCap::Infinite).unwrap();
        assert_eq!(rep.new_bond, 2);
        assert!(!rep.capped && rep.discarded_weight <= 1e-8);

        // noise-level values are exact zeros
        let s = [1.0, 1e-17];
        let rep = truncation_rank(&s, 0.0, BondCap::Finite(1)).unwrap();
        assert_eq!((rep.new_bond, rep.discarded_weight, rep.capped), (1, 0.0, false));

        // ties at the cut are kept together when the cap allows
        let h = 0.5;
        let s = [h, h, h, h];
        let rep = truncation_rank(&s, 0.3, BondCap::Finite(8)).unwrap();
        assert_eq!(rep.new_bond, 4);
        let rep = truncation_rank(&s, 0.3, BondCap::Finite(3)).unwrap();
        assert_eq!(rep.new_bond, 3);
        assert!(rep.capped);
    }

    #[test]
    fn ghz_profile_is_one_bit_everywhere() {
        let mut psi = MpsState::zeros(4).unwrap();
        psi.apply_two_qubit_gate(&gates::bell_preparation(), 0).unwrap();
        psi.apply_two_qubit_gate(&gates::cnot(), 1).unwrap();
        psi.apply_two_qubit_gate(&gates::cnot(), 2).unwrap();
        let prof = psi.entanglement_profile();
        for v in &prof.per_cut {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!((prof.max_cut_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut psi = MpsState::zeros(3).unwrap().with_bond_cap(BondCap::Finite(4));
        psi.apply_two_qubit_gate(&gates::bell_preparation(), 1).unwrap();
        let mut buf = Vec::new();
        psi.write_snapshot(&mut buf).unwrap();
        let back = MpsState::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.sites(), psi.sites());
        assert_eq!(back.ortho_center(), psi.ortho_center());
        assert_eq!(back.bond_cap(), psi.bond_cap());
        assert_eq!(back.svd_tol(), psi.svd_tol());
    }

    #[test]
    fn mps_is_send() {
        fn assert_send<T: Send>() {}
        assert_send::<MpsState>();
    }
}
