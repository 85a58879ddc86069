//! Dense complex kernels on row-major buffers.
//!
//! Tensor data throughout the crate is stored row-major in flat `Vec<C64>`
//! buffers. Products go through `matrixmultiply`'s complex GEMM with explicit
//! strides, so transposed views cost nothing. Factorizations delegate to
//! `nalgebra`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Strided, read-only view of a matrix inside a flat buffer.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    pub data: &'a [C64],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    /// Contiguous row-major matrix.
    pub fn new(data: &'a [C64], rows: usize, cols: usize) -> Self {
        Self { data, offset: 0, rows, cols, row_stride: cols, col_stride: 1 }
    }

    pub fn strided(
        data: &'a [C64],
        offset: usize,
        rows: usize,
        cols: usize,
        row_stride: usize,
        col_stride: usize,
    ) -> Self {
        Self { data, offset, rows, cols, row_stride, col_stride }
    }

    /// Transposed view (no conjugation).
    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
            ..self
        }
    }

    fn last_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return self.offset;
        }
        self.offset + (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride
    }
}

/// `c = alpha * a * b + beta * c`, with `c` contiguous row-major `a.rows x b.cols`.
pub fn gemm(alpha: C64, a: MatRef<'_>, b: MatRef<'_>, beta: C64, c: &mut [C64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n, "output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for z in &mut c[..m * n] {
            *z *= beta;
        }
        return;
    }
    assert!(a.last_index() < a.data.len(), "lhs view out of bounds");
    assert!(b.last_index() < b.data.len(), "rhs view out of bounds");
    // SAFETY: `Complex<f64>` is `repr(C)` with layout `[f64; 2]`; all strided
    // accesses were bounds-checked above and `c` holds at least m*n elements.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.data.as_ptr().add(a.offset) as *const [f64; 2],
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr().add(b.offset) as *const [f64; 2],
            b.row_stride as isize,
            b.col_stride as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            n as isize,
            1,
        );
    }
}

/// Allocating product of two views.
pub fn matmul(a: MatRef<'_>, b: MatRef<'_>) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.rows * b.cols];
    gemm(C64::new(1.0, 0.0), a, b, C64::new(0.0, 0.0), &mut out);
    out
}

/// Thin SVD of a row-major `rows x cols` matrix.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows x rank`, row-major.
    pub u: Vec<C64>,
    /// Descending.
    pub s: Vec<f64>,
    /// `rank x cols`, row-major.
    pub vt: Vec<C64>,
    pub rows: usize,
    pub cols: usize,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

pub fn svd(data: &[C64], rows: usize, cols: usize) -> Svd {
    let m = DMatrix::from_row_slice(rows, cols, data);
    let dec = m.svd(true, true);
    let u = dec.u.expect("u requested");
    let vt = dec.v_t.expect("v_t requested");
    let k = dec.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));

    let mut u_out = Vec::with_capacity(rows * k);
    for r in 0..rows {
        u_out.extend(order.iter().map(|&c| u[(r, c)]));
    }
    let mut vt_out = Vec::with_capacity(k * cols);
    for &r in &order {
        vt_out.extend((0..cols).map(|c| vt[(r, c)]));
    }
    let s = order.iter().map(|&i| dec.singular_values[i]).collect();
    Svd { u: u_out, s, vt: vt_out, rows, cols }
}

/// Singular values only, descending.
pub fn singular_values(data: &[C64], rows: usize, cols: usize) -> Vec<f64> {
    let m = DMatrix::from_row_slice(rows, cols, data);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Thin QR of a row-major `rows x cols` matrix: `(q, r, k)` with `q` of shape
/// `rows x k`, `r` of shape `k x cols`, `k = min(rows, cols)`.
pub fn qr(data: &[C64], rows: usize, cols: usize) -> (Vec<C64>, Vec<C64>, usize) {
    let m = DMatrix::from_row_slice(rows, cols, data);
    let dec = m.qr();
    let q = dec.q();
    let r = dec.r();
    let k = rows.min(cols);
    let mut q_out = Vec::with_capacity(rows * k);
    for i in 0..rows {
        q_out.extend((0..k).map(|j| q[(i, j)]));
    }
    let mut r_out = Vec::with_capacity(k * cols);
    for i in 0..k {
        r_out.extend((0..cols).map(|j| r[(i, j)]));
    }
    (q_out, r_out, k)
}

/// Conjugate transpose of a row-major `rows x cols` matrix.
pub fn adjoint(data: &[C64], rows: usize, cols: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(rows * cols);
    for c in 0..cols {
        out.extend((0..rows).map(|r| data[r * cols + c].conj()));
    }
    out
}

pub fn frobenius_norm_sqr(data: &[C64]) -> f64 {
    data.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest entry of `|U^dag U - I|` for a row-major square matrix.
pub fn unitarity_defect(u: &[C64], dim: usize) -> f64 {
    assert_eq!(u.len(), dim * dim);
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..dim {
                acc += u[k * dim + i].conj() * u[k * dim + j];
            }
            if i == j {
                acc -= 1.0;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

/// Von Neumann entropy in bits of the normalized Schmidt weights `s_i^2`.
pub fn entropy_bits(singular_values: &[f64]) -> f64 {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total <= 0.0 {
        return 0.0;
    }
    -singular_values
        .iter()
        .map(|s| s * s / total)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>()
}
