//! Fixed gates. Two-qubit gates act on `|s_left s_right>` with index
//! `2*s_left + s_right`.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64 as C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

pub fn hadamard() -> Matrix2<C64> {
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Matrix2::new(h, h, h, -h)
}

pub fn phase_s() -> Matrix2<C64> {
    Matrix2::new(ONE, ZERO, ZERO, C64::new(0.0, 1.0))
}

/// `diag(1, e^{i pi/4})`.
pub fn t_gate() -> Matrix2<C64> {
    Matrix2::new(ONE, ZERO, ZERO, C64::from_polar(1.0, std::f64::consts::FRAC_PI_4))
}

/// Controlled-X with the left qubit as control.
pub fn cnot() -> Matrix4<C64> {
    let mut g = Matrix4::zeros();
    g[(0, 0)] = ONE;
    g[(1, 1)] = ONE;
    g[(2, 3)] = ONE;
    g[(3, 2)] = ONE;
    g
}

/// `CNOT (H x I)`: maps `|00>` to a Bell pair.
pub fn bell_preparation() -> Matrix4<C64> {
    cnot() * kron(&hadamard(), &Matrix2::identity())
}
