//! Small dense helpers for the 2-state linear systems used throughout.

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2};

/// Exact zero-order-hold discretisation of `ẋ = A x + b u` over a step `h`.
///
/// Returns `(e^{Ah}, ∫₀ʰ e^{As} ds · b)`.
pub fn zoh(a: &Matrix2<f64>, b: &Vector2<f64>, h: f64) -> (Matrix2<f64>, Vector2<f64>) {
    let mut aug = Matrix3::<f64>::zeros();
    aug.fixed_view_mut::<2, 2>(0, 0).copy_from(&(a * h));
    aug.fixed_view_mut::<2, 1>(0, 2).copy_from(&(b * h));
    let e = aug.exp();
    (
        e.fixed_view::<2, 2>(0, 0).into_owned(),
        e.fixed_view::<2, 1>(0, 2).into_owned(),
    )
}

/// Covariance gained over a step `h` by `dx = A x dt + dW` with intensity `W`
/// (Van Loan): `∫₀ʰ e^{As} W e^{A's} ds`.
pub fn van_loan_noise(a: &Matrix2<f64>, w: &Matrix2<f64>, h: f64) -> Matrix2<f64> {
    let mut m = Matrix4::<f64>::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-a * h));
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&(w * h));
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&(a.transpose() * h));
    let f = m.exp();
    let f12 = f.fixed_view::<2, 2>(0, 2).into_owned();
    let phi = f.fixed_view::<2, 2>(2, 2).transpose();
    symmetrize(&(phi * f12))
}

#[inline]
pub fn symmetrize(p: &Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (p[(0, 1)] + p[(1, 0)]);
    Matrix2::new(p[(0, 0)], off, off, p[(1, 1)])
}

/// Smallest eigenvalue of a symmetric 2×2 matrix.
#[inline]
pub fn sym_min_eigenvalue(p: &Matrix2<f64>) -> f64 {
    let mean = 0.5 * (p[(0, 0)] + p[(1, 1)]);
    let half_diff = 0.5 * (p[(0, 0)] - p[(1, 1)]);
    mean - (half_diff * half_diff + p[(0, 1)] * p[(0, 1)]).sqrt()
}

/// Both eigenvalues of a real 2×2 matrix have strictly negative real parts.
pub fn is_hurwitz(a: &Matrix2<f64>) -> bool {
    a.trace() < 0.0 && a.determinant() > 0.0
}

/// Largest real part among the eigenvalues of a real 2×2 matrix.
pub fn spectral_abscissa(a: &Matrix2<f64>) -> f64 {
    let half_tr = 0.5 * a.trace();
    let disc = half_tr * half_tr - a.determinant();
    if disc >= 0.0 {
        half_tr + disc.sqrt()
    } else {
        half_tr
    }
}

pub fn frobenius(m: &Matrix2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}
