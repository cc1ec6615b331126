//! Small dense linear-algebra helpers shared by the filters.

use nalgebra::{Matrix2, SMatrix, Vector2};

/// Replace `m` with `(m + mᵀ) / 2`.
pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    (m - m.transpose()).amax()
}

/// Symmetric and positive semi-definite within `tol`, relative to the largest
/// entry. Checked by Cholesky factorisation of `m + tol·scale·I`.
pub fn is_symmetric_psd<const N: usize>(m: &SMatrix<f64, N, N>, tol: f64) -> bool {
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if asymmetry(m) > tol * scale {
        return false;
    }
    let shifted = symmetrize(m) + SMatrix::<f64, N, N>::identity() * (tol * scale);
    shifted.cholesky().is_some()
}

/// Squared Mahalanobis distance of `d` under covariance `cov`, or `None` when
/// `cov` is not invertible.
pub fn mahalanobis2(d: &Vector2<f64>, cov: &Matrix2<f64>) -> Option<f64> {
    let inv = cov.try_inverse()?;
    Some((d.transpose() * inv * d)[(0, 0)])
}

/// Log of the bivariate normal density `N(d; 0, cov)`.
pub fn gaussian_log_density2(d: &Vector2<f64>, cov: &Matrix2<f64>) -> Option<f64> {
    let det = cov.determinant();
    if !(det > 0.0) {
        return None;
    }
    let m2 = mahalanobis2(d, cov)?;
    Some(-0.5 * m2 - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln())
}

/// Condition number of a symmetric 2×2 matrix (ratio of eigenvalue
/// magnitudes); infinite for singular input.
pub fn condition2(m: &Matrix2<f64>) -> f64 {
    let eig = m.symmetric_eigen();
    let (a, b) = (eig.eigenvalues[0].abs(), eig.eigenvalues[1].abs());
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}
