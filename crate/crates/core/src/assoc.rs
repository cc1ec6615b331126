//! Probabilistic data association over a candidate set.
//!
//! Each candidate location is weighted by its Gaussian likelihood around the
//! predicted platform position; the weighted mean becomes a single
//! pseudo-measurement whose covariance is the weighted average of the
//! per-candidate position covariances.

use nalgebra::{Matrix2, Vector2};

use crate::geomap::CandidateSet;
use crate::linalg;
use crate::{Error, Result};

/// Condition number above which a measurement covariance gets regularised.
const MAX_CONDITION: f64 = 1e12;

/// Fused pseudo-measurement for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PdaResult {
    pub fused_position: Vector2<f64>,
    pub fused_cov: Matrix2<f64>,
    pub weights: Vec<f64>,
    pub n_candidates: usize,
    /// Every candidate likelihood underflowed; weights fell back to uniform.
    pub far_candidates: bool,
}

/// Isotropic position uncertainty of a matched cell: the field noise
/// propagated through the local slope, `(σ / max(‖∇m‖, floor))² · I`.
pub fn position_noise_cov(sigma: f64, grad: &Vector2<f64>, grad_floor: f64) -> Matrix2<f64> {
    let slope = grad.norm().max(grad_floor);
    let s = sigma / slope;
    Matrix2::identity() * (s * s)
}

/// Normalised association weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub weights: Vec<f64>,
    pub far_candidates: bool,
}

fn regularize(cov: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let cov = (cov + cov.transpose()) * 0.5;
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::Covariance("measurement covariance is not finite".into()));
    }
    let reg = if linalg::condition2(&cov) > MAX_CONDITION {
        cov + Matrix2::identity() * (1e-9 * cov.trace() / 2.0)
    } else {
        cov
    };
    if reg.cholesky().is_none() {
        return Err(Error::Covariance(format!("measurement covariance {cov:?}")));
    }
    Ok(reg)
}

/// `w_i ∝ N(z_i; predicted_pos, meas_cov)`, computed in the log domain.
///
/// If every likelihood would underflow in direct evaluation the weights are
/// uniform and `far_candidates` is set.
pub fn candidate_weights(
    candidates: &CandidateSet,
    predicted_pos: &Vector2<f64>,
    meas_cov: &Matrix2<f64>,
) -> Result<Weights> {
    if candidates.is_empty() {
        return Err(Error::NoFix);
    }
    let cov = regularize(meas_cov)?;
    let log_norm = -0.5 * cov.determinant().ln() - (2.0 * std::f64::consts::PI).ln();
    let inv = cov.try_inverse().ok_or_else(|| Error::Covariance("singular measurement covariance".into()))?;
    let log_lik: Vec<f64> = candidates
        .locations()
        .map(|z| {
            let d = z - predicted_pos;
            -0.5 * (d.transpose() * inv * d)[(0, 0)] + log_norm
        })
        .collect();
    let max = log_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = log_lik.len();
    if !max.is_finite() || max.exp() == 0.0 {
        log::warn!("all {n} candidate likelihoods underflow; using uniform weights");
        return Ok(Weights { weights: vec![1.0 / n as f64; n], far_candidates: true });
    }
    let unnorm: Vec<f64> = log_lik.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(Weights { weights: unnorm.into_iter().map(|u| u / total).collect(), far_candidates: false })
}

/// Weighted mean `z̄ = Σ w_i z_i` and covariance `R̄ = Σ w_i R_i / Σ w_j`.
///
/// With `spread_cov` the dispersion `Σ w_i (z_i − z̄)(z_i − z̄)ᵀ` is added to
/// `R̄`.
pub fn pda_fuse(
    candidates: &CandidateSet,
    weights: &[f64],
    per_candidate_cov: &[Matrix2<f64>],
    spread_cov: bool,
) -> Result<PdaResult> {
    let n = candidates.len();
    if n == 0 {
        return Err(Error::NoFix);
    }
    if weights.len() != n || per_candidate_cov.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{n} candidates but {} weights and {} covariances",
            weights.len(),
            per_candidate_cov.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be non-negative with positive sum".into()));
    }
    let mut mean = Vector2::zeros();
    let mut cov = Matrix2::zeros();
    for ((z, &w), r) in candidates.locations().zip(weights).zip(per_candidate_cov) {
        mean += z * w;
        cov += r * w;
    }
    let mut fused_cov = cov / total;
    let fused_position = mean / total;
    if spread_cov {
        for (z, &w) in candidates.locations().zip(weights) {
            let d = z - fused_position;
            fused_cov += d * d.transpose() * (w / total);
        }
    }
    Ok(PdaResult {
        fused_position,
        fused_cov: linalg::symmetrize(&fused_cov),
        weights: weights.to_vec(),
        n_candidates: n,
        far_candidates: false,
    })
}
