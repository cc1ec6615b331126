//! Scaled unscented transform and the two UKF steps on the 6-state belief.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};

use super::{AidingFix, NavBelief, State6, Cov6};
use crate::linalg;
use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 1e-3;
pub const DEFAULT_BETA: f64 = 2.0;
pub const DEFAULT_KAPPA: f64 = 0.0;
/// White acceleration noise PSD, (m/s²)²/Hz.
pub const DEFAULT_ACCEL_PSD: f64 = 8e-5 * 8e-5;
/// Accelerometer bias random-walk PSD, (m/s²)²/s.
pub const DEFAULT_BIAS_PSD: f64 = 1e-12;
/// χ²(2) at 99.9%.
pub const CHI2_2_999: f64 = 13.815510557964274;

const N: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub accel_psd: f64,
    pub bias_psd: f64,
    /// NIS threshold for rejecting fixes; `None` disables the guard.
    pub nis_gate: Option<f64>,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            kappa: DEFAULT_KAPPA,
            accel_psd: DEFAULT_ACCEL_PSD,
            bias_psd: DEFAULT_BIAS_PSD,
            nis_gate: Some(CHI2_2_999),
        }
    }
}

impl UkfConfig {
    fn lambda(&self) -> f64 {
        self.alpha * self.alpha * (N as f64 + self.kappa) - N as f64
    }

    /// (Wm0, Wc0, Wi).
    fn weights(&self) -> (f64, f64, f64) {
        let lambda = self.lambda();
        let c = N as f64 + lambda;
        let wm0 = lambda / c;
        (wm0, wm0 + 1.0 - self.alpha * self.alpha + self.beta, 0.5 / c)
    }
}

/// Statistics of `y = f(x)` for `x ~ (mean, cov)`.
pub struct Transformed<const M: usize> {
    pub mean: SVector<f64, M>,
    pub cov: SMatrix<f64, M, M>,
    pub cross: SMatrix<f64, N, M>,
    pub regularized: bool,
}

fn sigma_offsets(cov: &Cov6, scale: f64) -> Result<(SMatrix<f64, N, N>, bool)> {
    if let Some(ch) = (cov * scale).cholesky() {
        return Ok((ch.l(), false));
    }
    let eps = 1e-9 * cov.trace().abs().max(f64::MIN_POSITIVE) / N as f64;
    let fixed = linalg::symmetrize(cov) + Cov6::identity() * eps;
    match (fixed * scale).cholesky() {
        Some(ch) => Ok((ch.l(), true)),
        None => Err(Error::Numerical { iteration: 0, msg: "sigma-point square root failed after regularisation".into() }),
    }
}

/// Scaled unscented transform. Deviations are taken relative to the image of
/// the central point, which keeps the large negative central weight from
/// amplifying roundoff in the mean.
pub fn unscented_transform<const M: usize>(
    mean: &State6,
    cov: &Cov6,
    cfg: &UkfConfig,
    f: impl Fn(&State6) -> SVector<f64, M>,
) -> Result<Transformed<M>> {
    let y0 = f(mean);
    unscented_transform_incremental(mean, cov, cfg, y0, |d| f(&(mean + d)) - y0)
}

/// Same transform with the increments `f(mean + d) − f(mean)` supplied
/// directly. For maps that are affine in the state this avoids forming
/// `mean + d`, whose rounding dominates when the sigma offsets are small
/// against the mean.
pub fn unscented_transform_incremental<const M: usize>(
    mean: &State6,
    cov: &Cov6,
    cfg: &UkfConfig,
    y0: SVector<f64, M>,
    delta: impl Fn(&State6) -> SVector<f64, M>,
) -> Result<Transformed<M>> {
    debug_assert!(mean.iter().all(|v| v.is_finite()));
    let (l, regularized) = sigma_offsets(cov, N as f64 + cfg.lambda())?;
    let (_, wc0, wi) = cfg.weights();
    let mut dx = Vec::with_capacity(2 * N);
    let mut dy = Vec::with_capacity(2 * N);
    for j in 0..N {
        let col: State6 = l.column(j).into_owned();
        for d in [col, -col] {
            dy.push(delta(&d));
            dx.push(d);
        }
    }
    let shift: SVector<f64, M> = dy.iter().sum::<SVector<f64, M>>() * wi;
    let mut cov_y = shift * shift.transpose() * wc0;
    let mut cross = SMatrix::<f64, N, M>::zeros();
    for (d, e) in dx.iter().zip(&dy) {
        let e = e - shift;
        cov_y += e * e.transpose() * wi;
        cross += d * e.transpose() * wi;
    }
    Ok(Transformed { mean: y0 + shift, cov: cov_y, cross, regularized })
}

/// Closed-form discrete process noise for `ṗ = v`, `v̇ = a − b + w_v`,
/// `ḃ = w_b` per axis.
pub fn process_noise(dt: f64, accel_psd: f64, bias_psd: f64) -> Cov6 {
    let (d2, d3, d4, d5) = (dt * dt, dt.powi(3), dt.powi(4), dt.powi(5));
    let qv = accel_psd;
    let qb = bias_psd;
    let pp = qv * d3 / 3.0 + qb * d5 / 20.0;
    let pv = qv * d2 / 2.0 + qb * d4 / 8.0;
    let vv = qv * dt + qb * d3 / 3.0;
    let pb = -qb * d3 / 6.0;
    let vb = -qb * d2 / 2.0;
    let bb = qb * dt;
    let mut q = Cov6::zeros();
    for axis in 0..2 {
        let (p, v, b) = (axis, axis + 2, axis + 4);
        q[(p, p)] = pp;
        q[(v, v)] = vv;
        q[(b, b)] = bb;
        q[(p, v)] = pv;
        q[(v, p)] = pv;
        q[(p, b)] = pb;
        q[(b, p)] = pb;
        q[(v, b)] = vb;
        q[(b, v)] = vb;
    }
    q
}

/// INS error dynamics over one step with indicated acceleration `accel`.
pub fn propagate(x: &State6, accel: &Vector2<f64>, dt: f64) -> State6 {
    let mut out = *x;
    for axis in 0..2 {
        let a = accel[axis] - x[axis + 4];
        out[axis] = x[axis] + x[axis + 2] * dt + 0.5 * a * dt * dt;
        out[axis + 2] = x[axis + 2] + a * dt;
    }
    out
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub belief: NavBelief,
    pub regularized: bool,
    /// Largest asymmetry of the covariance before re-symmetrisation.
    pub asymmetry: f64,
}

pub fn ukf_predict_detailed(belief: &NavBelief, accel: &Vector2<f64>, dt: f64, cfg: &UkfConfig) -> Result<Prediction> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let y0 = propagate(&belief.state, accel, dt);
    let zero = Vector2::zeros();
    let t = unscented_transform_incremental(&belief.state, &belief.cov, cfg, y0, |d| propagate(d, &zero, dt))?;
    if t.regularized {
        log::warn!("predict at t={}: covariance regularised before sigma-point generation", belief.time);
    }
    let raw = t.cov + process_noise(dt, cfg.accel_psd, cfg.bias_psd);
    Ok(Prediction {
        asymmetry: linalg::asymmetry(&raw),
        belief: NavBelief { state: t.mean, cov: linalg::symmetrize(&raw), time: belief.time + dt },
        regularized: t.regularized,
    })
}

pub fn ukf_predict(belief: &NavBelief, accel: &Vector2<f64>, dt: f64, cfg: &UkfConfig) -> Result<NavBelief> {
    ukf_predict_detailed(belief, accel, dt, cfg).map(|p| p.belief)
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub belief: NavBelief,
    pub innovation: Vector2<f64>,
    pub nis: f64,
    pub accepted: bool,
    pub asymmetry: f64,
}

/// Position-fix update. A fix that is not accepted, or whose NIS exceeds the
/// configured gate, leaves the belief untouched.
pub fn ukf_update(belief: &NavBelief, fix: &AidingFix, cfg: &UkfConfig) -> Result<UpdateOutcome> {
    let y0 = Vector2::new(belief.state[0], belief.state[1]);
    let t = unscented_transform_incremental(&belief.state, &belief.cov, cfg, y0, |d| Vector2::new(d[0], d[1]))?;
    let s: Matrix2<f64> = linalg::symmetrize(&(t.cov + fix.cov));
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Covariance("singular innovation covariance".into()))?;
    let innovation = fix.position - t.mean;
    let nis = (innovation.transpose() * s_inv * innovation)[(0, 0)];
    let rejected = !fix.accepted || cfg.nis_gate.is_some_and(|g| !(nis <= g));
    if rejected {
        if fix.accepted {
            log::info!("fix at t={} rejected: NIS {nis:.2} above gate", fix.time);
        }
        return Ok(UpdateOutcome { belief: belief.clone(), innovation, nis, accepted: false, asymmetry: 0.0 });
    }
    let gain = t.cross * s_inv;
    let raw = belief.cov - gain * s * gain.transpose();
    Ok(UpdateOutcome {
        asymmetry: linalg::asymmetry(&raw),
        belief: NavBelief { state: belief.state + gain * innovation, cov: linalg::symmetrize(&raw), time: belief.time },
        innovation,
        nis,
        accepted: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix6;

    fn belief() -> NavBelief {
        let state = State6::from_column_slice(&[100.0, -40.0, 22.0, 0.5, 1e-5, -2e-5]);
        let cov = Cov6::from_diagonal(&State6::from_column_slice(&[400.0, 300.0, 0.04, 0.03, 1e-10, 1e-10]));
        NavBelief { state, cov, time: 0.0 }
    }

    fn transition(dt: f64) -> Matrix6<f64> {
        let mut f = Matrix6::identity();
        for a in 0..2 {
            f[(a, a + 2)] = dt;
            f[(a, a + 4)] = -0.5 * dt * dt;
            f[(a + 2, a + 4)] = -dt;
        }
        f
    }

    #[test]
    fn weights_sum_to_one() {
        let cfg = UkfConfig::default();
        let (wm0, _, wi) = cfg.weights();
        assert!((wm0 + 12.0 * wi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_propagation() {
        let mut b = belief();
        b.state[4] = 0.0;
        b.state[5] = 0.0;
        let cfg = UkfConfig { accel_psd: 0.0, bias_psd: 0.0, ..UkfConfig::default() };
        let p = ukf_predict(&b, &Vector2::zeros(), 2.0, &cfg).unwrap();
        assert!((p.state[0] - 144.0).abs() < 1e-9);
        assert!((p.state[1] - (-39.0)).abs() < 1e-9);
        let bias_block = p.cov.fixed_view::<2, 2>(4, 4).into_owned();
        let orig = b.cov.fixed_view::<2, 2>(4, 4).into_owned();
        assert!((bias_block - orig).abs().max() < 1e-20);
        assert_eq!(p.time, 2.0);
    }

    #[test]
    fn predict_matches_linear_kf() {
        let b = belief();
        let cfg = UkfConfig::default();
        let a = Vector2::new(1e-3, -2e-3);
        let p = ukf_predict(&b, &a, 1.0, &cfg).unwrap();
        let f = transition(1.0);
        let mut u = State6::zeros();
        u[0] = 0.5 * a[0];
        u[1] = 0.5 * a[1];
        u[2] = a[0];
        u[3] = a[1];
        let x = f * b.state + u;
        let cov = f * b.cov * f.transpose() + process_noise(1.0, cfg.accel_psd, cfg.bias_psd);
        assert!((p.state - x).norm() <= 1e-10 * x.norm());
        assert!((p.cov - cov).norm() <= 1e-10 * cov.norm());
    }

    #[test]
    fn process_noise_is_psd_and_grows() {
        let q = process_noise(10.0, 1e-8, 1e-12);
        assert!(linalg::is_symmetric_psd(&q, 1e-12));
        let b = belief();
        let cfg = UkfConfig::default();
        let mut cur = b.clone();
        for _ in 0..10 {
            let next = ukf_predict(&cur, &Vector2::zeros(), 1.0, &cfg).unwrap();
            assert!(next.cov.trace() > cur.cov.trace());
            cur = next;
        }
    }

    #[test]
    fn perfect_fix_pins_position() {
        let b = belief();
        let fix = AidingFix::raw(b.position(), Matrix2::identity() * 1e-8, 0.0);
        let out = ukf_update(&b, &fix, &UkfConfig::default()).unwrap();
        assert!(out.accepted);
        assert!((out.belief.position() - fix.position).norm() < 1e-9);
        let diff = fix.cov - out.belief.position_cov();
        assert!(diff.symmetric_eigenvalues().min() >= -1e-12);
    }

    #[test]
    fn uninformative_fix_changes_nothing() {
        let b = belief();
        let fix = AidingFix::raw(b.position() + Vector2::new(50.0, 50.0), Matrix2::identity() * 1e12, 0.0);
        let out = ukf_update(&b, &fix, &UkfConfig::default()).unwrap();
        assert!((out.belief.state - b.state).norm() <= 1e-6 * b.state.norm());
        assert!((out.belief.cov - b.cov).norm() <= 1e-6 * b.cov.norm());
    }

    #[test]
    fn update_matches_linear_kf() {
        let b = belief();
        let cfg = UkfConfig { nis_gate: None, ..UkfConfig::default() };
        let fix = AidingFix::raw(b.position() + Vector2::new(12.0, -7.0), Matrix2::new(50.0, 5.0, 5.0, 80.0), 0.0);
        let out = ukf_update(&b, &fix, &cfg).unwrap();
        let mut h = SMatrix::<f64, 2, 6>::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        let s = h * b.cov * h.transpose() + fix.cov;
        let k = b.cov * h.transpose() * s.try_inverse().unwrap();
        let x = b.state + k * (fix.position - h * b.state);
        let cov = b.cov - k * s * k.transpose();
        assert!((out.belief.state - x).norm() <= 1e-10 * x.norm());
        assert!((out.belief.cov - cov).norm() <= 1e-10 * cov.norm());
        assert!(out.belief.cov.trace() <= b.cov.trace() + 1e-9);
    }

    #[test]
    fn nis_guard_rejects_outliers_bit_identically() {
        let b = belief();
        let fix = AidingFix::raw(b.position() + Vector2::new(5000.0, 0.0), Matrix2::identity(), 0.0);
        let out = ukf_update(&b, &fix, &UkfConfig::default()).unwrap();
        assert!(!out.accepted);
        assert!(out.nis > CHI2_2_999);
        assert_eq!(out.belief, b);
        let open = UkfConfig { nis_gate: None, ..UkfConfig::default() };
        assert!(ukf_update(&b, &fix, &open).unwrap().accepted);
    }

    #[test]
    fn indefinite_covariance_is_regularised() {
        let mut b = belief();
        b.cov[(4, 4)] = 0.0;
        b.cov[(5, 5)] = 0.0;
        let p = ukf_predict_detailed(&b, &Vector2::zeros(), 1.0, &UkfConfig::default()).unwrap();
        assert!(p.regularized);
        b.cov[(0, 0)] = f64::NAN;
        assert!(ukf_predict(&b, &Vector2::zeros(), 1.0, &UkfConfig::default()).is_err());
    }
}
