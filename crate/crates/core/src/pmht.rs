//! PMHT map-matching batch tracker.
//!
//! Over a batch of `T` scans the tracker alternates
//!
//! 1. an E-step that converts every scan's candidate set into a PDA
//!    pseudo-measurement, weighting candidates by their likelihood around the
//!    one-step prediction from the current iterate, and
//! 2. an M-step that runs a Kalman filter forward from the batch prior and a
//!    fixed-interval smoother backward under a constant-velocity model.
//!
//! The prior is fixed across iterations; only the association changes. With a
//! single candidate per scan the first M-step is therefore already the batch
//! MAP solution and every later iteration reproduces it exactly.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

use crate::assoc::{self, PdaResult};
use crate::geomap::CandidateSet;
use crate::linalg;
use crate::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 15;
/// Convergence tolerance on the per-scan position change (m).
pub const DEFAULT_EPSILON: f64 = 0.1;
/// Acceleration PSD of the constant-velocity model (m²/s³).
pub const DEFAULT_Q_A: f64 = 0.01;
/// Gradient floor in field units per meter.
pub const DEFAULT_GRAD_FLOOR: f64 = 1e-9;

/// Position and velocity `[pE, pN, vE, vN]` with covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    pub x: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl KinematicState {
    pub fn new(x: Vector4<f64>, cov: Matrix4<f64>) -> Self {
        Self { x, cov }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.x[2], self.x[3])
    }

    pub fn position_cov(&self) -> Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.cov.iter()).all(|v| v.is_finite())
    }
}

/// Linear Gaussian model `x_{t+1} = F x_t + w`, `z_t = H x_t + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicModel {
    pub f: Matrix4<f64>,
    pub q: Matrix4<f64>,
    pub h: Matrix2x4<f64>,
    pub dt: f64,
}

impl KinematicModel {
    /// Constant velocity with continuous white-noise acceleration of PSD `q_a`.
    pub fn constant_velocity(dt: f64, q_a: f64) -> Self {
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let (q11, q12, q22) = (q_a * dt.powi(3) / 3.0, q_a * dt * dt / 2.0, q_a * dt);
        #[rustfmt::skip]
        let q = Matrix4::new(
            q11, 0.0, q12, 0.0,
            0.0, q11, 0.0, q12,
            q12, 0.0, q22, 0.0,
            0.0, q12, 0.0, q22,
        );
        #[rustfmt::skip]
        let h = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        );
        Self { f, q, h, dt }
    }

    pub fn predict(&self, s: &KinematicState) -> KinematicState {
        KinematicState {
            x: self.f * s.x,
            cov: linalg::symmetrize(&(self.f * s.cov * self.f.transpose() + self.q)),
        }
    }
}

/// Tuning shared by every batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmhtSettings {
    pub max_iters: usize,
    pub epsilon: f64,
    pub grad_floor: f64,
    /// Add the candidate dispersion to each fused covariance.
    pub spread_cov: bool,
}

impl Default for PmhtSettings {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            epsilon: DEFAULT_EPSILON,
            grad_floor: DEFAULT_GRAD_FLOOR,
            spread_cov: false,
        }
    }
}

/// One batch of `T` scans.
#[derive(Debug, Clone)]
pub struct BatchProblem {
    /// Initial state estimates for every scan. The first one is the batch
    /// prior for the forward pass; all of them seed the first E-step.
    pub priors: Vec<KinematicState>,
    pub scans: Vec<CandidateSet>,
    pub model: KinematicModel,
    pub settings: PmhtSettings,
    /// Time of the first scan; scans are `model.dt` apart.
    pub start_time: f64,
}

impl BatchProblem {
    /// Roll `initial` forward through the model to seed `t` priors.
    pub fn rolled_priors(initial: &KinematicState, model: &KinematicModel, t: usize) -> Vec<KinematicState> {
        let mut out = Vec::with_capacity(t);
        let mut s = initial.clone();
        for _ in 0..t {
            out.push(s.clone());
            s = model.predict(&s);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let t = self.scans.len();
        if t < 2 {
            return Err(Error::InvalidArgument(format!("batch needs at least 2 scans, got {t}")));
        }
        if self.priors.len() != t {
            return Err(Error::InvalidArgument(format!("{t} scans but {} priors", self.priors.len())));
        }
        if self.settings.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.model.dt > 0.0) {
            return Err(Error::InvalidArgument("scan spacing must be positive".into()));
        }
        if let Some(i) = self.priors.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior {i} is not finite")));
        }
        Ok(())
    }

    /// Per-candidate position covariances of scan `t`.
    fn candidate_covs(&self, t: usize) -> Vec<Matrix2<f64>> {
        let set = &self.scans[t];
        set.candidates
            .iter()
            .map(|c| assoc::position_noise_cov(set.sigma, &c.gradient, self.settings.grad_floor))
            .collect()
    }
}

/// Conditions noticed during one EM step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepFlags {
    /// Scans without candidates (prediction only).
    pub skipped_scans: Vec<usize>,
    /// A predicted covariance needed regularisation before inversion.
    pub regularized: bool,
    /// Scans whose weights fell back to uniform.
    pub far_scans: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct EmStep {
    pub states: Vec<KinematicState>,
    pub fused: Vec<Option<PdaResult>>,
    pub flags: StepFlags,
}

struct ForwardPass {
    predicted: Vec<KinematicState>,
    filtered: Vec<KinematicState>,
}

fn kalman_update(pred: &KinematicState, h: &Matrix2x4<f64>, z: &Vector2<f64>, r: &Matrix2<f64>) -> Result<KinematicState> {
    let p = &pred.cov;
    let s = h * p * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Covariance("singular innovation covariance".into()))?;
    let k = p * h.transpose() * s_inv;
    let x = pred.x + k * (z - h * pred.x);
    let cov = linalg::symmetrize(&(p - k * h * p));
    Ok(KinematicState { x, cov })
}

fn forward(problem: &BatchProblem, fused: &[Option<PdaResult>]) -> Result<ForwardPass> {
    let m = &problem.model;
    let t_len = problem.len();
    let mut predicted = Vec::with_capacity(t_len);
    let mut filtered: Vec<KinematicState> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let pred = if t == 0 { problem.priors[0].clone() } else { m.predict(&filtered[t - 1]) };
        let filt = match &fused[t] {
            Some(f) => kalman_update(&pred, &m.h, &f.fused_position, &f.fused_cov)?,
            None => pred.clone(),
        };
        predicted.push(pred);
        filtered.push(filt);
    }
    Ok(ForwardPass { predicted, filtered })
}

fn invert_predicted(p: &Matrix4<f64>, flags: &mut StepFlags) -> Result<Matrix4<f64>> {
    if p.cholesky().is_some() {
        if let Some(inv) = p.try_inverse() {
            return Ok(inv);
        }
    }
    flags.regularized = true;
    let eps = 1e-9 * p.trace().abs().max(1e-12) / 4.0;
    (p + Matrix4::identity() * eps)
        .try_inverse()
        .ok_or_else(|| Error::Covariance("predicted covariance is singular".into()))
}

/// Fixed-interval smoother over a completed forward pass.
fn backward(problem: &BatchProblem, pass: &ForwardPass, flags: &mut StepFlags) -> Result<Vec<KinematicState>> {
    let f = &problem.model.f;
    let t_len = problem.len();
    let mut smoothed = pass.filtered.clone();
    for t in (0..t_len - 1).rev() {
        let filt = &pass.filtered[t];
        let pred_next = &pass.predicted[t + 1];
        let gain = filt.cov * f.transpose() * invert_predicted(&pred_next.cov, flags)?;
        let next = &smoothed[t + 1];
        let x = filt.x + gain * (next.x - f * filt.x);
        let cov = linalg::symmetrize(&(filt.cov + gain * (next.cov - pred_next.cov) * gain.transpose()));
        smoothed[t] = KinematicState { x, cov };
    }
    Ok(smoothed)
}

/// One EM iteration from `current`. `previous` carries the fused
/// pseudo-measurements of the previous iteration, whose covariances serve as
/// the association covariance; on the first iteration the candidate-averaged
/// position noise is used instead.
pub fn em_step(
    problem: &BatchProblem,
    current: &[KinematicState],
    previous: Option<&[Option<PdaResult>]>,
) -> Result<EmStep> {
    let t_len = problem.len();
    if current.len() != t_len {
        return Err(Error::InvalidArgument(format!("{t_len} scans but {} current states", current.len())));
    }
    let m = &problem.model;
    let mut flags = StepFlags::default();
    let mut fused = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let set = &problem.scans[t];
        if set.is_empty() {
            flags.skipped_scans.push(t);
            fused.push(None);
            continue;
        }
        let covs = problem.candidate_covs(t);
        let predicted = if t == 0 { current[0].x } else { m.f * current[t - 1].x };
        let predicted_pos = m.h * predicted;
        let meas_cov = match previous.and_then(|p| p.get(t)).and_then(|r| r.as_ref()) {
            Some(prev) => prev.fused_cov,
            None => covs.iter().sum::<Matrix2<f64>>() / covs.len() as f64,
        };
        let w = assoc::candidate_weights(set, &predicted_pos, &meas_cov)?;
        if w.far_candidates {
            flags.far_scans.push(t);
        }
        let mut res = assoc::pda_fuse(set, &w.weights, &covs, problem.settings.spread_cov)?;
        res.far_candidates = w.far_candidates;
        fused.push(Some(res));
    }
    let pass = forward(problem, &fused)?;
    let states = backward(problem, &pass, &mut flags)?;
    Ok(EmStep { states, fused, flags })
}

/// Result of a complete EM run.
#[derive(Debug, Clone)]
pub struct BatchEstimate {
    pub states: Vec<KinematicState>,
    pub times: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub per_scan_fused: Vec<Option<PdaResult>>,
    pub final_residual: f64,
    /// `‖X⁽ⁱ⁺¹⁾ − X⁽ⁱ⁾‖` after every iteration.
    pub residual_trace: Vec<f64>,
    /// Weighted data-fit cost of the priors followed by that of every
    /// iterate.
    pub cost_trace: Vec<f64>,
    pub flags: StepFlags,
}

/// Largest per-scan position displacement between two iterates.
fn displacement(a: &[KinematicState], b: &[KinematicState]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.position() - y.position()).norm())
        .fold(0.0, f64::max)
}

/// `Σ_t Σ_i w_ti · (z_ti − H x_t)ᵀ R̄_t⁻¹ (z_ti − H x_t)` with the weights
/// re-evaluated at the given states. `fused` supplies R̄_t; scans without a
/// fused result use the candidate-averaged position noise.
pub fn data_fit_cost(problem: &BatchProblem, states: &[KinematicState], fused: Option<&[Option<PdaResult>]>) -> f64 {
    let mut cost = 0.0;
    for (t, (set, state)) in problem.scans.iter().zip(states).enumerate() {
        if set.is_empty() {
            continue;
        }
        let r_bar = match fused.and_then(|f| f.get(t)).and_then(|r| r.as_ref()) {
            Some(res) => res.fused_cov,
            None => {
                let covs = problem.candidate_covs(t);
                covs.iter().sum::<Matrix2<f64>>() / covs.len() as f64
            }
        };
        let pos = state.position();
        let Ok(w) = assoc::candidate_weights(set, &pos, &r_bar) else { continue };
        let Some(inv) = r_bar.try_inverse() else { continue };
        for (z, w) in set.locations().zip(&w.weights) {
            let d = z - pos;
            cost += w * (d.transpose() * inv * d)[(0, 0)];
        }
    }
    cost
}

/// Iterate [`em_step`] until the largest per-scan position change drops to
/// `epsilon` or `max_iters` is reached.
pub fn run_batch(problem: &BatchProblem) -> Result<BatchEstimate> {
    problem.validate()?;
    if problem.scans.iter().all(|s| s.is_empty()) {
        return Err(Error::NoFix);
    }
    let mut current = problem.priors.clone();
    let mut previous: Option<Vec<Option<PdaResult>>> = None;
    let mut residual_trace = Vec::new();
    let mut cost_trace = vec![data_fit_cost(problem, &current, None)];
    let mut flags = StepFlags::default();
    let mut converged = false;

    for iteration in 1..=problem.settings.max_iters {
        let step = em_step(problem, &current, previous.as_deref()).map_err(|e| match e {
            Error::Covariance(msg) => Error::Numerical { iteration, msg },
            other => other,
        })?;
        if let Some(bad) = step.states.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numerical { iteration, msg: format!("non-finite state at scan {bad}") });
        }
        let residual = displacement(&step.states, &current);
        residual_trace.push(residual);
        cost_trace.push(data_fit_cost(problem, &step.states, Some(&step.fused)));
        flags = step.flags;
        current = step.states;
        previous = Some(step.fused);
        if residual <= problem.settings.epsilon {
            converged = true;
            break;
        }
    }

    let t0 = problem.start_time;
    let dt = problem.model.dt;
    Ok(BatchEstimate {
        times: (0..problem.len()).map(|t| t0 + t as f64 * dt).collect(),
        iterations_used: residual_trace.len(),
        final_residual: *residual_trace.last().unwrap_or(&0.0),
        states: current,
        converged,
        per_scan_fused: previous.unwrap_or_default(),
        residual_trace,
        cost_trace,
        flags,
    })
}

/// A smoothed in-batch position offered as an aiding fix.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionFix {
    pub time: f64,
    pub position: Vector2<f64>,
    pub cov: Matrix2<f64>,
    /// Scan index within the batch.
    pub scan: usize,
}

/// Every smoothed state of the batch as a position fix, in time order.
pub fn retrodict(estimate: &BatchEstimate) -> Vec<PositionFix> {
    estimate
        .states
        .iter()
        .zip(&estimate.times)
        .enumerate()
        .map(|(scan, (s, &time))| PositionFix { time, position: s.position(), cov: s.position_cov(), scan })
        .collect()
}
