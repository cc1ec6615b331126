#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Matrix6, SMatrix, Vector2, Vector4};
use pmht_mm::fusion::{process_noise, AidingFix, NavBelief, State6, UkfConfig};
use pmht_mm::geomap::{Candidate, CandidateSet};
use pmht_mm::pmht::{BatchProblem, KinematicModel, KinematicState, PmhtSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Candidate whose position noise is `sigma²·I` when paired with a set
/// sigma of `sigma` (unit gradient).
pub fn candidate(location: Vector2<f64>, residual: f64) -> Candidate {
    Candidate { location, map_value: 0.0, value_residual: residual, gradient: Vector2::new(1.0, 0.0), cell: (0, 0) }
}

pub fn scan(points: &[Vector2<f64>], sigma: f64) -> CandidateSet {
    let mut s = CandidateSet::empty(0.0, sigma, Vector2::zeros(), Matrix2::identity());
    s.candidates = points.iter().enumerate().map(|(i, &p)| candidate(p, i as f64)).collect();
    s
}

pub struct LinearBatch {
    pub problem: BatchProblem,
    pub truth: Vec<Vector4<f64>>,
    pub sigma: f64,
}

/// Constant-velocity truth with one noisy candidate per scan and a prior
/// offset from the truth.
pub fn single_candidate_batch(seed: u64, t_len: usize) -> LinearBatch {
    let mut r = rng(seed);
    let dt = 10.0;
    let model = KinematicModel::constant_velocity(dt, 0.01);
    let sigma = r.random_range(5.0..60.0);
    let mut x = Vector4::new(r.random_range(-1e4..1e4), r.random_range(-1e4..1e4), r.random_range(-25.0..25.0), r.random_range(-25.0..25.0));
    let n = Normal::new(0.0, 1.0).unwrap();
    let chol_q = model.q.cholesky().unwrap().l();
    let mut truth = Vec::new();
    let mut scans = Vec::new();
    for _ in 0..t_len {
        truth.push(x);
        let z = Vector2::new(x[0] + sigma * n.sample(&mut r), x[1] + sigma * n.sample(&mut r));
        scans.push(scan(&[z], sigma));
        let w = Vector4::from_fn(|_, _| n.sample(&mut r));
        x = model.f * x + chol_q * w;
    }
    let p0 = Matrix4::from_diagonal(&Vector4::new(400.0, 400.0, 1.0, 1.0));
    let x0 = truth[0] + Vector4::new(20.0 * n.sample(&mut r), 20.0 * n.sample(&mut r), n.sample(&mut r), n.sample(&mut r));
    let priors = BatchProblem::rolled_priors(&KinematicState::new(x0, p0), &model, t_len);
    let problem = BatchProblem { priors, scans, model, settings: PmhtSettings::default(), start_time: 0.0 };
    LinearBatch { problem, truth, sigma }
}

fn add_block(j: &mut DMatrix<f64>, r0: usize, c0: usize, m: &Matrix4<f64>) {
    for r in 0..4 {
        for c in 0..4 {
            j[(r0 + r, c0 + c)] += m[(r, c)];
        }
    }
}

fn add_rows(b: &mut DVector<f64>, r0: usize, v: &Vector4<f64>) {
    for r in 0..4 {
        b[r0 + r] += v[r];
    }
}

/// Batch MAP estimate by solving the stacked normal equations, with the
/// marginal covariances of every scan.
pub fn normal_equations(problem: &BatchProblem, meas_cov: &[Matrix2<f64>]) -> (Vec<Vector4<f64>>, Vec<Matrix4<f64>>) {
    let t_len = problem.scans.len();
    let n = 4 * t_len;
    let mut j = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let m = &problem.model;
    let p0_inv = problem.priors[0].cov.try_inverse().unwrap();
    add_block(&mut j, 0, 0, &p0_inv);
    add_rows(&mut b, 0, &(p0_inv * problem.priors[0].x));
    let q_inv = m.q.try_inverse().unwrap();
    let ftq = m.f.transpose() * q_inv;
    for t in 0..t_len - 1 {
        let (a, c) = (4 * t, 4 * (t + 1));
        add_block(&mut j, a, a, &(ftq * m.f));
        add_block(&mut j, a, c, &(-ftq));
        add_block(&mut j, c, a, &(-(q_inv * m.f)));
        add_block(&mut j, c, c, &q_inv);
    }
    for (t, (set, r)) in problem.scans.iter().zip(meas_cov).enumerate() {
        if set.is_empty() {
            continue;
        }
        let z = set.candidates[0].location;
        let r_inv = r.try_inverse().unwrap();
        add_block(&mut j, 4 * t, 4 * t, &(m.h.transpose() * r_inv * m.h));
        add_rows(&mut b, 4 * t, &(m.h.transpose() * r_inv * z));
    }
    let chol = j.cholesky().expect("information matrix PD");
    let x = chol.solve(&b);
    let cov = chol.inverse();
    let states = (0..t_len).map(|t| Vector4::from_fn(|r, _| x[4 * t + r])).collect();
    let covs = (0..t_len).map(|t| Matrix4::from_fn(|r, c| cov[(4 * t + r, 4 * t + c)])).collect();
    (states, covs)
}

/// Maximum entrywise relative difference between two stacked state lists.
pub fn rel_err(a: &[Vector4<f64>], b: &[Vector4<f64>]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_squared()).sum::<f64>().sqrt();
    num / den
}

/// Prior offset by `offset` from a constant-velocity truth, `n_cand`
/// candidates per scan scattered with standard deviation `spread`.
pub fn cluster_batch(seed: u64, t_len: usize, spread: f64, n_cand: usize, offset: f64) -> (BatchProblem, Vec<Vector4<f64>>) {
    let mut r = rng(seed);
    let model = KinematicModel::constant_velocity(10.0, 0.01);
    let v = Vector2::new(r.random_range(-25.0..25.0), r.random_range(-25.0..25.0));
    let n = Normal::new(0.0, 1.0).unwrap();
    let truth: Vec<Vector4<f64>> = (0..t_len)
        .map(|t| Vector4::new(v.x * 10.0 * t as f64, v.y * 10.0 * t as f64, v.x, v.y))
        .collect();
    let scans = truth
        .iter()
        .map(|x| {
            let pts: Vec<_> =
                (0..n_cand).map(|_| Vector2::new(x[0] + spread * n.sample(&mut r), x[1] + spread * n.sample(&mut r))).collect();
            scan(&pts, 20.0)
        })
        .collect();
    let x0 = truth[0] + Vector4::new(offset, -offset, 0.0, 0.0);
    let p0 = Matrix4::from_diagonal(&Vector4::new(offset * offset + 100.0, offset * offset + 100.0, 1.0, 1.0));
    let priors = BatchProblem::rolled_priors(&KinematicState::new(x0, p0), &model, t_len);
    (BatchProblem { priors, scans, model, settings: PmhtSettings::default(), start_time: 0.0 }, truth)
}

/// Linearised INS error transition over `dt`.
pub fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for a in 0..2 {
        f[(a, a + 2)] = dt;
        f[(a, a + 4)] = -0.5 * dt * dt;
        f[(a + 2, a + 4)] = -dt;
    }
    f
}

pub fn h() -> SMatrix<f64, 2, 6> {
    let mut h = SMatrix::<f64, 2, 6>::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    h
}

/// Closed-form KF oracle for the UKF steps.
pub fn kf_predict(b: &NavBelief, a: &Vector2<f64>, dt: f64, cfg: &UkfConfig) -> NavBelief {
    let f = transition(dt);
    let mut u = State6::zeros();
    for i in 0..2 {
        u[i] = 0.5 * a[i] * dt * dt;
        u[i + 2] = a[i] * dt;
    }
    NavBelief {
        state: f * b.state + u,
        cov: f * b.cov * f.transpose() + process_noise(dt, cfg.accel_psd, cfg.bias_psd),
        time: b.time + dt,
    }
}

pub fn kf_update(b: &NavBelief, fix: &AidingFix) -> NavBelief {
    let h = h();
    let s = h * b.cov * h.transpose() + fix.cov;
    let k = b.cov * h.transpose() * s.try_inverse().unwrap();
    NavBelief { state: b.state + k * (fix.position - h * b.state), cov: b.cov - k * s * k.transpose(), time: b.time }
}

pub fn rel_belief(a: &NavBelief, b: &NavBelief) -> (f64, f64) {
    ((a.state - b.state).norm() / b.state.norm(), (a.cov - b.cov).norm() / b.cov.norm())
}

pub fn random_belief(r: &mut impl Rng) -> NavBelief {
    let p = Vector2::new(r.random_range(-5e3..5e3), r.random_range(-5e3..5e3));
    let v = Vector2::new(r.random_range(-25.0..25.0), r.random_range(-25.0..25.0));
    let mut b = NavBelief::new(p, v, NavBelief::diagonal_cov(r.random_range(5.0..200.0), r.random_range(0.01..0.5), 1e-5), 0.0);
    b.state[4] = r.random_range(-1e-5..1e-5);
    b.state[5] = r.random_range(-1e-5..1e-5);
    b.cov[(0, 2)] = 0.3 * (b.cov[(0, 0)] * b.cov[(2, 2)]).sqrt();
    b.cov[(2, 0)] = b.cov[(0, 2)];
    b
}
