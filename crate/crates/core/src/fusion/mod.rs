//! Loosely coupled integration of map-matching fixes into the navigation
//! belief.
//!
//! The belief carries position, velocity and accelerometer bias. It is
//! propagated with the INS-indicated acceleration and corrected with PMHT-MM
//! position fixes whose covariance is inflated where the map is featureless.

mod ukf;

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector, Vector2, Vector4};

use crate::pmht::{KinematicState, PositionFix};
use crate::Result;

pub use ukf::{
    process_noise, propagate, ukf_predict, ukf_predict_detailed, ukf_update, unscented_transform, unscented_transform_incremental, Prediction,
    Transformed, UkfConfig, UpdateOutcome, CHI2_2_999, DEFAULT_ACCEL_PSD, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_BIAS_PSD,
    DEFAULT_KAPPA,
};

pub type State6 = SVector<f64, 6>;
pub type Cov6 = SMatrix<f64, 6, 6>;

/// Lower bound on the normalised variability used when weighting a fix.
pub const DEFAULT_V_FLOOR: f64 = 0.01;
/// Fixes from regions with normalised variability below this are not used.
pub const DEFAULT_GATE_THRESHOLD: f64 = 0.05;

/// `[pE, pN, vE, vN, bE, bN]` with covariance at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct NavBelief {
    pub state: State6,
    pub cov: Cov6,
    pub time: f64,
}

impl NavBelief {
    pub fn new(position: Vector2<f64>, velocity: Vector2<f64>, cov: Cov6, time: f64) -> Self {
        let state = State6::from_column_slice(&[position.x, position.y, velocity.x, velocity.y, 0.0, 0.0]);
        Self { state, cov, time }
    }

    /// Diagonal covariance from per-axis standard deviations.
    pub fn diagonal_cov(position_sigma: f64, velocity_sigma: f64, bias_sigma: f64) -> Cov6 {
        let (p, v, b) = (position_sigma.powi(2), velocity_sigma.powi(2), bias_sigma.powi(2));
        Cov6::from_diagonal(&State6::from_column_slice(&[p, p, v, v, b, b]))
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.state[2], self.state[3])
    }

    pub fn bias(&self) -> Vector2<f64> {
        Vector2::new(self.state[4], self.state[5])
    }

    pub fn position_cov(&self) -> Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// Position/velocity marginal as a kinematic state.
    pub fn kinematic(&self) -> KinematicState {
        let x: Vector4<f64> = self.state.fixed_rows::<4>(0).into_owned();
        let cov: Matrix4<f64> = self.cov.fixed_view::<4, 4>(0, 0).into_owned();
        KinematicState::new(x, cov)
    }
}

/// A position fix ready for the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct AidingFix {
    pub position: Vector2<f64>,
    /// Variability-weighted covariance.
    pub cov: Matrix2<f64>,
    pub time: f64,
    pub variability: f64,
    pub accepted: bool,
}

impl AidingFix {
    /// Fix with full variability and no gating.
    pub fn raw(position: Vector2<f64>, cov: Matrix2<f64>, time: f64) -> Self {
        Self { position, cov, time, variability: 1.0, accepted: true }
    }

    pub fn weighted(position: Vector2<f64>, raw_cov: Matrix2<f64>, time: f64, variability: f64, gate: &GateConfig) -> Self {
        Self {
            position,
            cov: weight_fix_covariance_with(&raw_cov, variability, gate.v_floor),
            time,
            variability,
            accepted: aiding_gate(variability, gate.threshold),
        }
    }

    pub fn from_position_fix(fix: &PositionFix, variability: f64, gate: &GateConfig) -> Self {
        Self::weighted(fix.position, fix.cov, fix.time, variability, gate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    pub threshold: f64,
    pub v_floor: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { threshold: DEFAULT_GATE_THRESHOLD, v_floor: DEFAULT_V_FLOOR }
    }
}

pub fn weight_fix_covariance(raw_cov: &Matrix2<f64>, variability: f64) -> Matrix2<f64> {
    weight_fix_covariance_with(raw_cov, variability, DEFAULT_V_FLOOR)
}

/// `raw_cov / max(variability, v_floor)`.
pub fn weight_fix_covariance_with(raw_cov: &Matrix2<f64>, variability: f64, v_floor: f64) -> Matrix2<f64> {
    raw_cov / variability.max(v_floor)
}

pub fn aiding_gate(variability: f64, threshold: f64) -> bool {
    variability >= threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AidingMode {
    /// Only the last smoothed state of each batch is applied.
    Standard,
    /// Every smoothed state of the batch is applied in time order.
    Retrodiction,
}

impl std::str::FromStr for AidingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Self::Standard),
            "retrodiction" => Ok(Self::Retrodiction),
            other => Err(format!("unknown aiding mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchApplication {
    pub belief: NavBelief,
    pub applied: usize,
    pub rejected: usize,
    /// At least one fix changed the belief.
    pub effective: bool,
    pub nis: Vec<f64>,
}

/// Apply a batch of fixes.
///
/// `start` is the belief at or before the first fix and `accels[k]` the
/// indicated acceleration over `[start.time + k·dt, start.time + (k+1)·dt)`.
/// The belief is re-predicted between fixes and carried on to `end_time`.
pub fn apply_batch(
    start: &NavBelief,
    fixes: &[AidingFix],
    accels: &[Vector2<f64>],
    dt: f64,
    end_time: f64,
    mode: AidingMode,
    cfg: &UkfConfig,
) -> Result<BatchApplication> {
    let chosen: &[AidingFix] = match mode {
        AidingMode::Standard => fixes.last().map(std::slice::from_ref).unwrap_or(&[]),
        AidingMode::Retrodiction => fixes,
    };
    let step_index = |t: f64| ((t - start.time) / dt).round().max(0.0) as usize;
    let mut belief = start.clone();
    let mut k = 0usize;
    let advance = |belief: &mut NavBelief, k: &mut usize, until: usize| -> Result<()> {
        while *k < until {
            let a = accels.get(*k).copied().unwrap_or_else(Vector2::zeros);
            *belief = ukf_predict(belief, &a, dt, cfg)?;
            *k += 1;
        }
        Ok(())
    };
    let mut out = BatchApplication { belief: start.clone(), applied: 0, rejected: 0, effective: false, nis: Vec::new() };
    for fix in chosen {
        advance(&mut belief, &mut k, step_index(fix.time))?;
        let up = ukf_update(&belief, fix, cfg)?;
        out.nis.push(up.nis);
        if up.accepted {
            out.applied += 1;
        } else {
            out.rejected += 1;
        }
        belief = up.belief;
    }
    advance(&mut belief, &mut k, step_index(end_time))?;
    out.effective = out.applied > 0;
    out.belief = belief;
    Ok(out)
}
