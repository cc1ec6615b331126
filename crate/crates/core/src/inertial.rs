//! Ground truth, a planar drifting INS and the gravimeter model.
//!
//! The INS is a planar error model rather than a strapdown mechanisation:
//! the indicated acceleration is the true one rotated by a heading error,
//! plus an accelerometer bias and white noise. Its double integral is the
//! drifting indicated path. The vertical channel is not modelled; the
//! vertical-grade presets are kept for completeness only.

use nalgebra::{Rotation2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geomap::GridMap;
use crate::{Error, Result};

/// Scenario flight height (m).
pub const DEFAULT_HEIGHT: f64 = 100.0;

const DEG_PER_HOUR: f64 = std::f64::consts::PI / 180.0 / 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensorLabel {
    PcHorizontalAccel,
    PcVerticalAccel,
    PcHorizontalGyro,
    PcVerticalGyro,
    QsAccel,
    QsGyro,
}

impl SensorLabel {
    pub fn is_accel(self) -> bool {
        matches!(self, Self::PcHorizontalAccel | Self::PcVerticalAccel | Self::QsAccel)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PcHorizontalAccel => "PC-horizontal-accel",
            Self::PcVerticalAccel => "PC-vertical-accel",
            Self::PcHorizontalGyro => "PC-horizontal-gyro",
            Self::PcVerticalGyro => "PC-vertical-gyro",
            Self::QsAccel => "QS-accel",
            Self::QsGyro => "QS-gyro",
        }
    }
}

/// Bias and white-noise density of one inertial sensor.
///
/// Accelerometers use m/s² and m/s²/√Hz, gyroscopes deg/h and deg/h/√Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorGrade {
    pub label: SensorLabel,
    pub bias: f64,
    pub noise_density: f64,
}

impl SensorGrade {
    pub const PC_HORIZONTAL_ACCEL: Self = Self { label: SensorLabel::PcHorizontalAccel, bias: 2e-6, noise_density: 8e-5 };
    pub const PC_VERTICAL_ACCEL: Self = Self { label: SensorLabel::PcVerticalAccel, bias: 2.5e-8, noise_density: 1.6e-6 };
    pub const PC_HORIZONTAL_GYRO: Self = Self { label: SensorLabel::PcHorizontalGyro, bias: 2e-5, noise_density: 1e-3 };
    pub const PC_VERTICAL_GYRO: Self = Self { label: SensorLabel::PcVerticalGyro, bias: 1e-3, noise_density: 3e-2 };
    pub const QS_ACCEL: Self = Self { label: SensorLabel::QsAccel, bias: 1e-8, noise_density: 3e-8 };
    pub const QS_GYRO: Self = Self { label: SensorLabel::QsGyro, bias: 1e-5, noise_density: 1.2e-4 };

    pub fn presets() -> [Self; 6] {
        [
            Self::PC_HORIZONTAL_ACCEL,
            Self::PC_VERTICAL_ACCEL,
            Self::PC_HORIZONTAL_GYRO,
            Self::PC_VERTICAL_GYRO,
            Self::QS_ACCEL,
            Self::QS_GYRO,
        ]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::presets().into_iter().find(|g| g.label.name().eq_ignore_ascii_case(name))
    }

    /// Same sensor with both error terms zeroed.
    pub fn ideal(label: SensorLabel) -> Self {
        Self { label, bias: 0.0, noise_density: 0.0 }
    }

    pub fn scaled_noise(self, factor: f64) -> Self {
        Self { noise_density: self.noise_density * factor, ..self }
    }
}

/// Accelerometer/gyroscope pairing of a sensor suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSuite {
    pub accel: SensorGrade,
    pub gyro: SensorGrade,
}

impl SensorSuite {
    /// Precision accelerometers and gyroscopes.
    pub const PCAG: Self = Self { accel: SensorGrade::PC_HORIZONTAL_ACCEL, gyro: SensorGrade::PC_HORIZONTAL_GYRO };
    /// Quantum accelerometers with precision gyroscopes.
    pub const QAPCG: Self = Self { accel: SensorGrade::QS_ACCEL, gyro: SensorGrade::PC_HORIZONTAL_GYRO };

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "PCAG" => Some(Self::PCAG),
            "QAPCG" => Some(Self::QAPCG),
            _ => None,
        }
    }
}

/// Initial alignment errors of the INS, as 1σ per axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Alignment {
    pub position_sigma: f64,
    pub velocity_sigma: f64,
    /// Heading (rad).
    pub heading_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vector2<f64>>,
    pub velocities: Vec<Vector2<f64>>,
    /// Acceleration applied over `[t_k, t_k+1)`.
    pub accelerations: Vec<Vector2<f64>>,
    pub height: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        self.times[1] - self.times[0]
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Sum of position increments.
    pub fn path_length(&self) -> f64 {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldMeasurement {
    pub time: f64,
    pub value: f64,
    pub sigma: f64,
}

/// Straight constant-velocity path sampled every `dt` over `duration`.
pub fn simulate_truth(start: Vector2<f64>, velocity: Vector2<f64>, duration: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(duration >= dt) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and duration >= dt, got dt={dt} duration={duration}")));
    }
    let steps = (duration / dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let positions = times.iter().map(|&t| start + velocity * t).collect();
    Ok(Trajectory {
        velocities: vec![velocity; steps + 1],
        accelerations: vec![Vector2::zeros(); steps + 1],
        positions,
        times,
        height: DEFAULT_HEIGHT,
    })
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma.max(0.0)).expect("non-negative sigma")
}

fn normal2(d: &Normal<f64>, r: &mut ChaCha8Rng) -> Vector2<f64> {
    Vector2::new(d.sample(r), d.sample(r))
}

/// INS-indicated path with no alignment error.
pub fn simulate_ins(truth: &Trajectory, accel: SensorGrade, gyro: SensorGrade, seed: u64) -> Result<Trajectory> {
    simulate_ins_aligned(truth, accel, gyro, &Alignment::default(), seed)
}

/// INS-indicated path.
///
/// Bias magnitudes are 1σ of a constant drawn once per run. The heading error
/// starts from the alignment error and integrates gyro bias and noise.
pub fn simulate_ins_aligned(
    truth: &Trajectory,
    accel: SensorGrade,
    gyro: SensorGrade,
    alignment: &Alignment,
    seed: u64,
) -> Result<Trajectory> {
    let n = truth.len();
    if n < 2 {
        return Err(Error::InvalidArgument("truth needs at least 2 samples".into()));
    }
    let dt = truth.dt();
    let rate_sqrt = (1.0 / dt).sqrt();

    let mut r_align = rng(seed, 1);
    let mut r_bias = rng(seed, 2);
    let mut r_accel = rng(seed, 3);
    let mut r_gyro = rng(seed, 4);

    let mut dp = normal2(&normal(alignment.position_sigma), &mut r_align);
    let mut dv = normal2(&normal(alignment.velocity_sigma), &mut r_align);
    let mut psi = normal(alignment.heading_sigma).sample(&mut r_align);

    let b_a = normal2(&normal(accel.bias), &mut r_bias);
    let b_g = normal(gyro.bias * DEG_PER_HOUR).sample(&mut r_bias);
    let accel_noise = normal(accel.noise_density * rate_sqrt);
    let gyro_noise = normal(gyro.noise_density * DEG_PER_HOUR * rate_sqrt);

    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    let mut accelerations = Vec::with_capacity(n);
    for k in 0..n {
        let a_true = truth.accelerations[k];
        let a_ind = Rotation2::new(psi) * a_true + b_a + normal2(&accel_noise, &mut r_accel);
        positions.push(truth.positions[k] + dp);
        velocities.push(truth.velocities[k] + dv);
        accelerations.push(a_ind);
        let da = a_ind - a_true;
        dp += dv * dt + da * (0.5 * dt * dt);
        dv += da * dt;
        psi += (b_g + gyro_noise.sample(&mut r_gyro)) * dt;
    }
    Ok(Trajectory { times: truth.times.clone(), positions, velocities, accelerations, height: truth.height })
}

/// Map value at the true position every `interval` seconds (first sample at
/// `t0 + interval`) plus N(0, σ²) noise.
pub fn sample_gravimeter(map: &GridMap, truth: &Trajectory, interval: f64, sigma: f64, seed: u64) -> Result<Vec<FieldMeasurement>> {
    let dt = truth.dt();
    if !(dt > 0.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("need a sampled truth and sigma >= 0".into()));
    }
    let ratio = interval / dt;
    let step = ratio.round();
    if step < 1.0 || (ratio - step).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!("interval {interval} is not a multiple of dt {dt}")));
    }
    let step = step as usize;
    let noise = normal(sigma);
    let mut r = rng(seed, 7);
    let mut out = Vec::new();
    for k in (step..truth.len()).step_by(step) {
        let time = truth.times[k];
        let clean = map.value_at(&truth.positions[k]).map_err(|e| match e {
            Error::OutOfBounds { .. } | Error::NoData { .. } => Error::OffMapSample { time },
            other => other,
        })?;
        let value = if sigma > 0.0 { clean + noise.sample(&mut r) } else { clean };
        out.push(FieldMeasurement { time, value, sigma });
    }
    Ok(out)
}

/// Signal-to-noise ratio in dB.
pub fn snr_db(signal: f64, sigma: f64) -> f64 {
    20.0 * (signal.abs() / sigma).log10()
}
