//! Scenario configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fusion::AidingMode;
use crate::geomap::{DEFAULT_GAMMA, DEFAULT_K_SIG, DEFAULT_N_MAX, DEFAULT_WINDOW_LEN};
use crate::inertial::{SensorGrade, SensorSuite};
use crate::pmht::{DEFAULT_EPSILON, DEFAULT_GRAD_FLOOR, DEFAULT_MAX_ITERS, DEFAULT_Q_A};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub map: MapSource,
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub ins: InsConfig,
    #[serde(default)]
    pub gravimeter: GravimeterConfig,
    #[serde(default)]
    pub pmht: PmhtConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub divergence: DivergenceConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

/// Either a grid file or generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MapSource {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticMapParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticMapParams {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    /// Lower-left corner (m).
    #[serde(default)]
    pub origin: [f64; 2],
    #[serde(default = "default_background")]
    pub background: f64,
    #[serde(default)]
    pub bumps: Vec<BumpParams>,
    /// Standard deviation of the smooth random component (field units).
    #[serde(default)]
    pub noise_scale: f64,
    /// Correlation length of the smooth random component (m).
    #[serde(default = "default_noise_length")]
    pub noise_length: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpParams {
    pub center: [f64; 2],
    pub amplitude: f64,
    /// Gaussian standard deviation (m).
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    #[serde(default)]
    pub start: [f64; 2],
    #[serde(default = "default_velocity")]
    pub velocity: [f64; 2],
    pub duration: f64,
    #[serde(default = "one")]
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsConfig {
    /// `PCAG` or `QAPCG`; overridden per sensor by `accel` / `gyro`.
    #[serde(default = "default_suite")]
    pub suite: String,
    pub accel: Option<String>,
    pub gyro: Option<String>,
    /// Multiplier on both noise densities.
    #[serde(default = "one")]
    pub noise_scale: f64,
    #[serde(default = "default_initial_position_sigma")]
    pub initial_position_sigma: f64,
    #[serde(default = "default_initial_velocity_sigma")]
    pub initial_velocity_sigma: f64,
    #[serde(default)]
    pub initial_heading_sigma: f64,
    /// Map-matching aiding on or off.
    #[serde(default = "yes")]
    pub aiding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravimeterConfig {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_interval")]
    pub interval: f64,
    /// Map representation error (field units) added in quadrature to `sigma`
    /// when matching. Defaults to the RMS map gradient times cell / √12.
    pub map_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmhtConfig {
    #[serde(rename = "T", default = "default_batch")]
    pub t: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_q_a")]
    pub q_a: f64,
    #[serde(default = "default_k_sig")]
    pub k_sig: f64,
    #[serde(default)]
    pub spread_cov: bool,
    #[serde(default = "default_grad_floor")]
    pub grad_floor: f64,
    /// Lower bound on the search-window standard deviation per axis (m).
    #[serde(default)]
    pub window_sigma_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_threshold")]
    pub variability_threshold: f64,
    #[serde(default = "default_window_len")]
    pub window_len: usize,
    #[serde(default = "default_v_floor")]
    pub v_floor: f64,
    /// Half width of the variability template in cells.
    #[serde(default = "default_template")]
    pub template_half_width: usize,
    /// NIS rejection threshold; 0 disables the guard.
    #[serde(default = "default_nis_gate")]
    pub nis_gate: f64,
    #[serde(default = "default_bias_psd")]
    pub bias_psd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceConfig {
    #[serde(default = "default_error_threshold")]
    pub error_threshold_m: f64,
    #[serde(default = "default_sustain")]
    pub sustain_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Start of the averaging window for the mean error (s). Defaults to the
    /// end of the first batch.
    pub aided_phase_start: Option<f64>,
    #[serde(default)]
    pub include_diverged: bool,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_background() -> f64 {
    9.8
}
fn default_noise_length() -> f64 {
    2000.0
}
fn default_velocity() -> [f64; 2] {
    [22.0, 0.0]
}
fn default_suite() -> String {
    "PCAG".into()
}
fn default_initial_position_sigma() -> f64 {
    10.0
}
fn default_initial_velocity_sigma() -> f64 {
    0.15
}
fn default_sigma() -> f64 {
    1e-5
}
fn default_interval() -> f64 {
    10.0
}
fn default_batch() -> usize {
    30
}
fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_n_max() -> usize {
    DEFAULT_N_MAX
}
fn default_q_a() -> f64 {
    DEFAULT_Q_A
}
fn default_k_sig() -> f64 {
    DEFAULT_K_SIG
}
fn default_grad_floor() -> f64 {
    DEFAULT_GRAD_FLOOR
}
fn default_mode() -> String {
    "standard".into()
}
fn default_threshold() -> f64 {
    crate::fusion::DEFAULT_GATE_THRESHOLD
}
fn default_window_len() -> usize {
    DEFAULT_WINDOW_LEN
}
fn default_v_floor() -> f64 {
    crate::fusion::DEFAULT_V_FLOOR
}
fn default_template() -> usize {
    10
}
fn default_nis_gate() -> f64 {
    crate::fusion::CHI2_2_999
}
fn default_bias_psd() -> f64 {
    crate::fusion::DEFAULT_BIAS_PSD
}
fn default_runs() -> usize {
    100
}
fn default_error_threshold() -> f64 {
    10_000.0
}
fn default_sustain() -> f64 {
    600.0
}

macro_rules! default_from_serde {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("all fields have defaults")
            }
        }
    )*};
}
default_from_serde!(InsConfig, GravimeterConfig, PmhtConfig, FusionConfig, MonteCarloConfig, DivergenceConfig);

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a file; a relative map path is resolved against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = &cfg.map.path {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.map.path = Some(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.map.path.is_none() == self.map.synthetic.is_none() {
            return bad("map: exactly one of `path` or `synthetic` must be given".into());
        }
        if let Some(s) = &self.map.synthetic {
            if s.rows < 2 || s.cols < 2 || !(s.cell_size > 0.0) {
                return bad("map.synthetic: need rows, cols >= 2 and cell_size > 0".into());
            }
            if s.bumps.iter().any(|b| !(b.width > 0.0)) {
                return bad("map.synthetic.bumps: width must be positive".into());
            }
            if !(s.noise_length > 0.0) || s.noise_scale < 0.0 {
                return bad("map.synthetic: noise_length must be positive and noise_scale non-negative".into());
            }
        }
        let t = &self.trajectory;
        if !(t.dt > 0.0) || !(t.duration >= t.dt) {
            return bad("trajectory: need dt > 0 and duration >= dt".into());
        }
        self.accel_grade()?;
        self.gyro_grade()?;
        let g = &self.gravimeter;
        if !(g.sigma >= 0.0) || !(g.interval > 0.0) {
            return bad("gravimeter: sigma must be non-negative and interval positive".into());
        }
        if g.map_sigma.is_some_and(|m| !(m >= 0.0)) {
            return bad("gravimeter.map_sigma must be non-negative".into());
        }
        let ratio = g.interval / t.dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad("gravimeter.interval must be a multiple of trajectory.dt".into());
        }
        let p = &self.pmht;
        if p.t < 2 {
            return bad("pmht.T must be at least 2".into());
        }
        if p.max_iters == 0 || p.n_max == 0 {
            return bad("pmht: max_iters and n_max must be at least 1".into());
        }
        if !(p.epsilon > 0.0) || !(p.gamma > 0.0) || !(p.q_a > 0.0) || !(p.k_sig > 0.0) || !(p.grad_floor > 0.0) {
            return bad("pmht: epsilon, gamma, q_a, k_sig and grad_floor must be positive".into());
        }
        self.aiding_mode()?;
        let f = &self.fusion;
        if !(0.0..=1.0).contains(&f.variability_threshold) {
            return bad("fusion.variability_threshold must lie in [0, 1]".into());
        }
        if f.window_len == 0 || !(f.v_floor > 0.0) {
            return bad("fusion: window_len and v_floor must be positive".into());
        }
        if self.monte_carlo.runs == 0 {
            return bad("monte_carlo.runs must be at least 1".into());
        }
        if !(self.divergence.error_threshold_m > 0.0) || !(self.divergence.sustain_s > 0.0) {
            return bad("divergence thresholds must be positive".into());
        }
        Ok(())
    }

    fn suite(&self) -> Result<SensorSuite> {
        SensorSuite::by_name(&self.ins.suite).ok_or_else(|| Error::Config(format!("ins.suite: unknown suite '{}'", self.ins.suite)))
    }

    fn grade(&self, name: &Option<String>, fallback: SensorGrade, accel: bool) -> Result<SensorGrade> {
        let g = match name {
            Some(n) => SensorGrade::by_name(n).ok_or_else(|| Error::Config(format!("ins: unknown sensor grade '{n}'")))?,
            None => fallback,
        };
        if g.label.is_accel() != accel {
            return Err(Error::Config(format!("ins: '{}' is the wrong sensor type", g.label.name())));
        }
        Ok(g.scaled_noise(self.ins.noise_scale))
    }

    pub fn accel_grade(&self) -> Result<SensorGrade> {
        self.grade(&self.ins.accel, self.suite()?.accel, true)
    }

    pub fn gyro_grade(&self) -> Result<SensorGrade> {
        self.grade(&self.ins.gyro, self.suite()?.gyro, false)
    }

    pub fn aiding_mode(&self) -> Result<AidingMode> {
        self.fusion.mode.parse().map_err(|e| Error::Config(format!("fusion.mode: {e}")))
    }

    pub fn aided_phase_start(&self) -> f64 {
        self.metrics.aided_phase_start.unwrap_or(self.pmht.t as f64 * self.gravimeter.interval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[map.synthetic]
rows = 10
cols = 20
cell_size = 100.0

[trajectory]
duration = 600.0
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.pmht.t, 30);
        assert_eq!(c.pmht.max_iters, 15);
        assert_eq!(c.gravimeter.interval, 10.0);
        assert_eq!(c.fusion.window_len, 100);
        assert_eq!(c.divergence.error_threshold_m, 10_000.0);
        assert_eq!(c.accel_grade().unwrap(), SensorGrade::PC_HORIZONTAL_ACCEL);
        assert_eq!(c.aided_phase_start(), 300.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}\n[pmht]\nbatchlen = 3\n");
        let err = ScenarioConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("batchlen"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for extra in ["[pmht]\nT = 1", "[monte_carlo]\nruns = 0", "[fusion]\nmode = \"sideways\"", "[ins]\nsuite = \"XYZ\""] {
            assert!(ScenarioConfig::from_toml(&format!("{MINIMAL}\n{extra}\n")).is_err(), "{extra}");
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ScenarioConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.monte_carlo.base_seed = 5;
        assert_ne!(a.hash(), b.hash());
        let again = ScenarioConfig::from_toml(&a.to_toml()).unwrap();
        assert_eq!(again, a);
    }
}
