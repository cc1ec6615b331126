//! One simulated run of the aided navigation loop.

use nalgebra::{Matrix2, Vector2};

use super::config::ScenarioConfig;
use super::synth::gen_synthetic_map;
use crate::fusion::{apply_batch, ukf_predict, AidingFix, AidingMode, GateConfig, NavBelief, UkfConfig};
use crate::geomap::{
    feature_variability, load_grid, lookup_candidates, normalize_variability, search_window, CandidateSet, GridMap,
    LookupConfig,
};
use crate::inertial::{sample_gravimeter, simulate_ins_aligned, simulate_truth, Alignment, FieldMeasurement, Trajectory};
use crate::pmht::{retrodict, run_batch, BatchProblem, KinematicModel, PmhtSettings};
use crate::{Error, Result};

/// Diagnostics of one aiding epoch (one batch).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub time: f64,
    /// Smoothed position of the last scan.
    pub fix: Option<Vector2<f64>>,
    pub variability: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub iterations_used: usize,
    pub converged: bool,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    /// Seconds since start, one entry per second after the first.
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    /// Estimated position at each entry of `times`.
    pub positions: Vec<Vector2<f64>>,
    /// Whether at least one fix had been accepted by that time.
    pub aided: Vec<bool>,
    pub epochs: Vec<EpochReport>,
    pub diverged: bool,
    pub terminal_error: f64,
}

impl RunReport {
    /// Sum of estimated position increments.
    pub fn total_variation(&self) -> f64 {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// `true` iff the series stays above `threshold_m` for at least `sustain_s`
/// consecutive one-second samples.
pub fn detect_divergence(series: &[f64], threshold_m: f64, sustain_s: f64) -> bool {
    let need = sustain_s.ceil().max(1.0) as usize;
    let mut run = 0usize;
    for &e in series {
        if e > threshold_m || e.is_nan() {
            run += 1;
            if run >= need {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

pub fn load_map(cfg: &ScenarioConfig) -> Result<GridMap> {
    match (&cfg.map.path, &cfg.map.synthetic) {
        (Some(p), None) => load_grid(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("map {}: {io}", p.display())),
            other => other,
        }),
        (None, Some(s)) => gen_synthetic_map(s),
        _ => Err(Error::Config("map: exactly one of `path` or `synthetic` must be given".into())),
    }
}

/// Everything shared by the runs of one configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub map: GridMap,
    pub truth: Trajectory,
    /// Matching noise: sensor noise and map representation error combined.
    pub sigma_match: f64,
}

impl Scenario {
    pub fn prepare(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let map = load_map(config)?;
        Self::with_map(config, map)
    }

    pub fn with_map(config: &ScenarioConfig, map: GridMap) -> Result<Self> {
        let t = &config.trajectory;
        let truth = simulate_truth(Vector2::from(t.start), Vector2::from(t.velocity), t.duration, t.dt)?;
        if let Some(k) = truth.positions.iter().position(|p| map.value_at(p).is_err()) {
            let p = truth.positions[k];
            return Err(Error::Config(format!(
                "trajectory leaves the map at t = {} s, position ({:.1}, {:.1})",
                truth.times[k], p.x, p.y
            )));
        }
        let map_sigma = config
            .gravimeter
            .map_sigma
            .unwrap_or_else(|| map.rms_gradient() * map.cell_size() / 12f64.sqrt());
        let sigma = config.gravimeter.sigma;
        let sigma_match = (sigma * sigma + map_sigma * map_sigma).sqrt();
        if !(sigma_match > 0.0) {
            return Err(Error::Config("gravimeter: sensor and map noise are both zero; matching needs a positive sigma".into()));
        }
        Ok(Self { config: config.clone(), sigma_match, map, truth })
    }

    fn ukf_config(&self) -> Result<UkfConfig> {
        let accel = self.config.accel_grade()?;
        let f = &self.config.fusion;
        Ok(UkfConfig {
            accel_psd: accel.noise_density * accel.noise_density,
            bias_psd: f.bias_psd,
            nis_gate: (f.nis_gate > 0.0).then_some(f.nis_gate),
            ..UkfConfig::default()
        })
    }

    fn initial_belief(&self, ins: &Trajectory) -> Result<NavBelief> {
        let i = &self.config.ins;
        let cov = NavBelief::diagonal_cov(
            i.initial_position_sigma.max(1.0),
            i.initial_velocity_sigma.max(1e-3),
            self.config.accel_grade()?.bias.max(1e-9),
        );
        Ok(NavBelief::new(ins.positions[0], ins.velocities[0], cov, ins.times[0]))
    }

    fn variability_at(&self, pos: &Vector2<f64>) -> f64 {
        self.map
            .cell_of(pos)
            .and_then(|cell| feature_variability(&self.map, cell, self.config.fusion.template_half_width).ok())
            .unwrap_or(0.0)
    }

    fn scan(&self, belief: &NavBelief, m: &FieldMeasurement) -> Result<CandidateSet> {
        let p = &self.config.pmht;
        let floor = p.window_sigma_floor * p.window_sigma_floor;
        let cov = belief.position_cov() + Matrix2::identity() * floor;
        let window = search_window(belief.position(), cov, p.gamma)
            .map_err(|e| Error::Numerical { iteration: 0, msg: format!("search window at t = {}: {e}", m.time) })?;
        let lookup = LookupConfig { n_max: p.n_max, k_sig: p.k_sig };
        match lookup_candidates(&self.map, m.value, self.sigma_match, &window, &lookup) {
            Ok(set) => Ok(set),
            Err(Error::EmptyWindow) => Ok(CandidateSet::empty(m.value, self.sigma_match, belief.position(), cov)),
            Err(e) => Err(e),
        }
    }

    pub fn run(&self, seed: u64) -> Result<RunReport> {
        let cfg = &self.config;
        let dt = cfg.trajectory.dt;
        let alignment = Alignment {
            position_sigma: cfg.ins.initial_position_sigma,
            velocity_sigma: cfg.ins.initial_velocity_sigma,
            heading_sigma: cfg.ins.initial_heading_sigma,
        };
        let ins = simulate_ins_aligned(&self.truth, cfg.accel_grade()?, cfg.gyro_grade()?, &alignment, seed)?;
        let measurements = if cfg.ins.aiding {
            sample_gravimeter(&self.map, &self.truth, cfg.gravimeter.interval, cfg.gravimeter.sigma, seed)?
        } else {
            Vec::new()
        };
        let ukf = self.ukf_config()?;
        let mode: AidingMode = cfg.aiding_mode()?;
        let gate = GateConfig { threshold: cfg.fusion.variability_threshold, v_floor: cfg.fusion.v_floor };
        let model = KinematicModel::constant_velocity(cfg.gravimeter.interval, cfg.pmht.q_a);
        let settings = PmhtSettings {
            max_iters: cfg.pmht.max_iters,
            epsilon: cfg.pmht.epsilon,
            grad_floor: cfg.pmht.grad_floor,
            spread_cov: cfg.pmht.spread_cov,
        };
        let t_len = cfg.pmht.t;

        let n = self.truth.len();
        let mut belief = self.initial_belief(&ins)?;
        let mut next_meas = measurements.iter().peekable();
        let mut history: Vec<f64> = Vec::new();
        let mut snapshots: Vec<NavBelief> = Vec::with_capacity(t_len);
        let mut scans: Vec<CandidateSet> = Vec::with_capacity(t_len);
        let mut scan_var: Vec<f64> = Vec::with_capacity(t_len);
        let mut batch_start = 0usize;
        let mut aided_yet = false;

        let mut report = RunReport {
            seed,
            times: Vec::with_capacity(n),
            errors: Vec::with_capacity(n),
            positions: Vec::with_capacity(n),
            aided: Vec::with_capacity(n),
            epochs: Vec::new(),
            diverged: false,
            terminal_error: 0.0,
        };

        for k in 0..n {
            let t = self.truth.times[k];
            if k > 0 {
                belief = ukf_predict(&belief, &ins.accelerations[k - 1], dt, &ukf)?;
            }
            if let Some(m) = next_meas.next_if(|m| (m.time - t).abs() < 1e-9 * t.max(1.0)) {
                if scans.is_empty() {
                    batch_start = k;
                }
                scans.push(self.scan(&belief, m)?);
                history.push(self.variability_at(&belief.position()));
                scan_var.push(normalize_variability(&history, cfg.fusion.window_len));
                snapshots.push(belief.clone());

                if scans.len() == t_len {
                    let problem = BatchProblem {
                        priors: BatchProblem::rolled_priors(&snapshots[0].kinematic(), &model, t_len),
                        scans: std::mem::take(&mut scans),
                        model: model.clone(),
                        settings,
                        start_time: snapshots[0].time,
                    };
                    let candidates = problem.scans.iter().map(|s| s.len()).sum();
                    let mut epoch = EpochReport {
                        time: t,
                        fix: None,
                        variability: *scan_var.last().unwrap_or(&0.0),
                        accepted: 0,
                        rejected: 0,
                        iterations_used: 0,
                        converged: false,
                        candidates,
                    };
                    match run_batch(&problem) {
                        Ok(est) => {
                            let fixes: Vec<AidingFix> = retrodict(&est)
                                .iter()
                                .map(|f| AidingFix::from_position_fix(f, scan_var[f.scan], &gate))
                                .collect();
                            let app = apply_batch(&snapshots[0], &fixes, &ins.accelerations[batch_start..], dt, t, mode, &ukf)?;
                            epoch.fix = fixes.last().map(|f| f.position);
                            epoch.accepted = app.applied;
                            epoch.rejected = app.rejected;
                            epoch.iterations_used = est.iterations_used;
                            epoch.converged = est.converged;
                            aided_yet |= app.effective;
                            belief = app.belief;
                        }
                        Err(Error::NoFix) => log::debug!("seed {seed}: batch ending t = {t} had no candidates"),
                        Err(e) => return Err(e),
                    }
                    report.epochs.push(epoch);
                    snapshots.clear();
                    scan_var.clear();
                }
            }
            if k > 0 {
                let err = (belief.position() - self.truth.positions[k]).norm();
                if !err.is_finite() {
                    return Err(Error::Numerical { iteration: 0, msg: format!("non-finite position error at t = {t}") });
                }
                report.times.push(t);
                report.errors.push(err);
                report.positions.push(belief.position());
                report.aided.push(aided_yet);
            }
        }
        report.terminal_error = *report.errors.last().unwrap_or(&0.0);
        report.diverged = detect_divergence(&report.errors, cfg.divergence.error_threshold_m, cfg.divergence.sustain_s);
        Ok(report)
    }

    /// Error series of the INS alone for `seed`.
    pub fn ins_errors(&self, seed: u64) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let alignment = Alignment {
            position_sigma: cfg.ins.initial_position_sigma,
            velocity_sigma: cfg.ins.initial_velocity_sigma,
            heading_sigma: cfg.ins.initial_heading_sigma,
        };
        let ins = simulate_ins_aligned(&self.truth, cfg.accel_grade()?, cfg.gyro_grade()?, &alignment, seed)?;
        Ok(ins.positions.iter().zip(&self.truth.positions).skip(1).map(|(a, b)| (a - b).norm()).collect())
    }
}

pub fn run_scenario(config: &ScenarioConfig, seed: u64) -> Result<RunReport> {
    Scenario::prepare(config)?.run(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_detection() {
        assert!(!detect_divergence(&vec![100.0; 5000], 10_000.0, 600.0));
        let growing: Vec<f64> = (0..5000).map(|t| 5.0 * t as f64).collect();
        assert!(detect_divergence(&growing, 10_000.0, 600.0));
        let mut spike = vec![100.0; 5000];
        spike[1000..1500].iter_mut().for_each(|e| *e = 20_000.0);
        assert!(!detect_divergence(&spike, 10_000.0, 600.0));
        spike[2000..2600].iter_mut().for_each(|e| *e = 20_000.0);
        assert!(detect_divergence(&spike, 10_000.0, 600.0));
    }
}
