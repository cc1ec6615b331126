//! Seeded Monte Carlo campaigns.

use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::scenario::{RunReport, Scenario};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed(RunReport),
    /// Numerical failure; counted as diverged.
    Failed { seed: u64, message: String },
}

impl RunOutcome {
    pub fn seed(&self) -> u64 {
        match self {
            Self::Completed(r) => r.seed,
            Self::Failed { seed, .. } => *seed,
        }
    }

    pub fn report(&self) -> Option<&RunReport> {
        match self {
            Self::Completed(r) => Some(r),
            Self::Failed { .. } => None,
        }
    }

    pub fn diverged(&self) -> bool {
        self.report().is_none_or(|r| r.diverged)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub times: Vec<f64>,
    /// Root mean square error across completed runs.
    pub rms: Vec<f64>,
    pub n_live: Vec<usize>,
    /// Time-and-run average over the aided phase.
    pub mean_error: f64,
    pub divergence_rate: f64,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunOutcome>,
}

impl CampaignReport {
    /// RMS over the time window `[from, to]` of the campaign RMS series.
    pub fn rms_between(&self, from: f64, to: f64) -> f64 {
        let sel: Vec<f64> = self
            .times
            .iter()
            .zip(&self.rms)
            .filter(|(t, _)| **t >= from && **t <= to)
            .map(|(_, r)| r * r)
            .collect();
        (sel.iter().sum::<f64>() / sel.len() as f64).sqrt()
    }

    pub fn max_between(&self, from: f64, to: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.rms)
            .filter(|(t, _)| **t >= from && **t <= to)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max)
    }
}

pub fn run_campaign(config: &ScenarioConfig) -> Result<CampaignReport> {
    run_campaign_with(&Scenario::prepare(config)?, None)
}

/// Run every seed of the campaign on at most `jobs` worker threads
/// (`None`: all cores). Results are combined in seed order.
pub fn run_campaign_with(scenario: &Scenario, jobs: Option<usize>) -> Result<CampaignReport> {
    let cfg = &scenario.config;
    let base = cfg.monte_carlo.base_seed;
    let seeds: Vec<u64> = (0..cfg.monte_carlo.runs as u64).map(|i| base.wrapping_add(i)).collect();
    let run_one = |&seed: &u64| match scenario.run(seed) {
        Ok(r) => RunOutcome::Completed(r),
        Err(e @ Error::Numerical { .. }) | Err(e @ Error::Covariance(_)) => {
            log::warn!("seed {seed}: {e}; counted as diverged");
            RunOutcome::Failed { seed, message: e.to_string() }
        }
        Err(e) => RunOutcome::Failed { seed, message: format!("fatal: {e}") },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Vec<RunOutcome> = pool.install(|| seeds.par_iter().map(run_one).collect());
    if let Some(RunOutcome::Failed { message, .. }) = runs.iter().find(|r| matches!(r, RunOutcome::Failed { message, .. } if message.starts_with("fatal"))) {
        return Err(Error::Config(message.clone()));
    }
    Ok(aggregate(cfg, seeds, runs))
}

fn aggregate(cfg: &ScenarioConfig, seeds: Vec<u64>, runs: Vec<RunOutcome>) -> CampaignReport {
    let steps = (cfg.trajectory.duration / cfg.trajectory.dt).round() as usize;
    let times: Vec<f64> = (1..=steps).map(|k| k as f64 * cfg.trajectory.dt).collect();
    let mut sum_sq = vec![0.0; steps];
    let mut n_live = vec![0usize; steps];
    for r in runs.iter().filter_map(RunOutcome::report) {
        for (k, e) in r.errors.iter().enumerate().take(steps) {
            sum_sq[k] += e * e;
            n_live[k] += 1;
        }
    }
    let rms = sum_sq
        .iter()
        .zip(&n_live)
        .map(|(s, &n)| if n == 0 { f64::NAN } else { (s / n as f64).sqrt() })
        .collect();

    let from = cfg.aided_phase_start();
    let mut total = 0.0;
    let mut count = 0usize;
    for r in runs.iter().filter_map(RunOutcome::report) {
        if r.diverged && !cfg.metrics.include_diverged {
            continue;
        }
        for (t, e) in r.times.iter().zip(&r.errors) {
            if *t >= from {
                total += e;
                count += 1;
            }
        }
    }
    let diverged = runs.iter().filter(|r| r.diverged()).count();
    CampaignReport {
        times,
        rms,
        n_live,
        mean_error: if count == 0 { f64::NAN } else { total / count as f64 },
        divergence_rate: diverged as f64 / runs.len() as f64,
        config_hash: cfg.hash(),
        seeds,
        runs,
    }
}
