//! Scenario orchestration, Monte Carlo campaigns and their CSV outputs.

mod campaign;
mod config;
mod output;
mod scenario;
mod synth;

pub use campaign::{run_campaign, run_campaign_with, CampaignReport, RunOutcome};
pub use config::{
    BumpParams, DivergenceConfig, FusionConfig, GravimeterConfig, InsConfig, MapSource, MetricsConfig, MonteCarloConfig,
    PmhtConfig, ScenarioConfig, SyntheticMapParams, TrajectoryConfig,
};
pub use output::{format_float, write_campaign};
pub use scenario::{detect_divergence, load_map, run_scenario, EpochReport, RunReport, Scenario};
pub use synth::{equirectangular, gen_synthetic_map, strip_params};
