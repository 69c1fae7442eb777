//! Desk-scale environments, meta-episode execution, experiment sweeps and
//! chart output.

pub mod chart;
pub mod config;
pub mod env;
pub mod episode;
pub mod grid;
pub mod sampler;
pub mod sweep;

pub use chart::{emit_chart, ChartSpec};
pub use config::ExperimentConfig;
pub use env::{wind_step, Env, EnvSpec, PointNavEnv, WindNavEnv};
pub use episode::{
    expected_success_rate, run_meta_episode, run_meta_episode_with, MetaEpisodeResult,
    PopulationOracle,
};
pub use grid::PolarGrid;
pub use sampler::{sample_task, RadialLaw, Task, TaskSampler};
pub use sweep::{run_experiment, SweepOutcome};
