//! Protocol orchestration: direct transfer, grounded training, ablations,
//! the static-α sweep, the uncertainty-head comparison, and gap reports.

mod config;
pub mod output;
mod protocol;
mod report;
mod stats;

pub use config::{Algorithm, AlgorithmKind, ExperimentConfig};
pub use protocol::{
    compare_uncertainty_methods, evaluate, run_ablation, run_direct_seed, run_direct_transfer,
    run_grounded_seed, run_protocol, run_seed, run_ugat, sweep_static_alpha, AlphaRow, EpisodeEval,
    Evaluation, ProtocolRun, SeedRun, TrainingRow,
};
pub use report::{summary_table, GapReport, MetricGap, SeedGap};
pub use stats::{compute_gap, mean, population_std, sample_std, Aggregate, METRIC_COUNT};
