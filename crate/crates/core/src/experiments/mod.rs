//! End-to-end experiment drivers: configuration, pipelines and report output.

mod config;
mod pipeline;
mod report;

pub use config::{ExperimentConfig, SculptRule, SweepPolicy, DEFAULT_ESTIMATORS, DEFAULT_NOISE_LEVELS};
pub use pipeline::{
    active_estimators, budget_schedule, dataset_name, fit_reward_ensemble, fit_target_policy, generate_logged, load_dataset, run_collection_comparison,
    run_collection_comparison_with, run_instance_difficulty, run_noise_sweep, summarize, summary_from_per_seed,
    summary_table, run_estimators, target_outcomes, CollectionRun, CollectionStep, InstanceDifficultyRun, NoiseSweepRun, SeedDifficulty, Strategy,
    SummaryRow, SweepPoint, TargetEvaluation,
};
pub use report::{emit_report, file_sha256, lines_svg, scatter_svg, Report, Table, MANIFEST};
