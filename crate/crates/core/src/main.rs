use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ope_hardness::calibration::{run_ablation, write_report_instances_csv, write_reports_csv};
use ope_hardness::dataset::LoggedDataset;
use ope_hardness::experiments::{
    active_estimators, emit_report, fit_reward_ensemble, fit_target_policy, generate_logged, load_dataset,
    run_collection_comparison, run_estimators, run_instance_difficulty, run_noise_sweep, summary_from_per_seed,
    target_outcomes, ExperimentConfig, Report, Table,
};
use ope_hardness::ope::{instance_residuals, read_residuals_csv, write_estimates_csv, write_residuals_csv};
use ope_hardness::policies::Policy;
use ope_hardness::uncertainty::{decompose_dataset, read_decomposition_csv, write_decomposition_csv, Ensemble};
use ope_hardness::{Error, Result};

const LOGGED: &str = "logged.csv";
const TARGET: &str = "target_policy.txt";
const ENSEMBLE: &str = "ensemble.txt";
const DECOMPOSITION: &str = "decomposition.csv";
const TARGETS: &str = "targets.csv";

#[derive(Parser)]
#[command(name = "ope-hardness", version, about = "Forecast how hard off-policy evaluation is on a logged dataset")]
struct Cli {
    /// Plain `key = value` experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; single-stage commands also read their inputs from here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the behavior policy and write the logged bandit dataset.
    GenData,
    /// Fit the target policy.
    FitPolicy,
    /// Fit the reward-model ensemble on the logged dataset.
    FitEnsemble,
    /// Decompose ensemble uncertainty at the target policy's actions.
    Decompose,
    /// Run the estimator suite and write per-instance residuals.
    Ope,
    /// Fit hardness predictors on decompositions and residuals.
    Calibrate,
    /// Full per-instance difficulty study across seeds.
    InstanceDifficulty,
    /// Predicted vs realized residuals over the noise levels.
    NoiseSweep,
    /// Uncertainty-guided vs uniform data collection.
    CollectionCompare,
    /// Recompute the summary table from a finished run.
    Report {
        /// Directory holding `per_seed.csv`.
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stage<T>(name: &'static str, seed: u64, r: Result<T>) -> Result<T> {
    r.map_err(Error::at_stage(name, seed))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    if let Command::Report { input } = &cli.command {
        let per_seed = Table::read(input.join("per_seed.csv"))?;
        let out = cli.out.clone().unwrap_or_else(|| input.clone());
        let report = Report {
            tables: vec![summary_from_per_seed(&per_seed)?],
            ..Report::default()
        };
        emit_report(&report, &out)?;
        return Ok(());
    }

    let cfg = load_config(cli)?;
    let out = cfg.out_dir.clone();
    let seed = cfg.seeds[0];
    match &cli.command {
        Command::GenData => {
            prepare_dir(&out)?;
            let data = stage("load", seed, load_dataset(&cfg))?;
            generate_logged(&cfg, &data, seed)?.write_csv(out.join(LOGGED))
        }
        Command::FitPolicy => {
            prepare_dir(&out)?;
            let data = stage("load", seed, load_dataset(&cfg))?;
            stage("target-policy", seed, fit_target_policy(&cfg, &data, cfg.target_noise, seed))?.save(out.join(TARGET))
        }
        Command::FitEnsemble => {
            let data = stage("load", seed, load_dataset(&cfg))?;
            let logged = stage("load", seed, LoggedDataset::read_csv(out.join(LOGGED), data.task()))?;
            let logged = if cfg.estimate_behavior { logged.without_propensities() } else { logged };
            fit_reward_ensemble(&cfg, &logged, seed)?.save(out.join(ENSEMBLE))
        }
        Command::Decompose => {
            let data = stage("load", seed, load_dataset(&cfg))?;
            let target = stage("load", seed, Policy::load(out.join(TARGET)))?;
            let ensemble = stage("load", seed, Ensemble::load(out.join(ENSEMBLE)))?;
            let (actions, truth) = target_outcomes(&data, &target, seed)?;
            let pairs: Vec<_> = (0..data.len()).map(|i| data.context(i)).zip(actions.iter().copied()).collect();
            let decomps = stage("decompose", seed, decompose_dataset(&ensemble, &pairs))?;
            let mut t = Table::new(TARGETS, &["index", "action", "true_value"]);
            for (i, (a, r)) in actions.iter().zip(&truth).enumerate() {
                t.push(vec![i.to_string(), a.to_string(), ope_hardness::artifact::fmt_f64(*r)]);
            }
            t.write(out.join(TARGETS))?;
            write_decomposition_csv(out.join(DECOMPOSITION), &decomps)
        }
        Command::Ope => {
            let data = stage("load", seed, load_dataset(&cfg))?;
            let logged = stage("load", seed, LoggedDataset::read_csv(out.join(LOGGED), data.task()))?;
            let target = stage("load", seed, Policy::load(out.join(TARGET)))?;
            let ensemble = stage("load", seed, Ensemble::load(out.join(ENSEMBLE)))?;
            let (_, truth) = target_outcomes(&data, &target, seed)?;
            let estimates = run_estimators(&cfg, &logged, &target, &ensemble, seed)?;
            write_estimates_csv(out.join("estimates.csv"), &estimates)?;
            for est in &estimates {
                let records = stage("residuals", seed, instance_residuals(est, &truth))?;
                write_residuals_csv(out.join(format!("residuals_{}.csv", est.estimator)), &records)?;
            }
            Ok(())
        }
        Command::Calibrate => {
            let decomps = stage("load", seed, read_decomposition_csv(out.join(DECOMPOSITION)))?;
            let mut reports = Vec::new();
            for e in active_estimators(&cfg) {
                let records = stage("load", seed, read_residuals_csv(out.join(format!("residuals_{e}.csv"))))?;
                let d = records
                    .iter()
                    .map(|r| {
                        decomps
                            .get(r.index)
                            .copied()
                            .ok_or_else(|| Error::Config(format!("residual index {} has no decomposition row", r.index)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let y: Vec<f64> = records.iter().map(|r| r.squared_residual).collect();
                let mut reps = stage(
                    "calibrate",
                    seed,
                    run_ablation(e.as_str(), &d, &y, cfg.holdout_fraction, cfg.bootstrap_rounds, seed),
                )?;
                for rep in &mut reps {
                    for row in &mut rep.per_instance {
                        row.index = records[row.index].index;
                    }
                }
                reports.extend(reps);
            }
            write_reports_csv(out.join("calibration.csv"), &reports)?;
            write_report_instances_csv(out.join("calibration_instances.csv"), &reports)
        }
        Command::InstanceDifficulty => emit_report(&run_instance_difficulty(&cfg)?.report, &out).map(drop),
        Command::NoiseSweep => emit_report(&run_noise_sweep(&cfg)?.report, &out).map(drop),
        Command::CollectionCompare => emit_report(&run_collection_comparison(&cfg)?.report, &out).map(drop),
        Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
