use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{ExperimentConfig, SweepPolicy};
use super::report::{lines_svg, scatter_svg, Report, Table};
use crate::artifact::fmt_f64;
use crate::calibration::{run_ablation, FeatureMode, HardnessReport};
use crate::dataset::{
    load_supervised_csv, make_logged_dataset, sculpt_indices, Action, LoggedDataset, SupervisedDataset, Task,
};
use crate::error::{Error, Result};
use crate::ope::{
    estimate_behavior_policy_with, instance_residuals, mse_residual, run_estimator, sample_actions, Estimator, OpeEstimate,
    OpeInputs, ResidualRecord,
};
use crate::policies::{fit_linear_policy, fit_mlp_policy, mlp_policy_spec, Policy};
use crate::reward_model::RewardHead;
use crate::rng::{self, derive_seed};
use crate::uncertainty::{decompose_dataset, fit_ensemble, Ensemble, UncertaintyDecomposition};

fn at<T>(stage: &'static str, seed: u64, r: Result<T>) -> Result<T> {
    r.map_err(Error::at_stage(stage, seed))
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<SupervisedDataset> {
    load_supervised_csv(&cfg.dataset, cfg.task)
}

pub fn dataset_name(cfg: &ExperimentConfig) -> String {
    cfg.dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Estimators that apply to the task; the replay method needs discrete actions.
pub fn active_estimators(cfg: &ExperimentConfig) -> Vec<Estimator> {
    cfg.estimators
        .iter()
        .copied()
        .filter(|e| !(*e == Estimator::Rm && cfg.task == crate::dataset::TaskKind::Regression))
        .collect()
}

fn reward_head(cfg: &ExperimentConfig, task: Task) -> RewardHead {
    match task {
        Task::Classification { .. } => RewardHead::Bernoulli,
        Task::Regression => RewardHead::Mdn {
            components: cfg.components,
        },
    }
}

pub fn fit_target_policy(cfg: &ExperimentConfig, data: &SupervisedDataset, noise: f64, seed: u64) -> Result<Policy> {
    let spec = mlp_policy_spec(data, &cfg.target_hidden, derive_seed(seed, "target-init", 0))?;
    fit_mlp_policy(data, noise, spec, &cfg.target_train, derive_seed(seed, "target", 0))
}

/// Logged data as the estimators see it plus, when propensities are hidden,
/// the behavior policy estimated from it.
pub struct LoggedView {
    pub logged: LoggedDataset,
    pub behavior_hat: Option<Policy>,
}

fn logged_view(cfg: &ExperimentConfig, full: &LoggedDataset, seed: u64) -> Result<LoggedView> {
    if cfg.estimate_behavior {
        let logged = full.without_propensities();
        let needs = cfg.estimators.iter().any(|e| e.needs_propensities());
        let behavior_hat = if needs {
            Some(estimate_behavior_policy_with(&logged, &cfg.behavior_fit, seed)?)
        } else {
            None
        };
        Ok(LoggedView { logged, behavior_hat })
    } else {
        Ok(LoggedView {
            logged: full.clone(),
            behavior_hat: None,
        })
    }
}

/// Target-policy outcomes on every row: the drawn action, its ground-truth
/// reward, the decomposition at that pair and each estimator's residuals.
#[derive(Debug, Clone)]
pub struct TargetEvaluation {
    pub actions: Vec<Action>,
    pub truth: Vec<f64>,
    pub decomps: Vec<UncertaintyDecomposition>,
    pub estimates: Vec<OpeEstimate>,
    pub residuals: Vec<Vec<ResidualRecord>>,
}

impl TargetEvaluation {
    pub fn residuals_for(&self, e: Estimator) -> Option<&[ResidualRecord]> {
        self.estimates
            .iter()
            .position(|x| x.estimator == e)
            .map(|i| self.residuals[i].as_slice())
    }
}

/// Target actions for every row and their ground-truth rewards.
pub fn target_outcomes(data: &SupervisedDataset, target: &Policy, seed: u64) -> Result<(Vec<Action>, Vec<f64>)> {
    let contexts: Vec<&[f64]> = (0..data.len()).map(|i| data.context(i)).collect();
    let actions = at("target-actions", seed, sample_actions(target, &contexts, derive_seed(seed, "target-actions", 0)))?;
    let truth = at(
        "ground-truth",
        seed,
        actions.iter().enumerate().map(|(i, a)| data.reward(i, a)).collect::<Result<Vec<_>>>(),
    )?;
    Ok((actions, truth))
}

/// Fit the behavior policy on `data` and log one action per row.
pub fn generate_logged(cfg: &ExperimentConfig, data: &SupervisedDataset, seed: u64) -> Result<LoggedDataset> {
    let behavior = at(
        "behavior-policy",
        seed,
        fit_linear_policy(data, cfg.behavior_noise, derive_seed(seed, "behavior", 0)),
    )?;
    at("logging", seed, make_logged_dataset(data, &behavior, derive_seed(seed, "logging", 0)))
}

pub fn fit_reward_ensemble(cfg: &ExperimentConfig, logged: &LoggedDataset, seed: u64) -> Result<Ensemble> {
    at(
        "ensemble",
        seed,
        fit_ensemble(logged, reward_head(cfg, logged.task()), cfg.members, &cfg.reward_model, derive_seed(seed, "ensemble", 0)),
    )
}

/// Run every applicable estimator on `logged`, estimating the behavior
/// policy first when the configuration asks for it.
pub fn run_estimators(cfg: &ExperimentConfig, logged: &LoggedDataset, target: &Policy, ensemble: &Ensemble, seed: u64) -> Result<Vec<OpeEstimate>> {
    let view = at("behavior-estimate", seed, logged_view(cfg, logged, derive_seed(seed, "behavior-estimate", 0)))?;
    estimates_for(cfg, &view, ensemble, target, &active_estimators(cfg), seed)
}

fn estimates_for(
    cfg: &ExperimentConfig,
    view: &LoggedView,
    ensemble: &Ensemble,
    target: &Policy,
    estimators: &[Estimator],
    seed: u64,
) -> Result<Vec<OpeEstimate>> {
    let inputs = OpeInputs {
        data: &view.logged,
        target,
        behavior: view.behavior_hat.as_ref(),
        model: Some(ensemble),
        config: cfg.estimator_config,
        seed: derive_seed(seed, "estimators", 0),
    };
    estimators.iter().map(|&e| at("ope", seed, run_estimator(e, &inputs))).collect()
}

fn evaluate_target(
    cfg: &ExperimentConfig,
    data: &SupervisedDataset,
    view: &LoggedView,
    ensemble: &Ensemble,
    target: &Policy,
    estimators: &[Estimator],
    seed: u64,
) -> Result<TargetEvaluation> {
    let (actions, truth) = target_outcomes(data, target, seed)?;
    let pairs: Vec<(&[f64], Action)> = (0..data.len()).map(|i| data.context(i)).zip(actions.iter().copied()).collect();
    let decomps = at("decompose", seed, decompose_dataset(ensemble, &pairs))?;
    let estimates = estimates_for(cfg, view, ensemble, target, estimators, seed)?;
    let residuals = estimates
        .iter()
        .map(|est| at("residuals", seed, instance_residuals(est, &truth)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TargetEvaluation {
        actions,
        truth,
        decomps,
        estimates,
        residuals,
    })
}

/// Ablation reports for one estimator, restricted to the rows it kept.
fn ablate(cfg: &ExperimentConfig, est: Estimator, eval: &TargetEvaluation, records: &[ResidualRecord], seed: u64) -> Result<Vec<HardnessReport>> {
    let d: Vec<UncertaintyDecomposition> = records.iter().map(|r| eval.decomps[r.index]).collect();
    let y: Vec<f64> = records.iter().map(|r| r.squared_residual).collect();
    let mut reports = at(
        "calibrate",
        seed,
        run_ablation(
            est.as_str(),
            &d,
            &y,
            cfg.holdout_fraction,
            cfg.bootstrap_rounds,
            derive_seed(seed, "calibration", 0),
        ),
    )?;
    for rep in &mut reports {
        for row in &mut rep.per_instance {
            row.index = records[row.index].index;
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone)]
pub struct SeedDifficulty {
    pub seed: u64,
    pub evaluation: TargetEvaluation,
    pub reports: Vec<HardnessReport>,
}

impl SeedDifficulty {
    pub fn r(&self, estimator: Estimator, mode: FeatureMode) -> Option<f64> {
        self.reports
            .iter()
            .find(|r| r.estimator == estimator.as_str() && r.mode == mode)
            .map(|r| r.pearson_r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: String,
    pub mode: FeatureMode,
    pub mean_r: f64,
    pub std_r: f64,
}

#[derive(Debug, Clone)]
pub struct InstanceDifficultyRun {
    pub dataset: String,
    pub seeds: Vec<SeedDifficulty>,
    pub summary: Vec<SummaryRow>,
    pub report: Report,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

fn difficulty_seed(cfg: &ExperimentConfig, data: &SupervisedDataset, seed: u64) -> Result<SeedDifficulty> {
    let full = generate_logged(cfg, data, seed)?;
    let view = at("behavior-estimate", seed, logged_view(cfg, &full, derive_seed(seed, "behavior-estimate", 0)))?;
    let target = at("target-policy", seed, fit_target_policy(cfg, data, cfg.target_noise, seed))?;
    let ensemble = fit_reward_ensemble(cfg, &view.logged, seed)?;
    let estimators = active_estimators(cfg);
    let evaluation = evaluate_target(cfg, data, &view, &ensemble, &target, &estimators, seed)?;
    let mut reports = Vec::new();
    for (k, &e) in estimators.iter().enumerate() {
        reports.extend(ablate(cfg, e, &evaluation, &evaluation.residuals[k], seed)?);
    }
    Ok(SeedDifficulty {
        seed,
        evaluation,
        reports,
    })
}

/// Per-(estimator, mode) mean and sample standard deviation of `r` over seeds.
pub fn summarize(seeds: &[SeedDifficulty]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    let Some(first) = seeds.first() else { return out };
    for rep in &first.reports {
        let rs: Vec<f64> = seeds
            .iter()
            .filter_map(|s| {
                s.reports
                    .iter()
                    .find(|r| r.estimator == rep.estimator && r.mode == rep.mode)
                    .map(|r| r.pearson_r)
            })
            .collect();
        let (mean_r, std_r) = mean_std(&rs);
        out.push(SummaryRow {
            estimator: rep.estimator.clone(),
            mode: rep.mode,
            mean_r,
            std_r,
        });
    }
    out
}

pub fn summary_table(dataset: &str, rows: &[SummaryRow]) -> Table {
    let mut t = Table::new("summary.csv", &["dataset", "estimator", "mode", "mean_r", "std_r"]);
    for r in rows {
        t.push(vec![
            dataset.to_string(),
            r.estimator.clone(),
            r.mode.to_string(),
            fmt_f64(r.mean_r),
            fmt_f64(r.std_r),
        ]);
    }
    t
}

/// Rebuild the summary table from a per-seed table written by a previous run.
pub fn summary_from_per_seed(per_seed: &Table) -> Result<Table> {
    let col = |n: &str| per_seed.column(n).ok_or_else(|| Error::Config(format!("per-seed table lacks `{n}`")));
    let (cd, ce, cm, cr) = (col("dataset")?, col("estimator")?, col("mode")?, col("pearson_r")?);
    let mut groups: Vec<((String, String, String), Vec<f64>)> = Vec::new();
    for (i, row) in per_seed.rows.iter().enumerate() {
        let key = (row[cd].clone(), row[ce].clone(), row[cm].clone());
        let r: f64 = row[cr].parse().map_err(|_| Error::Parse {
            row: i + 1,
            column: "pearson_r".into(),
            message: format!("`{}` is not a number", row[cr]),
        })?;
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut t = Table::new("summary.csv", &["dataset", "estimator", "mode", "mean_r", "std_r"]);
    for ((d, e, m), v) in groups {
        let (mean, std) = mean_std(&v);
        t.push(vec![d, e, m, fmt_f64(mean), fmt_f64(std)]);
    }
    Ok(t)
}

pub fn run_instance_difficulty(cfg: &ExperimentConfig) -> Result<InstanceDifficultyRun> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let dataset = dataset_name(cfg);
    let seeds = cfg
        .seeds
        .par_iter()
        .map(|&s| difficulty_seed(cfg, &data, s))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&seeds);

    let mut per_seed = Table::new(
        "per_seed.csv",
        &[
            "dataset",
            "seed",
            "estimator",
            "mode",
            "pearson_r",
            "mean_round_r",
            "feature_r",
            "degenerate",
            "n_eval",
            "bootstrap_rounds",
        ],
    );
    let mut instances = Table::new(
        "instances.csv",
        &[
            "seed",
            "index",
            "target_action",
            "true_value",
            "v_ep",
            "v_al",
            "v_total",
            "estimator",
            "estimated",
            "squared_residual",
        ],
    );
    let mut hardness = Table::new(
        "hardness.csv",
        &[
            "seed",
            "estimator",
            "mode",
            "index",
            "v_ep",
            "v_al",
            "predicted_residual",
            "realized_residual",
        ],
    );
    for s in &seeds {
        for r in &s.reports {
            per_seed.push(vec![
                dataset.clone(),
                s.seed.to_string(),
                r.estimator.clone(),
                r.mode.to_string(),
                fmt_f64(r.pearson_r),
                fmt_f64(r.mean_round_r),
                r.feature_r.map(fmt_f64).unwrap_or_default(),
                r.degenerate.to_string(),
                r.n_eval().to_string(),
                r.bootstrap_rounds.to_string(),
            ]);
            for row in &r.per_instance {
                hardness.push(vec![
                    s.seed.to_string(),
                    r.estimator.clone(),
                    r.mode.to_string(),
                    row.index.to_string(),
                    fmt_f64(row.v_ep),
                    fmt_f64(row.v_al),
                    fmt_f64(row.predicted_residual),
                    fmt_f64(row.realized_residual),
                ]);
            }
        }
        let ev = &s.evaluation;
        for (k, est) in ev.estimates.iter().enumerate() {
            for rec in &ev.residuals[k] {
                let d = ev.decomps[rec.index];
                instances.push(vec![
                    s.seed.to_string(),
                    rec.index.to_string(),
                    ev.actions[rec.index].to_string(),
                    fmt_f64(rec.truth),
                    fmt_f64(d.v_ep),
                    fmt_f64(d.v_al),
                    fmt_f64(d.v_total),
                    est.estimator.to_string(),
                    fmt_f64(rec.estimated),
                    fmt_f64(rec.squared_residual),
                ]);
            }
        }
    }

    let mut plots = Vec::new();
    if let Some(s) = seeds.first() {
        let ev = &s.evaluation;
        if let Some(recs) = ev.residuals_for(Estimator::Dm).or(ev.residuals.first().map(Vec::as_slice)) {
            let ep: Vec<(f64, f64)> = recs.iter().map(|r| (ev.decomps[r.index].v_ep, r.squared_residual)).collect();
            let al: Vec<(f64, f64)> = recs.iter().map(|r| (ev.decomps[r.index].v_al, r.squared_residual)).collect();
            plots.push((
                "scatter_v_ep.svg".to_string(),
                scatter_svg(&format!("{dataset}: epistemic vs residual (seed {})", s.seed), "v_ep", "squared residual", &ep),
            ));
            plots.push((
                "scatter_v_al.svg".to_string(),
                scatter_svg(&format!("{dataset}: aleatoric vs residual (seed {})", s.seed), "v_al", "squared residual", &al),
            ));
        }
    }

    let report = Report {
        config_text: Some(cfg.to_text()),
        seeds: cfg.seeds.clone(),
        tables: vec![summary_table(&dataset, &summary), per_seed, hardness, instances],
        plots,
    };
    Ok(InstanceDifficultyRun {
        dataset,
        seeds,
        summary,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub seed: u64,
    pub noise: f64,
    pub estimator: Estimator,
    pub predicted_mean_residual: f64,
    pub realized_mean_residual: f64,
    pub mean_v_ep: f64,
    pub mean_v_al: f64,
}

#[derive(Debug, Clone)]
pub struct NoiseSweepRun {
    pub dataset: String,
    pub points: Vec<SweepPoint>,
    pub report: Report,
}

fn sweep_seed(cfg: &ExperimentConfig, data: &SupervisedDataset, seed: u64) -> Result<Vec<SweepPoint>> {
    let estimators = active_estimators(cfg);
    let setup = |behavior_noise: f64| -> Result<(LoggedView, Ensemble)> {
        let mut c = cfg.clone();
        c.behavior_noise = behavior_noise;
        let full = generate_logged(&c, data, seed)?;
        let view = at("behavior-estimate", seed, logged_view(cfg, &full, derive_seed(seed, "behavior-estimate", 0)))?;
        let ens = fit_reward_ensemble(cfg, &view.logged, seed)?;
        Ok((view, ens))
    };
    let shared = match cfg.sweep_policy {
        SweepPolicy::Target => Some(setup(cfg.behavior_noise)?),
        SweepPolicy::Behavior => None,
    };
    let fixed_target = match cfg.sweep_policy {
        SweepPolicy::Behavior => Some(at("target-policy", seed, fit_target_policy(cfg, data, cfg.target_noise, seed))?),
        SweepPolicy::Target => None,
    };
    let mut points = Vec::new();
    for &noise in &cfg.noise_levels {
        let own;
        let (view, ens) = match &shared {
            Some((v, e)) => (v, e),
            None => {
                own = setup(noise)?;
                (&own.0, &own.1)
            }
        };
        let own_target;
        let target = match &fixed_target {
            Some(t) => t,
            None => {
                own_target = at("target-policy", seed, fit_target_policy(cfg, data, noise, seed))?;
                &own_target
            }
        };
        let ev = evaluate_target(cfg, data, view, ens, target, &estimators, seed)?;
        for (k, &e) in estimators.iter().enumerate() {
            let reports = ablate(cfg, e, &ev, &ev.residuals[k], seed)?;
            let both = reports
                .iter()
                .find(|r| r.mode == FeatureMode::Both)
                .ok_or_else(|| Error::invalid("missing calibration report"))?;
            let n = both.per_instance.len() as f64;
            let h_pred: f64 = both.per_instance.iter().map(|r| r.predicted_residual.max(0.0)).sum::<f64>() / n;
            let realized: f64 = both.per_instance.iter().map(|r| r.realized_residual).sum::<f64>() / n;
            let m = ev.decomps.len() as f64;
            points.push(SweepPoint {
                seed,
                noise,
                estimator: e,
                predicted_mean_residual: h_pred,
                realized_mean_residual: realized,
                mean_v_ep: ev.decomps.iter().map(|d| d.v_ep).sum::<f64>() / m,
                mean_v_al: ev.decomps.iter().map(|d| d.v_al).sum::<f64>() / m,
            });
        }
    }
    Ok(points)
}

pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<NoiseSweepRun> {
    cfg.validate()?;
    if cfg.noise_levels.is_empty() {
        return Err(Error::Config("noise level list is empty".into()));
    }
    let data = load_dataset(cfg)?;
    let dataset = dataset_name(cfg);
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&s| sweep_seed(cfg, &data, s))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<SweepPoint> = per_seed.into_iter().flatten().collect();

    let mut t = Table::new(
        "noise_sweep.csv",
        &[
            "dataset",
            "seed",
            "noise",
            "estimator",
            "predicted_mean_residual",
            "realized_mean_residual",
            "mean_v_ep",
            "mean_v_al",
        ],
    );
    for p in &points {
        t.push(vec![
            dataset.clone(),
            p.seed.to_string(),
            fmt_f64(p.noise),
            p.estimator.to_string(),
            fmt_f64(p.predicted_mean_residual),
            fmt_f64(p.realized_mean_residual),
            fmt_f64(p.mean_v_ep),
            fmt_f64(p.mean_v_al),
        ]);
    }
    let mut fit = Table::new("noise_sweep_fit.csv", &["dataset", "seed", "estimator", "pearson_r"]);
    let estimators = active_estimators(cfg);
    for &s in &cfg.seeds {
        for &e in &estimators {
            let sel: Vec<&SweepPoint> = points.iter().filter(|p| p.seed == s && p.estimator == e).collect();
            let a: Vec<f64> = sel.iter().map(|p| p.predicted_mean_residual).collect();
            let b: Vec<f64> = sel.iter().map(|p| p.realized_mean_residual).collect();
            let r = crate::calibration::pearson_r(&a, &b).ok();
            fit.push(vec![dataset.clone(), s.to_string(), e.to_string(), r.map(fmt_f64).unwrap_or_default()]);
        }
    }
    let mut series = Vec::new();
    for &e in &estimators {
        let curve = |f: &dyn Fn(&SweepPoint) -> f64| -> Vec<(f64, f64)> {
            cfg.noise_levels
                .iter()
                .map(|&n| {
                    let v: Vec<f64> = points.iter().filter(|p| p.estimator == e && p.noise == n).map(f).collect();
                    (n, v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect()
        };
        series.push((format!("{e} realized"), curve(&|p| p.realized_mean_residual)));
        series.push((format!("{e} predicted"), curve(&|p| p.predicted_mean_residual)));
    }
    let report = Report {
        config_text: Some(cfg.to_text()),
        seeds: cfg.seeds.clone(),
        tables: vec![t, fit],
        plots: vec![(
            "noise_sweep.svg".into(),
            lines_svg(&format!("{dataset}: residual vs noise"), "noise level", "mean squared residual", &series),
        )],
    };
    Ok(NoiseSweepRun { dataset, points, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Uniform,
    Guided,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Guided => "uncertainty",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionStep {
    pub seed: u64,
    pub strategy: Strategy,
    pub step: usize,
    pub budget: usize,
    pub logged_rows: usize,
    /// Residual of each estimator, in configured order.
    pub per_estimator: Vec<(Estimator, f64)>,
    pub mean_residual: f64,
    pub mean_v_ep: f64,
}

#[derive(Debug, Clone)]
pub struct CollectionRun {
    pub dataset: String,
    pub budgets: Vec<usize>,
    pub steps: Vec<CollectionStep>,
    pub report: Report,
}

impl CollectionRun {
    pub fn curve(&self, seed: u64, strategy: Strategy) -> Vec<&CollectionStep> {
        self.steps.iter().filter(|s| s.seed == seed && s.strategy == strategy).collect()
    }
}

/// `steps` equal increments over a pool of `pool` rows, ending at the full pool.
pub fn budget_schedule(pool: usize, steps: usize) -> Vec<usize> {
    (1..=steps).map(|j| ((j * pool) as f64 / steps as f64).round() as usize).collect()
}

#[allow(clippy::too_many_arguments)]
fn collection_point(
    cfg: &ExperimentConfig,
    data: &SupervisedDataset,
    full: &LoggedDataset,
    target: &Policy,
    rows: &[usize],
    step: usize,
    seed: u64,
    estimators: &[Estimator],
) -> Result<(Vec<(Estimator, f64)>, f64)> {
    let subset = full.subset(rows)?;
    let step_seed = derive_seed(seed, "collection-step", step as u64);
    let fit_view = logged_view(cfg, &subset, derive_seed(step_seed, "behavior-estimate", 0))?;
    let ensemble = fit_ensemble(
        &fit_view.logged,
        reward_head(cfg, data.task()),
        cfg.members,
        &cfg.reward_model,
        derive_seed(step_seed, "ensemble", 0),
    )?;
    // nuisance models come from the collected rows; residuals are scored on every row
    let eval_view = LoggedView {
        logged: if cfg.estimate_behavior { full.without_propensities() } else { full.clone() },
        behavior_hat: fit_view.behavior_hat,
    };
    let ev = evaluate_target(cfg, data, &eval_view, &ensemble, target, estimators, seed)?;
    let per: Vec<(Estimator, f64)> = estimators
        .iter()
        .zip(&ev.residuals)
        .map(|(e, r)| Ok((*e, mse_residual(r)?)))
        .collect::<Result<_>>()?;
    let v_ep = ev.decomps.iter().map(|d| d.v_ep).sum::<f64>() / ev.decomps.len() as f64;
    Ok((per, v_ep))
}

fn collection_seed(cfg: &ExperimentConfig, data: &SupervisedDataset, budgets: Option<&[usize]>, seed: u64) -> Result<(Vec<usize>, Vec<CollectionStep>)> {
    let rule = cfg
        .sculpt
        .as_ref()
        .ok_or_else(|| Error::Config("collection comparison needs a sculpting rule".into()))?;
    let (kept, pool) = at("sculpt", seed, sculpt_indices(data, &rule.feature, rule.drop_fraction))?;
    let budgets = match budgets {
        Some(b) => b.to_vec(),
        None => budget_schedule(pool.len(), cfg.budget_steps),
    };
    if budgets.windows(2).any(|w| w[1] <= w[0]) || budgets.first() == Some(&0) {
        return Err(Error::Config("budget schedule must be strictly increasing and positive".into()));
    }
    if budgets.last().is_some_and(|&b| b > pool.len()) {
        return Err(Error::Config(format!(
            "budget {} exceeds the held-back pool of {} rows",
            budgets.last().unwrap(),
            pool.len()
        )));
    }
    let behavior = at(
        "behavior-policy",
        seed,
        fit_linear_policy(&data.subset(&kept), cfg.behavior_noise, derive_seed(seed, "behavior", 0)),
    )?;
    let full = at("logging", seed, make_logged_dataset(data, &behavior, derive_seed(seed, "logging", 0)))?;
    let target = at("target-policy", seed, fit_target_policy(cfg, data, cfg.target_noise, seed))?;
    let estimators = active_estimators(cfg);

    // rank the pool once by epistemic uncertainty under the initial ensemble
    let initial_view = at("collection", seed, logged_view(cfg, &full.subset(&kept)?, derive_seed(seed, "initial", 0)))?;
    let initial = at(
        "collection",
        seed,
        fit_ensemble(
            &initial_view.logged,
            reward_head(cfg, data.task()),
            cfg.members,
            &cfg.reward_model,
            derive_seed(seed, "initial-ensemble", 0),
        ),
    )?;
    let contexts: Vec<&[f64]> = pool.iter().map(|&i| data.context(i)).collect();
    let actions = at("collection", seed, sample_actions(&target, &contexts, derive_seed(seed, "pool-actions", 0)))?;
    let pairs: Vec<(&[f64], Action)> = contexts.iter().copied().zip(actions).collect();
    let pool_dec = at("collection", seed, decompose_dataset(&initial, &pairs))?;
    let mut guided: Vec<usize> = (0..pool.len()).collect();
    guided.sort_by(|&a, &b| pool_dec[b].v_ep.total_cmp(&pool_dec[a].v_ep).then(a.cmp(&b)));
    let guided: Vec<usize> = guided.into_iter().map(|k| pool[k]).collect();
    let mut uniform = pool.clone();
    uniform.shuffle(&mut rng::stream(derive_seed(seed, "uniform-order", 0)));

    let mut steps = Vec::new();
    let schedule: Vec<usize> = std::iter::once(0).chain(budgets.iter().copied()).collect();
    for (step, &budget) in schedule.iter().enumerate() {
        for (strategy, order) in [(Strategy::Uniform, &uniform), (Strategy::Guided, &guided)] {
            let mut rows: Vec<usize> = kept.iter().chain(order[..budget].iter()).copied().collect();
            rows.sort_unstable();
            let (per_estimator, mean_v_ep) =
                at("collection", seed, collection_point(cfg, data, &full, &target, &rows, step, seed, &estimators))?;
            let mean_residual = per_estimator.iter().map(|(_, r)| r).sum::<f64>() / per_estimator.len() as f64;
            steps.push(CollectionStep {
                seed,
                strategy,
                step,
                budget,
                logged_rows: rows.len(),
                per_estimator,
                mean_residual,
                mean_v_ep,
            });
        }
    }
    Ok((budgets, steps))
}

pub fn run_collection_comparison(cfg: &ExperimentConfig) -> Result<CollectionRun> {
    run_collection_comparison_with(cfg, None)
}

/// As [`run_collection_comparison`] with an explicit budget schedule.
pub fn run_collection_comparison_with(cfg: &ExperimentConfig, budgets: Option<&[usize]>) -> Result<CollectionRun> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let dataset = dataset_name(cfg);
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&s| collection_seed(cfg, &data, budgets, s))
        .collect::<Result<Vec<_>>>()?;
    let budgets = per_seed.first().map(|(b, _)| b.clone()).unwrap_or_default();
    let steps: Vec<CollectionStep> = per_seed.into_iter().flat_map(|(_, s)| s).collect();

    let mut t = Table::new(
        "collection.csv",
        &["dataset", "seed", "strategy", "step", "budget", "logged_rows", "mean_residual", "mean_v_ep"],
    );
    let mut te = Table::new("collection_estimators.csv", &["dataset", "seed", "strategy", "step", "estimator", "mean_residual"]);
    for s in &steps {
        t.push(vec![
            dataset.clone(),
            s.seed.to_string(),
            s.strategy.as_str().into(),
            s.step.to_string(),
            s.budget.to_string(),
            s.logged_rows.to_string(),
            fmt_f64(s.mean_residual),
            fmt_f64(s.mean_v_ep),
        ]);
        for (e, r) in &s.per_estimator {
            te.push(vec![
                dataset.clone(),
                s.seed.to_string(),
                s.strategy.as_str().into(),
                s.step.to_string(),
                e.to_string(),
                fmt_f64(*r),
            ]);
        }
    }
    let curve = |strategy: Strategy, f: fn(&CollectionStep) -> f64| -> Vec<(f64, f64)> {
        let max_step = steps.iter().map(|s| s.step).max().unwrap_or(0);
        (0..=max_step)
            .map(|k| {
                let v: Vec<&CollectionStep> = steps.iter().filter(|s| s.step == k && s.strategy == strategy).collect();
                let budget = v.first().map_or(0, |s| s.budget) as f64;
                (budget, v.iter().map(|s| f(s)).sum::<f64>() / v.len().max(1) as f64)
            })
            .collect()
    };
    let res_series = vec![
        ("uniform".to_string(), curve(Strategy::Uniform, |s| s.mean_residual)),
        ("uncertainty".to_string(), curve(Strategy::Guided, |s| s.mean_residual)),
    ];
    let ep_series = vec![
        ("uniform".to_string(), curve(Strategy::Uniform, |s| s.mean_v_ep)),
        ("uncertainty".to_string(), curve(Strategy::Guided, |s| s.mean_v_ep)),
    ];
    let report = Report {
        config_text: Some(cfg.to_text()),
        seeds: cfg.seeds.clone(),
        tables: vec![t, te],
        plots: vec![
            (
                "collection_residual.svg".into(),
                lines_svg(&format!("{dataset}: residual vs budget"), "recruited rows", "mean squared residual", &res_series),
            ),
            (
                "collection_v_ep.svg".into(),
                lines_svg(&format!("{dataset}: epistemic uncertainty vs budget"), "recruited rows", "mean v_ep", &ep_series),
            ),
        ],
    };
    Ok(CollectionRun {
        dataset,
        budgets,
        steps,
        report,
    })
}
