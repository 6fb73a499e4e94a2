//! Off-policy value estimators and per-instance residuals.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::artifact::fmt_f64;
use crate::dataset::{holdout_indices, Action, LoggedDataset, Standardization, SupervisedDataset, Task};
use crate::error::{Error, Result};
use crate::nncore::TrainConfig;
use crate::policies::{fit_mlp_policy, mlp_policy_spec, Policy};
use crate::reward_model::RewardPredictor;
use crate::rng;

/// Cap on continuous-action density ratios.
pub const MAX_CONTINUOUS_WEIGHT: f64 = 1e4;
pub const DEFAULT_SHRINKAGE: f64 = 1.0;
pub const DEFAULT_MC_DRAWS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Dm,
    Dr,
    Rm,
    Snipw,
    IpwShrink,
    Sndr,
    Ipw,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::Dm,
        Estimator::Dr,
        Estimator::Rm,
        Estimator::Snipw,
        Estimator::IpwShrink,
        Estimator::Sndr,
        Estimator::Ipw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Dm => "DM",
            Estimator::Dr => "DR",
            Estimator::Rm => "RM",
            Estimator::Snipw => "SNIPW",
            Estimator::IpwShrink => "IPW_SHRINK",
            Estimator::Sndr => "SNDR",
            Estimator::Ipw => "IPW",
        }
    }

    pub fn needs_reward_model(self) -> bool {
        matches!(self, Estimator::Dm | Estimator::Dr | Estimator::Sndr)
    }

    pub fn needs_propensities(self) -> bool {
        !matches!(self, Estimator::Dm | Estimator::Rm)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub shrinkage_lambda: f64,
    pub mc_draws: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            shrinkage_lambda: DEFAULT_SHRINKAGE,
            mc_draws: DEFAULT_MC_DRAWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpeEstimate {
    pub estimator: Estimator,
    pub value: f64,
    /// `None` marks examples an estimator discarded (RM non-matches).
    pub per_instance: Vec<Option<f64>>,
    pub config: EstimatorConfig,
}

impl OpeEstimate {
    fn from_contributions(estimator: Estimator, contributions: Vec<f64>, config: EstimatorConfig) -> Self {
        let value = contributions.iter().sum::<f64>() / contributions.len() as f64;
        OpeEstimate {
            estimator,
            value,
            per_instance: contributions.into_iter().map(Some).collect(),
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRecord {
    pub index: usize,
    pub estimated: f64,
    pub truth: f64,
    pub squared_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpwMode {
    Ipw,
    Snipw,
    Shrink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrMode {
    Dr,
    Sndr,
}

/// Training setup for the estimated behavior policy.
///
/// `train.epochs` is an upper bound: the epoch count is picked from a doubling
/// grid by likelihood on a validation split, then the model is refit on all rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorFitConfig {
    pub hidden_layers: Vec<usize>,
    pub train: TrainConfig,
    pub validation_fraction: f64,
}

impl Default for BehaviorFitConfig {
    fn default() -> Self {
        BehaviorFitConfig {
            hidden_layers: vec![32],
            train: TrainConfig {
                epochs: 128,
                learning_rate: 1e-2,
                batch_size: 64,
                ..TrainConfig::default()
            },
            validation_fraction: 0.2,
        }
    }
}

pub fn estimate_behavior_policy(data: &LoggedDataset, seed: u64) -> Result<Policy> {
    estimate_behavior_policy_with(data, &BehaviorFitConfig::default(), seed)
}

/// Fit `x -> a` on the logged pairs: categorical for discrete actions,
/// Gaussian for continuous ones.
pub fn estimate_behavior_policy_with(data: &LoggedDataset, config: &BehaviorFitConfig, seed: u64) -> Result<Policy> {
    if data.is_empty() {
        return Err(Error::invalid("cannot estimate a behavior policy from an empty dataset"));
    }
    let sup = logged_as_supervised(data)?;
    let fit = |rows: &SupervisedDataset, epochs: usize| {
        let spec = mlp_policy_spec(rows, &config.hidden_layers, rng::derive_seed(seed, "behavior-init", 0))?;
        let train = TrainConfig { epochs, ..config.train };
        fit_mlp_policy(rows, 0.0, spec, &train, rng::derive_seed(seed, "behavior-fit", 0))
    };
    let (fit_rows, val_rows) = holdout_indices(sup.len(), config.validation_fraction, rng::derive_seed(seed, "behavior-split", 0))?;
    if val_rows.is_empty() || fit_rows.len() < 2 || config.train.epochs == 0 {
        return fit(&sup, config.train.epochs);
    }
    let (train_part, val_part) = (sup.subset(&fit_rows), sup.subset(&val_rows));
    let mut grid: Vec<usize> = std::iter::successors(Some(1usize), |e| Some(e * 2))
        .take_while(|&e| e < config.train.epochs)
        .collect();
    grid.push(config.train.epochs);
    let mut best = (f64::INFINITY, config.train.epochs);
    for epochs in grid {
        let nll = fit(&train_part, epochs)?.mean_nll(&val_part)?;
        if nll < best.0 {
            best = (nll, epochs);
        }
    }
    fit(&sup, best.1)
}

fn logged_as_supervised(data: &LoggedDataset) -> Result<SupervisedDataset> {
    let d = data.context_dim();
    let contexts: Vec<&[f64]> = data.examples().iter().map(|e| e.context.as_slice()).collect();
    let labels: Vec<f64> = data
        .examples()
        .iter()
        .map(|e| match e.action {
            Action::Discrete(a) => a as f64,
            Action::Continuous(a) => a,
        })
        .collect();
    // contexts are already on the model scale
    let identity = Standardization {
        mean: vec![0.0; d],
        scale: vec![1.0; d],
    };
    SupervisedDataset::with_standardization(
        crate::nncore::Matrix::from_rows(&contexts)?,
        labels,
        data.task(),
        (0..d).map(|j| format!("x{j}")).collect(),
        identity,
    )
}

/// Propensity of each logged action: the logged value when present,
/// otherwise the supplied behavior policy.
pub fn behavior_propensities(data: &LoggedDataset, behavior: Option<&Policy>) -> Result<Vec<f64>> {
    data.examples()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let p = match (e.logged_propensity, behavior) {
                (Some(p), _) => p,
                (None, Some(b)) => b.action_probability(&e.context, &e.action)?,
                (None, None) => {
                    return Err(Error::invalid(format!(
                        "example {i} has no logged propensity and no behavior policy was given"
                    )))
                }
            };
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::invalid(format!("non-positive propensity {p} at example {i}")));
            }
            Ok(p)
        })
        .collect()
}

/// `pi_e(a_i|x_i) / pi_b(a_i|x_i)` per example.
pub fn importance_weights(data: &LoggedDataset, target: &Policy, behavior: Option<&Policy>) -> Result<Vec<f64>> {
    let props = behavior_propensities(data, behavior)?;
    data.examples()
        .iter()
        .zip(props)
        .map(|(e, p)| {
            let w = target.action_probability(&e.context, &e.action)? / p;
            Ok(match e.action {
                Action::Continuous(_) => w.min(MAX_CONTINUOUS_WEIGHT),
                Action::Discrete(_) => w,
            })
        })
        .collect()
}

/// `lambda * w / (w^2 + lambda)`.
pub fn shrink_weight(w: f64, lambda: f64) -> f64 {
    lambda * w / (w * w + lambda)
}

/// Plug-in value `E_{a ~ pi_e}[q(x_i, a)]` per example.
fn plug_in_values(model: &dyn RewardPredictor, data: &LoggedDataset, target: &Policy, mc_draws: usize, seed: u64) -> Result<Vec<f64>> {
    let ex = data.examples();
    match data.task() {
        Task::Classification { classes } => {
            let mut pairs = Vec::with_capacity(ex.len() * classes);
            for e in ex {
                for a in 0..classes {
                    pairs.push((e.context.as_slice(), Action::Discrete(a)));
                }
            }
            let q = model.expected_rewards(&pairs)?;
            ex.iter()
                .enumerate()
                .map(|(i, e)| {
                    let probs = target.probabilities(&e.context)?;
                    if probs.len() != classes {
                        return Err(Error::DimensionMismatch {
                            expected: classes,
                            got: probs.len(),
                        });
                    }
                    Ok(probs.iter().zip(&q[i * classes..(i + 1) * classes]).map(|(p, q)| p * q).sum())
                })
                .collect()
        }
        Task::Regression => {
            if mc_draws == 0 {
                return Err(Error::invalid("continuous targets need at least one Monte Carlo draw"));
            }
            let mut stream = rng::stream(rng::derive_seed(seed, "dm-draws", 0));
            let mut pairs = Vec::with_capacity(ex.len() * mc_draws);
            for e in ex {
                for _ in 0..mc_draws {
                    pairs.push((e.context.as_slice(), target.sample_action(&e.context, &mut stream)?));
                }
            }
            let q = model.expected_rewards(&pairs)?;
            Ok(q.chunks(mc_draws).map(|c| c.iter().sum::<f64>() / mc_draws as f64).collect())
        }
    }
}

pub fn dm_value(model: &dyn RewardPredictor, data: &LoggedDataset, target: &Policy, config: EstimatorConfig, seed: u64) -> Result<OpeEstimate> {
    let v = plug_in_values(model, data, target, config.mc_draws, seed)?;
    Ok(OpeEstimate::from_contributions(Estimator::Dm, v, config))
}

pub fn ipw_family_value(
    mode: IpwMode,
    data: &LoggedDataset,
    target: &Policy,
    behavior: Option<&Policy>,
    config: EstimatorConfig,
) -> Result<OpeEstimate> {
    let w = importance_weights(data, target, behavior)?;
    let n = w.len() as f64;
    let r = data.examples().iter().map(|e| e.reward);
    let (estimator, contributions): (Estimator, Vec<f64>) = match mode {
        IpwMode::Ipw => (Estimator::Ipw, w.iter().zip(r).map(|(w, r)| w * r).collect()),
        IpwMode::Snipw => {
            let norm = w.iter().sum::<f64>() / n;
            (Estimator::Snipw, w.iter().zip(r).map(|(w, r)| w * r / norm).collect())
        }
        IpwMode::Shrink => {
            let lambda = config.shrinkage_lambda;
            if !(lambda > 0.0) {
                return Err(Error::invalid(format!("shrinkage lambda must be positive, got {lambda}")));
            }
            (
                Estimator::IpwShrink,
                w.iter().zip(r).map(|(w, r)| shrink_weight(*w, lambda) * r).collect(),
            )
        }
    };
    Ok(OpeEstimate::from_contributions(estimator, contributions, config))
}

pub fn dr_family_value(
    mode: DrMode,
    data: &LoggedDataset,
    target: &Policy,
    behavior: Option<&Policy>,
    model: &dyn RewardPredictor,
    config: EstimatorConfig,
    seed: u64,
) -> Result<OpeEstimate> {
    let w = importance_weights(data, target, behavior)?;
    let dm = plug_in_values(model, data, target, config.mc_draws, seed)?;
    let pairs: Vec<(&[f64], Action)> = data.examples().iter().map(|e| (e.context.as_slice(), e.action)).collect();
    let q_logged = model.expected_rewards(&pairs)?;
    let norm = match mode {
        DrMode::Dr => 1.0,
        DrMode::Sndr => w.iter().sum::<f64>() / w.len() as f64,
    };
    let contributions = data
        .examples()
        .iter()
        .enumerate()
        .map(|(i, e)| dm[i] + w[i] / norm * (e.reward - q_logged[i]))
        .collect();
    let estimator = match mode {
        DrMode::Dr => Estimator::Dr,
        DrMode::Sndr => Estimator::Sndr,
    };
    Ok(OpeEstimate::from_contributions(estimator, contributions, config))
}

pub fn replay_value(data: &LoggedDataset, target: &Policy, seed: u64) -> Result<OpeEstimate> {
    if data.task() == Task::Regression {
        return Err(Error::invalid("the replay method needs discrete actions"));
    }
    let mut stream = rng::stream(rng::derive_seed(seed, "replay", 0));
    let mut per_instance = Vec::with_capacity(data.len());
    for e in data.examples() {
        let b = target.sample_action(&e.context, &mut stream)?;
        per_instance.push((b == e.action).then_some(e.reward));
    }
    let kept: Vec<f64> = per_instance.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::NoMatch);
    }
    Ok(OpeEstimate {
        estimator: Estimator::Rm,
        value: kept.iter().sum::<f64>() / kept.len() as f64,
        per_instance,
        config: EstimatorConfig::default(),
    })
}

/// Everything an estimator may need; unused fields are ignored.
pub struct OpeInputs<'a> {
    pub data: &'a LoggedDataset,
    pub target: &'a Policy,
    pub behavior: Option<&'a Policy>,
    pub model: Option<&'a dyn RewardPredictor>,
    pub config: EstimatorConfig,
    pub seed: u64,
}

pub fn run_estimator(estimator: Estimator, inputs: &OpeInputs<'_>) -> Result<OpeEstimate> {
    let model = || {
        inputs
            .model
            .ok_or_else(|| Error::invalid(format!("{estimator} needs a reward model")))
    };
    let cfg = inputs.config;
    match estimator {
        Estimator::Dm => dm_value(model()?, inputs.data, inputs.target, cfg, inputs.seed),
        Estimator::Dr => dr_family_value(DrMode::Dr, inputs.data, inputs.target, inputs.behavior, model()?, cfg, inputs.seed),
        Estimator::Sndr => dr_family_value(DrMode::Sndr, inputs.data, inputs.target, inputs.behavior, model()?, cfg, inputs.seed),
        Estimator::Ipw => ipw_family_value(IpwMode::Ipw, inputs.data, inputs.target, inputs.behavior, cfg),
        Estimator::Snipw => ipw_family_value(IpwMode::Snipw, inputs.data, inputs.target, inputs.behavior, cfg),
        Estimator::IpwShrink => ipw_family_value(IpwMode::Shrink, inputs.data, inputs.target, inputs.behavior, cfg),
        Estimator::Rm => replay_value(inputs.data, inputs.target, inputs.seed),
    }
}

pub fn instance_residuals(estimate: &OpeEstimate, truth: &[f64]) -> Result<Vec<ResidualRecord>> {
    if truth.len() != estimate.per_instance.len() {
        return Err(Error::DimensionMismatch {
            expected: estimate.per_instance.len(),
            got: truth.len(),
        });
    }
    Ok(estimate
        .per_instance
        .iter()
        .zip(truth)
        .enumerate()
        .filter_map(|(index, (est, &t))| {
            est.map(|e| ResidualRecord {
                index,
                estimated: e,
                truth: t,
                squared_residual: (e - t) * (e - t),
            })
        })
        .collect())
}

pub fn mse_residual(records: &[ResidualRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("no residual records"));
    }
    Ok(records.iter().map(|r| r.squared_residual).sum::<f64>() / records.len() as f64)
}

/// Long format: one row per (estimator, example); absent contributions are empty.
pub fn write_estimates_csv(path: impl AsRef<Path>, estimates: &[OpeEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["estimator", "value", "index", "per_instance"])?;
    for est in estimates {
        for (i, c) in est.per_instance.iter().enumerate() {
            w.write_record([
                est.estimator.to_string(),
                fmt_f64(est.value),
                i.to_string(),
                c.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_residuals_csv(path: impl AsRef<Path>, records: &[ResidualRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "estimated", "true", "squared_residual"])?;
    for r in records {
        w.write_record([
            r.index.to_string(),
            fmt_f64(r.estimated),
            fmt_f64(r.truth),
            fmt_f64(r.squared_residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_residuals_csv(path: impl AsRef<Path>) -> Result<Vec<ResidualRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> Result<&str> {
            rec.get(c).map(str::trim).ok_or_else(|| Error::Parse {
                row: row + 1,
                column: ["index", "estimated", "true", "squared_residual"][c].to_string(),
                message: "missing field".into(),
            })
        };
        let num = |c: usize| -> Result<f64> {
            field(c)?.parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: ["index", "estimated", "true", "squared_residual"][c].to_string(),
                message: "expected a number".into(),
            })
        };
        out.push(ResidualRecord {
            index: field(0)?.parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: "index".into(),
                message: "expected a row index".into(),
            })?,
            estimated: num(1)?,
            truth: num(2)?,
            squared_residual: num(3)?,
        });
    }
    Ok(out)
}

/// Draw one action per context from `policy`, in order.
pub fn sample_actions(policy: &Policy, contexts: &[&[f64]], seed: u64) -> Result<Vec<Action>> {
    let mut stream = rng::stream(seed);
    contexts.iter().map(|c| policy.sample_action(c, &mut stream)).collect()
}

/// Uniformly resample `n` rows with replacement.
pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut s = rng::stream(seed);
    (0..n).map(|_| s.gen_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LoggedExample;
    use crate::reward_model::TabularReward;
    use proptest::prelude::*;
    use rand::Rng;

    struct Constant(f64);

    impl RewardPredictor for Constant {
        fn expected_rewards(&self, pairs: &[(&[f64], Action)]) -> Result<Vec<f64>> {
            Ok(vec![self.0; pairs.len()])
        }
    }

    /// Logged data from tabular policies with context ids drawn from `px`.
    fn tabular_log(px: &[f64], pb: &Policy, rewards: &[Vec<f64>], n: usize, seed: u64, with_props: bool) -> LoggedDataset {
        let k = rewards[0].len();
        let mut s = rng::stream(seed);
        let ex = (0..n)
            .map(|i| {
                let u: f64 = s.gen();
                let mut c = 0;
                let mut acc = px[0];
                while u >= acc && c + 1 < px.len() {
                    c += 1;
                    acc += px[c];
                }
                let ctx = vec![c as f64];
                let a = pb.sample_action(&ctx, &mut s).unwrap();
                let Action::Discrete(ai) = a else { unreachable!() };
                LoggedExample {
                    reward: rewards[c][ai],
                    logged_propensity: with_props.then(|| pb.action_probability(&ctx, &a).unwrap()),
                    context: ctx,
                    action: a,
                    source_row: Some(i),
                }
            })
            .collect();
        LoggedDataset::new(ex, Task::Classification { classes: k }, "tabular").unwrap()
    }

    fn exact_value(px: &[f64], pe: &[Vec<f64>], rewards: &[Vec<f64>]) -> f64 {
        px.iter()
            .enumerate()
            .map(|(c, p)| p * pe[c].iter().zip(&rewards[c]).map(|(a, r)| a * r).sum::<f64>())
            .sum()
    }

    fn three_action_bandit() -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let px = vec![0.5, 0.3, 0.2];
        let pb = vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]];
        let pe = vec![vec![0.1, 0.2, 0.7], vec![0.6, 0.2, 0.2], vec![0.2, 0.7, 0.1]];
        let r = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        (px, pb, pe, r)
    }

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
        }
        assert!("SWITCH".parse::<Estimator>().is_err());
    }

    #[test]
    fn dm_examples() {
        let pe = Policy::tabular(vec![vec![0.3, 0.7]]).unwrap();
        let data = tabular_log(&[1.0], &pe, &[vec![1.0, 0.0]], 20, 1, false);
        let est = dm_value(&Constant(0.42), &data, &pe, EstimatorConfig::default(), 0).unwrap();
        assert!((est.value - 0.42).abs() < 1e-12);
        let table = TabularReward {
            table: vec![vec![1.0, 0.0]],
        };
        let est = dm_value(&table, &data, &pe, EstimatorConfig::default(), 0).unwrap();
        assert!(est.per_instance.iter().all(|v| (v.unwrap() - 0.3).abs() < 1e-12));
    }

    #[test]
    fn on_policy_collapse() {
        let (px, pb, _, r) = three_action_bandit();
        let b = Policy::tabular(pb).unwrap();
        let data = tabular_log(&px, &b, &r, 500, 3, false);
        let mean = data.mean_reward();
        let cfg = EstimatorConfig::default();
        let ipw = ipw_family_value(IpwMode::Ipw, &data, &b, Some(&b), cfg).unwrap();
        let sn = ipw_family_value(IpwMode::Snipw, &data, &b, Some(&b), cfg).unwrap();
        assert!((ipw.value - mean).abs() < 1e-9 && (sn.value - mean).abs() < 1e-9);
        let dr = dr_family_value(DrMode::Dr, &data, &b, Some(&b), &Constant(0.0), cfg, 0).unwrap();
        assert!((dr.value - mean).abs() < 1e-9);
        let dr = dr_family_value(DrMode::Dr, &data, &b, Some(&b), &Constant(0.8), cfg, 0).unwrap();
        assert!((dr.value - mean).abs() < 1e-9);
    }

    #[test]
    fn equal_weights_make_snipw_the_mean_reward() {
        let (px, pb, _, r) = three_action_bandit();
        let b = Policy::tabular(pb).unwrap();
        let data = tabular_log(&px, &b, &r, 300, 4, false);
        // constant target probability over constant propensity
        let flat = Policy::tabular(vec![vec![1.0 / 3.0; 3]; 3]).unwrap();
        let uniform_logger = Policy::tabular(vec![vec![0.5, 0.25, 0.25]; 3]).unwrap();
        let data = LoggedDataset::new(
            data.examples()
                .iter()
                .map(|e| LoggedExample {
                    logged_propensity: Some(0.2),
                    ..e.clone()
                })
                .collect(),
            data.task(),
            "fixed",
        )
        .unwrap();
        let est = ipw_family_value(IpwMode::Snipw, &data, &flat, Some(&uniform_logger), EstimatorConfig::default()).unwrap();
        assert!((est.value - data.mean_reward()).abs() < 1e-12);
    }

    #[test]
    fn logged_propensities_take_precedence() {
        let (px, pb, pe, r) = three_action_bandit();
        let b = Policy::tabular(pb).unwrap();
        let e = Policy::tabular(pe).unwrap();
        let logged = tabular_log(&px, &b, &r, 200, 5, true);
        let wrong = Policy::tabular(vec![vec![1.0 / 3.0; 3]; 3]).unwrap();
        let a = ipw_family_value(IpwMode::Ipw, &logged, &e, Some(&wrong), EstimatorConfig::default()).unwrap();
        let b2 = ipw_family_value(IpwMode::Ipw, &logged.without_propensities(), &e, Some(&b), EstimatorConfig::default()).unwrap();
        assert!((a.value - b2.value).abs() < 1e-12);
        assert!(ipw_family_value(IpwMode::Ipw, &logged.without_propensities(), &e, None, EstimatorConfig::default()).is_err());
    }

    #[test]
    fn ipw_and_dr_agree_with_enumeration() {
        let (px, pb, pe, r) = three_action_bandit();
        let truth = exact_value(&px, &pe, &r);
        let (b, e) = (Policy::tabular(pb).unwrap(), Policy::tabular(pe).unwrap());
        let data = tabular_log(&px, &b, &r, 20000, 11, false);
        let ipw = ipw_family_value(IpwMode::Ipw, &data, &e, Some(&b), EstimatorConfig::default()).unwrap();
        let contribs: Vec<f64> = ipw.per_instance.iter().map(|v| v.unwrap()).collect();
        let se = mean_sd(&contribs).1 / (contribs.len() as f64).sqrt();
        assert!((ipw.value - truth).abs() < 3.0 * se, "{} vs {truth}", ipw.value);

        // biased model so the correction term matters
        let q = TabularReward {
            table: r.iter().map(|row| row.iter().map(|v| 0.5 * v + 0.2).collect()).collect(),
        };
        let (mut ipw_vals, mut dr_vals) = (Vec::new(), Vec::new());
        for rep in 0..200 {
            let idx = bootstrap_indices(data.len(), rep);
            let boot = data.subset(&idx).unwrap();
            ipw_vals.push(ipw_family_value(IpwMode::Ipw, &boot, &e, Some(&b), EstimatorConfig::default()).unwrap().value);
            dr_vals.push(dr_family_value(DrMode::Dr, &boot, &e, Some(&b), &q, EstimatorConfig::default(), 0).unwrap().value);
        }
        let dr = dr_family_value(DrMode::Dr, &data, &e, Some(&b), &q, EstimatorConfig::default(), 0).unwrap();
        let dr_se = mean_sd(&dr.per_instance.iter().map(|v| v.unwrap()).collect::<Vec<_>>()).1 / (data.len() as f64).sqrt();
        assert!((dr.value - truth).abs() < 3.0 * dr_se);
        assert!(mean_sd(&dr_vals).1 <= mean_sd(&ipw_vals).1);
    }

    #[test]
    fn perfect_model_zeroes_the_correction() {
        let (px, pb, pe, r) = three_action_bandit();
        let (b, e) = (Policy::tabular(pb).unwrap(), Policy::tabular(pe).unwrap());
        let data = tabular_log(&px, &b, &r, 400, 2, false);
        let q = TabularReward { table: r.clone() };
        let dm = dm_value(&q, &data, &e, EstimatorConfig::default(), 0).unwrap();
        let dr = dr_family_value(DrMode::Dr, &data, &e, Some(&b), &q, EstimatorConfig::default(), 0).unwrap();
        for (a, b) in dm.per_instance.iter().zip(&dr.per_instance) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_examples() {
        let px = [0.5, 0.5];
        let r = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let det = Policy::tabular(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let data = tabular_log(&px, &det, &r, 100, 1, false);
        let est = replay_value(&data, &det, 0).unwrap();
        assert!(est.per_instance.iter().all(Option::is_some));
        assert!((est.value - data.mean_reward()).abs() < 1e-12);

        let never = Policy::tabular(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(replay_value(&data, &never, 0), Err(Error::NoMatch)));

        let logger = Policy::tabular(vec![vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let data = tabular_log(&[1.0], &logger, &[vec![0.0, 1.0, 0.0, 1.0]], 8000, 9, false);
        let uniform = Policy::tabular(vec![vec![0.25; 4]]).unwrap();
        let est = replay_value(&data, &uniform, 3).unwrap();
        let kept = est.per_instance.iter().flatten().count() as f64 / 8000.0;
        let se = (0.25f64 * 0.75 / 8000.0).sqrt();
        assert!((kept - 0.25).abs() < 3.0 * se, "kept {kept}");
        assert!(instance_residuals(&est, &vec![0.0; 8000]).unwrap().len() == est.per_instance.iter().flatten().count());
    }

    #[test]
    fn behavior_estimation_recovers_a_deterministic_logger() {
        let det = Policy::tabular(vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let data = tabular_log(&[0.3, 0.3, 0.4], &det, &vec![vec![0.0; 3]; 3], 300, 6, false);
        let est = estimate_behavior_policy(&data, 1).unwrap();
        let agree = data
            .examples()
            .iter()
            .filter(|e| est.greedy_action(&e.context).unwrap() == e.action)
            .count();
        assert!(agree as f64 >= 0.95 * data.len() as f64);

        let single = Policy::tabular(vec![vec![0.0, 1.0, 0.0]; 3]).unwrap();
        let data = tabular_log(&[0.3, 0.3, 0.4], &single, &vec![vec![0.0; 3]; 3], 200, 7, false);
        let est = estimate_behavior_policy(&data, 2).unwrap();
        for e in data.examples() {
            assert!(est.probabilities(&e.context).unwrap()[1] >= 0.99);
        }
    }

    #[test]
    fn residual_examples() {
        let mk = |v: Vec<f64>| OpeEstimate::from_contributions(Estimator::Dm, v, EstimatorConfig::default());
        let est = mk(vec![0.2, 0.5]);
        assert!(instance_residuals(&est, &[0.2, 0.5]).unwrap().iter().all(|r| r.squared_residual == 0.0));
        assert!(instance_residuals(&mk(vec![0.0; 3]), &[1.0; 3]).unwrap().iter().all(|r| r.squared_residual == 1.0));
        assert!(instance_residuals(&est, &[1.0]).is_err());
        let recs = instance_residuals(&mk(vec![0.0, 2.0]), &[0.0, 0.0]).unwrap();
        assert_eq!(mse_residual(&recs).unwrap(), 2.0);
        assert!(mse_residual(&[]).is_err());
    }

    proptest! {
        #[test]
        fn shrunk_weights_are_bounded(w in 0.0f64..1e6, lambda in 1e-6f64..1e6) {
            let s = shrink_weight(w, lambda);
            prop_assert!(s >= 0.0);
            prop_assert!(s <= w * (1.0 + 1e-12));
            prop_assert!(s <= lambda.sqrt() / 2.0 * (1.0 + 1e-12));
        }

        #[test]
        fn residual_mean_matches_direct_formula(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..64)) {
            let (est, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let direct = est.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / est.len() as f64;
            let e = OpeEstimate::from_contributions(Estimator::Ipw, est, EstimatorConfig::default());
            let mut recs = instance_residuals(&e, &truth).unwrap();
            prop_assert!((mse_residual(&recs).unwrap() - direct).abs() < 1e-12);
            recs.reverse();
            prop_assert!((mse_residual(&recs).unwrap() - direct).abs() < 1e-12);
        }

        #[test]
        fn value_is_mean_of_contributions(seed in 0u64..50) {
            let (px, pb, pe, r) = three_action_bandit();
            let (b, e) = (Policy::tabular(pb).unwrap(), Policy::tabular(pe).unwrap());
            let data = tabular_log(&px, &b, &r, 50, seed, false);
            let q = Constant(0.3);
            let inputs = OpeInputs { data: &data, target: &e, behavior: Some(&b), model: Some(&q), config: EstimatorConfig::default(), seed };
            for est in Estimator::ALL {
                let Ok(out) = run_estimator(est, &inputs) else { continue };
                let kept: Vec<f64> = out.per_instance.iter().flatten().copied().collect();
                let mean = kept.iter().sum::<f64>() / kept.len() as f64;
                prop_assert!((out.value - mean).abs() < 1e-9);
            }
        }
    }
}
