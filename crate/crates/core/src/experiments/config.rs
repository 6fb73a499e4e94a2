use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::artifact::fmt_f64;
use crate::calibration::{DEFAULT_BOOTSTRAP_ROUNDS, DEFAULT_HOLDOUT_FRACTION};
use crate::dataset::TaskKind;
use crate::error::{Error, Result};
use crate::nncore::TrainConfig;
use crate::ope::{BehaviorFitConfig, Estimator, EstimatorConfig};
use crate::reward_model::{RewardModelConfig, DEFAULT_COMPONENTS};
use crate::uncertainty::DEFAULT_MEMBERS;

/// Which policy the noise sweep perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepPolicy {
    Target,
    Behavior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SculptRule {
    pub feature: String,
    pub drop_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub task: TaskKind,
    pub behavior_noise: f64,
    pub target_noise: f64,
    pub noise_levels: Vec<f64>,
    pub sweep_policy: SweepPolicy,
    pub members: usize,
    pub components: usize,
    pub estimators: Vec<Estimator>,
    pub seeds: Vec<u64>,
    pub holdout_fraction: f64,
    pub bootstrap_rounds: usize,
    pub sculpt: Option<SculptRule>,
    pub budget_steps: usize,
    pub out_dir: PathBuf,
    pub reward_model: RewardModelConfig,
    pub target_hidden: Vec<usize>,
    pub target_train: TrainConfig,
    pub behavior_fit: BehaviorFitConfig,
    /// Drop logged propensities and fit the behavior policy from the data.
    pub estimate_behavior: bool,
    pub estimator_config: EstimatorConfig,
}

/// The six estimators of the correlation study (plain IPW is available but not default).
pub const DEFAULT_ESTIMATORS: [Estimator; 6] = [
    Estimator::Dm,
    Estimator::Dr,
    Estimator::Rm,
    Estimator::Snipw,
    Estimator::IpwShrink,
    Estimator::Sndr,
];

pub const DEFAULT_NOISE_LEVELS: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.1];

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>, task: TaskKind) -> Self {
        let (behavior_noise, target_noise) = match task {
            TaskKind::Classification => (0.3, 0.0),
            TaskKind::Regression => (0.5, 0.1),
        };
        ExperimentConfig {
            dataset: dataset.into(),
            task,
            behavior_noise,
            target_noise,
            noise_levels: DEFAULT_NOISE_LEVELS.to_vec(),
            sweep_policy: SweepPolicy::Target,
            members: DEFAULT_MEMBERS,
            components: DEFAULT_COMPONENTS,
            estimators: DEFAULT_ESTIMATORS.to_vec(),
            seeds: (0..8).collect(),
            holdout_fraction: DEFAULT_HOLDOUT_FRACTION,
            bootstrap_rounds: DEFAULT_BOOTSTRAP_ROUNDS,
            sculpt: None,
            budget_steps: 10,
            out_dir: PathBuf::from("out"),
            reward_model: RewardModelConfig::default(),
            target_hidden: vec![64, 64],
            target_train: TrainConfig::default(),
            behavior_fit: BehaviorFitConfig::default(),
            estimate_behavior: true,
            estimator_config: EstimatorConfig::default(),
        }
    }

    /// Classification fixture with its sculpting feature.
    pub fn breast_cancer(dataset: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            sculpt: Some(SculptRule {
                feature: "worst concave points".into(),
                drop_fraction: 0.6,
            }),
            ..Self::new(dataset, TaskKind::Classification)
        }
    }

    /// Regression fixture with its sculpting feature.
    pub fn diabetes(dataset: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            sculpt: Some(SculptRule {
                feature: "ltg".into(),
                drop_fraction: 0.6,
            }),
            ..Self::new(dataset, TaskKind::Regression)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimator set is empty".into()));
        }
        if self.members < 2 {
            return Err(Error::Config("members must be at least 2".into()));
        }
        if self.components == 0 {
            return Err(Error::Config("components must be at least 1".into()));
        }
        if !(self.behavior_noise >= 0.0 && self.target_noise >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if self.noise_levels.iter().any(|n| !(*n >= 0.0)) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if self.bootstrap_rounds == 0 {
            return Err(Error::Config("bootstrap_rounds must be at least 1".into()));
        }
        if self.budget_steps == 0 {
            return Err(Error::Config("budget_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Parse `key = value` lines over the defaults for the given task.
    /// Blank lines and `#` comments are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let dataset = map
            .remove("dataset")
            .ok_or_else(|| Error::Config("missing key `dataset`".into()))?;
        let task: TaskKind = map
            .remove("task")
            .ok_or_else(|| Error::Config("missing key `task`".into()))?
            .parse()
            .map_err(|_| Error::Config("task must be classification or regression".into()))?;
        let mut cfg = ExperimentConfig::new(dataset, task);
        for (k, v) in map {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; a relative `dataset` path is taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value `{value}` for `{key}`: expected {what}"));
        let num = || value.parse::<f64>().map_err(|_| bad("a number"));
        let int = || value.parse::<usize>().map_err(|_| bad("an integer"));
        let list = || parse_usizes(value).map_err(|_| bad("comma-separated integers"));
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "behavior_noise" => self.behavior_noise = num()?,
            "target_noise" => self.target_noise = num()?,
            "noise_levels" => {
                self.noise_levels = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("comma-separated numbers"))?
            }
            "sweep_policy" => {
                self.sweep_policy = match value {
                    "target" => SweepPolicy::Target,
                    "behavior" => SweepPolicy::Behavior,
                    _ => return Err(bad("target or behavior")),
                }
            }
            "members" => self.members = int()?,
            "components" => self.components = int()?,
            "estimators" => {
                self.estimators = value
                    .split(',')
                    .map(Estimator::from_str)
                    .collect::<Result<_>>()?
            }
            "seeds" => self.seeds = parse_seeds(value).map_err(|_| bad("a list like 0,1,2 or a range 0..8"))?,
            "holdout_fraction" => self.holdout_fraction = num()?,
            "bootstrap_rounds" => self.bootstrap_rounds = int()?,
            "sculpt_feature" => {
                let frac = self.sculpt.as_ref().map_or(0.6, |s| s.drop_fraction);
                self.sculpt = Some(SculptRule {
                    feature: value.to_string(),
                    drop_fraction: frac,
                })
            }
            "sculpt_fraction" => {
                let f = num()?;
                match &mut self.sculpt {
                    Some(s) => s.drop_fraction = f,
                    None => {
                        self.sculpt = Some(SculptRule {
                            feature: String::new(),
                            drop_fraction: f,
                        })
                    }
                }
            }
            "budget_steps" => self.budget_steps = int()?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "hidden" => self.reward_model.hidden_layers = list()?,
            "epochs" => self.reward_model.train.epochs = int()?,
            "learning_rate" => self.reward_model.train.learning_rate = num()?,
            "batch_size" => self.reward_model.train.batch_size = int()?,
            "target_hidden" => self.target_hidden = list()?,
            "target_epochs" => self.target_train.epochs = int()?,
            "target_learning_rate" => self.target_train.learning_rate = num()?,
            "target_batch_size" => self.target_train.batch_size = int()?,
            "behavior_hidden" => self.behavior_fit.hidden_layers = list()?,
            "behavior_epochs" => self.behavior_fit.train.epochs = int()?,
            "estimate_behavior" => self.estimate_behavior = value.parse().map_err(|_| bad("true or false"))?,
            "mc_draws" => self.estimator_config.mc_draws = int()?,
            "shrinkage_lambda" => self.estimator_config.shrinkage_lambda = num()?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Canonical `key = value` text; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let join_f = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        let join_u = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dataset", self.dataset.display().to_string());
        kv("task", self.task.to_string());
        kv("behavior_noise", fmt_f64(self.behavior_noise));
        kv("target_noise", fmt_f64(self.target_noise));
        kv("noise_levels", join_f(&self.noise_levels));
        kv(
            "sweep_policy",
            match self.sweep_policy {
                SweepPolicy::Target => "target".into(),
                SweepPolicy::Behavior => "behavior".into(),
            },
        );
        kv("members", self.members.to_string());
        kv("components", self.components.to_string());
        kv(
            "estimators",
            self.estimators.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","),
        );
        kv("seeds", self.seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        kv("holdout_fraction", fmt_f64(self.holdout_fraction));
        kv("bootstrap_rounds", self.bootstrap_rounds.to_string());
        if let Some(rule) = &self.sculpt {
            kv("sculpt_feature", rule.feature.clone());
            kv("sculpt_fraction", fmt_f64(rule.drop_fraction));
        }
        kv("budget_steps", self.budget_steps.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("hidden", join_u(&self.reward_model.hidden_layers));
        kv("epochs", self.reward_model.train.epochs.to_string());
        kv("learning_rate", fmt_f64(self.reward_model.train.learning_rate));
        kv("batch_size", self.reward_model.train.batch_size.to_string());
        kv("target_hidden", join_u(&self.target_hidden));
        kv("target_epochs", self.target_train.epochs.to_string());
        kv("target_learning_rate", fmt_f64(self.target_train.learning_rate));
        kv("target_batch_size", self.target_train.batch_size.to_string());
        kv("behavior_hidden", join_u(&self.behavior_fit.hidden_layers));
        kv("behavior_epochs", self.behavior_fit.train.epochs.to_string());
        kv("estimate_behavior", self.estimate_behavior.to_string());
        kv("mc_draws", self.estimator_config.mc_draws.to_string());
        kv("shrinkage_lambda", fmt_f64(self.estimator_config.shrinkage_lambda));
        s
    }
}

fn parse_usizes(s: &str) -> std::result::Result<Vec<usize>, std::num::ParseIntError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

fn parse_seeds(s: &str) -> std::result::Result<Vec<u64>, std::num::ParseIntError> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..b).collect());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::diabetes("data/diabetes.csv");
        cfg.seeds = vec![3, 5];
        cfg.estimators = vec![Estimator::Dm, Estimator::Ipw];
        cfg.noise_levels = vec![0.1, 1.1];
        cfg.reward_model.hidden_layers = vec![8];
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn parse_applies_overrides_and_rejects_junk() {
        let cfg = ExperimentConfig::parse(
            "# comment\ndataset = x.csv\ntask = classification\nseeds = 0..3\nmembers = 4\nestimators = dm, sndr\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.members, 4);
        assert_eq!(cfg.estimators, vec![Estimator::Dm, Estimator::Sndr]);
        assert!(ExperimentConfig::parse("dataset = x\ntask = classification\nfoo = 1\n").is_err());
        assert!(ExperimentConfig::parse("task = classification\n").is_err());
        assert!(ExperimentConfig::parse("dataset = x\ntask = classification\nseeds = 0..0\n").is_err());
        assert!(ExperimentConfig::parse("dataset = x\ntask = classification\nmembers = one\n").is_err());
    }
}
