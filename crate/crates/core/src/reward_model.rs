//! Distributional reward models for the direct method.
//!
//! Binary rewards are modeled by a single sigmoid unit (Bernoulli), continuous
//! rewards by a mixture density network. The action enters the network as a
//! one-hot block (discrete) or one standardized scalar (continuous) appended
//! to the context.

use std::path::Path;

use crate::artifact::Artifact;
use crate::dataset::{Action, LoggedDataset, Task};
use crate::error::{Error, Result};
use crate::nncore::{self, mdn_params, sigmoid, Head, Loss, Matrix, Network, NetworkSpec, TrainConfig};
use crate::rng;

pub const BERNOULLI_CLIP: f64 = 1e-7;
pub const DEFAULT_COMPONENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardHead {
    Bernoulli,
    Mdn { components: usize },
}

impl RewardHead {
    /// Bernoulli for strictly binary rewards, a `K = 3` mixture otherwise.
    pub fn for_dataset(data: &LoggedDataset) -> RewardHead {
        if rewards_are_binary(data) {
            RewardHead::Bernoulli
        } else {
            RewardHead::Mdn {
                components: DEFAULT_COMPONENTS,
            }
        }
    }
}

fn rewards_are_binary(data: &LoggedDataset) -> bool {
    data.examples().iter().all(|e| e.reward == 0.0 || e.reward == 1.0)
}

/// How a (context, action) pair becomes a network input.
#[derive(Debug, Clone, PartialEq)]
pub enum InputEncoding {
    OneHot { context_dim: usize, actions: usize },
    Scalar { context_dim: usize, action_mean: f64, action_scale: f64 },
}

impl InputEncoding {
    pub fn for_dataset(data: &LoggedDataset) -> InputEncoding {
        let context_dim = data.context_dim();
        match data.task() {
            Task::Classification { classes } => InputEncoding::OneHot {
                context_dim,
                actions: classes,
            },
            Task::Regression => {
                let acts: Vec<f64> = data
                    .examples()
                    .iter()
                    .map(|e| match e.action {
                        Action::Continuous(a) => a,
                        Action::Discrete(a) => a as f64,
                    })
                    .collect();
                let n = acts.len() as f64;
                let mean = acts.iter().sum::<f64>() / n;
                let sd = (acts.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
                InputEncoding::Scalar {
                    context_dim,
                    action_mean: mean,
                    action_scale: if sd > 1e-12 { sd } else { 1.0 },
                }
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            InputEncoding::OneHot { context_dim, actions } => context_dim + actions,
            InputEncoding::Scalar { context_dim, .. } => context_dim + 1,
        }
    }

    fn context_dim(&self) -> usize {
        match *self {
            InputEncoding::OneHot { context_dim, .. } | InputEncoding::Scalar { context_dim, .. } => context_dim,
        }
    }

    pub fn encode_into(&self, context: &[f64], action: &Action, out: &mut Vec<f64>) -> Result<()> {
        if context.len() != self.context_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.context_dim(),
                got: context.len(),
            });
        }
        out.extend_from_slice(context);
        match (self, action) {
            (InputEncoding::OneHot { actions, .. }, Action::Discrete(a)) if a < actions => {
                out.extend((0..*actions).map(|j| if j == *a { 1.0 } else { 0.0 }));
            }
            (
                InputEncoding::Scalar {
                    action_mean,
                    action_scale,
                    ..
                },
                Action::Continuous(a),
            ) => out.push((a - action_mean) / action_scale),
            _ => return Err(Error::invalid(format!("action {action:?} does not fit encoding {self:?}"))),
        }
        Ok(())
    }

    pub fn encode_batch(&self, pairs: &[(&[f64], Action)]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(pairs.len() * self.input_dim());
        for (ctx, a) in pairs {
            self.encode_into(ctx, a, &mut data)?;
        }
        Matrix::from_vec(pairs.len(), self.input_dim(), data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictiveDistribution {
    Bernoulli { p: f64 },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        scales: Vec<f64>,
    },
}

impl PredictiveDistribution {
    pub fn mean(&self) -> f64 {
        mixture_moments(self).0
    }

    /// Log density (mixture) or log mass (Bernoulli) of `r`.
    pub fn log_likelihood(&self, r: f64) -> f64 {
        match self {
            PredictiveDistribution::Bernoulli { p } => {
                if r == 1.0 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
            PredictiveDistribution::GaussianMixture { weights, means, scales } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(means.iter().zip(scales))
                    .map(|(w, (m, s))| {
                        let z = (r - m) / s;
                        w.ln() - 0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    })
                    .collect();
                nncore::log_sum_exp(&terms)
            }
        }
    }
}

/// `(mean, variance)` of a predictive distribution in closed form.
pub fn mixture_moments(dist: &PredictiveDistribution) -> (f64, f64) {
    match dist {
        PredictiveDistribution::Bernoulli { p } => (*p, p * (1.0 - p)),
        PredictiveDistribution::GaussianMixture { weights, means, scales } => {
            let mean: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
            let second: f64 = weights
                .iter()
                .zip(means.iter().zip(scales))
                .map(|(w, (m, s))| w * (s * s + m * m))
                .sum();
            let var = second - mean * mean;
            (mean, if var < 0.0 { 0.0 } else { var })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardModelConfig {
    pub hidden_layers: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for RewardModelConfig {
    fn default() -> Self {
        RewardModelConfig {
            hidden_layers: vec![64, 64],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    head: RewardHead,
    network: Network,
    encoding: InputEncoding,
}

/// Anything that predicts the expected reward of (context, action) pairs.
pub trait RewardPredictor: Sync {
    fn expected_rewards(&self, pairs: &[(&[f64], Action)]) -> Result<Vec<f64>>;

    fn expected_reward(&self, context: &[f64], action: &Action) -> Result<f64> {
        Ok(self.expected_rewards(&[(context, *action)])?[0])
    }
}

pub fn fit_reward_model(data: &LoggedDataset, head: RewardHead, config: &RewardModelConfig, seed: u64) -> Result<RewardModel> {
    let binary = rewards_are_binary(data);
    let loss = match head {
        RewardHead::Bernoulli if binary => Loss::BernoulliLogit,
        RewardHead::Mdn { components } if !binary && components >= 1 => Loss::MdnNll,
        _ => {
            return Err(Error::invalid(format!(
                "reward head {head:?} does not match {} rewards",
                if binary { "binary" } else { "continuous" }
            )))
        }
    };
    let encoding = InputEncoding::for_dataset(data);
    let pairs: Vec<(&[f64], Action)> = data
        .examples()
        .iter()
        .map(|e| (e.context.as_slice(), e.action))
        .collect();
    let inputs = encoding.encode_batch(&pairs)?;
    let rewards: Vec<f64> = data.examples().iter().map(|e| e.reward).collect();
    let net_head = match head {
        RewardHead::Bernoulli => Head::Logit { outputs: 1 },
        RewardHead::Mdn { components } => Head::Mdn { components },
    };
    let spec = NetworkSpec::new(
        encoding.input_dim(),
        config.hidden_layers.clone(),
        net_head,
        rng::derive_seed(seed, "reward-init", 0),
    )?;
    let network = nncore::train(
        spec,
        &inputs,
        &Matrix::column(&rewards),
        loss,
        &config.train,
        rng::derive_seed(seed, "reward-shuffle", 0),
    )?;
    Ok(RewardModel { head, network, encoding })
}

impl RewardModel {
    pub fn from_parts(head: RewardHead, network: Network, encoding: InputEncoding) -> Result<Self> {
        let expected = match head {
            RewardHead::Bernoulli => Head::Logit { outputs: 1 },
            RewardHead::Mdn { components } => Head::Mdn { components },
        };
        if network.spec().head != expected || network.spec().input_dim != encoding.input_dim() {
            return Err(Error::invalid("network does not match head/encoding"));
        }
        Ok(RewardModel { head, network, encoding })
    }

    pub fn head(&self) -> RewardHead {
        self.head
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn encoding(&self) -> &InputEncoding {
        &self.encoding
    }

    fn distribution_from_output(&self, out: &[f64]) -> PredictiveDistribution {
        match self.head {
            RewardHead::Bernoulli => PredictiveDistribution::Bernoulli {
                p: sigmoid(out[0]).clamp(BERNOULLI_CLIP, 1.0 - BERNOULLI_CLIP),
            },
            RewardHead::Mdn { .. } => {
                let (weights, means, scales) = mdn_params(out);
                PredictiveDistribution::GaussianMixture { weights, means, scales }
            }
        }
    }

    pub fn predict_distribution(&self, context: &[f64], action: &Action) -> Result<PredictiveDistribution> {
        Ok(self.predict_batch(&[(context, *action)])?.remove(0))
    }

    pub fn predict_batch(&self, pairs: &[(&[f64], Action)]) -> Result<Vec<PredictiveDistribution>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.encoding.encode_batch(pairs)?;
        let out = self.network.forward_batch(&x)?;
        Ok(out.iter_rows().map(|r| self.distribution_from_output(r)).collect())
    }

    /// `(mean, variance)` per pair.
    pub fn moments_batch(&self, pairs: &[(&[f64], Action)]) -> Result<Vec<(f64, f64)>> {
        Ok(self.predict_batch(pairs)?.iter().map(mixture_moments).collect())
    }

    pub fn to_artifact(&self, prefix: &str, a: &mut Artifact) {
        match self.head {
            RewardHead::Bernoulli => a.set(format!("{prefix}head"), "bernoulli"),
            RewardHead::Mdn { components } => a.set(format!("{prefix}head"), format!("mdn:{components}")),
        }
        match &self.encoding {
            InputEncoding::OneHot { context_dim, actions } => {
                a.set(format!("{prefix}encoding"), "onehot");
                a.set(format!("{prefix}context_dim"), context_dim);
                a.set(format!("{prefix}actions"), actions);
            }
            InputEncoding::Scalar {
                context_dim,
                action_mean,
                action_scale,
            } => {
                a.set(format!("{prefix}encoding"), "scalar");
                a.set(format!("{prefix}context_dim"), context_dim);
                a.set_f64(format!("{prefix}action_mean"), *action_mean);
                a.set_f64(format!("{prefix}action_scale"), *action_scale);
            }
        }
        a.put_network(&format!("{prefix}net."), &self.network);
    }

    pub fn from_artifact(prefix: &str, a: &Artifact) -> Result<Self> {
        let head_raw = a.get(&format!("{prefix}head"))?;
        let head = match head_raw.split_once(':') {
            None if head_raw == "bernoulli" => RewardHead::Bernoulli,
            Some(("mdn", k)) => RewardHead::Mdn {
                components: k
                    .parse()
                    .map_err(|_| Error::Artifact(format!("bad head `{head_raw}`")))?,
            },
            _ => return Err(Error::Artifact(format!("bad head `{head_raw}`"))),
        };
        let context_dim = a.get_parsed(&format!("{prefix}context_dim"))?;
        let encoding = match a.get(&format!("{prefix}encoding"))? {
            "onehot" => InputEncoding::OneHot {
                context_dim,
                actions: a.get_parsed(&format!("{prefix}actions"))?,
            },
            "scalar" => InputEncoding::Scalar {
                context_dim,
                action_mean: a.get_parsed(&format!("{prefix}action_mean"))?,
                action_scale: a.get_parsed(&format!("{prefix}action_scale"))?,
            },
            other => return Err(Error::Artifact(format!("unknown encoding `{other}`"))),
        };
        RewardModel::from_parts(head, a.take_network(&format!("{prefix}net."))?, encoding)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut a = Artifact::new();
        self.to_artifact("", &mut a);
        a.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_artifact("", &Artifact::load(path)?)
    }
}

impl RewardPredictor for RewardModel {
    fn expected_rewards(&self, pairs: &[(&[f64], Action)]) -> Result<Vec<f64>> {
        Ok(self.moments_batch(pairs)?.into_iter().map(|(m, _)| m).collect())
    }
}

/// Exact reward table `table[context_id][action]`, keyed on `context[0]`.
/// Used as a known-correct model in estimator checks.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularReward {
    pub table: Vec<Vec<f64>>,
}

impl RewardPredictor for TabularReward {
    fn expected_rewards(&self, pairs: &[(&[f64], Action)]) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|(ctx, a)| {
                let c = ctx[0] as usize;
                match a {
                    Action::Discrete(a) => self
                        .table
                        .get(c)
                        .and_then(|row| row.get(*a))
                        .copied()
                        .ok_or_else(|| Error::invalid(format!("no table entry for ({c}, {a})"))),
                    Action::Continuous(_) => Err(Error::invalid("tabular reward needs discrete actions")),
                }
            })
            .collect()
    }
}
