//! Behavior and target policies: fitting, scoring and sampling.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::artifact::Artifact;
use crate::dataset::{Action, SupervisedDataset, Task};
use crate::error::{Error, Result};
use crate::nncore::{self, softmax, Head, Loss, Matrix, Network, NetworkSpec, TrainConfig};
use crate::rng;

/// Floor applied to categorical action probabilities before renormalizing.
pub const PROBABILITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    LinearGaussian,
    LinearCategorical,
    MlpGaussian,
    MlpCategorical,
    /// Explicit probability table indexed by the integer id in `context[0]`.
    Tabular,
}

impl PolicyKind {
    fn as_str(self) -> &'static str {
        match self {
            PolicyKind::LinearGaussian => "linear_gaussian",
            PolicyKind::LinearCategorical => "linear_categorical",
            PolicyKind::MlpGaussian => "mlp_gaussian",
            PolicyKind::MlpCategorical => "mlp_categorical",
            PolicyKind::Tabular => "tabular",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "linear_gaussian" => PolicyKind::LinearGaussian,
            "linear_categorical" => PolicyKind::LinearCategorical,
            "mlp_gaussian" => PolicyKind::MlpGaussian,
            "mlp_categorical" => PolicyKind::MlpCategorical,
            "tabular" => PolicyKind::Tabular,
            _ => return Err(Error::Artifact(format!("unknown policy kind `{s}`"))),
        })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Categorical(Network),
    /// Network predicts the standardized label; `scale` is the homoscedastic
    /// predictive standard deviation in raw label units.
    Gaussian {
        net: Network,
        label_mean: f64,
        label_scale: f64,
        scale: f64,
    },
    Tabular(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    kind: PolicyKind,
    model: Model,
    noise_level: f64,
    context_dim: usize,
}

/// Training settings used for linear policies (the model is convex, so a
/// higher learning rate than the network default is safe).
pub fn linear_policy_config() -> TrainConfig {
    TrainConfig {
        epochs: 300,
        learning_rate: 1e-2,
        batch_size: 64,
        ..TrainConfig::default()
    }
}

/// Labels perturbed per the noise rule: classification labels flip to a
/// uniformly random other class with probability `noise` (clipped to [0, 1]);
/// regression labels get Gaussian noise with variance `noise * Var(y)`.
pub fn inject_label_noise(data: &SupervisedDataset, noise: f64, seed: u64) -> Result<Vec<f64>> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("label noise must be non-negative"));
    }
    let mut stream = rng::stream(seed);
    Ok(match data.task() {
        Task::Classification { classes } => {
            let p = noise.min(1.0);
            data.labels()
                .iter()
                .map(|&y| {
                    if p > 0.0 && stream.gen::<f64>() < p {
                        let shift = stream.gen_range(1..classes);
                        ((y as usize + shift) % classes) as f64
                    } else {
                        y
                    }
                })
                .collect()
        }
        Task::Regression => {
            let sd = (noise * data.label_variance()).sqrt();
            data.labels()
                .iter()
                .map(|&y| {
                    if sd > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut stream);
                        y + sd * z
                    } else {
                        y
                    }
                })
                .collect()
        }
    })
}

fn fit_network_policy(
    data: &SupervisedDataset,
    label_noise: f64,
    spec: NetworkSpec,
    config: &TrainConfig,
    seed: u64,
    kind: PolicyKind,
) -> Result<Policy> {
    if spec.input_dim != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: spec.input_dim,
        });
    }
    let labels = inject_label_noise(data, label_noise, rng::derive_seed(seed, "label-noise", 0))?;
    let shuffle_seed = rng::derive_seed(seed, "policy-train", 0);
    let model = match data.task() {
        Task::Classification { classes } => {
            if spec.head != (Head::Logit { outputs: classes }) {
                return Err(Error::invalid(format!(
                    "categorical policy needs a logit head with {classes} outputs"
                )));
            }
            let net = nncore::train(
                spec,
                data.features(),
                &Matrix::column(&labels),
                Loss::CategoricalLogit,
                config,
                shuffle_seed,
            )?;
            Model::Categorical(net)
        }
        Task::Regression => {
            if spec.head != (Head::Linear { outputs: 1 }) {
                return Err(Error::invalid("Gaussian policy needs a single linear output"));
            }
            let n = labels.len() as f64;
            let label_mean = labels.iter().sum::<f64>() / n;
            let var = labels.iter().map(|y| (y - label_mean).powi(2)).sum::<f64>() / n;
            let label_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
            let z: Vec<f64> = labels.iter().map(|y| (y - label_mean) / label_scale).collect();
            let targets = Matrix::column(&z);
            let net = nncore::train(spec, data.features(), &targets, Loss::SquaredError, config, shuffle_seed)?;
            // homoscedastic Gaussian: the NLL-optimal scale is the residual RMS
            let out = net.forward_batch(data.features())?;
            let mse = out
                .as_slice()
                .iter()
                .zip(&z)
                .map(|(o, t)| (o - t).powi(2))
                .sum::<f64>()
                / n;
            Model::Gaussian {
                net,
                label_mean,
                label_scale,
                scale: (mse.sqrt() * label_scale).max(1e-6 * label_scale),
            }
        }
    };
    Ok(Policy {
        kind,
        model,
        noise_level: label_noise,
        context_dim: data.dim(),
    })
}

fn head_for(task: Task) -> Head {
    match task {
        Task::Classification { classes } => Head::Logit { outputs: classes },
        Task::Regression => Head::Linear { outputs: 1 },
    }
}

/// Linear policy (multinomial logistic or homoscedastic Gaussian) fitted on
/// noise-perturbed labels.
pub fn fit_linear_policy(data: &SupervisedDataset, label_noise: f64, seed: u64) -> Result<Policy> {
    let spec = NetworkSpec::new(data.dim(), vec![], head_for(data.task()), rng::derive_seed(seed, "policy-init", 0))?;
    let kind = match data.task() {
        Task::Classification { .. } => PolicyKind::LinearCategorical,
        Task::Regression => PolicyKind::LinearGaussian,
    };
    fit_network_policy(data, label_noise, spec, &linear_policy_config(), seed, kind)
}

/// Network spec for an MLP policy on `data` with the given hidden widths.
pub fn mlp_policy_spec(data: &SupervisedDataset, hidden: &[usize], seed: u64) -> Result<NetworkSpec> {
    NetworkSpec::new(data.dim(), hidden.to_vec(), head_for(data.task()), seed)
}

pub fn fit_mlp_policy(
    data: &SupervisedDataset,
    label_noise: f64,
    spec: NetworkSpec,
    config: &TrainConfig,
    seed: u64,
) -> Result<Policy> {
    let kind = match data.task() {
        Task::Classification { .. } => PolicyKind::MlpCategorical,
        Task::Regression => PolicyKind::MlpGaussian,
    };
    fit_network_policy(data, label_noise, spec, config, seed, kind)
}

fn gaussian_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

impl Policy {
    /// Tabular policy: `table[c]` is the action distribution for context id `c`.
    pub fn tabular(table: Vec<Vec<f64>>) -> Result<Self> {
        let k = table.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(Error::invalid("tabular policy needs at least one context and action"));
        }
        for (c, row) in table.iter().enumerate() {
            if row.len() != k || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::invalid(format!("row {c} is not a distribution over {k} actions")));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("row {c} does not sum to 1")));
            }
        }
        Ok(Policy {
            kind: PolicyKind::Tabular,
            model: Model::Tabular(table),
            noise_level: 0.0,
            context_dim: 1,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self.model, Model::Gaussian { .. })
    }

    /// Number of discrete actions, `None` for Gaussian policies.
    pub fn num_actions(&self) -> Option<usize> {
        match &self.model {
            Model::Categorical(net) => Some(net.spec().head.output_dim()),
            Model::Tabular(t) => Some(t[0].len()),
            Model::Gaussian { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        format!("{}(noise={})", self.kind, self.noise_level)
    }

    fn check_context(&self, context: &[f64]) -> Result<()> {
        if context.len() != self.context_dim {
            return Err(Error::DimensionMismatch {
                expected: self.context_dim,
                got: context.len(),
            });
        }
        Ok(())
    }

    /// Action distribution for discrete policies (floored for categorical kinds).
    pub fn probabilities(&self, context: &[f64]) -> Result<Vec<f64>> {
        self.check_context(context)?;
        match &self.model {
            Model::Categorical(net) => Ok(floor_probabilities(softmax(&net.forward(context)?))),
            Model::Tabular(table) => {
                let c = context[0];
                if c < 0.0 || c.fract() != 0.0 || c as usize >= table.len() {
                    return Err(Error::invalid(format!("context id {c} outside the table")));
                }
                Ok(table[c as usize].clone())
            }
            Model::Gaussian { .. } => Err(Error::invalid("Gaussian policy has no probability vector")),
        }
    }

    /// Predictive mean and standard deviation for Gaussian policies.
    pub fn gaussian(&self, context: &[f64]) -> Result<(f64, f64)> {
        self.check_context(context)?;
        match &self.model {
            Model::Gaussian {
                net,
                label_mean,
                label_scale,
                scale,
            } => Ok((label_mean + label_scale * net.forward(context)?[0], *scale)),
            _ => Err(Error::invalid("discrete policy has no Gaussian parameters")),
        }
    }

    /// Batched [`Policy::probabilities`].
    pub fn probabilities_batch(&self, contexts: &Matrix) -> Result<Vec<Vec<f64>>> {
        match &self.model {
            Model::Categorical(net) => {
                if contexts.cols() != self.context_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.context_dim,
                        got: contexts.cols(),
                    });
                }
                let out = net.forward_batch(contexts)?;
                Ok(out.iter_rows().map(|r| floor_probabilities(softmax(r))).collect())
            }
            _ => contexts.iter_rows().map(|c| self.probabilities(c)).collect(),
        }
    }

    /// Probability mass (discrete) or density (Gaussian) of `action` at `context`.
    pub fn action_probability(&self, context: &[f64], action: &Action) -> Result<f64> {
        match (action, self.is_discrete()) {
            (Action::Discrete(a), true) => {
                let p = self.probabilities(context)?;
                p.get(*a)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("action {a} outside [0, {})", p.len())))
            }
            (Action::Continuous(a), false) => {
                let (m, s) = self.gaussian(context)?;
                Ok(gaussian_pdf(*a, m, s))
            }
            _ => Err(Error::invalid("action kind does not match policy")),
        }
    }

    /// Draw an action: inverse CDF over the probability vector, or a Gaussian draw.
    pub fn sample_action<R: Rng + ?Sized>(&self, context: &[f64], stream: &mut R) -> Result<Action> {
        if self.is_discrete() {
            let p = self.probabilities(context)?;
            Ok(Action::Discrete(inverse_cdf(&p, stream.gen::<f64>())))
        } else {
            let (m, s) = self.gaussian(context)?;
            let normal = Normal::new(m, s).map_err(|e| Error::invalid(e.to_string()))?;
            Ok(Action::Continuous(normal.sample(stream)))
        }
    }

    /// Most likely action (the mean for Gaussian policies).
    pub fn greedy_action(&self, context: &[f64]) -> Result<Action> {
        if self.is_discrete() {
            let p = self.probabilities(context)?;
            let best = p
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            Ok(Action::Discrete(best.0))
        } else {
            Ok(Action::Continuous(self.gaussian(context)?.0))
        }
    }

    /// Mean negative log-likelihood of the dataset labels under the policy.
    pub fn mean_nll(&self, data: &SupervisedDataset) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..data.len() {
            let action = match data.task() {
                Task::Classification { .. } => Action::Discrete(data.class_label(i)),
                Task::Regression => Action::Continuous(data.labels()[i]),
            };
            total -= self.action_probability(data.context(i), &action)?.ln();
        }
        Ok(total / data.len() as f64)
    }

    /// Fraction of rows where the greedy action equals the label.
    pub fn accuracy(&self, data: &SupervisedDataset) -> Result<f64> {
        let mut hits = 0usize;
        for i in 0..data.len() {
            if self.greedy_action(data.context(i))? == Action::Discrete(data.class_label(i)) {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn to_artifact(&self) -> Artifact {
        let mut a = Artifact::new();
        a.set("kind", self.kind);
        a.set("context_dim", self.context_dim);
        a.set_f64("noise_level", self.noise_level);
        match &self.model {
            Model::Categorical(net) => a.put_network("net.", net),
            Model::Gaussian {
                net,
                label_mean,
                label_scale,
                scale,
            } => {
                a.put_network("net.", net);
                a.set_f64("label_mean", *label_mean);
                a.set_f64("label_scale", *label_scale);
                a.set_f64("scale", *scale);
            }
            Model::Tabular(t) => {
                a.set("table.rows", t.len());
                a.set_f64s("table.probs", &t.concat());
            }
        }
        a
    }

    pub fn from_artifact(a: &Artifact) -> Result<Self> {
        let kind = PolicyKind::parse(a.get("kind")?)?;
        let model = match kind {
            PolicyKind::LinearCategorical | PolicyKind::MlpCategorical => Model::Categorical(a.take_network("net.")?),
            PolicyKind::LinearGaussian | PolicyKind::MlpGaussian => Model::Gaussian {
                net: a.take_network("net.")?,
                label_mean: a.get_parsed("label_mean")?,
                label_scale: a.get_parsed("label_scale")?,
                scale: a.get_parsed("scale")?,
            },
            PolicyKind::Tabular => {
                let rows: usize = a.get_parsed("table.rows")?;
                let flat = a.get_f64s("table.probs")?;
                if rows == 0 || flat.len() % rows != 0 {
                    return Err(Error::Artifact("table shape mismatch".into()));
                }
                let table = flat.chunks(flat.len() / rows).map(<[f64]>::to_vec).collect();
                return Policy::tabular(table);
            }
        };
        Ok(Policy {
            kind,
            model,
            noise_level: a.get_parsed("noise_level")?,
            context_dim: a.get_parsed("context_dim")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_artifact().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_artifact(&Artifact::load(path)?)
    }
}

fn floor_probabilities(mut p: Vec<f64>) -> Vec<f64> {
    p.iter_mut().for_each(|v| *v = v.max(PROBABILITY_FLOOR));
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

fn inverse_cdf(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative total; fall back to the last supported action
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<f64>, task: Task) -> SupervisedDataset {
        let d = rows[0].len();
        SupervisedDataset::new(
            Matrix::from_rows(&rows).unwrap(),
            labels,
            task,
            (0..d).map(|j| format!("f{j}")).collect(),
        )
        .unwrap()
    }

    fn separable() -> SupervisedDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 39.0;
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            rows.push(vec![side * (0.5 + t), t - 0.5]);
            labels.push(if side > 0.0 { 1.0 } else { 0.0 });
        }
        dataset(rows, labels, Task::Classification { classes: 2 })
    }

    fn xor() -> SupervisedDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let (sx, sy) = [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)][i % 4];
            let r = 0.5 + 0.1 * (i / 4) as f64;
            rows.push(vec![sx * r, sy * r]);
            labels.push(if sx * sy > 0.0 { 1.0 } else { 0.0 });
        }
        dataset(rows, labels, Task::Classification { classes: 2 })
    }

    #[test]
    fn linear_policy_separates_separable_data() {
        let ds = separable();
        let p = fit_linear_policy(&ds, 0.0, 1).unwrap();
        assert_eq!(p.accuracy(&ds).unwrap(), 1.0);
        assert_eq!(p.kind(), PolicyKind::LinearCategorical);
    }

    #[test]
    fn linear_gaussian_recovers_slope() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![-2.0 + 4.0 * i as f64 / 99.0]).collect();
        let labels: Vec<f64> = rows.iter().map(|r| 3.0 * r[0]).collect();
        let ds = dataset(rows, labels, Task::Regression);
        let p = fit_linear_policy(&ds, 0.0, 2).unwrap();
        let at = |raw: f64| p.gaussian(&ds.standardization().apply(&[raw])).unwrap().0;
        let slope = (at(1.0) - at(-1.0)) / 2.0;
        assert!((slope - 3.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn label_noise_worsens_clean_likelihood() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let labels: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - r[1] + 0.1 * (r[0] * 7.0).sin()).collect();
        let ds = dataset(rows, labels, Task::Regression);
        let clean = fit_linear_policy(&ds, 0.0, 5).unwrap();
        let noisy = fit_linear_policy(&ds, 1.1, 5).unwrap();
        assert!(clean.mean_nll(&ds).unwrap() <= noisy.mean_nll(&ds).unwrap());
        assert_eq!(noisy.noise_level(), 1.1);
    }

    #[test]
    fn mlp_solves_xor_where_linear_cannot() {
        let ds = xor();
        let cfg = TrainConfig {
            epochs: 400,
            learning_rate: 1e-2,
            batch_size: 20,
            ..TrainConfig::default()
        };
        let spec = mlp_policy_spec(&ds, &[16, 16], 3).unwrap();
        let mlp = fit_mlp_policy(&ds, 0.0, spec, &cfg, 3).unwrap();
        let lin = fit_linear_policy(&ds, 0.0, 3).unwrap();
        assert_eq!(mlp.accuracy(&ds).unwrap(), 1.0);
        assert!(lin.accuracy(&ds).unwrap() < 1.0);
    }

    #[test]
    fn zero_epoch_mlp_is_its_initialization() {
        let ds = separable();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let spec = mlp_policy_spec(&ds, &[4], 9).unwrap();
        let a = fit_mlp_policy(&ds, 0.0, spec.clone(), &cfg, 1).unwrap();
        let b = fit_mlp_policy(&ds, 0.0, spec.clone(), &cfg, 1).unwrap();
        assert_eq!(a, b);
        let init = Network::init(spec).unwrap();
        let x = ds.context(0);
        assert_eq!(
            a.probabilities(x).unwrap(),
            floor_probabilities(softmax(&init.forward(x).unwrap()))
        );
    }

    #[test]
    fn tabular_uniform_probabilities() {
        let p = Policy::tabular(vec![vec![0.25; 4]]).unwrap();
        for a in 0..4 {
            assert_eq!(p.action_probability(&[0.0], &Action::Discrete(a)).unwrap(), 0.25);
        }
        assert!(p.action_probability(&[0.0, 1.0], &Action::Discrete(0)).is_err());
    }

    #[test]
    fn gaussian_density_at_mean() {
        assert!((gaussian_pdf(0.0, 0.0, 1.0) - 0.3989).abs() < 1e-4);
    }

    #[test]
    fn degenerate_tabular_always_samples_its_action() {
        let p = Policy::tabular(vec![vec![0.0, 0.0, 0.0, 1.0]]).unwrap();
        let mut s = rng::stream(0);
        for _ in 0..1000 {
            assert_eq!(p.sample_action(&[0.0], &mut s).unwrap(), Action::Discrete(3));
        }
    }

    #[test]
    fn uniform_sampling_frequency() {
        let p = Policy::tabular(vec![vec![0.5, 0.5]]).unwrap();
        let mut s = rng::stream(12);
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| p.sample_action(&[0.0], &mut s).unwrap() == Action::Discrete(0))
            .count();
        let se = (0.25 / n as f64).sqrt();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let p = Policy::tabular(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let draw = |seed| {
            let mut s = rng::stream(seed);
            (0..50).map(|_| p.sample_action(&[0.0], &mut s).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    #[test]
    fn categorical_probabilities_are_floored_and_normalized() {
        let ds = separable();
        let p = fit_linear_policy(&ds, 0.0, 1).unwrap();
        for i in 0..ds.len() {
            let probs = p.probabilities(ds.context(i)).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn artifact_round_trip_preserves_scores() {
        let ds = separable();
        let p = fit_linear_policy(&ds, 0.2, 7).unwrap();
        let back = Policy::from_artifact(&Artifact::parse(&p.to_artifact().to_text()).unwrap()).unwrap();
        assert_eq!(back, p);
        let t = Policy::tabular(vec![vec![0.1, 0.9], vec![0.6, 0.4]]).unwrap();
        let back = Policy::from_artifact(&Artifact::parse(&t.to_artifact().to_text()).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn classification_noise_flips_to_other_classes() {
        let ds = separable();
        let noisy = inject_label_noise(&ds, 1.0, 3).unwrap();
        assert!(noisy.iter().zip(ds.labels()).all(|(a, b)| a != b));
        assert_eq!(inject_label_noise(&ds, 0.0, 3).unwrap(), ds.labels());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn empirical_sampling_matches_table(weights in prop::collection::vec(0.01f64..1.0, 2..6), seed in any::<u64>()) {
            let s: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / s).collect();
            let p = Policy::tabular(vec![probs.clone()]).unwrap();
            let mut stream = rng::stream(seed);
            let n = 50_000;
            let mut counts = vec![0usize; probs.len()];
            for _ in 0..n {
                if let Action::Discrete(a) = p.sample_action(&[0.0], &mut stream).unwrap() {
                    counts[a] += 1;
                }
            }
            let tv: f64 = counts.iter().zip(&probs).map(|(c, q)| (*c as f64 / n as f64 - q).abs()).sum::<f64>() / 2.0;
            prop_assert!(tv < 0.02, "tv {}", tv);
        }

        #[test]
        fn scores_are_finite_and_normalized(ctx in prop::collection::vec(-5.0f64..5.0, 2)) {
            let ds = separable();
            let p = fit_linear_policy(&ds, 0.1, 0).unwrap();
            let probs = p.probabilities(&ctx).unwrap();
            prop_assert!(probs.iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
