#![allow(dead_code)]

use std::path::PathBuf;

use ope_hardness::dataset::{Action, LoggedDataset, LoggedExample, Task};
use ope_hardness::nncore::{Head, Loss, Matrix, Network, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("ope-hardness-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// A finite tabular bandit: context distribution, behavior and target
/// action tables, and deterministic rewards.
#[derive(Debug, Clone)]
pub struct Bandit {
    pub px: Vec<f64>,
    pub pb: Vec<Vec<f64>>,
    pub pe: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize, uniform_mix: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-9f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|r| (1.0 - uniform_mix) * r / s + uniform_mix / k as f64).collect()
}

impl Bandit {
    /// Random bandit with at most 5 contexts and 5 actions. Context and
    /// behavior probabilities are mixed with uniform so every cell is logged.
    pub fn random(seed: u64) -> Bandit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nc = rng.gen_range(1..=5);
        let k = rng.gen_range(2..=5);
        Bandit {
            px: random_simplex(&mut rng, nc, 0.5),
            pb: (0..nc).map(|_| random_simplex(&mut rng, k, 0.5)).collect(),
            pe: (0..nc).map(|_| random_simplex(&mut rng, k, 0.0)).collect(),
            rewards: (0..nc).map(|_| (0..k).map(|_| rng.gen_range(0.0..1.0)).collect()).collect(),
        }
    }

    pub fn actions(&self) -> usize {
        self.rewards[0].len()
    }

    /// V(pi_e) by enumerating every (context, action) cell.
    pub fn exact_value(&self) -> f64 {
        let mut v = 0.0;
        for (c, p) in self.px.iter().enumerate() {
            for (a, pe) in self.pe[c].iter().enumerate() {
                v += p * pe * self.rewards[c][a];
            }
        }
        v
    }

    pub fn log(&self, n: usize, seed: u64, with_propensities: bool) -> LoggedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng, p: &[f64]| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, q) in p.iter().enumerate() {
                acc += q;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        };
        let examples = (0..n)
            .map(|i| {
                let c = draw(&mut rng, &self.px);
                let a = draw(&mut rng, &self.pb[c]);
                LoggedExample {
                    context: vec![c as f64],
                    action: Action::Discrete(a),
                    reward: self.rewards[c][a],
                    logged_propensity: with_propensities.then_some(self.pb[c][a]),
                    source_row: Some(i),
                }
            })
            .collect();
        LoggedDataset::new(examples, Task::Classification { classes: self.actions() }, "tabular oracle").unwrap()
    }

    /// Per-cell mean of logged rewards; unobserved cells fall back to 0.
    pub fn empirical_table(&self, data: &LoggedDataset) -> Vec<Vec<f64>> {
        let k = self.actions();
        let mut sum = vec![vec![0.0; k]; self.px.len()];
        let mut cnt = vec![vec![0usize; k]; self.px.len()];
        for e in data.examples() {
            let c = e.context[0] as usize;
            let Action::Discrete(a) = e.action else { unreachable!() };
            sum[c][a] += e.reward;
            cnt[c][a] += 1;
        }
        sum.iter()
            .zip(&cnt)
            .map(|(s, n)| s.iter().zip(n).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect())
            .collect()
    }
}

/// Worst relative error between backprop and central differences over all
/// parameters of one random network.
pub fn gradient_error(loss: Loss, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_dim = rng.gen_range(1..=4);
    let hidden: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(2..=6)).collect();
    let (head, target_cols) = match loss {
        Loss::SquaredError => (Head::Linear { outputs: 2 }, 2),
        Loss::BernoulliLogit => (Head::Logit { outputs: 1 }, 1),
        Loss::CategoricalLogit => (Head::Logit { outputs: 3 }, 1),
        Loss::GaussianNll => (Head::Linear { outputs: 2 }, 1),
        Loss::MdnNll => (Head::Mdn { components: 3 }, 1),
    };
    let spec = NetworkSpec::new(input_dim, hidden, head, seed).unwrap();
    // every parameter random, so no ReLU sits exactly on its kink
    let params = (0..spec.parameter_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let net = Network::from_parameters(spec, params).unwrap();
    let rows = 5;
    let x = Matrix::from_vec(rows, input_dim, (0..rows * input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let y: Vec<f64> = (0..rows * target_cols)
        .map(|_| match loss {
            Loss::BernoulliLogit => rng.gen_range(0..2) as f64,
            Loss::CategoricalLogit => rng.gen_range(0..3) as f64,
            _ => rng.gen_range(-1.0..1.0),
        })
        .collect();
    let y = Matrix::from_vec(rows, target_cols, y).unwrap();
    let (_, grad) = net.loss_and_gradient(&x, &y, loss).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, g) in grad.iter().enumerate() {
        let at = |delta: f64| {
            let mut p = net.parameters().to_vec();
            p[k] += delta;
            Network::from_parameters(net.spec().clone(), p).unwrap().loss(&x, &y, loss).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let denom = g.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((g - fd).abs() / denom);
    }
    worst
}

/// Binary task with P(y = 1 | x) = sigmoid(w·x), logged by a uniform behavior
/// policy; reward is 1 when the action equals the label.
pub fn synthetic_bandit(n: usize, seed: u64) -> LoggedDataset {
    let w = [1.0, -0.5, 0.8, 0.3];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..4).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            let y = usize::from(rng.gen::<f64>() < 1.0 / (1.0 + (-z).exp()));
            let a = rng.gen_range(0..2);
            LoggedExample {
                context: x,
                action: Action::Discrete(a),
                reward: f64::from(u8::from(a == y)),
                logged_propensity: Some(0.5),
                source_row: Some(i),
            }
        })
        .collect();
    LoggedDataset::new(examples, Task::Classification { classes: 2 }, "synthetic").unwrap()
}

/// Fixed probe contexts for the synthetic task, paired with both actions.
pub fn synthetic_probes(n: usize) -> Vec<(Vec<f64>, Action)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    (0..n)
        .flat_map(|_| {
            let x: Vec<f64> = (0..4).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            [(x.clone(), Action::Discrete(0)), (x, Action::Discrete(1))]
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
