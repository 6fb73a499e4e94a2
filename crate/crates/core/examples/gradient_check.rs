//! Compare backprop gradients with central finite differences for every loss.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use ope_hardness::nncore::{Head, Loss, Matrix, Network, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn case(loss: Loss, seed: u64) -> ope_hardness::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_dim = rng.gen_range(1..5);
    let hidden: Vec<usize> = (0..rng.gen_range(1..3)).map(|_| rng.gen_range(2..6)).collect();
    let head = match loss {
        Loss::SquaredError => Head::Linear { outputs: 2 },
        Loss::BernoulliLogit => Head::Logit { outputs: 1 },
        Loss::CategoricalLogit => Head::Logit { outputs: 3 },
        Loss::GaussianNll => Head::Linear { outputs: 2 },
        Loss::MdnNll => Head::Mdn { components: 3 },
    };
    // random biases too: zero biases put dead-layer rows exactly on a ReLU kink
    let spec = NetworkSpec::new(input_dim, hidden, head, seed)?;
    let params = (0..spec.parameter_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let net = Network::from_parameters(spec, params)?;
    let rows = 4;
    let x: Vec<f64> = (0..rows * input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = match loss {
        Loss::SquaredError => (0..rows * 2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        Loss::BernoulliLogit => (0..rows).map(|_| rng.gen_range(0..2) as f64).collect(),
        Loss::CategoricalLogit => (0..rows).map(|_| rng.gen_range(0..3) as f64).collect(),
        _ => (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    let x = Matrix::from_vec(rows, input_dim, x)?;
    let y = Matrix::from_vec(rows, y.len() / rows, y)?;
    let (_, grad) = net.loss_and_gradient(&x, &y, loss)?;

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, &g) in grad.iter().enumerate() {
        let mut plus = net.parameters().to_vec();
        let mut minus = plus.clone();
        plus[k] += h;
        minus[k] -= h;
        let lp = Network::from_parameters(net.spec().clone(), plus)?.loss(&x, &y, loss)?;
        let lm = Network::from_parameters(net.spec().clone(), minus)?.loss(&x, &y, loss)?;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-3));
    }
    Ok(worst)
}

fn main() -> ope_hardness::Result<()> {
    for loss in [Loss::SquaredError, Loss::BernoulliLogit, Loss::CategoricalLogit, Loss::GaussianNll, Loss::MdnNll] {
        let worst = (0..20).map(|s| case(loss, s)).collect::<ope_hardness::Result<Vec<_>>>()?;
        let max = worst.iter().cloned().fold(0.0, f64::max);
        println!("{loss:?}: worst relative error over 20 networks = {max:.2e}");
    }
    Ok(())
}
