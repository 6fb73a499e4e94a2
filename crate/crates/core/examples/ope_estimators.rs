//! Run the estimator suite on the breast-cancer bandit and compare each
//! estimate with the target policy's true value.

use std::path::PathBuf;

use ope_hardness::dataset::{load_supervised_csv, make_logged_dataset, TaskKind};
use ope_hardness::ope::{estimate_behavior_policy, mse_residual, instance_residuals, run_estimator, sample_actions, Estimator, EstimatorConfig, OpeInputs};
use ope_hardness::policies::{fit_linear_policy, fit_mlp_policy, mlp_policy_spec};
use ope_hardness::reward_model::{RewardHead, RewardModelConfig};
use ope_hardness::nncore::TrainConfig;
use ope_hardness::uncertainty::fit_ensemble;

fn main() -> ope_hardness::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/breast_cancer.csv");
    let data = load_supervised_csv(&path, TaskKind::Classification)?;
    let behavior = fit_linear_policy(&data, 0.3, 1)?;
    // hide the logged propensities so IPW-style estimators use a fitted behavior model
    let logged = make_logged_dataset(&data, &behavior, 2)?.without_propensities();
    let behavior_hat = estimate_behavior_policy(&logged, 3)?;

    let target = fit_mlp_policy(&data, 0.1, mlp_policy_spec(&data, &[64, 64], 4)?, &TrainConfig::default(), 5)?;
    let contexts: Vec<&[f64]> = (0..data.len()).map(|i| data.context(i)).collect();
    let actions = sample_actions(&target, &contexts, 6)?;
    let truth: Vec<f64> = actions.iter().enumerate().map(|(i, a)| data.reward(i, a)).collect::<Result<_, _>>()?;
    println!("true value {:.4}", truth.iter().sum::<f64>() / truth.len() as f64);

    let ensemble = fit_ensemble(&logged, RewardHead::Bernoulli, 5, &RewardModelConfig::default(), 7)?;
    let inputs = OpeInputs {
        data: &logged,
        target: &target,
        behavior: Some(&behavior_hat),
        model: Some(&ensemble),
        config: EstimatorConfig::default(),
        seed: 8,
    };
    for e in Estimator::ALL {
        let est = run_estimator(e, &inputs)?;
        let mse = mse_residual(&instance_residuals(&est, &truth)?)?;
        println!("{:<11} value {:.4}  per-instance mse {:.4}", e.as_str(), est.value, mse);
    }
    Ok(())
}
