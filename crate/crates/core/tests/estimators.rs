mod common;

use common::Bandit;
use ope_hardness::ope::{run_estimator, shrink_weight, Estimator, EstimatorConfig, OpeInputs};
use ope_hardness::policies::Policy;
use ope_hardness::reward_model::TabularReward;
use proptest::prelude::*;

fn estimate(b: &Bandit, e: Estimator, n: usize, seed: u64) -> f64 {
    let data = b.log(n, seed, true);
    let target = Policy::tabular(b.pe.clone()).unwrap();
    let model = TabularReward { table: b.empirical_table(&data) };
    let inputs = OpeInputs {
        data: &data,
        target: &target,
        behavior: None,
        model: Some(&model),
        config: EstimatorConfig::default(),
        seed,
    };
    run_estimator(e, &inputs).unwrap().value
}

#[test]
fn unbiased_estimators_agree_with_enumeration() {
    for bandit_seed in [3, 17] {
        let b = Bandit::random(bandit_seed);
        let truth = b.exact_value();
        for e in [Estimator::Ipw, Estimator::Snipw, Estimator::Dm, Estimator::Dr, Estimator::Sndr] {
            let vals: Vec<f64> = (0..100).map(|s| estimate(&b, e, 2000, 10_000 + s)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
            let se = sd / (vals.len() as f64).sqrt();
            assert!((m - truth).abs() <= 3.0 * se + 1e-9, "{e} bandit {bandit_seed}: mean {m} vs {truth} (se {se})");
        }
    }
}

#[test]
fn dr_varies_less_than_ipw_with_a_good_model() {
    let b = Bandit::random(5);
    let spread = |e| {
        let v: Vec<f64> = (0..200).map(|s| estimate(&b, e, 500, s)).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
    };
    assert!(spread(Estimator::Dr) <= spread(Estimator::Ipw));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn on_policy_weights_collapse_to_the_logged_mean(seed in 0u64..10_000, c in -1.0f64..2.0) {
        let mut b = Bandit::random(seed);
        b.pe = b.pb.clone();
        let data = b.log(300, seed, true);
        let target = Policy::tabular(b.pe.clone()).unwrap();
        let constant = TabularReward { table: vec![vec![c; b.actions()]; b.px.len()] };
        let inputs = OpeInputs {
            data: &data,
            target: &target,
            behavior: None,
            model: Some(&constant),
            config: EstimatorConfig::default(),
            seed,
        };
        let mean = data.mean_reward();
        for e in [Estimator::Ipw, Estimator::Snipw, Estimator::Dr, Estimator::Sndr] {
            let v = run_estimator(e, &inputs).unwrap().value;
            prop_assert!((v - mean).abs() < 1e-9, "{} gave {} vs {}", e, v, mean);
        }
        prop_assert!((run_estimator(Estimator::Dm, &inputs).unwrap().value - c).abs() < 1e-9);
    }

    #[test]
    fn deterministic_on_policy_dr_and_replay_collapse(seed in 0u64..10_000) {
        let mut b = Bandit::random(seed);
        let k = b.actions();
        b.pb = (0..b.px.len()).map(|c| (0..k).map(|a| f64::from(u8::from(a == (c + seed as usize) % k))).collect()).collect();
        b.pe = b.pb.clone();
        let data = b.log(200, seed, true);
        let target = Policy::tabular(b.pe.clone()).unwrap();
        let model = TabularReward { table: b.rewards.iter().map(|r| r.iter().map(|x| 1.0 - x).collect()).collect() };
        let inputs = OpeInputs {
            data: &data,
            target: &target,
            behavior: None,
            model: Some(&model),
            config: EstimatorConfig::default(),
            seed,
        };
        let mean = data.mean_reward();
        for e in [Estimator::Dr, Estimator::Sndr, Estimator::Rm] {
            let v = run_estimator(e, &inputs).unwrap().value;
            prop_assert!((v - mean).abs() < 1e-9, "{} gave {} vs {}", e, v, mean);
        }
    }

    #[test]
    fn shrunk_weights_are_bounded(w in 0.0f64..1e4, lambda in 1e-3f64..1e3) {
        let s = shrink_weight(w, lambda);
        prop_assert!(s >= 0.0);
        prop_assert!(s <= w + 1e-12);
        prop_assert!(s <= lambda.sqrt() / 2.0 + 1e-12);
    }
}
