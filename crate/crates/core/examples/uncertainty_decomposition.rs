//! Fit a mixture-density ensemble on logged diabetes data and split its
//! predictive variance into epistemic and aleatoric parts.

use std::path::PathBuf;

use ope_hardness::dataset::{load_supervised_csv, make_logged_dataset, TaskKind};
use ope_hardness::policies::fit_linear_policy;
use ope_hardness::reward_model::{RewardHead, RewardModelConfig};
use ope_hardness::uncertainty::{decompose_dataset, fit_ensemble};

fn quantiles(mut v: Vec<f64>) -> [f64; 3] {
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    [q(0.1), q(0.5), q(0.9)]
}

fn main() -> ope_hardness::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/diabetes.csv");
    let data = load_supervised_csv(&path, TaskKind::Regression)?;
    let behavior = fit_linear_policy(&data, 0.5, 1)?;
    let logged = make_logged_dataset(&data, &behavior, 2)?;

    let ensemble = fit_ensemble(&logged, RewardHead::Mdn { components: 3 }, 10, &RewardModelConfig::default(), 3)?;
    let pairs: Vec<_> = logged.examples().iter().map(|e| (e.context.as_slice(), e.action)).collect();
    let d = decompose_dataset(&ensemble, &pairs)?;

    let worst_gap = d.iter().map(|u| (u.v_total - u.v_ep - u.v_al).abs()).fold(0.0, f64::max);
    println!("{} logged pairs, max |v_total - v_ep - v_al| = {worst_gap:.2e}", d.len());
    for (name, v) in [
        ("v_ep", d.iter().map(|u| u.v_ep).collect::<Vec<_>>()),
        ("v_al", d.iter().map(|u| u.v_al).collect()),
    ] {
        let [lo, mid, hi] = quantiles(v);
        println!("{name}: p10 {lo:.4}  median {mid:.4}  p90 {hi:.4}");
    }
    Ok(())
}
