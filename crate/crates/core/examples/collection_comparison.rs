//! Uncertainty-guided vs uniform recruitment after sculpting the breast-cancer
//! fixture (rows in the top 60% of "worst concave points" are held back).
//!
//! ```bash
//! cargo run --release --example collection_comparison -- [key=value ...]
//! ```

use std::path::PathBuf;

use ope_hardness::experiments::{emit_report, run_collection_comparison, ExperimentConfig, Strategy};

fn main() -> ope_hardness::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/breast_cancer.csv");
    let mut cfg = ExperimentConfig::breast_cancer(data);
    cfg.out_dir = "out/collection_comparison".into();
    for kv in std::env::args().skip(1) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ope_hardness::Error::Config(format!("expected key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }

    let started = std::time::Instant::now();
    let run = run_collection_comparison(&cfg)?;
    println!("budgets {:?} ({:.1?})", run.budgets, started.elapsed());
    for &seed in &cfg.seeds {
        let uniform = run.curve(seed, Strategy::Uniform);
        let guided = run.curve(seed, Strategy::Guided);
        let wins = uniform
            .iter()
            .zip(&guided)
            .skip(1)
            .take(run.budgets.len() - 1)
            .filter(|(u, g)| g.mean_residual <= u.mean_residual)
            .count();
        let last = (uniform.last().unwrap().mean_residual, guided.last().unwrap().mean_residual);
        println!(
            "seed {seed}: guided <= uniform at {wins}/{} intermediate budget steps, full budget {:.6} vs {:.6}",
            run.budgets.len() - 1,
            last.0,
            last.1
        );
    }
    emit_report(&run.report, &cfg.out_dir)?;
    Ok(())
}
