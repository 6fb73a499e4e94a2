//! Predicted vs realized residuals as the target policy gets noisier.
//!
//! ```bash
//! cargo run --release --example noise_sweep -- [breast_cancer|diabetes] [key=value ...]
//! ```

use std::path::PathBuf;

use ope_hardness::experiments::{emit_report, run_noise_sweep, ExperimentConfig};
use ope_hardness::ope::Estimator;

fn main() -> ope_hardness::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let mut cfg = match args.first().map(String::as_str) {
        Some("diabetes") => ExperimentConfig::diabetes(data.join("diabetes.csv")),
        _ => ExperimentConfig::breast_cancer(data.join("breast_cancer.csv")),
    };
    cfg.out_dir = "out/noise_sweep".into();
    for kv in args.iter().skip(1) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ope_hardness::Error::Config(format!("expected key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }

    let run = run_noise_sweep(&cfg)?;
    println!("{:>6} {:>12} {:>12}", "noise", "predicted", "realized");
    for &noise in &cfg.noise_levels {
        let dm: Vec<_> = run
            .points
            .iter()
            .filter(|p| p.estimator == Estimator::Dm && p.noise == noise)
            .collect();
        let n = dm.len() as f64;
        println!(
            "{noise:>6.1} {:>12.4} {:>12.4}",
            dm.iter().map(|p| p.predicted_mean_residual).sum::<f64>() / n,
            dm.iter().map(|p| p.realized_mean_residual).sum::<f64>() / n
        );
    }
    emit_report(&run.report, &cfg.out_dir)?;
    Ok(())
}
