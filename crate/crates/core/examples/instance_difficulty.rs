//! Instance-level difficulty on the breast-cancer fixture.
//!
//! ```bash
//! cargo run --release --example instance_difficulty -- [breast_cancer|diabetes] [key=value ...]
//! ```
//!
//! Any configuration key can be overridden, e.g. `seeds=0..2 members=5 out_dir=/tmp/run`.

use std::path::PathBuf;

use ope_hardness::experiments::{emit_report, run_instance_difficulty, ExperimentConfig};

fn main() -> ope_hardness::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let mut cfg = match args.first().map(String::as_str) {
        Some("diabetes") => ExperimentConfig::diabetes(data.join("diabetes.csv")),
        Some("breast_cancer") | None => ExperimentConfig::breast_cancer(data.join("breast_cancer.csv")),
        Some(other) => return Err(ope_hardness::Error::Config(format!("unknown fixture `{other}`"))),
    };
    cfg.out_dir = "out/instance_difficulty".into();
    for kv in args.iter().skip(1) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ope_hardness::Error::Config(format!("expected key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }

    let started = std::time::Instant::now();
    let run = run_instance_difficulty(&cfg)?;
    println!("{} seeds on {} in {:.1?}", run.seeds.len(), run.dataset, started.elapsed());
    println!("{:<12} {:<12} {:>8} {:>8}", "estimator", "mode", "mean_r", "std_r");
    for row in &run.summary {
        println!("{:<12} {:<12} {:>8.3} {:>8.3}", row.estimator, row.mode.to_string(), row.mean_r, row.std_r);
    }
    let files = emit_report(&run.report, &cfg.out_dir)?;
    println!("wrote {} files to {}", files.len(), cfg.out_dir.display());
    Ok(())
}
