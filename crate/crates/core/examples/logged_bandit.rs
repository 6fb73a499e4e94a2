//! Turn the breast-cancer fixture into a logged bandit dataset.
//!
//! A linear behavior policy is fit on labels with 30% of them flipped, one
//! action is logged per row and rewarded 1 when it matches the true label.

use std::path::PathBuf;

use ope_hardness::dataset::{load_supervised_csv, make_logged_dataset, TaskKind};
use ope_hardness::policies::fit_linear_policy;

fn main() -> ope_hardness::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/breast_cancer.csv");
    let data = load_supervised_csv(&path, TaskKind::Classification)?;
    println!("{} rows, {} features", data.len(), data.dim());

    let behavior = fit_linear_policy(&data, 0.3, 7)?;
    println!("behavior: {} (argmax accuracy {:.3})", behavior.describe(), behavior.accuracy(&data)?);

    let logged = make_logged_dataset(&data, &behavior, 11)?;
    println!("logged {} examples, mean reward {:.3}", logged.len(), logged.mean_reward());
    for ex in logged.examples().iter().take(5) {
        println!(
            "  action {} reward {} propensity {:.3}",
            ex.action,
            ex.reward,
            ex.logged_propensity.unwrap_or(f64::NAN)
        );
    }

    std::fs::create_dir_all("out")?;
    logged.write_csv("out/logged_breast_cancer.csv")?;
    println!("wrote out/logged_breast_cancer.csv");
    Ok(())
}
