//! Calibrate a hardness predictor on synthetic uncertainties where the
//! residual depends mostly on the epistemic part, then run the ablation.

use ope_hardness::calibration::{fit_hardness_predictor, predict_residual, run_ablation, FeatureMode};
use ope_hardness::uncertainty::UncertaintyDecomposition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ope_hardness::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut decomps = Vec::new();
    let mut residuals = Vec::new();
    for _ in 0..600 {
        let v_ep: f64 = rng.gen_range(0.0..1.0);
        let v_al: f64 = rng.gen_range(0.0..1.0);
        decomps.push(UncertaintyDecomposition { v_ep, v_al, v_total: v_ep + v_al });
        residuals.push(2.0 * v_ep + 0.3 * v_al + rng.gen_range(0.0..0.5));
    }

    let h = fit_hardness_predictor(&decomps, &residuals, FeatureMode::Both)?;
    println!("h = {:.3} + {:.3} v_ep + {:.3} v_al", h.intercept, h.weight_ep, h.weight_al);
    let probe = UncertaintyDecomposition { v_ep: 0.5, v_al: 0.5, v_total: 1.0 };
    println!("predicted residual at (0.5, 0.5): {:.3}", predict_residual(&h, &probe));

    for report in run_ablation("synthetic", &decomps, &residuals, 0.2, 50, 1)? {
        println!("{:<22} r = {:.3}", report.mode.ablation_label(), report.pearson_r);
    }
    Ok(())
}
