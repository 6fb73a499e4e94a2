//! Linear hardness predictor from uncertainty components to OPE residuals,
//! plus the feature ablations.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::artifact::fmt_f64;
use crate::dataset::holdout_indices;
use crate::error::{Error, Result};
use crate::ope::bootstrap_indices;
use crate::rng;
use crate::uncertainty::UncertaintyDecomposition;

pub const DEFAULT_BOOTSTRAP_ROUNDS: usize = 50;
pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.2;

/// Relative norm below which a design column counts as dependent on earlier ones.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureMode {
    Both,
    EpOnly,
    AlOnly,
    TotalOnly,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [FeatureMode::Both, FeatureMode::EpOnly, FeatureMode::AlOnly, FeatureMode::TotalOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Both => "both",
            FeatureMode::EpOnly => "ep_only",
            FeatureMode::AlOnly => "al_only",
            FeatureMode::TotalOnly => "total_only",
        }
    }

    /// Row label used in Table-1 style summaries.
    pub fn ablation_label(self) -> &'static str {
        match self {
            FeatureMode::Both => "DataCOPE",
            FeatureMode::EpOnly => "w/o v_al",
            FeatureMode::AlOnly => "w/o v_ep",
            FeatureMode::TotalOnly => "w/o Decomposition",
        }
    }

    fn features(self, d: &UncertaintyDecomposition) -> Vec<f64> {
        match self {
            FeatureMode::Both => vec![d.v_ep, d.v_al],
            FeatureMode::EpOnly => vec![d.v_ep],
            FeatureMode::AlOnly => vec![d.v_al],
            FeatureMode::TotalOnly => vec![d.v_ep + d.v_al],
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown feature mode `{s}`")))
    }
}

/// `h(v) = intercept + weight_ep * v_ep + weight_al * v_al`. In `total_only`
/// mode both weights hold the single coefficient on `v_ep + v_al`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardnessPredictor {
    pub intercept: f64,
    pub weight_ep: f64,
    pub weight_al: f64,
    pub mode: FeatureMode,
    /// Set when a feature column was dropped as constant or collinear.
    pub degenerate: bool,
}

impl HardnessPredictor {
    pub fn constant(value: f64) -> Self {
        HardnessPredictor {
            intercept: value,
            weight_ep: 0.0,
            weight_al: 0.0,
            mode: FeatureMode::Both,
            degenerate: true,
        }
    }

    /// Linear evaluation without clamping.
    pub fn raw_prediction(&self, d: &UncertaintyDecomposition) -> f64 {
        self.intercept + self.weight_ep * d.v_ep + self.weight_al * d.v_al
    }
}

/// Least squares `min |X b - y|` by modified Gram-Schmidt. Columns whose
/// component orthogonal to the earlier kept columns is negligible get a zero
/// coefficient. Returns the coefficients and whether any column was dropped.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, bool)> {
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("design columns and target differ in length"));
    }
    let p = columns.len();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    // r[k][j]: coefficient of kept column k in original column j
    let mut r = vec![vec![0.0; p]; p];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for (j, col) in columns.iter().enumerate() {
        let norm0 = dot(col, col).sqrt();
        let mut v = col.clone();
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let c = dot(qk, &v);
                r[k][j] += c;
                v.iter_mut().zip(qk).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm0 > 0.0 && norm > RANK_TOL * norm0 && norm.is_finite() {
            r[q.len()][j] = norm;
            v.iter_mut().for_each(|vi| *vi /= norm);
            q.push(v);
            kept.push(j);
        }
    }
    let qty: Vec<f64> = q.iter().map(|qk| dot(qk, y)).collect();
    let m = kept.len();
    let mut beta_kept = vec![0.0; m];
    for k in (0..m).rev() {
        let s: f64 = (k + 1..m).map(|l| r[k][kept[l]] * beta_kept[l]).sum();
        beta_kept[k] = (qty[k] - s) / r[k][kept[k]];
    }
    let mut beta = vec![0.0; p];
    for (k, &j) in kept.iter().enumerate() {
        beta[j] = beta_kept[k];
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("least squares produced non-finite coefficients"));
    }
    Ok((beta, m < p))
}

pub fn fit_hardness_predictor(decomps: &[UncertaintyDecomposition], residuals: &[f64], mode: FeatureMode) -> Result<HardnessPredictor> {
    if decomps.len() != residuals.len() {
        return Err(Error::DimensionMismatch {
            expected: decomps.len(),
            got: residuals.len(),
        });
    }
    if decomps.len() < 3 {
        return Err(Error::invalid("the hardness predictor needs at least 3 examples"));
    }
    if residuals.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::invalid("residuals must be finite and non-negative"));
    }
    let feats: Vec<Vec<f64>> = decomps.iter().map(|d| mode.features(d)).collect();
    let mut columns = vec![vec![1.0; decomps.len()]];
    for j in 0..feats[0].len() {
        columns.push(feats.iter().map(|f| f[j]).collect());
    }
    let (beta, degenerate) = least_squares(&columns, residuals)?;
    let (weight_ep, weight_al) = match mode {
        FeatureMode::Both => (beta[1], beta[2]),
        FeatureMode::EpOnly => (beta[1], 0.0),
        FeatureMode::AlOnly => (0.0, beta[1]),
        FeatureMode::TotalOnly => (beta[1], beta[1]),
    };
    Ok(HardnessPredictor {
        intercept: beta[0],
        weight_ep,
        weight_al,
        mode,
        degenerate,
    })
}

/// Predicted residual, clamped at zero.
pub fn predict_residual(h: &HardnessPredictor, d: &UncertaintyDecomposition) -> f64 {
    h.raw_prediction(d).max(0.0)
}

pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // spread below rounding noise counts as constant
    let tiny = |s: f64, m: f64| s <= (n * (m.abs() * 1e-14).powi(2)).max(f64::MIN_POSITIVE);
    if tiny(saa, ma) || tiny(sbb, mb) {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardnessRow {
    pub index: usize,
    pub v_ep: f64,
    pub v_al: f64,
    /// Bagged (round-averaged) linear prediction, unclamped.
    pub predicted_residual: f64,
    pub realized_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardnessReport {
    pub estimator: String,
    pub mode: FeatureMode,
    pub per_instance: Vec<HardnessRow>,
    /// Correlation of the bagged predictions with realized residuals; zero
    /// when the predictions are constant (see `degenerate`).
    pub pearson_r: f64,
    /// Mean over bootstrap rounds of the per-round correlation.
    pub mean_round_r: f64,
    /// Correlation of the raw feature with realized residuals (single-feature modes).
    pub feature_r: Option<f64>,
    pub degenerate: bool,
    pub bootstrap_rounds: usize,
}

impl HardnessReport {
    pub fn n_eval(&self) -> usize {
        self.per_instance.len()
    }
}

/// Evaluate every feature mode: fit on bootstrap resamples of a held-out
/// calibration split, score on the remaining evaluation split.
pub fn run_ablation(
    estimator: &str,
    decomps: &[UncertaintyDecomposition],
    residuals: &[f64],
    holdout_fraction: f64,
    bootstrap_rounds: usize,
    seed: u64,
) -> Result<Vec<HardnessReport>> {
    if bootstrap_rounds == 0 {
        return Err(Error::invalid("bootstrap_rounds must be at least 1"));
    }
    if decomps.len() != residuals.len() {
        return Err(Error::DimensionMismatch {
            expected: decomps.len(),
            got: residuals.len(),
        });
    }
    let (eval_idx, fit_idx) = holdout_indices(decomps.len(), holdout_fraction, rng::derive_seed(seed, "calibration-split", 0))?;
    let samples: Vec<Vec<usize>> = (0..bootstrap_rounds)
        .map(|b| {
            bootstrap_indices(fit_idx.len(), rng::derive_seed(seed, "bootstrap", b as u64))
                .into_iter()
                .map(|k| fit_idx[k])
                .collect()
        })
        .collect();
    let realized: Vec<f64> = eval_idx.iter().map(|&i| residuals[i]).collect();

    FeatureMode::ALL
        .into_iter()
        .map(|mode| {
            let mut bagged = vec![0.0; eval_idx.len()];
            let mut round_rs = Vec::with_capacity(bootstrap_rounds);
            for sample in &samples {
                let d: Vec<UncertaintyDecomposition> = sample.iter().map(|&i| decomps[i]).collect();
                let r: Vec<f64> = sample.iter().map(|&i| residuals[i]).collect();
                let h = fit_hardness_predictor(&d, &r, mode)?;
                let preds: Vec<f64> = eval_idx.iter().map(|&i| h.raw_prediction(&decomps[i])).collect();
                bagged.iter_mut().zip(&preds).for_each(|(b, p)| *b += p / bootstrap_rounds as f64);
                round_rs.push(pearson_r(&preds, &realized).unwrap_or(0.0));
            }
            let (pearson, degenerate) = match pearson_r(&bagged, &realized) {
                Ok(r) => (r, false),
                Err(Error::UndefinedCorrelation(_)) => (0.0, true),
                Err(e) => return Err(e),
            };
            let feature_r = match mode {
                FeatureMode::Both => None,
                _ => {
                    let f: Vec<f64> = eval_idx.iter().map(|&i| mode.features(&decomps[i])[0]).collect();
                    pearson_r(&f, &realized).ok()
                }
            };
            Ok(HardnessReport {
                estimator: estimator.to_string(),
                mode,
                per_instance: eval_idx
                    .iter()
                    .zip(&bagged)
                    .map(|(&i, &p)| HardnessRow {
                        index: i,
                        v_ep: decomps[i].v_ep,
                        v_al: decomps[i].v_al,
                        predicted_residual: p,
                        realized_residual: residuals[i],
                    })
                    .collect(),
                pearson_r: pearson,
                mean_round_r: round_rs.iter().sum::<f64>() / round_rs.len() as f64,
                feature_r,
                degenerate,
                bootstrap_rounds,
            })
        })
        .collect()
}

pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[HardnessReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "estimator",
        "mode",
        "pearson_r",
        "n_eval",
        "bootstrap_rounds",
        "mean_round_r",
        "feature_r",
        "degenerate",
    ])?;
    for r in reports {
        w.write_record([
            r.estimator.clone(),
            r.mode.to_string(),
            fmt_f64(r.pearson_r),
            r.n_eval().to_string(),
            r.bootstrap_rounds.to_string(),
            fmt_f64(r.mean_round_r),
            r.feature_r.map(fmt_f64).unwrap_or_default(),
            r.degenerate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_instances_csv(path: impl AsRef<Path>, reports: &[HardnessReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["estimator", "mode", "index", "v_ep", "v_al", "predicted_residual", "realized_residual"])?;
    for r in reports {
        for row in &r.per_instance {
            w.write_record([
                r.estimator.clone(),
                r.mode.to_string(),
                row.index.to_string(),
                fmt_f64(row.v_ep),
                fmt_f64(row.v_al),
                fmt_f64(row.predicted_residual),
                fmt_f64(row.realized_residual),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
