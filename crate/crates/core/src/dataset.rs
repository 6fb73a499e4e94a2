//! Supervised tabular data, logged bandit datasets synthesized from it, the
//! reward rules, and coverage-biasing ("sculpting") of behavior data.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nncore::Matrix;
use crate::policies::Policy;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification { classes: usize },
    Regression,
}

/// Task family without the class count, used where the count is inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Regression,
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Classification { .. } => TaskKind::Classification,
            Task::Regression => TaskKind::Regression,
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
        })
    }
}

/// Per-feature z-scoring statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Population mean and standard deviation per column; constant columns get scale 1.
    pub fn fit(raw: &Matrix) -> Self {
        let (n, d) = (raw.rows() as f64, raw.cols());
        let mut mean = vec![0.0; d];
        for r in raw.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in raw.iter_rows() {
            for j in 0..d {
                let c = r[j] - mean[j];
                var[j] += c * c;
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardization { mean, scale }
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedDataset {
    features: Matrix,
    labels: Vec<f64>,
    task: Task,
    feature_names: Vec<String>,
    standardization: Standardization,
    row_ids: Vec<usize>,
}

impl SupervisedDataset {
    /// Build from raw (unstandardized) features; statistics are fitted here.
    pub fn new(raw: Matrix, labels: Vec<f64>, task: Task, feature_names: Vec<String>) -> Result<Self> {
        let std = Standardization::fit(&raw);
        Self::with_standardization(raw, labels, task, feature_names, std)
    }

    /// Build from raw features using existing statistics (e.g. from a larger parent set).
    pub fn with_standardization(
        raw: Matrix,
        labels: Vec<f64>,
        task: Task,
        feature_names: Vec<String>,
        standardization: Standardization,
    ) -> Result<Self> {
        let (n, d) = (raw.rows(), raw.cols());
        if n == 0 || d == 0 {
            return Err(Error::invalid("dataset needs at least one row and one feature"));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if feature_names.len() != d || standardization.mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: feature_names.len(),
            });
        }
        if let Task::Classification { classes } = task {
            if let Some(bad) = labels
                .iter()
                .find(|&&y| y < 0.0 || y.fract() != 0.0 || y as usize >= classes)
            {
                return Err(Error::invalid(format!("label {bad} outside [0, {classes})")));
            }
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("labels must be finite"));
        }
        let rows: Vec<Vec<f64>> = raw.iter_rows().map(|r| standardization.apply(r)).collect();
        Ok(SupervisedDataset {
            features: Matrix::from_rows(&rows)?,
            labels,
            task,
            feature_names,
            standardization,
            row_ids: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Standardized features.
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn context(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn raw_context(&self, i: usize) -> Vec<f64> {
        self.standardization.invert(self.features.row(i))
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn class_label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    /// Row index of each example in the originally loaded dataset.
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    /// Population variance of the labels (the regression reward's normalizer).
    pub fn label_variance(&self) -> f64 {
        let n = self.labels.len() as f64;
        let mean = self.labels.iter().sum::<f64>() / n;
        self.labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n
    }

    pub fn label_std(&self) -> f64 {
        self.label_variance().sqrt()
    }

    /// Rows in the given order; standardization and original row ids are kept.
    pub fn subset(&self, idx: &[usize]) -> SupervisedDataset {
        SupervisedDataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            task: self.task,
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Copy with labels replaced (same length); used for noise injection.
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<SupervisedDataset> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: labels.len(),
            });
        }
        let mut out = self.clone();
        out.labels = labels;
        Ok(out)
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::invalid(format!("unknown feature `{name}`")))
    }

    /// Reward of `action` against the ground-truth label of row `i`.
    pub fn reward(&self, i: usize, action: &Action) -> Result<f64> {
        match (self.task, action) {
            (Task::Classification { classes }, Action::Discrete(a)) => {
                classification_reward(*a, self.class_label(i), classes)
            }
            (Task::Regression, Action::Continuous(a)) => {
                regression_reward(*a, self.labels[i], self.label_variance())
            }
            _ => Err(Error::invalid("action kind does not match task")),
        }
    }
}

/// Load a CSV with a header row, numeric feature columns and a label column `y`.
pub fn load_supervised_csv(path: impl AsRef<Path>, task: TaskKind) -> Result<SupervisedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = rdr.headers()?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::Parse {
            row: 0,
            column: "y".into(),
            message: "missing label column".into(),
        })?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_col)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(names.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: i,
                column: headers.get(j).unwrap_or("?").to_string(),
                message: format!("non-numeric cell `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: i,
                    column: headers.get(j).unwrap_or("?").to_string(),
                    message: "non-finite value".into(),
                });
            }
            if j == label_col {
                labels.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 0,
            column: String::new(),
            message: "file has no data rows".into(),
        });
    }
    let task = match task {
        TaskKind::Regression => Task::Regression,
        TaskKind::Classification => {
            if let Some((i, bad)) = labels
                .iter()
                .enumerate()
                .find(|(_, y)| **y < 0.0 || y.fract() != 0.0)
            {
                return Err(Error::Parse {
                    row: i,
                    column: "y".into(),
                    message: format!("class label {bad} is not a non-negative integer"),
                });
            }
            let max = labels.iter().fold(0.0f64, |m, &y| m.max(y)) as usize;
            Task::Classification {
                classes: (max + 1).max(2),
            }
        }
    };
    SupervisedDataset::new(Matrix::from_rows(&rows)?, labels, task, names)
}

/// Indicator reward for classification bandits.
pub fn classification_reward(action: usize, label: usize, classes: usize) -> Result<f64> {
    if action >= classes || label >= classes {
        return Err(Error::invalid(format!(
            "class ids ({action}, {label}) must lie in [0, {classes})"
        )));
    }
    Ok(if action == label { 1.0 } else { 0.0 })
}

/// Per-instance coefficient-of-determination reward `1 - (y - a)^2 / Var(y)`.
pub fn regression_reward(action: f64, label: f64, label_variance: f64) -> Result<f64> {
    if !action.is_finite() {
        return Err(Error::invalid("regression action must be finite"));
    }
    if !(label_variance > 0.0) {
        return Err(Error::invalid("label variance must be positive"));
    }
    Ok(1.0 - (label - action).powi(2) / label_variance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Discrete(a) => write!(f, "{a}"),
            Action::Continuous(a) => write!(f, "{a:.16e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedExample {
    pub context: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub logged_propensity: Option<f64>,
    /// Row of the supervised dataset this example was synthesized from.
    pub source_row: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedDataset {
    examples: Vec<LoggedExample>,
    task: Task,
    pub provenance: String,
}

impl LoggedDataset {
    pub fn new(examples: Vec<LoggedExample>, task: Task, provenance: impl Into<String>) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::invalid("logged dataset must be non-empty"))?;
        let d = first.context.len();
        for (i, ex) in examples.iter().enumerate() {
            if ex.context.len() != d {
                return Err(Error::Element {
                    index: i,
                    source: Box::new(Error::DimensionMismatch {
                        expected: d,
                        got: ex.context.len(),
                    }),
                });
            }
            let ok = match (task, ex.action) {
                (Task::Classification { classes }, Action::Discrete(a)) => a < classes,
                (Task::Regression, Action::Continuous(a)) => a.is_finite(),
                _ => false,
            };
            if !ok {
                return Err(Error::Element {
                    index: i,
                    source: Box::new(Error::invalid("action kind or range does not match task")),
                });
            }
            if let Some(p) = ex.logged_propensity {
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::Element {
                        index: i,
                        source: Box::new(Error::invalid(format!("propensity {p} must be positive"))),
                    });
                }
            }
        }
        Ok(LoggedDataset {
            examples,
            task,
            provenance: provenance.into(),
        })
    }

    pub fn examples(&self) -> &[LoggedExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn context_dim(&self) -> usize {
        self.examples[0].context.len()
    }

    pub fn mean_reward(&self) -> f64 {
        self.examples.iter().map(|e| e.reward).sum::<f64>() / self.len() as f64
    }

    /// Copy with every logged propensity removed (behavior policy unknown).
    pub fn without_propensities(&self) -> LoggedDataset {
        let mut out = self.clone();
        out.examples.iter_mut().for_each(|e| e.logged_propensity = None);
        out
    }

    pub fn subset(&self, idx: &[usize]) -> Result<LoggedDataset> {
        LoggedDataset::new(
            idx.iter().map(|&i| self.examples[i].clone()).collect(),
            self.task,
            self.provenance.clone(),
        )
    }

    /// Write `x0..x{d-1},action,reward,propensity` with 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.context_dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.extend(["action", "reward", "propensity"].map(String::from));
        w.write_record(&header)?;
        for ex in &self.examples {
            let mut rec: Vec<String> = ex.context.iter().map(|v| format!("{v:.16e}")).collect();
            rec.push(ex.action.to_string());
            rec.push(format!("{:.16e}", ex.reward));
            rec.push(ex.logged_propensity.map(|p| format!("{p:.16e}")).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>, task: Task) -> Result<LoggedDataset> {
        let mut rdr = csv::Reader::from_path(path.as_ref())?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
                row: 0,
                column: name.into(),
                message: "missing column".into(),
            })
        };
        let (ca, cr, cp) = (col("action")?, col("reward")?, col("propensity")?);
        let ctx_cols: Vec<usize> = (0..headers.len())
            .filter(|j| headers[*j].starts_with('x'))
            .collect();
        let parse = |row: usize, j: usize, s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                row,
                column: headers[j].to_string(),
                message: format!("non-numeric cell `{s}`"),
            })
        };
        let mut examples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let context = ctx_cols
                .iter()
                .map(|&j| parse(i, j, &rec[j]))
                .collect::<Result<Vec<_>>>()?;
            let action = match task {
                Task::Classification { .. } => Action::Discrete(rec[ca].parse().map_err(|_| Error::Parse {
                    row: i,
                    column: "action".into(),
                    message: format!("expected class id, got `{}`", &rec[ca]),
                })?),
                Task::Regression => Action::Continuous(parse(i, ca, &rec[ca])?),
            };
            let p = &rec[cp];
            examples.push(LoggedExample {
                context,
                action,
                reward: parse(i, cr, &rec[cr])?,
                logged_propensity: if p.is_empty() { None } else { Some(parse(i, cp, p)?) },
                source_row: Some(i),
            });
        }
        LoggedDataset::new(examples, task, format!("read from {}", path.as_ref().display()))
    }
}

/// Synthesize one logged example per supervised row: the behavior policy picks
/// the action, the task's reward rule scores it against the label.
pub fn make_logged_dataset(data: &SupervisedDataset, behavior: &Policy, seed: u64) -> Result<LoggedDataset> {
    if behavior.context_dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: behavior.context_dim(),
        });
    }
    let mut stream = rng::stream(seed);
    let mut examples = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let ctx = data.context(i);
        let action = behavior.sample_action(ctx, &mut stream)?;
        let propensity = behavior.action_probability(ctx, &action)?;
        examples.push(LoggedExample {
            context: ctx.to_vec(),
            action,
            reward: data.reward(i, &action)?,
            logged_propensity: Some(propensity),
            source_row: Some(data.row_ids()[i]),
        });
    }
    LoggedDataset::new(
        examples,
        data.task(),
        format!("behavior={} seed={seed}", behavior.describe()),
    )
}

/// Indices (ascending) of the rows kept after dropping the top `drop_top_fraction`
/// by the raw value of `feature`. Ties at the threshold keep lower row indices.
pub fn sculpt_indices(data: &SupervisedDataset, feature: &str, drop_top_fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let j = data.feature_index(feature)?;
    if !(drop_top_fraction > 0.0 && drop_top_fraction < 1.0) {
        return Err(Error::invalid("drop fraction must lie in (0, 1)"));
    }
    let n = data.len();
    let keep = (n as f64 * (1.0 - drop_top_fraction) + 1e-9).floor() as usize;
    let std = data.standardization();
    let raw: Vec<f64> = (0..n)
        .map(|i| data.context(i)[j] * std.scale[j] + std.mean[j])
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps lower indices first among equal values
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let mut kept = order[..keep].to_vec();
    let mut dropped = order[keep..].to_vec();
    kept.sort_unstable();
    dropped.sort_unstable();
    Ok((kept, dropped))
}

pub fn sculpt_by_feature_quantile(data: &SupervisedDataset, feature: &str, drop_top_fraction: f64) -> Result<SupervisedDataset> {
    let (kept, _) = sculpt_indices(data, feature, drop_top_fraction)?;
    Ok(data.subset(&kept))
}

/// Seeded random split into `(remainder, holdout)` with `round(N * fraction)` held out.
pub fn split_holdout(data: &LoggedDataset, holdout_fraction: f64, seed: u64) -> Result<(LoggedDataset, LoggedDataset)> {
    let (rest, hold) = holdout_indices(data.len(), holdout_fraction, seed)?;
    Ok((data.subset(&rest)?, data.subset(&hold)?))
}

/// Index form of [`split_holdout`]; both parts are returned in ascending order.
pub fn holdout_indices(n: usize, holdout_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::invalid("holdout fraction must lie in (0, 1)"));
    }
    let h = (n as f64 * holdout_fraction).round() as usize;
    if h == 0 || h >= n {
        return Err(Error::invalid(format!(
            "holdout fraction {holdout_fraction} leaves an empty part for N={n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed));
    let mut hold = idx[..h].to_vec();
    let mut rest = idx[h..].to_vec();
    hold.sort_unstable();
    rest.sort_unstable();
    Ok((rest, hold))
}
