//! Deep ensembles and the total-variance split of predictive uncertainty.

use std::path::Path;

use rayon::prelude::*;

use crate::artifact::{fmt_f64, Artifact};
use crate::dataset::{Action, LoggedDataset};
use crate::error::{Error, Result};
use crate::reward_model::{fit_reward_model, mixture_moments, RewardHead, RewardModel, RewardModelConfig, RewardPredictor};
use crate::rng;

pub const DEFAULT_MEMBERS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<RewardModel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyDecomposition {
    pub v_ep: f64,
    pub v_al: f64,
    pub v_total: f64,
}

/// Seed of member `i` for an ensemble seeded with `seed`.
pub fn member_seed(seed: u64, i: usize) -> u64 {
    rng::derive_seed(seed, "member", i as u64)
}

pub fn fit_ensemble(data: &LoggedDataset, head: RewardHead, members: usize, config: &RewardModelConfig, seed: u64) -> Result<Ensemble> {
    if members < 2 {
        return Err(Error::invalid(format!("an ensemble needs at least 2 members, got {members}")));
    }
    let seeds: Vec<u64> = (0..members).map(|i| member_seed(seed, i)).collect();
    fit_ensemble_with_seeds(data, head, config, &seeds)
}

/// Train one member per seed. Exposed so tests can force seed collisions.
pub fn fit_ensemble_with_seeds(data: &LoggedDataset, head: RewardHead, config: &RewardModelConfig, seeds: &[u64]) -> Result<Ensemble> {
    let members = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            fit_reward_model(data, head, config, s).map_err(|e| Error::MemberFailed {
                member: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::from_members(members)
}

impl Ensemble {
    pub fn from_members(members: Vec<RewardModel>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::invalid("empty ensemble"))?;
        if members
            .iter()
            .any(|m| m.head() != first.head() || m.encoding() != first.encoding())
        {
            return Err(Error::invalid("ensemble members differ in head or encoding"));
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[RewardModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn to_artifact(&self) -> Artifact {
        let mut a = Artifact::new();
        a.set("members", self.members.len());
        for (i, m) in self.members.iter().enumerate() {
            m.to_artifact(&format!("member.{i}."), &mut a);
        }
        a
    }

    pub fn from_artifact(a: &Artifact) -> Result<Self> {
        let m: usize = a.get_parsed("members")?;
        let members = (0..m)
            .map(|i| RewardModel::from_artifact(&format!("member.{i}."), a))
            .collect::<Result<Vec<_>>>()?;
        Ensemble::from_members(members)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_artifact().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_artifact(&Artifact::load(path)?)
    }

    /// Per-member `(mean, variance)` for each pair, indexed `[member][pair]`.
    pub fn member_moments(&self, pairs: &[(&[f64], Action)]) -> Result<Vec<Vec<(f64, f64)>>> {
        self.members.iter().map(|m| m.moments_batch(pairs)).collect()
    }
}

impl RewardPredictor for Ensemble {
    fn expected_rewards(&self, pairs: &[(&[f64], Action)]) -> Result<Vec<f64>> {
        let per = self.member_moments(pairs)?;
        let m = per.len() as f64;
        Ok((0..pairs.len())
            .map(|j| per.iter().map(|mm| mm[j].0).sum::<f64>() / m)
            .collect())
    }
}

fn combine(moments: impl Iterator<Item = (f64, f64)> + Clone) -> UncertaintyDecomposition {
    let m = moments.clone().count() as f64;
    let mean = moments.clone().map(|(mu, _)| mu).sum::<f64>() / m;
    let v_ep = moments.clone().map(|(mu, _)| (mu - mean).powi(2)).sum::<f64>() / m;
    let v_al = moments.clone().map(|(_, v)| v).sum::<f64>() / m;
    // variance of the equally weighted mixture of member predictives
    let v_total = moments.map(|(mu, v)| v + (mu - mean).powi(2)).sum::<f64>() / m;
    UncertaintyDecomposition {
        v_ep: v_ep.max(0.0),
        v_al: v_al.max(0.0),
        v_total: v_total.max(0.0),
    }
}

pub fn decompose_uncertainty(ensemble: &Ensemble, context: &[f64], action: &Action) -> Result<UncertaintyDecomposition> {
    Ok(decompose_dataset(ensemble, &[(context, *action)])?[0])
}

/// Decompose every pair, batching the forward passes per member.
pub fn decompose_dataset(ensemble: &Ensemble, pairs: &[(&[f64], Action)]) -> Result<Vec<UncertaintyDecomposition>> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let per = match ensemble.member_moments(pairs) {
        Ok(p) => p,
        Err(_) => {
            // locate the offending element
            for (i, (c, a)) in pairs.iter().enumerate() {
                if let Err(e) = ensemble.members[0].moments_batch(&[(c, *a)]) {
                    return Err(Error::Element {
                        index: i,
                        source: Box::new(e),
                    });
                }
            }
            return Err(Error::invalid("decomposition failed"));
        }
    };
    Ok((0..pairs.len())
        .map(|j| combine(per.iter().map(|mm| mm[j])))
        .collect())
}

/// Direct decomposition from per-member closed-form moments.
pub fn decompose_moments(moments: &[(f64, f64)]) -> Result<UncertaintyDecomposition> {
    if moments.is_empty() {
        return Err(Error::invalid("no member moments"));
    }
    Ok(combine(moments.iter().copied()))
}

pub fn decompose_distributions(dists: &[crate::reward_model::PredictiveDistribution]) -> Result<UncertaintyDecomposition> {
    decompose_moments(&dists.iter().map(mixture_moments).collect::<Vec<_>>())
}

pub fn write_decomposition_csv(path: impl AsRef<Path>, rows: &[UncertaintyDecomposition]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "v_ep", "v_al", "v_total"])?;
    for (i, d) in rows.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(d.v_ep), fmt_f64(d.v_al), fmt_f64(d.v_total)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_decomposition_csv(path: impl AsRef<Path>) -> Result<Vec<UncertaintyDecomposition>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    row: row + 1,
                    column: ["index", "v_ep", "v_al", "v_total"][c].to_string(),
                    message: "expected a number".into(),
                })
        };
        out.push(UncertaintyDecomposition {
            v_ep: field(1)?,
            v_al: field(2)?,
            v_total: field(3)?,
        });
    }
    Ok(out)
}
