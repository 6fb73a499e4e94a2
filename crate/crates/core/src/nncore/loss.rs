//! Per-example losses on raw head outputs, with their output-space gradients.
//!
//! Every loss is a negative log-likelihood (or squared error) evaluated on the
//! pre-link outputs of a network. Link functions live here too so that the
//! reward model and the policies read mixture parameters exactly the way the
//! loss does.

use super::Head;
use crate::error::{Error, Result};

/// Smallest mixture / Gaussian scale a head can produce.
pub const SCALE_FLOOR: f64 = 1e-4;
const RAW_SCALE_CAP: f64 = 30.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Sum of squared errors over output units (targets have one column per output).
    SquaredError,
    /// Independent Bernoulli likelihood on each logit (targets in {0, 1}).
    BernoulliLogit,
    /// Softmax cross-entropy; the single target column holds the class id.
    CategoricalLogit,
    /// Gaussian likelihood with outputs `[mean, log_scale]`.
    GaussianNll,
    /// Gaussian-mixture likelihood on an MDN head.
    MdnNll,
}

impl Loss {
    /// Number of target columns this loss expects for `head`, or an error if
    /// the pairing is unsupported.
    pub fn target_width(self, head: &Head) -> Result<usize> {
        match (self, head) {
            (Loss::SquaredError, Head::Linear { outputs }) => Ok(*outputs),
            (Loss::BernoulliLogit, Head::Logit { outputs }) => Ok(*outputs),
            (Loss::CategoricalLogit, Head::Logit { outputs }) if *outputs >= 2 => Ok(1),
            (Loss::GaussianNll, Head::Linear { outputs: 2 }) => Ok(1),
            (Loss::MdnNll, Head::Mdn { .. }) => Ok(1),
            _ => Err(Error::invalid(format!(
                "loss {self:?} is not defined for head {head:?}"
            ))),
        }
    }

    /// Loss value for one example; writes d(loss)/d(output) into `grad`.
    pub fn eval(self, out: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Loss::SquaredError => {
                let mut l = 0.0;
                for ((g, o), t) in grad.iter_mut().zip(out).zip(target) {
                    let d = o - t;
                    l += d * d;
                    *g = 2.0 * d;
                }
                l
            }
            Loss::BernoulliLogit => {
                let mut l = 0.0;
                for ((g, &z), &y) in grad.iter_mut().zip(out).zip(target) {
                    l += softplus(z) - y * z;
                    *g = sigmoid(z) - y;
                }
                l
            }
            Loss::CategoricalLogit => {
                let class = target[0] as usize;
                let lse = log_sum_exp(out);
                for (j, (g, &z)) in grad.iter_mut().zip(out).enumerate() {
                    *g = (z - lse).exp() - if j == class { 1.0 } else { 0.0 };
                }
                lse - out[class]
            }
            Loss::GaussianNll => {
                let (mu, s) = (out[0], out[1].min(RAW_SCALE_CAP));
                let inv_var = (-2.0 * s).exp();
                let d = target[0] - mu;
                grad[0] = -d * inv_var;
                grad[1] = if out[1] > RAW_SCALE_CAP {
                    0.0
                } else {
                    1.0 - d * d * inv_var
                };
                0.5 * d * d * inv_var + s + HALF_LN_2PI
            }
            Loss::MdnNll => mdn_nll(out, target[0], grad),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

fn scale_link(raw: f64) -> f64 {
    raw.min(RAW_SCALE_CAP).exp() + SCALE_FLOOR
}

/// Mixture parameters `(weights, means, scales)` from raw MDN outputs laid out
/// as `[weight logits; means; raw scales]`, each block `K` wide.
pub fn mdn_params(out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = out.len() / 3;
    let weights = softmax(&out[..k]);
    let means = out[k..2 * k].to_vec();
    let scales = out[2 * k..].iter().map(|&r| scale_link(r)).collect();
    (weights, means, scales)
}

fn mdn_nll(out: &[f64], r: f64, grad: &mut [f64]) -> f64 {
    let k = out.len() / 3;
    let (logits, means, raws) = (&out[..k], &out[k..2 * k], &out[2 * k..]);
    let lse_w = log_sum_exp(logits);
    let mut comp = vec![0.0; k];
    let mut scales = vec![0.0; k];
    for j in 0..k {
        let sigma = scale_link(raws[j]);
        scales[j] = sigma;
        let z = (r - means[j]) / sigma;
        comp[j] = (logits[j] - lse_w) - 0.5 * z * z - sigma.ln() - HALF_LN_2PI;
    }
    let ll = log_sum_exp(&comp);
    for j in 0..k {
        let resp = (comp[j] - ll).exp();
        let w = (logits[j] - lse_w).exp();
        let sigma = scales[j];
        let d = r - means[j];
        grad[j] = w - resp;
        grad[k + j] = -resp * d / (sigma * sigma);
        let dsigma = -resp * (d * d / (sigma * sigma * sigma) - 1.0 / sigma);
        grad[2 * k + j] = if raws[j] > RAW_SCALE_CAP {
            0.0
        } else {
            dsigma * (sigma - SCALE_FLOOR)
        };
    }
    -ll
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mdn_link_weights_normalize_and_scales_stay_positive() {
        let out = [3.0, -200.0, 0.5, 1.0, 2.0, 3.0, -80.0, 0.0, 90.0];
        let (w, _, s) = mdn_params(&out);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(s.iter().all(|&v| v >= SCALE_FLOOR && v.is_finite()));
    }

    #[test]
    fn single_component_mdn_matches_gaussian_nll() {
        let mut g = [0.0; 3];
        let mut g2 = [0.0; 2];
        let raw = 0.3f64;
        let mdn = Loss::MdnNll.eval(&[0.7, 1.5, raw], &[2.0], &mut g);
        let sigma = raw.exp() + SCALE_FLOOR;
        let gauss = Loss::GaussianNll.eval(&[1.5, sigma.ln()], &[2.0], &mut g2);
        assert!((mdn - gauss).abs() < 1e-12);
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn categorical_loss_at_uniform_logits_is_log_k() {
        let mut g = [0.0; 4];
        let l = Loss::CategoricalLogit.eval(&[0.0; 4], &[2.0], &mut g);
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((g.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn numerics_are_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
        assert!(log_sum_exp(&[1000.0, 1000.0]).is_finite());
    }
}
