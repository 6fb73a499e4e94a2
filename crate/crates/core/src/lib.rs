//! Forecast how accurately a target policy can be evaluated off-policy from a
//! logged contextual-bandit dataset.
//!
//! The pipeline fits an ensemble of distributional reward models on the logged
//! data, splits each ensemble's predictive variance at a (context, action)
//! pair into an epistemic part (spread of member means) and an aleatoric part
//! (average member variance), and calibrates a linear hardness predictor that
//! maps the two parts onto per-instance OPE residuals.

pub mod artifact;
pub mod calibration;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod nncore;
pub mod ope;
pub mod policies;
pub mod reward_model;
pub mod rng;
pub mod uncertainty;

pub use error::{Error, Result};
