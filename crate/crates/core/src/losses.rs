//! KL-regularized, advantage-weighted surrogate objectives.
//!
//! Only scalar values are computed here; differentiation belongs to the
//! external trainer that consumes exported samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheduler::Phase;

/// Per-player log-probability of the emitted action and KL estimate
/// against the reference policy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyEval {
    pub logprob: Vec<f64>,
    pub kl: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("length mismatch: {advantages} advantages, {logprobs} log-probs, {kls} KL values")]
    LengthMismatch {
        advantages: usize,
        logprobs: usize,
        kls: usize,
    },
    #[error("empty group")]
    Empty,
}

fn surrogate(adv: &[f64], eval: &PolicyEval, tau: f64) -> Result<f64, LossError> {
    if adv.len() != eval.logprob.len() || adv.len() != eval.kl.len() {
        return Err(LossError::LengthMismatch {
            advantages: adv.len(),
            logprobs: eval.logprob.len(),
            kls: eval.kl.len(),
        });
    }
    if adv.is_empty() {
        return Err(LossError::Empty);
    }
    let n = adv.len() as f64;
    let pg: f64 = adv.iter().zip(&eval.logprob).map(|(a, lp)| a * lp).sum();
    let kl: f64 = eval.kl.iter().sum();
    Ok(-pg / n + tau * kl / n)
}

/// Clue-stage objective over all players.
pub fn clue_loss(adv: &[f64], eval: &PolicyEval, tau_clue: f64) -> Result<f64, LossError> {
    surrogate(adv, eval, tau_clue)
}

/// Decision-stage objective over the civilians.
pub fn decision_loss(adv: &[f64], eval: &PolicyEval, tau_dec: f64) -> Result<f64, LossError> {
    surrogate(adv, eval, tau_dec)
}

/// Only the active stage contributes.
pub fn gated_loss(phase: Phase, clue: f64, decision: f64) -> f64 {
    let m = phase.bit();
    m * clue + (1.0 - m) * decision
}
