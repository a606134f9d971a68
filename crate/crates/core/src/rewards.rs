//! Clue-stage zero-sum rewards with role baselines, and decision-stage
//! rewards with group normalization.

use serde::{Deserialize, Serialize};

use crate::game::VoteTally;
use crate::protocol::{PlayerId, VoteChoice};

/// Clue-stage rewards. `civilians[j]` belongs to `civilian_ids[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClueRewards {
    pub spy: f64,
    pub civilians: Vec<f64>,
    pub civilian_ids: Vec<PlayerId>,
}

impl ClueRewards {
    pub fn total(&self) -> f64 {
        self.spy + self.civilians.iter().sum::<f64>()
    }

    pub fn civilian_mean(&self) -> f64 {
        mean(&self.civilians)
    }

    /// Reward of `player`, whichever role it holds.
    pub fn of(&self, player: PlayerId) -> Option<f64> {
        self.civilian_ids
            .iter()
            .position(|&p| p == player)
            .map(|j| self.civilians[j])
            .or_else(|| (!self.civilian_ids.contains(&player)).then_some(self.spy))
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Spy penalty grows with the votes it draws beyond the civilian average;
/// that amount is shared equally among civilians, and each civilian is
/// additionally penalized for drawing more than the civilian average.
/// The individual terms are deviations from their own mean, so the total is zero.
pub fn clue_rewards(tally: &VoteTally, beta: f64, lambda: f64) -> ClueRewards {
    let civilian_ids = tally.civilians();
    let v_c: Vec<f64> = tally.civilian_votes().into_iter().map(f64::from).collect();
    let n_c = v_c.len() as f64;
    let v_bar = mean(&v_c);
    let gap = f64::from(tally.spy_votes()) - v_bar;
    let spy = -beta * gap;
    let share = beta * gap / n_c;
    let civilians = v_c.iter().map(|v| share - lambda * (v - v_bar)).collect();
    ClueRewards {
        spy,
        civilians,
        civilian_ids,
    }
}

/// Running per-role baselines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RaeState {
    pub b_s: f64,
    pub b_c: f64,
}

/// Per-player advantages. For the clue stage `spy` is set and `civilians`
/// follows `civilian_ids`; for the decision stage `spy` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageVector {
    pub spy: Option<f64>,
    pub civilians: Vec<f64>,
    pub civilian_ids: Vec<PlayerId>,
}

impl AdvantageVector {
    pub fn of(&self, player: PlayerId) -> Option<f64> {
        match self.civilian_ids.iter().position(|&p| p == player) {
            Some(j) => Some(self.civilians[j]),
            None => self.spy,
        }
    }

    /// All values, spy first when present.
    pub fn values(&self) -> Vec<f64> {
        self.spy
            .into_iter()
            .chain(self.civilians.iter().copied())
            .collect()
    }
}

impl RaeState {
    /// Move both baselines toward this episode's rewards, then measure the
    /// rewards against the updated baselines.
    pub fn update(&self, rewards: &ClueRewards, alpha: f64) -> (RaeState, AdvantageVector) {
        let next = RaeState {
            b_s: alpha * self.b_s + (1.0 - alpha) * rewards.spy,
            b_c: alpha * self.b_c + (1.0 - alpha) * rewards.civilian_mean(),
        };
        let adv = next.advantages(rewards);
        (next, adv)
    }

    /// Advantages against the current baselines without moving them.
    pub fn advantages(&self, rewards: &ClueRewards) -> AdvantageVector {
        AdvantageVector {
            spy: Some(rewards.spy - self.b_s),
            civilians: rewards.civilians.iter().map(|r| r - self.b_c).collect(),
            civilian_ids: rewards.civilian_ids.clone(),
        }
    }
}

pub fn rae_update(
    state: &RaeState,
    rewards: &ClueRewards,
    alpha: f64,
) -> (RaeState, AdvantageVector) {
    state.update(rewards, alpha)
}

pub const REWARD_CORRECT: f64 = 1.0;
pub const REWARD_ABSTAIN: f64 = -0.5;
pub const REWARD_WRONG: f64 = -1.0;

pub fn decision_reward(choice: VoteChoice, spy: PlayerId) -> f64 {
    match choice {
        VoteChoice::Player(p) if p == spy => REWARD_CORRECT,
        VoteChoice::Na => REWARD_ABSTAIN,
        VoteChoice::Player(_) => REWARD_WRONG,
    }
}

/// `(r - mean) / (std + epsilon)` with the population standard deviation.
/// An empty group yields an empty vector.
pub fn group_normalize(r: &[f64], epsilon: f64) -> Vec<f64> {
    if r.is_empty() {
        return Vec::new();
    }
    let mu = mean(r);
    let var = r.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / r.len() as f64;
    let sigma = var.sqrt();
    r.iter().map(|x| (x - mu) / (sigma + epsilon)).collect()
}
