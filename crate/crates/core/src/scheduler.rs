//! Stage scheduler: alternates training between the clue and decision
//! stages from smoothed vote accuracy and abstention rates.
//!
//! Every batch contributes one evaluation: both EMAs are updated, the dwell
//! counter grows by one, and the gate for the current phase is checked.
//! A gate may only open after `k_min` evaluations in the phase. If the gate
//! stays shut and its margin (distance from opening) fails to improve by
//! `min_delta` for `patience` consecutive evaluations, the switch is forced.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{PlayerId, VoteChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Decision,
    Clue,
}

impl Phase {
    /// 1 when the clue stage is trained, 0 for the decision stage.
    pub fn bit(self) -> f64 {
        match self {
            Phase::Decision => 0.0,
            Phase::Clue => 1.0,
        }
    }

    pub fn other(self) -> Phase {
        match self {
            Phase::Decision => Phase::Clue,
            Phase::Clue => Phase::Decision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Decision to clue: accuracy EMA must reach this.
    pub acc_up: f64,
    /// Clue to decision: error EMA (1 - accuracy) at or above this.
    pub err_up: f64,
    /// Clue to decision: abstention EMA at or above this.
    pub na_up: f64,
    /// Decision to clue: abstention EMA must be at or below this.
    pub na_down: f64,
    pub rho: f64,
    pub k_min: u32,
    pub patience: u32,
    pub min_delta: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            acc_up: 0.9,
            err_up: 0.4,
            na_up: 0.5,
            na_down: 0.1,
            rho: 0.95,
            k_min: 5,
            patience: 20,
            min_delta: 1e-3,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("acc_up", self.acc_up),
            ("err_up", self.err_up),
            ("na_up", self.na_up),
            ("na_down", self.na_down),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.patience < self.k_min {
            return Err(format!(
                "patience ({}) must be at least k_min ({})",
                self.patience, self.k_min
            ));
        }
        if !(self.min_delta >= 0.0 && self.min_delta.is_finite()) {
            return Err(format!(
                "min_delta must be non-negative, got {}",
                self.min_delta
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub phase: Phase,
    pub ema_acc: f64,
    pub ema_na: f64,
    /// Evaluations since the last switch.
    pub dwell: u32,
    /// Consecutive evaluations without gate progress.
    pub stagnation: u32,
    pub best_margin: Option<f64>,
    /// Evaluations so far.
    pub t: u64,
}

impl Default for SchedulerState {
    fn default() -> Self {
        SchedulerState {
            phase: Phase::Decision,
            ema_acc: 0.0,
            ema_na: 0.0,
            dwell: 0,
            stagnation: 0,
            best_margin: None,
            t: 0,
        }
    }
}

/// Vote outcome fractions over all civilian ballots of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub acc: f64,
    pub na: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("batch has no ballots")]
    EmptyBatch,
}

/// `ballots` pairs each civilian's choice with the spy of its episode.
pub fn batch_metrics(ballots: &[(VoteChoice, PlayerId)]) -> Result<BatchMetrics, SchedulerError> {
    if ballots.is_empty() {
        return Err(SchedulerError::EmptyBatch);
    }
    let n = ballots.len() as f64;
    let correct = ballots
        .iter()
        .filter(|(c, spy)| *c == VoteChoice::Player(*spy))
        .count() as f64;
    let na = ballots.iter().filter(|(c, _)| *c == VoteChoice::Na).count() as f64;
    Ok(BatchMetrics {
        acc: correct / n,
        na: na / n,
    })
}

pub fn ema_update(state: &SchedulerState, metrics: BatchMetrics, rho: f64) -> SchedulerState {
    let blend = |ema: f64, x: f64| (rho * ema + (1.0 - rho) * x).clamp(0.0, 1.0);
    SchedulerState {
        ema_acc: blend(state.ema_acc, metrics.acc),
        ema_na: blend(state.ema_na, metrics.na),
        dwell: state.dwell + 1,
        t: state.t + 1,
        ..state.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchReason {
    /// Decision to clue: voting is accurate and decisive.
    AccuracySaturated,
    /// Clue to decision: too many wrong votes.
    ErrorRate,
    /// Clue to decision: too many abstentions.
    Abstention,
    /// No gate progress for `patience` evaluations.
    Patience,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub switched: bool,
    pub reason: Option<SwitchReason>,
    pub forced: bool,
    /// Stagnation count at the time of the check.
    pub stagnation: u32,
}

impl SwitchEvent {
    fn hold(stagnation: u32) -> Self {
        SwitchEvent {
            switched: false,
            reason: None,
            forced: false,
            stagnation,
        }
    }
}

/// Whether the gate of the current phase is open, and the reason it is.
fn gate(state: &SchedulerState, cfg: &SchedulerConfig) -> Option<SwitchReason> {
    match state.phase {
        Phase::Decision => (state.ema_acc >= cfg.acc_up && state.ema_na <= cfg.na_down)
            .then_some(SwitchReason::AccuracySaturated),
        Phase::Clue => {
            if 1.0 - state.ema_acc >= cfg.err_up {
                Some(SwitchReason::ErrorRate)
            } else if state.ema_na >= cfg.na_up {
                Some(SwitchReason::Abstention)
            } else {
                None
            }
        }
    }
}

/// Signed distance from the gate opening; non-negative iff open.
pub fn gate_margin(state: &SchedulerState, cfg: &SchedulerConfig) -> f64 {
    match state.phase {
        Phase::Decision => (state.ema_acc - cfg.acc_up).min(cfg.na_down - state.ema_na),
        Phase::Clue => ((1.0 - state.ema_acc) - cfg.err_up).max(state.ema_na - cfg.na_up),
    }
}

pub fn maybe_switch(
    state: &SchedulerState,
    cfg: &SchedulerConfig,
) -> (SchedulerState, SwitchEvent) {
    let mut next = state.clone();
    let flip = |next: &mut SchedulerState| {
        next.phase = next.phase.other();
        next.dwell = 0;
        next.stagnation = 0;
        next.best_margin = None;
    };

    if let Some(reason) = gate(state, cfg) {
        if state.dwell >= cfg.k_min {
            flip(&mut next);
            return (
                next,
                SwitchEvent {
                    switched: true,
                    reason: Some(reason),
                    forced: false,
                    stagnation: state.stagnation,
                },
            );
        }
        // Open but held by the dwell time: not silent.
        next.stagnation = 0;
        next.best_margin = Some(gate_margin(state, cfg));
        return (next, SwitchEvent::hold(0));
    }

    let margin = gate_margin(state, cfg);
    match state.best_margin {
        Some(best) if margin <= best + cfg.min_delta => next.stagnation += 1,
        _ => {
            next.best_margin = Some(margin);
            next.stagnation = 0;
        }
    }
    let stagnation = next.stagnation;
    if stagnation >= cfg.patience && next.dwell >= cfg.k_min {
        flip(&mut next);
        return (
            next,
            SwitchEvent {
                switched: true,
                reason: Some(SwitchReason::Patience),
                forced: true,
                stagnation,
            },
        );
    }
    (next, SwitchEvent::hold(stagnation))
}

/// One evaluation, as written to the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerStep {
    pub t: u64,
    /// Phase the batch was trained under.
    pub phase: Phase,
    pub next_phase: Phase,
    pub acc: f64,
    pub na: f64,
    pub ema_acc: f64,
    pub ema_na: f64,
    pub switched: bool,
    pub reason: Option<SwitchReason>,
    pub forced: bool,
    /// Dwell and stagnation counters at the time of the check.
    pub dwell: u32,
    pub stagnation: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scheduler {
    pub config: SchedulerConfig,
    pub state: SchedulerState,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig) -> Self {
        Scheduler {
            config,
            state: SchedulerState::default(),
        }
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn step(&mut self, metrics: BatchMetrics) -> SchedulerStep {
        let phase = self.state.phase;
        let updated = ema_update(&self.state, metrics, self.config.rho);
        let (next, event) = maybe_switch(&updated, &self.config);
        let step = SchedulerStep {
            t: updated.t,
            phase,
            next_phase: next.phase,
            acc: metrics.acc,
            na: metrics.na,
            ema_acc: updated.ema_acc,
            ema_na: updated.ema_na,
            switched: event.switched,
            reason: event.reason,
            forced: event.forced,
            dwell: updated.dwell,
            stagnation: event.stagnation,
        };
        self.state = next;
        step
    }
}

/// Re-run the scheduler over a metric stream.
pub fn replay(
    config: &SchedulerConfig,
    metrics: impl IntoIterator<Item = BatchMetrics>,
) -> Vec<SchedulerStep> {
    let mut s = Scheduler::new(config.clone());
    metrics.into_iter().map(|m| s.step(m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PERFECT: BatchMetrics = BatchMetrics { acc: 1.0, na: 0.0 };

    #[test]
    fn counting_metrics() {
        let spy = PlayerId(2);
        let ballots = [
            (VoteChoice::Player(spy), spy),
            (VoteChoice::Player(spy), spy),
            (VoteChoice::Player(spy), spy),
            (VoteChoice::Na, spy),
        ];
        assert_eq!(
            batch_metrics(&ballots),
            Ok(BatchMetrics {
                acc: 0.75,
                na: 0.25
            })
        );
        assert_eq!(
            batch_metrics(&ballots[..3]),
            Ok(BatchMetrics { acc: 1.0, na: 0.0 })
        );
        assert_eq!(batch_metrics(&[]), Err(SchedulerError::EmptyBatch));
    }

    #[test]
    fn ema_closed_form() {
        let mut s = SchedulerState::default();
        for t in 1..=100 {
            s = ema_update(&s, PERFECT, 0.95);
            assert!((s.ema_acc - (1.0 - 0.95f64.powi(t))).abs() < 1e-12);
        }
        let s = ema_update(
            &SchedulerState::default(),
            BatchMetrics { acc: 0.3, na: 0.6 },
            0.0,
        );
        assert_eq!((s.ema_acc, s.ema_na), (0.3, 0.6));
    }

    #[test]
    fn first_switch_at_45() {
        let steps = replay(
            &SchedulerConfig::default(),
            std::iter::repeat_n(PERFECT, 60),
        );
        let first = steps.iter().find(|s| s.switched).unwrap();
        assert_eq!(first.t, 45);
        assert_eq!(first.reason, Some(SwitchReason::AccuracySaturated));
        assert!(!first.forced);
    }

    #[test]
    fn dwell_blocks_switch() {
        let cfg = SchedulerConfig::default();
        let s = SchedulerState {
            ema_acc: 0.95,
            ema_na: 0.0,
            dwell: 3,
            ..SchedulerState::default()
        };
        let (next, ev) = maybe_switch(&s, &cfg);
        assert!(!ev.switched);
        assert_eq!(next.phase, Phase::Decision);
        let (next, ev) = maybe_switch(&SchedulerState { dwell: 5, ..s }, &cfg);
        assert!(ev.switched);
        assert_eq!(next.phase, Phase::Clue);
        assert_eq!(next.dwell, 0);
    }

    #[test]
    fn fresh_state_holds() {
        let (_, ev) = maybe_switch(&SchedulerState::default(), &SchedulerConfig::default());
        assert!(!ev.switched);
    }

    #[test]
    fn flat_stream_forces_after_patience() {
        let cfg = SchedulerConfig::default();
        let zero = BatchMetrics { acc: 0.0, na: 0.0 };
        // Accuracy 0 keeps the decision gate shut and its margin flat.
        let steps = replay(&cfg, std::iter::repeat_n(zero, 30));
        let forced = steps.iter().find(|s| s.switched).unwrap();
        assert!(forced.forced);
        assert_eq!(forced.reason, Some(SwitchReason::Patience));
        assert_eq!(forced.t, 21);
        assert_eq!(forced.stagnation, cfg.patience);
    }

    #[test]
    fn validation() {
        assert!(SchedulerConfig::default().validate().is_ok());
        let bad = SchedulerConfig {
            patience: 3,
            ..SchedulerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn dwell_respected(stream in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..300)) {
            let cfg = SchedulerConfig::default();
            let metrics = stream.iter().map(|&(a, n)| BatchMetrics { acc: a, na: n * (1.0 - a) });
            let steps = replay(&cfg, metrics);
            let mut last = 0u64;
            for s in steps.iter().filter(|s| s.switched) {
                prop_assert!(s.t - last >= cfg.k_min as u64);
                last = s.t;
            }
        }
    }
}
