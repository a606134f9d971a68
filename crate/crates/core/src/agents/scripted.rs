//! Deterministic symbolic players.
//!
//! * Honest civilians state a true, unambiguous claim about their scene that
//!   has not been said yet.
//! * The naive spy does the same on the spy scene, ignoring which objects
//!   were changed.
//! * The oracle spy reads the change log and only makes claims that avoid the
//!   changed objects and every shape/colour involved in the change, so its
//!   claims hold on both scenes.
//! * Civilians vote for the speaker with the most claims that do not hold on
//!   their own scene.
//!
//! Claim choice is uniform over claim kinds, then uniform within the kind,
//! so the log-probability of every emitted clue is known exactly.

use std::collections::BTreeMap;

use rand::Rng;

use super::{Action, AgentNote, Policy, PolicyError, PolicyRequest, PolicyResponse};
use crate::claims::{true_claims, Attribute, ClueStatement, Truth};
use crate::protocol::{PlayerId, PublicClue, Role, Stage, Statement, VoteChoice};
use crate::scene::{ChangeLog, Scene};
use crate::seed;

/// Said when the scene admits no unambiguous claim.
pub const NO_CLAIM_CLUE: &str = "Everything in my picture comes in identical pairs.";

/// A chosen claim plus how it was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedClue {
    pub claim: ClueStatement,
    /// Natural log of the probability this claim had of being picked.
    pub logprob: f64,
    /// Number of claims the choice was made from.
    pub candidates: usize,
    pub note: Option<AgentNote>,
}

fn already_said(claim: &ClueStatement, history: &[PublicClue]) -> bool {
    history
        .iter()
        .filter_map(|c| c.statement.claim())
        .any(|h| h.same_claim(claim))
}

fn fresh(groups: [Vec<ClueStatement>; 3], history: &[PublicClue]) -> Vec<Vec<ClueStatement>> {
    groups
        .into_iter()
        .map(|g| {
            g.into_iter()
                .filter(|c| !already_said(c, history))
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect()
}

fn sample(groups: &[Vec<ClueStatement>], seed: u64) -> Option<ScriptedClue> {
    if groups.is_empty() {
        return None;
    }
    let mut rng = seed::rng(seed);
    let kind = rng.gen_range(0..groups.len());
    let pick = rng.gen_range(0..groups[kind].len());
    Some(ScriptedClue {
        claim: groups[kind][pick].clone(),
        logprob: -((groups.len() * groups[kind].len()) as f64).ln(),
        candidates: groups.iter().map(Vec::len).sum(),
        note: None,
    })
}

/// Repeat the true claim whose latest mention is the oldest.
fn least_recent(groups: [Vec<ClueStatement>; 3], history: &[PublicClue]) -> Option<ScriptedClue> {
    let last_said = |claim: &ClueStatement| {
        history
            .iter()
            .rev()
            .find(|c| c.statement.claim().is_some_and(|h| h.same_claim(claim)))
            .map(|c| c.order)
    };
    groups
        .into_iter()
        .flatten()
        .min_by_key(|c| (last_said(c), c.clone()))
        .map(|claim| ScriptedClue {
            claim,
            logprob: 0.0,
            candidates: 0,
            note: Some(AgentNote::ClaimSpaceExhausted),
        })
}

fn choose(
    groups: [Vec<ClueStatement>; 3],
    history: &[PublicClue],
    seed: u64,
) -> Option<ScriptedClue> {
    sample(&fresh(groups.clone(), history), seed).or_else(|| least_recent(groups, history))
}

/// A true, unambiguous claim about `scene` not yet present in `history`.
/// `None` when no object of the scene can be singled out, e.g. when every
/// object has an identical twin.
pub fn honest_civilian_clue(
    scene: &Scene,
    history: &[PublicClue],
    seed: u64,
) -> Option<ScriptedClue> {
    choose(true_claims(scene), history, seed)
}

/// A true claim about the spy's own scene, with no attempt at hiding changes.
pub fn naive_spy_clue(
    spy_scene: &Scene,
    history: &[PublicClue],
    seed: u64,
) -> Option<ScriptedClue> {
    honest_civilian_clue(spy_scene, history, seed)
}

fn avoids_change(claim: &ClueStatement, scene: &Scene, log: &ChangeLog) -> bool {
    let shapes = log.shapes();
    let colors = log.colors();
    let touches_value = claim.mentioned_attributes().iter().any(|a| match a {
        Attribute::Shape(s) => shapes.contains(s),
        Attribute::Color(c) => colors.contains(c),
        _ => false,
    });
    let touches_object = claim
        .selectors()
        .iter()
        .any(|s| s.resolve(scene).is_some_and(|o| log.touches(o.id)));
    !touches_value && !touches_object
}

/// A claim true on the spy scene that steers clear of every changed object
/// and every changed attribute value. Falls back to the naive clue (noted)
/// when no such claim exists.
pub fn oracle_spy_clue(
    spy_scene: &Scene,
    change_log: &ChangeLog,
    history: &[PublicClue],
    seed: u64,
) -> Option<ScriptedClue> {
    let safe = true_claims(spy_scene).map(|g| {
        g.into_iter()
            .filter(|c| avoids_change(c, spy_scene, change_log))
            .collect::<Vec<_>>()
    });
    if safe.iter().all(Vec::is_empty) {
        return naive_spy_clue(spy_scene, history, seed).map(|mut clue| {
            clue.note = Some(AgentNote::OracleFallback);
            clue
        });
    }
    choose(safe, history, seed)
}

/// Count, per speaker, the claims that do not hold on `scene`.
pub fn inconsistency_counts(scene: &Scene, transcript: &[PublicClue]) -> BTreeMap<PlayerId, usize> {
    let mut counts = BTreeMap::new();
    for clue in transcript {
        let entry = counts.entry(clue.speaker).or_insert(0);
        if let Some(claim) = clue.statement.claim() {
            if claim.evaluate(scene) != Truth::True {
                *entry += 1;
            }
        }
    }
    counts
}

/// Vote for the speaker with the most claims inconsistent with `scene`;
/// abstain when nobody is inconsistent or the top count is shared. Free-text
/// clues are not judged.
pub fn consistency_vote(scene: &Scene, transcript: &[PublicClue]) -> VoteChoice {
    let counts = inconsistency_counts(scene, transcript);
    let top = counts.values().copied().max().unwrap_or(0);
    if top == 0 {
        return VoteChoice::Na;
    }
    let mut leaders = counts.iter().filter(|(_, &n)| n == top).map(|(p, _)| *p);
    match (leaders.next(), leaders.next()) {
        (Some(p), None) => VoteChoice::Player(p),
        _ => VoteChoice::Na,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpyStyle {
    Naive,
    Oracle,
}

/// Honest civilian + consistency voter, playing the spy in the given style.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    name: String,
    spy_style: SpyStyle,
}

impl ScriptedAgent {
    pub fn new(spy_style: SpyStyle) -> Self {
        let name = match spy_style {
            SpyStyle::Naive => "scripted",
            SpyStyle::Oracle => "oracle",
        };
        ScriptedAgent {
            name: name.to_string(),
            spy_style,
        }
    }

    fn clue(&self, req: &PolicyRequest) -> Option<ScriptedClue> {
        match (req.role, self.spy_style, &req.ground_truth) {
            (Role::Civilian, _, _) => honest_civilian_clue(&req.scene, &req.history, req.seed),
            (Role::Spy, SpyStyle::Naive, _) => naive_spy_clue(&req.scene, &req.history, req.seed),
            (Role::Spy, SpyStyle::Oracle, Some(log)) => {
                oracle_spy_clue(&req.scene, log, &req.history, req.seed)
            }
            (Role::Spy, SpyStyle::Oracle, None) => {
                naive_spy_clue(&req.scene, &req.history, req.seed).map(|mut clue| {
                    clue.note = Some(AgentNote::OracleFallback);
                    clue
                })
            }
        }
    }
}

impl Policy for ScriptedAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn privileged(&self) -> bool {
        self.spy_style == SpyStyle::Oracle
    }

    fn respond(&self, req: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        match req.stage {
            Stage::Clue => {
                let Some(clue) = self.clue(req) else {
                    let reasoning = "No object in my picture can be singled out.".to_string();
                    return Ok(PolicyResponse {
                        raw_text: format!("{reasoning}\n\\boxed{{{NO_CLAIM_CLUE}}}"),
                        action: Some(Action::Clue(Statement::Text(NO_CLAIM_CLUE.into()))),
                        parse_issue: None,
                        logprob: Some(0.0),
                        kl: Some(0.0),
                        reasoning,
                        notes: vec![AgentNote::NoClaimAvailable],
                    });
                };
                let sentence = clue.claim.to_sentence();
                let reasoning = format!(
                    "Picked one of {} true, unambiguous statements about my picture that nobody has made yet.",
                    clue.candidates
                );
                Ok(PolicyResponse {
                    raw_text: format!("{reasoning}\n\\boxed{{{sentence}}}"),
                    action: Some(Action::Clue(Statement::Claim(clue.claim))),
                    parse_issue: None,
                    logprob: Some(clue.logprob),
                    kl: Some(0.0),
                    reasoning,
                    notes: clue.note.into_iter().collect(),
                })
            }
            Stage::Decision => {
                let counts = inconsistency_counts(&req.scene, &req.history);
                let vote = consistency_vote(&req.scene, &req.history);
                let tally: Vec<String> = counts
                    .iter()
                    .map(|(p, n)| format!("PLAYER {p}: {n}"))
                    .collect();
                let reasoning = format!(
                    "Statements that do not hold on my picture: {}.",
                    tally.join(", ")
                );
                Ok(PolicyResponse {
                    raw_text: format!("{reasoning}\n\\boxed{{{vote}}}"),
                    action: Some(Action::Vote(vote)),
                    parse_issue: None,
                    logprob: Some(0.0),
                    kl: Some(0.0),
                    reasoning,
                    notes: Vec::new(),
                })
            }
        }
    }
}
