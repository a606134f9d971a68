//! One episode of the two-stage game.
//!
//! Players speak in seating order for `clue_rounds` rounds, each seeing only
//! the public clues spoken before them. Civilians then vote privately for the
//! player they believe holds the spy scene, or abstain. The spy never votes.
//!
//! Policy failures never abort an episode: a failed or unparseable clue is
//! replaced by the configured fallback clue and a failed vote becomes N/A,
//! with an [`EpisodeFlag`] recording what happened.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Action, AgentNote, Policy, PolicyRequest, PolicyResponse};
use crate::answer::ParseIssue;
use crate::prompts::{PromptContext, PromptError, PromptTemplates};
use crate::protocol::{PlayerId, PublicClue, Role, Stage, Statement, VoteChoice};
use crate::scene::ScenePair;
use crate::scheduler::SchedulerConfig;
use crate::seed::{self, derive_seed};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("n_civilians must be at least 2, got {0}")]
    TooFewCivilians(usize),
    #[error("clue_rounds must be at least 1")]
    NoClueRounds,
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must lie in [0, 1), got {value}")]
    BadDecay { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("fallback clue must not be empty")]
    EmptyFallback,
    #[error("scheduler: {0}")]
    Scheduler(String),
}

/// Game, reward and scheduler settings for a run. Defaults follow the
/// reference training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub n_civilians: usize,
    pub clue_rounds: u32,
    pub beta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
    pub tau_clue: f64,
    pub tau_dec: f64,
    pub epsilon: f64,
    pub scheduler: SchedulerConfig,
    pub rng_seed: u64,
    pub fallback_clue: String,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            n_civilians: 4,
            clue_rounds: 2,
            beta: 0.1,
            lambda: 0.1,
            alpha: 0.95,
            rho: 0.95,
            tau_clue: 0.04,
            tau_dec: 0.04,
            epsilon: 1e-8,
            scheduler: SchedulerConfig::default(),
            rng_seed: 0,
            fallback_clue: "I have nothing to add.".to_string(),
        }
    }
}

impl EpisodeConfig {
    pub fn n_players(&self) -> usize {
        self.n_civilians + 1
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_civilians < 2 {
            return Err(ConfigError::TooFewCivilians(self.n_civilians));
        }
        if self.clue_rounds < 1 {
            return Err(ConfigError::NoClueRounds);
        }
        for (name, value) in [
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("epsilon", self.epsilon),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::NotPositive { name, value });
            }
        }
        for (name, value) in [("alpha", self.alpha), ("rho", self.rho)] {
            if !(0.0..1.0).contains(&value) {
                return Err(ConfigError::BadDecay { name, value });
            }
        }
        for (name, value) in [("tau_clue", self.tau_clue), ("tau_dec", self.tau_dec)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ConfigError::Negative { name, value });
            }
        }
        if self.fallback_clue.trim().is_empty() {
            return Err(ConfigError::EmptyFallback);
        }
        self.scheduler.validate().map_err(ConfigError::Scheduler)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpisodeFlag {
    PolicyFailure {
        player: PlayerId,
        stage: Stage,
        message: String,
    },
    ParseError {
        player: PlayerId,
        stage: Stage,
        issue: ParseIssue,
    },
    /// Clue-stage answer was a vote or vice versa.
    WrongActionKind {
        player: PlayerId,
        stage: Stage,
    },
    EmptyClue {
        player: PlayerId,
    },
    SelfVote {
        player: PlayerId,
    },
    InvalidVote {
        player: PlayerId,
        choice: u32,
    },
    Agent {
        player: PlayerId,
        note: AgentNote,
    },
}

/// A spoken clue with everything needed to audit or train on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clue {
    pub order: usize,
    pub speaker: PlayerId,
    pub round: u32,
    pub statement: Statement,
    /// Never shown to other players.
    pub private_reasoning: String,
    pub prompt: String,
    pub completion: String,
    pub logprob: Option<f64>,
    pub kl: Option<f64>,
    pub fallback: bool,
}

impl Clue {
    pub fn public(&self) -> PublicClue {
        PublicClue {
            order: self.order,
            speaker: self.speaker,
            round: self.round,
            statement: self.statement.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub clues: Vec<Clue>,
}

impl Transcript {
    /// Public clues with global order `< turn`: what the speaker at `turn` sees.
    pub fn history_before(&self, turn: usize) -> Vec<PublicClue> {
        self.clues
            .iter()
            .take_while(|c| c.order < turn)
            .map(Clue::public)
            .collect()
    }

    /// Every public clue of the episode.
    pub fn full(&self) -> Vec<PublicClue> {
        self.clues.iter().map(Clue::public).collect()
    }

    pub fn len(&self) -> usize {
        self.clues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clues.is_empty()
    }

    fn push(&mut self, clue: Clue) {
        debug_assert_eq!(clue.order, self.clues.len());
        self.clues.push(clue);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteBallot {
    pub voter: PlayerId,
    pub choice: VoteChoice,
    pub private_reasoning: String,
    pub prompt: String,
    pub completion: String,
    pub logprob: Option<f64>,
    pub kl: Option<f64>,
    pub fallback: bool,
}

/// Votes received per player plus abstentions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub spy: PlayerId,
    /// `votes[i]` = votes received by player `i + 1`.
    pub votes: Vec<u32>,
    pub na_count: u32,
}

impl VoteTally {
    pub fn spy_votes(&self) -> u32 {
        self.votes[self.spy.index()]
    }

    /// Civilians in increasing player order.
    pub fn civilians(&self) -> Vec<PlayerId> {
        (0..self.votes.len())
            .map(PlayerId::from_index)
            .filter(|p| *p != self.spy)
            .collect()
    }

    /// Votes received by each civilian, in the order of [`Self::civilians`].
    pub fn civilian_votes(&self) -> Vec<u32> {
        self.civilians()
            .iter()
            .map(|p| self.votes[p.index()])
            .collect()
    }

    pub fn cast(&self) -> u32 {
        self.votes.iter().sum()
    }

    pub fn n_civilians(&self) -> usize {
        self.votes.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    CiviliansWin,
    SpyWins,
}

#[derive(Debug, Clone)]
pub struct GameState {
    pub pair: ScenePair,
    pub pair_id: String,
    /// Speaking order; a permutation of all players.
    pub seating: Vec<PlayerId>,
    pub spy: PlayerId,
    pub seed: u64,
    pub clue_rounds: u32,
    pub round: u32,
    pub transcript: Transcript,
    pub flags: Vec<EpisodeFlag>,
    fallback_clue: String,
}

impl GameState {
    pub fn n_players(&self) -> usize {
        self.seating.len()
    }

    pub fn role_of(&self, player: PlayerId) -> Role {
        if player == self.spy {
            Role::Spy
        } else {
            Role::Civilian
        }
    }

    pub fn civilians(&self) -> Vec<PlayerId> {
        (0..self.n_players())
            .map(PlayerId::from_index)
            .filter(|p| *p != self.spy)
            .collect()
    }

    fn scene_for(&self, player: PlayerId) -> (&crate::scene::Scene, String) {
        match self.role_of(player) {
            Role::Spy => (&self.pair.spy, format!("{}/spy", self.pair_id)),
            Role::Civilian => (&self.pair.civilian, format!("{}/civilian", self.pair_id)),
        }
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("expected {expected} policies, got {got}")]
    PolicyCount { expected: usize, got: usize },
    #[error("prompt rendering failed: {0}")]
    Prompt(#[from] PromptError),
    #[error("decision stage requires a complete clue stage ({have} of {want} clues)")]
    IncompleteClueStage { have: usize, want: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Seat players: spy and speaking order are both uniform and depend only on `seed`.
pub fn new_episode(config: &EpisodeConfig, pair: ScenePair, pair_id: &str, seed: u64) -> GameState {
    let n = config.n_players();
    let mut rng = seed::rng(seed);
    let spy = PlayerId::from_index(rng.gen_range(0..n));
    let mut seating: Vec<PlayerId> = (0..n).map(PlayerId::from_index).collect();
    seating.shuffle(&mut rng);
    GameState {
        pair,
        pair_id: pair_id.to_string(),
        seating,
        spy,
        seed,
        clue_rounds: config.clue_rounds,
        round: 0,
        transcript: Transcript::default(),
        flags: Vec::new(),
        fallback_clue: config.fallback_clue.clone(),
    }
}

fn check_policies(state: &GameState, policies: &[&dyn Policy]) -> Result<(), GameError> {
    if policies.len() != state.n_players() {
        return Err(GameError::PolicyCount {
            expected: state.n_players(),
            got: policies.len(),
        });
    }
    Ok(())
}

fn request(
    state: &GameState,
    policy: &dyn Policy,
    player: PlayerId,
    stage: Stage,
    history: Vec<PublicClue>,
    prompt: String,
    seed: u64,
) -> PolicyRequest {
    let role = state.role_of(player);
    let (scene, scene_ref) = state.scene_for(player);
    let ground_truth =
        (role == Role::Spy && policy.privileged()).then(|| state.pair.change_log.clone());
    PolicyRequest {
        player,
        role,
        stage,
        round: state.round,
        n_players: state.n_players(),
        scene: scene.clone(),
        scene_ref,
        history,
        prompt,
        seed,
        ground_truth,
    }
}

fn note_flags(flags: &mut Vec<EpisodeFlag>, player: PlayerId, resp: &PolicyResponse) {
    flags.extend(
        resp.notes
            .iter()
            .map(|&note| EpisodeFlag::Agent { player, note }),
    );
}

/// Run every clue round. `policies[i]` plays player `i + 1`.
pub fn run_clue_stage<'s>(
    state: &'s mut GameState,
    policies: &[&dyn Policy],
    prompts: &PromptTemplates,
) -> Result<&'s Transcript, GameError> {
    check_policies(state, policies)?;
    let seating = state.seating.clone();
    for round in 1..=state.clue_rounds {
        state.round = round;
        for &speaker in &seating {
            let order = state.transcript.len();
            let history = state.transcript.history_before(order);
            let prompt = prompts.render_clue_prompt(&PromptContext {
                player_id: speaker,
                round,
                role: state.role_of(speaker),
                n_players: state.n_players(),
                history: &history,
            })?;
            let policy = policies[speaker.index()];
            let call_seed = derive_seed(state.seed, &[1, order as u64]);
            let req = request(
                state,
                policy,
                speaker,
                Stage::Clue,
                history,
                prompt.clone(),
                call_seed,
            );

            let mut clue = Clue {
                order,
                speaker,
                round,
                statement: Statement::Text(state.fallback_clue.clone()),
                private_reasoning: String::new(),
                prompt,
                completion: String::new(),
                logprob: None,
                kl: None,
                fallback: true,
            };
            match policy.respond(&req) {
                Err(err) => state.flags.push(EpisodeFlag::PolicyFailure {
                    player: speaker,
                    stage: Stage::Clue,
                    message: err.to_string(),
                }),
                Ok(resp) => {
                    note_flags(&mut state.flags, speaker, &resp);
                    clue.private_reasoning = resp.reasoning;
                    clue.completion = resp.raw_text;
                    clue.logprob = resp.logprob;
                    clue.kl = resp.kl;
                    match resp.action {
                        Some(Action::Clue(statement)) if !statement.text().trim().is_empty() => {
                            clue.statement = statement;
                            clue.fallback = false;
                        }
                        Some(Action::Clue(_)) => {
                            state.flags.push(EpisodeFlag::EmptyClue { player: speaker })
                        }
                        Some(Action::Vote(_)) => state.flags.push(EpisodeFlag::WrongActionKind {
                            player: speaker,
                            stage: Stage::Clue,
                        }),
                        None => state.flags.push(EpisodeFlag::ParseError {
                            player: speaker,
                            stage: Stage::Clue,
                            issue: resp.parse_issue.unwrap_or(ParseIssue::NoBox),
                        }),
                    }
                }
            }
            state.transcript.push(clue);
        }
    }
    Ok(&state.transcript)
}

/// Collect one ballot from every civilian, in player order. Each civilian
/// sees its own scene and all public clues; self-votes and out-of-range
/// votes are coerced to N/A and flagged.
pub fn run_decision_stage(
    state: &mut GameState,
    policies: &[&dyn Policy],
    prompts: &PromptTemplates,
) -> Result<Vec<VoteBallot>, GameError> {
    check_policies(state, policies)?;
    let want = state.n_players() * state.clue_rounds as usize;
    if state.transcript.len() != want {
        return Err(GameError::IncompleteClueStage {
            have: state.transcript.len(),
            want,
        });
    }
    let history = state.transcript.full();
    let n = state.n_players();
    let mut ballots = Vec::with_capacity(n - 1);
    for voter in state.civilians() {
        let prompt = prompts.render_decision_prompt(&PromptContext {
            player_id: voter,
            round: state.clue_rounds,
            role: Role::Civilian,
            n_players: n,
            history: &history,
        })?;
        let policy = policies[voter.index()];
        let call_seed = derive_seed(state.seed, &[2, voter.0 as u64]);
        let req = request(
            state,
            policy,
            voter,
            Stage::Decision,
            history.clone(),
            prompt.clone(),
            call_seed,
        );

        let mut ballot = VoteBallot {
            voter,
            choice: VoteChoice::Na,
            private_reasoning: String::new(),
            prompt,
            completion: String::new(),
            logprob: None,
            kl: None,
            fallback: true,
        };
        match policy.respond(&req) {
            Err(err) => state.flags.push(EpisodeFlag::PolicyFailure {
                player: voter,
                stage: Stage::Decision,
                message: err.to_string(),
            }),
            Ok(resp) => {
                note_flags(&mut state.flags, voter, &resp);
                ballot.private_reasoning = resp.reasoning;
                ballot.completion = resp.raw_text;
                ballot.logprob = resp.logprob;
                ballot.kl = resp.kl;
                match resp.action {
                    Some(Action::Vote(VoteChoice::Player(p))) if p == voter => {
                        state.flags.push(EpisodeFlag::SelfVote { player: voter })
                    }
                    Some(Action::Vote(VoteChoice::Player(p))) if p.0 == 0 || p.index() >= n => {
                        state.flags.push(EpisodeFlag::InvalidVote {
                            player: voter,
                            choice: p.0,
                        })
                    }
                    Some(Action::Vote(choice)) => {
                        ballot.choice = choice;
                        ballot.fallback = false;
                    }
                    Some(Action::Clue(_)) => state.flags.push(EpisodeFlag::WrongActionKind {
                        player: voter,
                        stage: Stage::Decision,
                    }),
                    None => state.flags.push(EpisodeFlag::ParseError {
                        player: voter,
                        stage: Stage::Decision,
                        issue: resp.parse_issue.unwrap_or(ParseIssue::NoBox),
                    }),
                }
            }
        }
        ballots.push(ballot);
    }
    Ok(ballots)
}

/// Count votes received per player. Choices outside `1..=n_players` are
/// counted as abstentions.
pub fn tally(choices: &[VoteChoice], spy: PlayerId, n_players: usize) -> VoteTally {
    let mut votes = vec![0u32; n_players];
    let mut na_count = 0;
    for choice in choices {
        match choice {
            VoteChoice::Player(p) if p.0 >= 1 && p.index() < n_players => votes[p.index()] += 1,
            _ => na_count += 1,
        }
    }
    VoteTally {
        spy,
        votes,
        na_count,
    }
}

pub fn tally_ballots(ballots: &[VoteBallot], spy: PlayerId, n_players: usize) -> VoteTally {
    let choices: Vec<VoteChoice> = ballots.iter().map(|b| b.choice).collect();
    tally(&choices, spy, n_players)
}

/// Civilians win only if the spy is the unique plurality choice among cast
/// votes. Ties, a wrong plurality, or no cast votes all go to the spy.
pub fn episode_outcome(tally: &VoteTally) -> Outcome {
    let spy_votes = tally.spy_votes();
    let best_other = tally
        .votes
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != tally.spy.index())
        .map(|(_, v)| *v)
        .max()
        .unwrap_or(0);
    if spy_votes > 0 && spy_votes > best_other {
        Outcome::CiviliansWin
    } else {
        Outcome::SpyWins
    }
}

/// A finished episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub state: GameState,
    pub ballots: Vec<VoteBallot>,
    pub tally: VoteTally,
    pub outcome: Outcome,
}

/// The policy playing each role of an episode.
#[derive(Clone, Copy)]
pub struct Lineup<'a> {
    pub civilian: &'a dyn Policy,
    pub spy: &'a dyn Policy,
}

impl<'a> Lineup<'a> {
    /// One policy per player, indexed by player.
    pub fn seat(&self, state: &GameState) -> Vec<&'a dyn Policy> {
        (0..state.n_players())
            .map(|i| {
                if PlayerId::from_index(i) == state.spy {
                    self.spy
                } else {
                    self.civilian
                }
            })
            .collect()
    }
}

pub fn play_episode(
    config: &EpisodeConfig,
    pair: ScenePair,
    pair_id: &str,
    seed: u64,
    lineup: Lineup<'_>,
    prompts: &PromptTemplates,
) -> Result<Episode, GameError> {
    config.validate()?;
    let mut state = new_episode(config, pair, pair_id, seed);
    let policies = lineup.seat(&state);
    run_clue_stage(&mut state, &policies, prompts)?;
    let ballots = run_decision_stage(&mut state, &policies, prompts)?;
    let tally = tally_ballots(&ballots, state.spy, state.n_players());
    let outcome = episode_outcome(&tally);
    Ok(Episode {
        state,
        ballots,
        tally,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u32) -> VoteChoice {
        VoteChoice::Player(PlayerId(n))
    }

    #[test]
    fn tally_counts_example() {
        let t = tally(&[p(1), p(1), VoteChoice::Na, p(3)], PlayerId(1), 5);
        assert_eq!(t.spy_votes(), 2);
        assert_eq!(t.votes[2], 1);
        assert_eq!(t.na_count, 1);
        assert_eq!(t.cast() + t.na_count, 4);
    }

    #[test]
    fn all_na_tally_and_outcome() {
        let t = tally(&[VoteChoice::Na; 4], PlayerId(2), 5);
        assert_eq!(t.votes, vec![0; 5]);
        assert_eq!(t.na_count, 4);
        assert_eq!(episode_outcome(&t), Outcome::SpyWins);
    }

    #[test]
    fn unanimous_spy_votes() {
        let t = tally(&[p(5); 4], PlayerId(5), 5);
        assert_eq!(t.spy_votes(), 4);
        assert_eq!(episode_outcome(&t), Outcome::CiviliansWin);
    }

    #[test]
    fn outcome_rules() {
        // 3 of 4 on the spy.
        let t = tally(&[p(1), p(1), p(1), p(2)], PlayerId(1), 5);
        assert_eq!(episode_outcome(&t), Outcome::CiviliansWin);
        // Tie with a civilian goes to the spy.
        let t = tally(&[p(1), p(1), p(2), p(2)], PlayerId(1), 5);
        assert_eq!(episode_outcome(&t), Outcome::SpyWins);
        // Wrong plurality.
        let t = tally(&[p(1), p(2), p(2), VoteChoice::Na], PlayerId(1), 5);
        assert_eq!(episode_outcome(&t), Outcome::SpyWins);
        // Single cast vote on the spy is a unique plurality.
        let t = tally(
            &[p(3), VoteChoice::Na, VoteChoice::Na, VoteChoice::Na],
            PlayerId(3),
            5,
        );
        assert_eq!(episode_outcome(&t), Outcome::CiviliansWin);
    }

    #[test]
    fn config_validation() {
        assert!(EpisodeConfig::default().validate().is_ok());
        let bad = EpisodeConfig {
            n_civilians: 1,
            ..EpisodeConfig::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::TooFewCivilians(1)));
        let bad = EpisodeConfig {
            alpha: 1.0,
            ..EpisodeConfig::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(ConfigError::BadDecay { name: "alpha", .. })
        ));
        let bad = EpisodeConfig {
            beta: 0.0,
            ..EpisodeConfig::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(ConfigError::NotPositive { name: "beta", .. })
        ));
        let bad = EpisodeConfig {
            clue_rounds: 0,
            ..EpisodeConfig::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::NoClueRounds));
    }
}
