//! Policies: the interface the game engine calls, scripted symbolic agents,
//! and a client for a remote chat-completion endpoint.

mod gate;
pub mod remote;
pub mod scripted;

pub use gate::{InFlightLimit, Serialized};
pub use remote::{RemoteConfig, RemotePolicy};
pub use scripted::{ScriptedAgent, SpyStyle};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::ParseIssue;
use crate::protocol::{PlayerId, PublicClue, Role, Stage, Statement, VoteChoice};
use crate::scene::{ChangeLog, Scene};

/// Everything a player is allowed to see when asked to act.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyRequest {
    pub player: PlayerId,
    pub role: Role,
    pub stage: Stage,
    /// Clue round (1-based); for the decision stage, the number of clue rounds played.
    pub round: u32,
    pub n_players: usize,
    /// The asking player's own scene.
    pub scene: Scene,
    /// Identifier of the image this scene stands for, e.g. `000012/civilian`.
    pub scene_ref: String,
    /// Public clues spoken so far (clue stage) or all clues (decision stage).
    pub history: Vec<PublicClue>,
    pub prompt: String,
    /// Per-call seed; scripted policies are pure functions of the request.
    pub seed: u64,
    /// Change log, handed only to privileged (test-only) spy policies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<ChangeLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Clue(Statement),
    Vote(VoteChoice),
}

/// Non-fatal notes a policy attaches to its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentNote {
    /// Every true claim had already been said; a repeat was emitted.
    ClaimSpaceExhausted,
    /// The oracle spy had no safe claim (or no change log) and spoke naively.
    OracleFallback,
    /// No object could be singled out; a fixed free-text clue was given.
    NoClaimAvailable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResponse {
    pub raw_text: String,
    /// `None` when the output could not be parsed; the engine falls back.
    pub action: Option<Action>,
    pub parse_issue: Option<ParseIssue>,
    pub logprob: Option<f64>,
    pub kl: Option<f64>,
    pub reasoning: String,
    pub notes: Vec<AgentNote>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint rejected request with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed endpoint response: {0}")]
    Malformed(String),
    #[error("policy failure: {0}")]
    Other(String),
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    /// Whether the engine should hand this policy the pair's change log when
    /// it plays the spy. Only test oracles should say yes.
    fn privileged(&self) -> bool {
        false
    }

    fn respond(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for std::sync::Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn privileged(&self) -> bool {
        (**self).privileged()
    }

    fn respond(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        (**self).respond(request)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn privileged(&self) -> bool {
        (**self).privileged()
    }

    fn respond(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        (**self).respond(request)
    }
}
