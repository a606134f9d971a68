//! Vocabulary shared by the game engine and the policies.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::claims::ClueStatement;

/// One-based player number, as shown to policies ("PLAYER 3").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub u32);

impl PlayerId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        PlayerId(index as u32 + 1)
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Civilian,
    Spy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Clue,
    Decision,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Clue => "clue",
            Stage::Decision => "decision",
        })
    }
}

/// A public clue: either a structured claim or free text from a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statement {
    Claim(ClueStatement),
    Text(String),
}

impl Statement {
    pub fn text(&self) -> String {
        match self {
            Statement::Claim(c) => c.to_sentence(),
            Statement::Text(t) => t.clone(),
        }
    }

    pub fn claim(&self) -> Option<&ClueStatement> {
        match self {
            Statement::Claim(c) => Some(c),
            Statement::Text(_) => None,
        }
    }

    /// Interpret a sentence, keeping it as free text if it is not in the
    /// claim grammar.
    pub fn from_sentence(sentence: &str) -> Statement {
        match ClueStatement::parse(sentence) {
            Some(claim) => Statement::Claim(claim),
            None => Statement::Text(sentence.trim().to_string()),
        }
    }
}

/// What other players get to see of a clue: never the speaker's reasoning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicClue {
    pub order: usize,
    pub speaker: PlayerId,
    pub round: u32,
    pub statement: Statement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteChoice {
    Player(PlayerId),
    Na,
}

impl fmt::Display for VoteChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VoteChoice::Player(p) => write!(f, "{p}"),
            VoteChoice::Na => f.write_str("N/A"),
        }
    }
}
