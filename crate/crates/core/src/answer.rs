//! Extraction of `\boxed{...}` answers from model output.

use serde::{Deserialize, Serialize};

use crate::protocol::{PlayerId, Stage, Statement, VoteChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseIssue {
    /// No complete `\boxed{...}` span in the text.
    NoBox,
    /// A box was found but its content is empty.
    EmptyBox,
    /// Decision-stage box that is neither a player number nor N/A.
    NotAVote,
}

/// Parsed answer: `action` is `None` when the caller must fall back.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnswer {
    pub action: Option<ParsedAction>,
    pub reasoning: String,
    pub issue: Option<ParseIssue>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedAction {
    Clue(Statement),
    Vote(VoteChoice),
}

const MARKER: &str = "\\boxed{";

/// Locate the last complete boxed span; returns (start of marker, content).
fn last_boxed(text: &str) -> Option<(usize, &str)> {
    let mut search_end = text.len();
    while let Some(start) = text[..search_end].rfind(MARKER) {
        let body_start = start + MARKER.len();
        let mut depth = 1usize;
        for (i, c) in text[body_start..].char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some((start, &text[body_start..body_start + i]));
                    }
                }
                _ => {}
            }
        }
        // Unterminated box: try an earlier one.
        search_end = start;
    }
    None
}

fn parse_vote(content: &str) -> Option<VoteChoice> {
    let lower = content.trim().to_lowercase();
    if matches!(lower.as_str(), "n/a" | "na") {
        return Some(VoteChoice::Na);
    }
    let digits = lower
        .strip_prefix("player")
        .map(|r| r.trim_start_matches([' ', '_']))
        .unwrap_or(&lower)
        .trim();
    match digits.parse::<u32>() {
        Ok(n) if n >= 1 => Some(VoteChoice::Player(PlayerId(n))),
        _ => None,
    }
}

/// Parse a completion for the given stage. Never fails: malformed input
/// yields `action: None` with an issue attached. Everything before the last
/// box is kept as private reasoning.
pub fn parse_boxed(text: &str, stage: Stage) -> ParsedAnswer {
    let Some((start, content)) = last_boxed(text) else {
        return ParsedAnswer {
            action: None,
            reasoning: text.trim().to_string(),
            issue: Some(ParseIssue::NoBox),
        };
    };
    let reasoning = text[..start].trim().to_string();
    let content = content.trim();
    if content.is_empty() {
        return ParsedAnswer {
            action: None,
            reasoning,
            issue: Some(ParseIssue::EmptyBox),
        };
    }
    match stage {
        Stage::Clue => ParsedAnswer {
            action: Some(ParsedAction::Clue(Statement::from_sentence(content))),
            reasoning,
            issue: None,
        },
        Stage::Decision => match parse_vote(content) {
            Some(vote) => ParsedAnswer {
                action: Some(ParsedAction::Vote(vote)),
                reasoning,
                issue: None,
            },
            None => ParsedAnswer {
                action: None,
                reasoning,
                issue: Some(ParseIssue::NotAVote),
            },
        },
    }
}
