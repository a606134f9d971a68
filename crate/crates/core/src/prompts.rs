//! Prompt templates for the clue and decision stages.
//!
//! Templates are plain text with `{name}` placeholders (lowercase letters and
//! underscores only, so `\boxed{}` and `\boxed{N/A}` stay literal). The
//! default templates ship in `templates/` and are compiled in.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::protocol::{PlayerId, PublicClue, Role};

pub const CLUE_TEMPLATE: &str = include_str!("../templates/clue_prompt.txt");
pub const DECISION_TEMPLATE: &str = include_str!("../templates/decision_prompt.txt");

const SPY_ROLE_LINE: &str = "Your role: SPY (you have the different picture)";
const CIVILIAN_ROLE_LINE: &str = "Your role: NOT SPY (you have the same picture as most others)";
const SPY_ROLE_BLOCK: &str = "You are the spy with the different picture. Two objects in your picture are different from what others see, but they remain in the same positions as in the original image.";
const CIVILIAN_ROLE_BLOCK: &str =
    "You are not the spy. Your picture is the same as most other players' pictures.";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("no value supplied for placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(source: &str) -> Template {
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut rest = source;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            let name_len = after
                .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
                .unwrap_or(after.len());
            if name_len > 0 && after[name_len..].starts_with('}') {
                text.push_str(&rest[..open]);
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot(after[..name_len].to_string()));
                rest = &after[name_len + 1..];
            } else {
                text.push_str(&rest[..=open]);
                rest = after;
            }
        }
        text.push_str(rest);
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Template { pieces }
    }

    pub fn placeholders(&self) -> Vec<&str> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name.as_str()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => match values.get(name.as_str()) {
                    Some(v) => out.push_str(v),
                    None => return Err(PromptError::MissingPlaceholder(name.clone())),
                },
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub clue: Template,
    pub decision: Template,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            clue: Template::parse(CLUE_TEMPLATE),
            decision: Template::parse(DECISION_TEMPLATE),
        }
    }
}

impl PromptTemplates {
    /// Load `clue_prompt.txt` and `decision_prompt.txt` from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        Ok(PromptTemplates {
            clue: Template::parse(&read("clue_prompt.txt")?),
            decision: Template::parse(&read("decision_prompt.txt")?),
        })
    }
}

/// Everything a prompt needs to know about the asking player.
#[derive(Debug, Clone)]
pub struct PromptContext<'a> {
    pub player_id: PlayerId,
    pub round: u32,
    pub role: Role,
    pub n_players: usize,
    pub history: &'a [PublicClue],
}

pub fn render_history(history: &[PublicClue]) -> String {
    if history.is_empty() {
        return "(none)".to_string();
    }
    history
        .iter()
        .map(|c| {
            format!(
                "PLAYER {} (ROUND {}): {}",
                c.speaker,
                c.round,
                c.statement.text()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn base_values(ctx: &PromptContext<'_>) -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("player_id", ctx.player_id.to_string()),
        ("round_num", ctx.round.to_string()),
        ("num_players", ctx.n_players.to_string()),
        ("history", render_history(ctx.history)),
    ])
}

impl PromptTemplates {
    pub fn render_clue_prompt(&self, ctx: &PromptContext<'_>) -> Result<String, PromptError> {
        let mut values = base_values(ctx);
        let (line, block) = match ctx.role {
            Role::Spy => (SPY_ROLE_LINE, SPY_ROLE_BLOCK),
            Role::Civilian => (CIVILIAN_ROLE_LINE, CIVILIAN_ROLE_BLOCK),
        };
        values.insert("role_line", line.to_string());
        values.insert("role_block", block.to_string());
        self.clue.render(&values)
    }

    pub fn render_decision_prompt(&self, ctx: &PromptContext<'_>) -> Result<String, PromptError> {
        self.decision.render(&base_values(ctx))
    }
}

pub fn render_clue_prompt(ctx: &PromptContext<'_>) -> Result<String, PromptError> {
    PromptTemplates::default().render_clue_prompt(ctx)
}

pub fn render_decision_prompt(ctx: &PromptContext<'_>) -> Result<String, PromptError> {
    PromptTemplates::default().render_decision_prompt(ctx)
}
