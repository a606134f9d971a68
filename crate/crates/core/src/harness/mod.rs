//! Run orchestration: configuration, policy bindings, the training loop,
//! win-rate evaluation and training-sample export.

mod eval;
mod export;
pub mod jsonl;
mod play;

pub use eval::{
    eval_winrate, tournament, wilson_interval, SplitResult, TournamentReport, WinrateReport,
};
pub use export::{export_batch, read_records, read_samples};
pub use play::{
    batch_losses, play, samples_from_record, train_batch, verify_trace, BatchLosses, EpisodeRecord,
    EpisodeTraining, MetricsLine, PlaySummary, TrainingSample, CONFIG_FILE, EPISODES_FILE,
    METRICS_FILE, RECORD_SCHEMA, SAMPLES_FILE, SAMPLE_SCHEMA,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{Policy, PolicyError, RemoteConfig, RemotePolicy, ScriptedAgent, SpyStyle};
use crate::dataset::{from_json, load_scene_dataset, DatasetError};
use crate::game::{GameError, Lineup};
use crate::prompts::{PromptError, PromptTemplates};
use crate::scene::{generate_pair, ScenePair, DEFAULT_MARGIN};
use crate::scheduler::Phase;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Jsonl {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("episode {episode} ({phase:?} phase): {source}")]
    Game {
        episode: String,
        phase: Phase,
        #[source]
        source: GameError,
    },
    #[error("iteration {iteration} ({phase:?} phase): {message}")]
    Training {
        iteration: u32,
        phase: Phase,
        message: String,
    },
    #[error("policy setup failed: {0}")]
    Policy(#[from] PolicyError),
    #[error("prompt templates: {0}")]
    Prompt(#[from] PromptError),
    #[error("scheduler trace diverges from replay at t={t}")]
    TraceMismatch { t: u64 },
}

impl HarnessError {
    /// 2 for configuration problems, 3 for everything that fails at runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Prompt(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Honest civilian and consistency voter; naive spy.
    Scripted,
    /// Like `scripted`, but the spy reads the change log.
    Oracle,
    /// Remote chat-completion endpoint.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyBindings {
    pub civilian: PolicyKind,
    pub spy: PolicyKind,
    pub remote: Option<RemoteConfig>,
}

impl Default for PolicyBindings {
    fn default() -> Self {
        PolicyBindings {
            civilian: PolicyKind::Scripted,
            spy: PolicyKind::Scripted,
            remote: None,
        }
    }
}

/// A run: game settings (including the run seed, `episode.rng_seed`), data
/// source, policies and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub episode: crate::game::EpisodeConfig,
    /// Dataset written by `gen-data`; when absent, `generated_pairs` pairs
    /// are generated in memory from the run seed.
    pub dataset: Option<PathBuf>,
    pub generated_pairs: usize,
    pub policies: PolicyBindings,
    pub iterations: u32,
    /// Episodes per scheduler evaluation.
    pub batch_size: usize,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub prompts_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            episode: crate::game::EpisodeConfig::default(),
            dataset: None,
            generated_pairs: 256,
            policies: PolicyBindings::default(),
            iterations: 100,
            batch_size: 8,
            out_dir: PathBuf::from("arena-out"),
            threads: 0,
            prompts_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        from_json(&text, &path.display().to_string())
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.episode.rng_seed
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.episode
            .validate()
            .map_err(|e| HarnessError::Config(format!("episode: {e}")))?;
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be at least 1".into()));
        }
        match &self.dataset {
            Some(dir) if !dir.join("manifest.json").is_file() => {
                return Err(HarnessError::Config(format!(
                    "dataset {} has no manifest.json",
                    dir.display()
                )))
            }
            None if self.generated_pairs == 0 => {
                return Err(HarnessError::Config(
                    "generated_pairs must be at least 1 when no dataset is given".into(),
                ))
            }
            _ => {}
        }
        if let Some(dir) = &self.prompts_dir {
            if !dir.is_dir() {
                return Err(HarnessError::Config(format!(
                    "prompts_dir {} is not a directory",
                    dir.display()
                )));
            }
        }
        let wants_remote =
            [self.policies.civilian, self.policies.spy].contains(&PolicyKind::Remote);
        if wants_remote && self.policies.remote.is_none() {
            return Err(HarnessError::Config(
                "a seat is bound to `remote` but policies.remote is missing".into(),
            ));
        }
        Ok(())
    }

    /// Hash of everything that determines run outputs (paths to outputs and
    /// thread count excluded).
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Identity<'a> {
            episode: &'a crate::game::EpisodeConfig,
            dataset: &'a Option<PathBuf>,
            generated_pairs: usize,
            policies: &'a PolicyBindings,
            batch_size: usize,
        }
        let id = Identity {
            episode: &self.episode,
            dataset: &self.dataset,
            generated_pairs: self.generated_pairs,
            policies: &self.policies,
            batch_size: self.batch_size,
        };
        let body = serde_json::to_string(&id).expect("config serializes");
        hex::encode(Sha256::digest(body.as_bytes()))
    }

    pub fn prompts(&self) -> Result<PromptTemplates, HarnessError> {
        Ok(match &self.prompts_dir {
            Some(dir) => PromptTemplates::from_dir(dir)?,
            None => PromptTemplates::default(),
        })
    }

    /// Scene pairs for the run, in a fixed order.
    pub fn load_pairs(&self) -> Result<Vec<(String, ScenePair)>, HarnessError> {
        let pairs = match &self.dataset {
            Some(dir) => load_scene_dataset(dir)?,
            None => (0..self.generated_pairs)
                .map(|i| {
                    let seed = derive_seed(self.seed(), &[4, i as u64]);
                    generate_pair(seed, DEFAULT_MARGIN)
                        .map(|p| (format!("gen-{i:06}"), p))
                        .map_err(|e| HarnessError::Config(format!("pair generation failed: {e}")))
                })
                .collect::<Result<_, _>>()?,
        };
        if pairs.is_empty() {
            return Err(HarnessError::Config("dataset contains no pairs".into()));
        }
        Ok(pairs)
    }
}

pub fn build_policy(
    kind: PolicyKind,
    remote: Option<&RemoteConfig>,
) -> Result<Arc<dyn Policy>, HarnessError> {
    Ok(match kind {
        PolicyKind::Scripted => Arc::new(ScriptedAgent::new(SpyStyle::Naive)),
        PolicyKind::Oracle => Arc::new(ScriptedAgent::new(SpyStyle::Oracle)),
        PolicyKind::Remote => {
            let cfg = remote.cloned().ok_or_else(|| {
                HarnessError::Config("remote policy needs a remote config".into())
            })?;
            Arc::new(RemotePolicy::http(cfg)?)
        }
    })
}

/// Policies bound to the two roles. A remote endpoint bound to both roles
/// is shared, so its in-flight limit covers both.
pub struct PolicySet {
    pub civilian: Arc<dyn Policy>,
    pub spy: Arc<dyn Policy>,
}

impl PolicySet {
    pub fn new(civilian: Arc<dyn Policy>, spy: Arc<dyn Policy>) -> Self {
        PolicySet { civilian, spy }
    }

    pub fn from_bindings(b: &PolicyBindings) -> Result<Self, HarnessError> {
        let civilian = build_policy(b.civilian, b.remote.as_ref())?;
        let spy = if b.spy == b.civilian {
            Arc::clone(&civilian)
        } else {
            build_policy(b.spy, b.remote.as_ref())?
        };
        Ok(PolicySet { civilian, spy })
    }

    pub fn lineup(&self) -> Lineup<'_> {
        Lineup {
            civilian: self.civilian.as_ref(),
            spy: self.spy.as_ref(),
        }
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker threads: {e}")))
}
