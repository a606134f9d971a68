//! The training loop: batches of episodes, stage rewards and advantages,
//! loss assembly, sample export and stage scheduling.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::jsonl::JsonlWriter;
use super::{thread_pool, HarnessError, PolicySet, RunConfig};
use crate::dataset::to_json;
use crate::game::{
    play_episode, Clue, Episode, EpisodeConfig, EpisodeFlag, Outcome, VoteBallot, VoteTally,
};
use crate::losses::{clue_loss, decision_loss, gated_loss, PolicyEval};
use crate::protocol::{PlayerId, Role, Stage};
use crate::rewards::{
    clue_rewards, decision_reward, group_normalize, AdvantageVector, ClueRewards, RaeState,
};
use crate::scheduler::{
    batch_metrics, replay, BatchMetrics, Phase, Scheduler, SchedulerConfig, SchedulerStep,
};
use crate::seed::derive_seed;

pub const RECORD_SCHEMA: u32 = 1;
pub const SAMPLE_SCHEMA: u32 = 1;

/// Rewards and advantages of one episode for both stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTraining {
    /// Stage trained while this episode was played.
    pub phase: Phase,
    pub clue_rewards: ClueRewards,
    pub clue_advantages: AdvantageVector,
    /// Role baselines after this episode.
    pub rae: RaeState,
    /// Decision rewards, in ballot order.
    pub decision_rewards: Vec<f64>,
    pub decision_advantages: AdvantageVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub schema_version: u32,
    pub episode_id: String,
    pub iteration: u32,
    pub config_hash: String,
    pub pair_id: String,
    pub seed: u64,
    pub seating: Vec<PlayerId>,
    pub spy: PlayerId,
    pub clues: Vec<Clue>,
    pub ballots: Vec<VoteBallot>,
    pub tally: VoteTally,
    pub outcome: Outcome,
    pub flags: Vec<EpisodeFlag>,
    pub training: EpisodeTraining,
}

/// One (player, stage) sample for an external optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub schema_version: u32,
    pub episode_id: String,
    pub phase: Stage,
    /// Whether `phase` was the stage being trained.
    pub active: bool,
    pub player: PlayerId,
    pub role: Role,
    /// Clue round; absent for votes.
    pub round: Option<u32>,
    pub prompt: String,
    pub completion: String,
    pub reward: f64,
    pub advantage: f64,
    pub logprob: Option<f64>,
    pub kl: Option<f64>,
}

/// Clue samples in speaking order, then one decision sample per ballot.
pub fn samples_from_record(rec: &EpisodeRecord) -> Vec<TrainingSample> {
    let t = &rec.training;
    let role = |p: PlayerId| {
        if p == rec.spy {
            Role::Spy
        } else {
            Role::Civilian
        }
    };
    let clues = rec.clues.iter().map(|c| TrainingSample {
        schema_version: SAMPLE_SCHEMA,
        episode_id: rec.episode_id.clone(),
        phase: Stage::Clue,
        active: t.phase == Phase::Clue,
        player: c.speaker,
        role: role(c.speaker),
        round: Some(c.round),
        prompt: c.prompt.clone(),
        completion: c.completion.clone(),
        reward: t.clue_rewards.of(c.speaker).unwrap_or(0.0),
        advantage: t.clue_advantages.of(c.speaker).unwrap_or(0.0),
        logprob: c.logprob,
        kl: c.kl,
    });
    let votes = rec.ballots.iter().enumerate().map(|(j, b)| TrainingSample {
        schema_version: SAMPLE_SCHEMA,
        episode_id: rec.episode_id.clone(),
        phase: Stage::Decision,
        active: t.phase == Phase::Decision,
        player: b.voter,
        role: Role::Civilian,
        round: None,
        prompt: b.prompt.clone(),
        completion: b.completion.clone(),
        reward: t.decision_rewards[j],
        advantage: t.decision_advantages.civilians[j],
        logprob: b.logprob,
        kl: b.kl,
    });
    clues.chain(votes).collect()
}

/// Turn finished episodes into records. Role baselines move only while the
/// clue stage is trained, one episode at a time in batch order.
pub fn train_batch(
    episodes: Vec<(String, Episode)>,
    iteration: u32,
    phase: Phase,
    rae: &mut RaeState,
    config: &EpisodeConfig,
    config_hash: &str,
) -> Vec<EpisodeRecord> {
    episodes
        .into_iter()
        .map(|(episode_id, ep)| {
            let cr = clue_rewards(&ep.tally, config.beta, config.lambda);
            let clue_advantages = if phase == Phase::Clue {
                let (next, adv) = rae.update(&cr, config.alpha);
                *rae = next;
                adv
            } else {
                rae.advantages(&cr)
            };
            let decision_rewards: Vec<f64> = ep
                .ballots
                .iter()
                .map(|b| decision_reward(b.choice, ep.state.spy))
                .collect();
            let decision_advantages = AdvantageVector {
                spy: None,
                civilians: group_normalize(&decision_rewards, config.epsilon),
                civilian_ids: ep.ballots.iter().map(|b| b.voter).collect(),
            };
            EpisodeRecord {
                schema_version: RECORD_SCHEMA,
                episode_id,
                iteration,
                config_hash: config_hash.to_string(),
                pair_id: ep.state.pair_id.clone(),
                seed: ep.state.seed,
                seating: ep.state.seating.clone(),
                spy: ep.state.spy,
                clues: ep.state.transcript.clues,
                ballots: ep.ballots,
                tally: ep.tally,
                outcome: ep.outcome,
                flags: ep.state.flags,
                training: EpisodeTraining {
                    phase,
                    clue_rewards: cr,
                    clue_advantages,
                    rae: *rae,
                    decision_rewards,
                    decision_advantages,
                },
            }
        })
        .collect()
}

/// Batch objectives. A stage's loss is absent when any of its samples
/// lacks a log-probability or KL estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLosses {
    pub clue: Option<f64>,
    pub decision: Option<f64>,
    pub gated: Option<f64>,
}

fn stage_eval(samples: &[&TrainingSample]) -> Option<(Vec<f64>, PolicyEval)> {
    let mut adv = Vec::with_capacity(samples.len());
    let mut eval = PolicyEval::default();
    for s in samples {
        adv.push(s.advantage);
        eval.logprob.push(s.logprob?);
        eval.kl.push(s.kl?);
    }
    Some((adv, eval))
}

pub fn batch_losses(
    records: &[EpisodeRecord],
    phase: Phase,
    config: &EpisodeConfig,
) -> BatchLosses {
    let samples: Vec<TrainingSample> = records.iter().flat_map(samples_from_record).collect();
    let of_stage = |stage: Stage| {
        samples
            .iter()
            .filter(|s| s.phase == stage)
            .collect::<Vec<_>>()
    };
    let clue = stage_eval(&of_stage(Stage::Clue))
        .and_then(|(a, e)| clue_loss(&a, &e, config.tau_clue).ok());
    let decision = stage_eval(&of_stage(Stage::Decision))
        .and_then(|(a, e)| decision_loss(&a, &e, config.tau_dec).ok());
    let gated = match phase {
        Phase::Clue => clue.map(|c| gated_loss(phase, c, 0.0)),
        Phase::Decision => decision.map(|d| gated_loss(phase, 0.0, d)),
    };
    BatchLosses {
        clue,
        decision,
        gated,
    }
}

/// One line of the metrics stream per scheduler evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub iteration: u32,
    #[serde(flatten)]
    pub step: SchedulerStep,
    pub losses: BatchLosses,
    pub rae: RaeState,
    pub civilian_win_rate: f64,
    pub flagged_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaySummary {
    pub out_dir: PathBuf,
    pub episodes: usize,
    pub samples: usize,
    pub switches: usize,
    pub forced_switches: usize,
    pub final_phase: Phase,
    pub civilian_win_rate: f64,
}

pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const CONFIG_FILE: &str = "run_config.json";

/// Run the full loop, writing `episodes.jsonl`, `metrics.jsonl`,
/// `samples.jsonl` and the effective `run_config.json` into `config.out_dir`.
pub fn play(config: &RunConfig, policies: Option<PolicySet>) -> Result<PlaySummary, HarnessError> {
    config.validate()?;
    let pairs = config.load_pairs()?;
    let prompts = config.prompts()?;
    let policies = match policies {
        Some(p) => p,
        None => PolicySet::from_bindings(&config.policies)?,
    };
    let pool = thread_pool(config.threads)?;
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(|source| HarnessError::Io {
        path: out.clone(),
        source,
    })?;
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, to_json(config) + "\n").map_err(|source| HarnessError::Io {
        path: config_path,
        source,
    })?;
    let mut episodes_out = JsonlWriter::create(&out.join(EPISODES_FILE))?;
    let mut metrics_out = JsonlWriter::create(&out.join(METRICS_FILE))?;
    let mut samples_out = JsonlWriter::create(&out.join(SAMPLES_FILE))?;

    let hash = config.config_hash();
    let seed = config.seed();
    let mut scheduler = Scheduler::new(config.episode.scheduler.clone());
    let mut rae = RaeState::default();
    let (mut episodes, mut wins, mut switches, mut forced) = (0usize, 0usize, 0usize, 0usize);

    for iteration in 0..config.iterations {
        let phase = scheduler.phase();
        let batch: Vec<Result<(String, Episode), HarnessError>> = pool.install(|| {
            (0..config.batch_size)
                .into_par_iter()
                .map(|b| {
                    let k = (iteration as u64) * config.batch_size as u64 + b as u64;
                    let episode_id = format!("ep-{k:06}");
                    let (pair_id, pair) =
                        &pairs[(derive_seed(seed, &[11, k]) % pairs.len() as u64) as usize];
                    play_episode(
                        &config.episode,
                        pair.clone(),
                        pair_id,
                        derive_seed(seed, &[10, k]),
                        policies.lineup(),
                        &prompts,
                    )
                    .map(|ep| (episode_id.clone(), ep))
                    .map_err(|source| HarnessError::Game {
                        episode: episode_id,
                        phase,
                        source,
                    })
                })
                .collect()
        });
        let batch = batch.into_iter().collect::<Result<Vec<_>, _>>()?;
        let records = train_batch(batch, iteration, phase, &mut rae, &config.episode, &hash);

        let ballots: Vec<_> = records
            .iter()
            .flat_map(|r| r.ballots.iter().map(move |b| (b.choice, r.spy)))
            .collect();
        let metrics = batch_metrics(&ballots).map_err(|e| HarnessError::Training {
            iteration,
            phase,
            message: e.to_string(),
        })?;
        let losses = batch_losses(&records, phase, &config.episode);
        let step = scheduler.step(metrics);
        switches += step.switched as usize;
        forced += step.forced as usize;

        let batch_wins = records
            .iter()
            .filter(|r| r.outcome == Outcome::CiviliansWin)
            .count();
        wins += batch_wins;
        episodes += records.len();
        metrics_out.append(&MetricsLine {
            iteration,
            step,
            losses,
            rae,
            civilian_win_rate: batch_wins as f64 / records.len() as f64,
            flagged_episodes: records.iter().filter(|r| !r.flags.is_empty()).count(),
        })?;
        for rec in &records {
            episodes_out.append(rec)?;
            for sample in samples_from_record(rec) {
                samples_out.append(&sample)?;
            }
        }
    }

    episodes_out.finish()?;
    metrics_out.finish()?;
    let samples = samples_out.finish()?;
    Ok(PlaySummary {
        out_dir: out.clone(),
        episodes,
        samples,
        switches,
        forced_switches: forced,
        final_phase: scheduler.phase(),
        civilian_win_rate: if episodes == 0 {
            0.0
        } else {
            wins as f64 / episodes as f64
        },
    })
}

/// Re-run the scheduler over the logged batch metrics and compare every
/// logged decision.
pub fn verify_trace(config: &SchedulerConfig, lines: &[MetricsLine]) -> Result<(), HarnessError> {
    let replayed = replay(
        config,
        lines.iter().map(|l| BatchMetrics {
            acc: l.step.acc,
            na: l.step.na,
        }),
    );
    for (logged, again) in lines.iter().zip(&replayed) {
        if logged.step != *again {
            return Err(HarnessError::TraceMismatch { t: logged.step.t });
        }
    }
    Ok(())
}
