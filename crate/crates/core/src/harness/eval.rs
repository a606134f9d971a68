//! Head-to-head win rates and fixed-lineup tournaments.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_policy, thread_pool, HarnessError, PolicyKind, PolicySet, RunConfig};
use crate::agents::{ScriptedAgent, SpyStyle};
use crate::game::{play_episode, Episode, EpisodeConfig, Lineup, Outcome};
use crate::prompts::PromptTemplates;
use crate::protocol::VoteChoice;
use crate::scene::ScenePair;
use crate::scheduler::Phase;
use crate::seed::derive_seed;

const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `wins` successes in `n` trials.
pub fn wilson_interval(wins: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = wins as f64 / n_f;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub episodes: usize,
    pub wins: usize,
    pub win_rate: f64,
}

impl SplitResult {
    fn new(episodes: usize, wins: usize) -> Self {
        SplitResult {
            episodes,
            wins,
            win_rate: if episodes == 0 {
                0.0
            } else {
                wins as f64 / episodes as f64
            },
        }
    }
}

/// Win rate of policy A: as civilians A wins by identifying the spy, as the
/// spy A wins by escaping identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinrateReport {
    pub policy_a: PolicyKind,
    pub policy_b: PolicyKind,
    pub seed: u64,
    pub as_civilian: SplitResult,
    pub as_spy: SplitResult,
    pub overall: SplitResult,
    pub ci95: (f64, f64),
    pub flagged_episodes: usize,
}

fn run_episodes(
    config: &EpisodeConfig,
    pairs: &[(String, ScenePair)],
    seed: u64,
    n: usize,
    lineup: Lineup<'_>,
    prompts: &PromptTemplates,
    pool: &rayon::ThreadPool,
) -> Result<Vec<Episode>, HarnessError> {
    pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|k| {
                let (pair_id, pair) =
                    &pairs[(derive_seed(seed, &[21, k]) % pairs.len() as u64) as usize];
                play_episode(
                    config,
                    pair.clone(),
                    pair_id,
                    derive_seed(seed, &[20, k]),
                    lineup,
                    prompts,
                )
                .map_err(|source| HarnessError::Game {
                    episode: format!("eval-{k:06}"),
                    phase: Phase::Decision,
                    source,
                })
            })
            .collect()
    })
}

/// Play `n_rounds` episodes: the first half with A as every civilian and B
/// as the spy, the second half with the roles swapped. Both halves use the
/// same episode seeds and pairs.
pub fn eval_winrate(
    config: &RunConfig,
    a: PolicyKind,
    b: PolicyKind,
    n_rounds: usize,
) -> Result<WinrateReport, HarnessError> {
    config.validate()?;
    let remote = config.policies.remote.as_ref();
    if [a, b].contains(&PolicyKind::Remote) && remote.is_none() {
        return Err(HarnessError::Config(
            "remote policy needs policies.remote".into(),
        ));
    }
    let pairs = config.load_pairs()?;
    let prompts = config.prompts()?;
    let pool = thread_pool(config.threads)?;
    let policy_a = build_policy(a, remote)?;
    let policy_b = if a == b {
        Arc::clone(&policy_a)
    } else {
        build_policy(b, remote)?
    };

    let seed = config.seed();
    let n_civ = n_rounds / 2;
    let n_spy = n_rounds - n_civ;
    let a_civ = PolicySet::new(Arc::clone(&policy_a), Arc::clone(&policy_b));
    let a_spy = PolicySet::new(policy_b, policy_a);
    let civ_eps = run_episodes(
        &config.episode,
        &pairs,
        seed,
        n_civ,
        a_civ.lineup(),
        &prompts,
        &pool,
    )?;
    let spy_eps = run_episodes(
        &config.episode,
        &pairs,
        seed,
        n_spy,
        a_spy.lineup(),
        &prompts,
        &pool,
    )?;

    let civ_wins = civ_eps
        .iter()
        .filter(|e| e.outcome == Outcome::CiviliansWin)
        .count();
    let spy_wins = spy_eps
        .iter()
        .filter(|e| e.outcome == Outcome::SpyWins)
        .count();
    let flagged = civ_eps
        .iter()
        .chain(&spy_eps)
        .filter(|e| !e.state.flags.is_empty())
        .count();
    Ok(WinrateReport {
        policy_a: a,
        policy_b: b,
        seed,
        as_civilian: SplitResult::new(n_civ, civ_wins),
        as_spy: SplitResult::new(n_spy, spy_wins),
        overall: SplitResult::new(n_rounds, civ_wins + spy_wins),
        ci95: wilson_interval(civ_wins + spy_wins, n_rounds),
        flagged_episodes: flagged,
    })
}

/// Scripted civilians against a scripted spy of the given style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentReport {
    pub episodes: usize,
    pub civilian_wins: usize,
    pub civilian_win_rate: f64,
    pub ballots: usize,
    /// Fraction of ballots naming the spy.
    pub detection_rate: f64,
    pub abstention_rate: f64,
}

pub fn tournament(
    config: &EpisodeConfig,
    pairs: &[(String, ScenePair)],
    spy_style: SpyStyle,
    n_episodes: usize,
    seed: u64,
) -> Result<TournamentReport, HarnessError> {
    config
        .validate()
        .map_err(|e| HarnessError::Config(format!("episode: {e}")))?;
    if pairs.is_empty() {
        return Err(HarnessError::Config(
            "tournament needs at least one pair".into(),
        ));
    }
    let civilian = ScriptedAgent::new(SpyStyle::Naive);
    let spy = ScriptedAgent::new(spy_style);
    let lineup = Lineup {
        civilian: &civilian,
        spy: &spy,
    };
    let pool = thread_pool(0)?;
    let eps = run_episodes(
        config,
        pairs,
        seed,
        n_episodes,
        lineup,
        &PromptTemplates::default(),
        &pool,
    )?;
    let wins = eps
        .iter()
        .filter(|e| e.outcome == Outcome::CiviliansWin)
        .count();
    let mut ballots = 0usize;
    let mut hits = 0usize;
    let mut abstain = 0usize;
    for e in &eps {
        for b in &e.ballots {
            ballots += 1;
            hits += (b.choice == VoteChoice::Player(e.state.spy)) as usize;
            abstain += (b.choice == VoteChoice::Na) as usize;
        }
    }
    let frac = |x: usize| {
        if ballots == 0 {
            0.0
        } else {
            x as f64 / ballots as f64
        }
    };
    Ok(TournamentReport {
        episodes: eps.len(),
        civilian_wins: wins,
        civilian_win_rate: SplitResult::new(eps.len(), wins).win_rate,
        ballots,
        detection_rate: frac(hits),
        abstention_rate: frac(abstain),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 50 of 100: p = 0.5, half-width z*sqrt(0.25/100 + z^2/40000)/(1 + z^2/100).
        let (lo, hi) = wilson_interval(50, 100);
        let z2 = Z_95 * Z_95;
        let half = Z_95 * (0.0025 + z2 / 40000.0).sqrt() / (1.0 + z2 / 100.0);
        assert!((lo - (0.5 - half)).abs() < 1e-12);
        assert!((hi - (0.5 + half)).abs() < 1e-12);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.35);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }
}
