use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spy_arena::agents::{
    Action, Policy, PolicyError, PolicyRequest, PolicyResponse, ScriptedAgent, SpyStyle,
};
use spy_arena::game::{
    episode_outcome, new_episode, play_episode, run_clue_stage, run_decision_stage, tally,
    EpisodeConfig, EpisodeFlag, GameError, Lineup, Outcome,
};
use spy_arena::prompts::PromptTemplates;
use spy_arena::protocol::{PlayerId, Role, Stage, Statement, VoteChoice};
use spy_arena::scene::{generate_pair, ScenePair, DEFAULT_MARGIN};

fn pair(seed: u64) -> ScenePair {
    generate_pair(seed, DEFAULT_MARGIN).unwrap()
}

/// Records every request and answers with a clue that embeds a secret in
/// its private reasoning, and votes for a fixed target.
struct Probe {
    seen: Mutex<Vec<PolicyRequest>>,
    vote: VoteChoice,
}

impl Probe {
    fn new(vote: VoteChoice) -> Self {
        Probe {
            seen: Mutex::new(Vec::new()),
            vote,
        }
    }

    fn secret(req: &PolicyRequest) -> String {
        format!("SECRET-{}-{}-{}", req.player, req.round, req.history.len())
    }
}

impl Policy for Probe {
    fn name(&self) -> &str {
        "probe"
    }

    fn respond(&self, req: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        self.seen.lock().unwrap().push(req.clone());
        let action = match req.stage {
            Stage::Clue => Action::Clue(Statement::Text(format!("clue from {}", req.player))),
            Stage::Decision => Action::Vote(self.vote),
        };
        Ok(PolicyResponse {
            raw_text: format!("{}\n\\boxed{{...}}", Probe::secret(req)),
            action: Some(action),
            parse_issue: None,
            logprob: Some(-1.0),
            kl: Some(0.0),
            reasoning: Probe::secret(req),
            notes: Vec::new(),
        })
    }
}

struct Failing;

impl Policy for Failing {
    fn name(&self) -> &str {
        "failing"
    }

    fn respond(&self, _: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        Err(PolicyError::Timeout { attempts: 4 })
    }
}

#[test]
fn transcript_follows_seating_for_every_round() {
    let cfg = EpisodeConfig::default();
    let probe = Probe::new(VoteChoice::Na);
    let lineup = Lineup {
        civilian: &probe,
        spy: &probe,
    };
    let ep = play_episode(&cfg, pair(1), "p1", 99, lineup, &PromptTemplates::default()).unwrap();
    let clues = &ep.state.transcript.clues;
    assert_eq!(clues.len(), 10);
    for (i, c) in clues.iter().enumerate() {
        assert_eq!(c.order, i);
        assert_eq!(c.speaker, ep.state.seating[i % 5]);
        assert_eq!(c.round, 1 + (i / 5) as u32);
    }
    let seen = probe.seen.lock().unwrap();
    let first = seen.iter().find(|r| r.stage == Stage::Clue).unwrap();
    assert!(first.history.is_empty());
}

#[test]
fn every_call_gets_exactly_its_legal_view() {
    let cfg = EpisodeConfig::default();
    for seed in 0..50u64 {
        let probe = Probe::new(VoteChoice::Na);
        let lineup = Lineup {
            civilian: &probe,
            spy: &probe,
        };
        let p = pair(seed);
        let ep = play_episode(
            &cfg,
            p.clone(),
            "p",
            seed,
            lineup,
            &PromptTemplates::default(),
        )
        .unwrap();
        let full = ep.state.transcript.full();
        let seen = probe.seen.lock().unwrap();
        assert_eq!(seen.len(), 10 + 4);

        let secrets: Vec<String> = seen.iter().map(Probe::secret).collect();
        let mut clue_turn = 0;
        for req in seen.iter() {
            let is_spy = req.player == ep.state.spy;
            assert_eq!(req.role, if is_spy { Role::Spy } else { Role::Civilian });
            let own = if is_spy { &p.spy } else { &p.civilian };
            assert_eq!(&req.scene, own);
            assert!(req.ground_truth.is_none());
            match req.stage {
                Stage::Clue => {
                    assert_eq!(req.history, full[..clue_turn].to_vec());
                    clue_turn += 1;
                }
                Stage::Decision => {
                    assert!(!is_spy, "the spy must not vote");
                    assert_eq!(req.history, full);
                }
            }
            let view = serde_json::to_string(req).unwrap();
            for s in &secrets {
                assert!(
                    !view.contains(s.as_str()),
                    "private reasoning leaked into a view"
                );
            }
        }
        // Reasoning is still kept in the record.
        assert!(ep
            .state
            .transcript
            .clues
            .iter()
            .all(|c| c.private_reasoning.starts_with("SECRET-")));
    }
}

#[test]
fn privileged_spy_alone_gets_the_change_log() {
    let cfg = EpisodeConfig::default();
    let p = pair(5);
    let state = new_episode(&cfg, p.clone(), "p5", 17);
    struct Privileged(Probe);
    impl Policy for Privileged {
        fn name(&self) -> &str {
            "privileged-probe"
        }
        fn privileged(&self) -> bool {
            true
        }
        fn respond(&self, r: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
            self.0.respond(r)
        }
    }
    let probe = Privileged(Probe::new(VoteChoice::Na));
    let mut st = state;
    let policies: Vec<&dyn Policy> = (0..5).map(|_| &probe as &dyn Policy).collect();
    run_clue_stage(&mut st, &policies, &PromptTemplates::default()).unwrap();
    for req in probe.0.seen.lock().unwrap().iter() {
        assert_eq!(req.ground_truth.is_some(), req.role == Role::Spy);
        if let Some(log) = &req.ground_truth {
            assert_eq!(log, &p.change_log);
        }
    }
}

#[test]
fn policy_failures_fall_back_and_flag() {
    let cfg = EpisodeConfig::default();
    let lineup = Lineup {
        civilian: &Failing,
        spy: &Failing,
    };
    let ep = play_episode(&cfg, pair(2), "p2", 3, lineup, &PromptTemplates::default()).unwrap();
    assert_eq!(ep.state.transcript.len(), 10);
    for c in &ep.state.transcript.clues {
        assert!(c.fallback);
        assert_eq!(c.statement, Statement::Text(cfg.fallback_clue.clone()));
    }
    assert!(ep
        .ballots
        .iter()
        .all(|b| b.choice == VoteChoice::Na && b.fallback));
    let failures = ep
        .state
        .flags
        .iter()
        .filter(|f| matches!(f, EpisodeFlag::PolicyFailure { .. }))
        .count();
    assert_eq!(failures, 14);
    assert_eq!(ep.tally.na_count, 4);
    assert_eq!(ep.outcome, Outcome::SpyWins);
}

#[test]
fn self_and_out_of_range_votes_become_na() {
    let cfg = EpisodeConfig::default();
    struct SelfVoter;
    impl Policy for SelfVoter {
        fn name(&self) -> &str {
            "self-voter"
        }
        fn respond(&self, r: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
            let vote = match r.player.0 {
                1 => VoteChoice::Player(PlayerId(9)),
                _ => VoteChoice::Player(r.player),
            };
            let action = match r.stage {
                Stage::Clue => Action::Clue(Statement::Text("x".into())),
                Stage::Decision => Action::Vote(vote),
            };
            Ok(PolicyResponse {
                raw_text: String::new(),
                action: Some(action),
                parse_issue: None,
                logprob: None,
                kl: None,
                reasoning: String::new(),
                notes: Vec::new(),
            })
        }
    }
    let lineup = Lineup {
        civilian: &SelfVoter,
        spy: &SelfVoter,
    };
    let ep = play_episode(&cfg, pair(3), "p3", 11, lineup, &PromptTemplates::default()).unwrap();
    assert!(ep.ballots.iter().all(|b| b.choice == VoteChoice::Na));
    for b in &ep.ballots {
        let flagged = ep.state.flags.iter().any(|f| match f {
            EpisodeFlag::SelfVote { player } => *player == b.voter,
            EpisodeFlag::InvalidVote { player, choice } => *player == b.voter && *choice == 9,
            _ => false,
        });
        assert!(flagged, "ballot of {} not flagged", b.voter);
    }
}

#[test]
fn decision_stage_requires_finished_clue_stage() {
    let cfg = EpisodeConfig::default();
    let mut st = new_episode(&cfg, pair(4), "p4", 1);
    let agent = ScriptedAgent::new(SpyStyle::Naive);
    let policies: Vec<&dyn Policy> = (0..5).map(|_| &agent as &dyn Policy).collect();
    let err = run_decision_stage(&mut st, &policies, &PromptTemplates::default()).unwrap_err();
    assert!(matches!(
        err,
        GameError::IncompleteClueStage { have: 0, want: 10 }
    ));
    let err = run_clue_stage(&mut st, &policies[..3], &PromptTemplates::default()).unwrap_err();
    assert!(matches!(
        err,
        GameError::PolicyCount {
            expected: 5,
            got: 3
        }
    ));
}

#[test]
fn spy_seat_and_speaking_slot_are_uniform() {
    let cfg = EpisodeConfig::default();
    let p = pair(0);
    let n = 10_000u64;
    let mut seat = [0u64; 5];
    let mut slot = [0u64; 5];
    for s in 0..n {
        let st = new_episode(&cfg, p.clone(), "p", s);
        assert_eq!(st.n_players(), 5);
        assert_eq!(st.civilians().len(), 4);
        seat[st.spy.index()] += 1;
        slot[st.seating.iter().position(|&q| q == st.spy).unwrap()] += 1;
        let mut sorted = st.seating.clone();
        sorted.sort();
        assert_eq!(sorted, (1..=5).map(PlayerId).collect::<Vec<_>>());
    }
    let expect = n as f64 / 5.0;
    let sigma = (n as f64 * 0.2 * 0.8).sqrt();
    for counts in [seat, slot] {
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        // 4 degrees of freedom, p = 0.001.
        assert!(chi2 < 18.467, "chi-square {chi2} for {counts:?}");
        for c in counts {
            assert!((c as f64 - expect).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}

#[test]
fn seating_is_deterministic_per_seed() {
    let cfg = EpisodeConfig::default();
    let a = new_episode(&cfg, pair(8), "p", 1234);
    let b = new_episode(&cfg, pair(8), "p", 1234);
    assert_eq!((a.spy, a.seating.clone()), (b.spy, b.seating.clone()));

    let agent = ScriptedAgent::new(SpyStyle::Naive);
    let lineup = Lineup {
        civilian: &agent,
        spy: &agent,
    };
    let x = play_episode(
        &cfg,
        pair(8),
        "p",
        1234,
        lineup,
        &PromptTemplates::default(),
    )
    .unwrap();
    let y = play_episode(
        &cfg,
        pair(8),
        "p",
        1234,
        lineup,
        &PromptTemplates::default(),
    )
    .unwrap();
    assert_eq!(x.state.transcript, y.state.transcript);
    assert_eq!(x.ballots, y.ballots);
    assert_eq!(x.tally, y.tally);
}

#[test]
fn tally_conserves_ballots() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let n_c = rng.gen_range(2..=8usize);
        let n = n_c + 1;
        let spy = PlayerId(rng.gen_range(1..=n as u32));
        let choices: Vec<VoteChoice> = (0..n_c)
            .map(|_| match rng.gen_range(0..=n as u32) {
                0 => VoteChoice::Na,
                k => VoteChoice::Player(PlayerId(k)),
            })
            .collect();
        let t = tally(&choices, spy, n);
        assert_eq!(t.votes.iter().sum::<u32>() + t.na_count, n_c as u32);
        assert_eq!(
            t.spy_votes() + t.civilian_votes().iter().sum::<u32>() + t.na_count,
            n_c as u32
        );
        // Oracle: civilians win iff the spy has strictly more votes than anyone else.
        let max_other = (1..=n as u32)
            .filter(|&k| k != spy.0)
            .map(|k| {
                choices
                    .iter()
                    .filter(|c| **c == VoteChoice::Player(PlayerId(k)))
                    .count()
            })
            .max()
            .unwrap();
        let spy_count = choices
            .iter()
            .filter(|c| **c == VoteChoice::Player(spy))
            .count();
        let want = if spy_count > 0 && spy_count > max_other {
            Outcome::CiviliansWin
        } else {
            Outcome::SpyWins
        };
        assert_eq!(episode_outcome(&t), want);
    }
}

#[test]
fn scripted_episode_on_many_pairs_has_no_flags() {
    let cfg = EpisodeConfig::default();
    let agent = ScriptedAgent::new(SpyStyle::Naive);
    let lineup = Lineup {
        civilian: &agent,
        spy: &agent,
    };
    for s in 0..200 {
        let ep = play_episode(&cfg, pair(s), "p", s, lineup, &PromptTemplates::default()).unwrap();
        assert!(ep.state.flags.is_empty(), "{:?}", ep.state.flags);
        // Civilians never accuse one another: their claims are true on their own scene.
        for b in &ep.ballots {
            assert!(
                matches!(b.choice, VoteChoice::Na) || b.choice == VoteChoice::Player(ep.state.spy)
            );
        }
    }
}
