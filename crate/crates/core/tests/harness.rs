use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use spy_arena::agents::{Action, Policy, PolicyError, PolicyRequest, PolicyResponse};
use spy_arena::dataset::load_manifest;
use spy_arena::harness::jsonl::read_jsonl;
use spy_arena::harness::{
    eval_winrate, export_batch, play, read_records, read_samples, verify_trace, HarnessError,
    MetricsLine, PolicyKind, PolicySet, RunConfig, EPISODES_FILE, METRICS_FILE, SAMPLES_FILE,
};
use spy_arena::protocol::{Stage, Statement, VoteChoice};

const ARENA: &str = env!("CARGO_BIN_EXE_arena");

fn config(out: &Path, iterations: u32) -> RunConfig {
    let mut cfg = RunConfig {
        iterations,
        out_dir: out.to_path_buf(),
        generated_pairs: 32,
        ..RunConfig::default()
    };
    cfg.episode.rng_seed = 2024;
    cfg
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn play_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = config(&dir.path().join("a"), 12);
    let b = RunConfig {
        out_dir: dir.path().join("b"),
        threads: 1,
        ..a.clone()
    };
    play(&a, None).unwrap();
    play(&b, None).unwrap();
    for f in [EPISODES_FILE, METRICS_FILE, SAMPLES_FILE] {
        assert_eq!(
            read(&a.out_dir.join(f)),
            read(&b.out_dir.join(f)),
            "{f} differs"
        );
    }
}

#[test]
fn exported_samples_match_protocol_structure() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 1);
    cfg.batch_size = 1;
    let summary = play(&cfg, None).unwrap();
    assert_eq!(summary.episodes, 1);
    assert_eq!(summary.samples, 14);

    let out = dir.path().join("again.jsonl");
    assert_eq!(
        export_batch(&dir.path().join(EPISODES_FILE), &out).unwrap(),
        14
    );
    let samples = read_samples(&out).unwrap();
    assert_eq!(
        samples.iter().filter(|s| s.phase == Stage::Clue).count(),
        10
    );
    assert_eq!(
        samples
            .iter()
            .filter(|s| s.phase == Stage::Decision)
            .count(),
        4
    );
    assert_eq!(read(&out), read(&dir.path().join(SAMPLES_FILE)));

    // Re-import equals export.
    let reserialized: String = samples
        .iter()
        .map(|s| serde_json::to_string(s).unwrap() + "\n")
        .collect();
    assert_eq!(reserialized.as_bytes(), read(&out).as_slice());
}

#[test]
fn empty_log_exports_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("empty.jsonl");
    std::fs::write(&src, "").unwrap();
    let out = dir.path().join("out.jsonl");
    assert_eq!(export_batch(&src, &out).unwrap(), 0);
    assert_eq!(read(&out), b"");
}

#[test]
fn schema_mismatch_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 1);
    play(&cfg, None).unwrap();
    let log = dir.path().join(EPISODES_FILE);
    let mut lines: Vec<String> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    lines[2] = lines[2].replacen("\"schema_version\":1", "\"schema_version\":7", 1);
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    match read_records(&bad) {
        Err(HarnessError::Jsonl { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("schema_version 7"), "{message}");
        }
        other => panic!("expected a line error, got {other:?}"),
    }
}

struct Abstainer;

impl Policy for Abstainer {
    fn name(&self) -> &str {
        "abstainer"
    }

    fn respond(&self, req: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        let action = match req.stage {
            Stage::Clue => Action::Clue(Statement::Text("Nothing to report.".into())),
            Stage::Decision => Action::Vote(VoteChoice::Na),
        };
        Ok(PolicyResponse {
            raw_text: String::new(),
            action: Some(action),
            parse_issue: None,
            logprob: Some(-0.1),
            kl: Some(0.0),
            reasoning: String::new(),
            notes: Vec::new(),
        })
    }
}

#[test]
fn all_abstaining_batch_has_zero_decision_advantages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 1);
    let policy: Arc<dyn Policy> = Arc::new(Abstainer);
    play(&cfg, Some(PolicySet::new(Arc::clone(&policy), policy))).unwrap();
    let records = read_records(&dir.path().join(EPISODES_FILE)).unwrap();
    assert_eq!(records.len(), 8);
    for r in &records {
        assert_eq!(r.training.decision_rewards, vec![-0.5; 4]);
        assert_eq!(r.training.decision_advantages.civilians, vec![0.0; 4]);
    }
    let metrics: Vec<MetricsLine> =
        read_jsonl(&dir.path().join(METRICS_FILE), None, |_| Ok(())).unwrap();
    assert_eq!(metrics[0].losses.decision, Some(0.0));
}

#[test]
fn metrics_trace_replays() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 100);
    cfg.policies.spy = PolicyKind::Oracle;
    let summary = play(&cfg, None).unwrap();
    assert!(summary.switches >= 1);
    assert!(summary.forced_switches >= 1);
    let lines: Vec<MetricsLine> =
        read_jsonl(&dir.path().join(METRICS_FILE), None, |_| Ok(())).unwrap();
    assert_eq!(lines.len(), 100);
    verify_trace(&cfg.episode.scheduler, &lines).unwrap();

    let mut tampered = lines.clone();
    tampered[10].step.acc = 1.0 - tampered[10].step.acc;
    tampered[10].step.na = 0.0;
    assert!(verify_trace(&cfg.episode.scheduler, &tampered).is_err());
}

#[test]
fn winrate_smoke_reports_both_splits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 1);
    let report = eval_winrate(&cfg, PolicyKind::Oracle, PolicyKind::Scripted, 2).unwrap();
    assert_eq!(report.as_civilian.episodes, 1);
    assert_eq!(report.as_spy.episodes, 1);
    assert_eq!(report.overall.episodes, 2);
    assert!(report.ci95.0 <= report.overall.win_rate && report.overall.win_rate <= report.ci95.1);
}

#[test]
fn identical_policies_are_role_asymmetric_but_seat_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 1);
    let report = eval_winrate(&cfg, PolicyKind::Scripted, PolicyKind::Scripted, 200).unwrap();
    // With the same policy on both sides, A's civilian games and spy games
    // are the same games, so A wins exactly the complement as spy.
    assert_eq!(report.as_civilian.wins + report.as_spy.wins, 100);
    assert_eq!(report.overall.wins, 100);
}

#[test]
fn cli_gen_data_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    let st = Command::new(ARENA)
        .args([
            "gen-data", "--kind", "clevr", "--n", "0", "--seed", "1", "--out",
        ])
        .arg(&empty)
        .output()
        .unwrap()
        .status;
    assert!(st.success());
    assert!(load_manifest(&empty).unwrap().pairs.is_empty());

    let data = dir.path().join("data");
    let st = Command::new(ARENA)
        .args(["gen-data", "--n", "20", "--seed", "5", "--out"])
        .arg(&data)
        .output()
        .unwrap()
        .status;
    assert!(st.success());

    let out = Command::new(ARENA)
        .args(["play", "--seed", "3", "--iterations", "2", "--dataset"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let records = read_records(&dir.path().join("run").join(EPISODES_FILE)).unwrap();
    assert_eq!(records.len(), 16);
    assert!(records.iter().all(|r| r.pair_id.len() == 6));

    // Missing --seed and bad configs are configuration errors.
    let st = Command::new(ARENA).args(["play"]).output().unwrap().status;
    assert_eq!(st.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"batch_size": 0}"#).unwrap();
    let st = Command::new(ARENA)
        .args(["play", "--seed", "1", "--config"])
        .arg(&bad)
        .output()
        .unwrap()
        .status;
    assert_eq!(st.code(), Some(2));
    let st = Command::new(ARENA)
        .args(["play", "--seed", "1", "--dataset"])
        .arg(dir.path().join("missing"))
        .output()
        .unwrap()
        .status;
    assert_eq!(st.code(), Some(2));

    // Runtime failure: unreadable episode log.
    let st = Command::new(ARENA)
        .args(["export-batch", "--episodes"])
        .arg(dir.path().join("nope.jsonl"))
        .arg("--out")
        .arg(dir.path().join("x.jsonl"))
        .output()
        .unwrap()
        .status;
    assert_eq!(st.code(), Some(3));
}

#[test]
fn shipped_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    let cfg = RunConfig::from_file(&path).unwrap();
    assert_eq!(cfg, RunConfig::default());
    cfg.validate().unwrap();
}
