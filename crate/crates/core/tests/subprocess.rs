//! The engine against a real scorer process speaking the wire protocol.

mod common;

use std::sync::Arc;

use common::{code, corpus20_args, fixture, replay_cmd, stderr, stdout, transdir};
use transdir::corpus::load_corpus;
use transdir::scoring::{load_score_file, ScoreCache, Scorer, StoreBackend, SubprocessBackend};

fn detect_with(cmd: &str, extra: &[&str]) -> std::process::Output {
    transdir()
        .args(["detect", "--corpus"])
        .arg(fixture("corpus20.jsonl"))
        .args(["--scorer-cmd", cmd])
        .args(extra)
        .output()
        .unwrap()
}

fn reference_detect() -> String {
    stdout(&transdir().arg("detect").args(corpus20_args()).output().unwrap())
}

#[test]
fn subprocess_matches_score_file() {
    let expected = reference_detect();
    for batch in ["1", "3", "32", "1000"] {
        let out = detect_with(&replay_cmd(""), &["--batch-size", batch]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert_eq!(stdout(&out), expected, "batch size {batch}");
    }
}

#[test]
fn out_of_order_responses_are_matched_by_id() {
    let out = detect_with(&replay_cmd("--reverse-window 4"), &["--batch-size", "8"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), reference_detect());
}

#[test]
fn scorer_reported_error_exits_3() {
    let out = detect_with(&replay_cmd("--error-on Museum"), &[]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("refused by --error-on"), "{}", stderr(&out));
}

#[test]
fn scorer_dying_mid_run_exits_3() {
    let out = detect_with(&replay_cmd("--die-after 5"), &["--batch-size", "4"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("scorer unavailable"), "{}", stderr(&out));
}

#[test]
fn malformed_response_exits_3() {
    let out = detect_with(&replay_cmd("--garbage-at 2"), &[]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("protocol violation"), "{}", stderr(&out));
}

#[test]
fn handshake_without_scorer_id_exits_3() {
    let out = detect_with(&replay_cmd("--anonymous"), &[]);
    assert_eq!(code(&out), 3);
}

#[test]
fn unexpected_scorer_id_exits_3() {
    let out = detect_with(&replay_cmd(""), &["--scorer-id", "other-lm"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("other-lm"));
}

#[test]
fn missing_scorer_binary_exits_3() {
    let out = detect_with("/nonexistent/scorer --model x", &[]);
    assert_eq!(code(&out), 3);
}

#[test]
fn cached_and_duplicate_requests_are_not_resent() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("requests.log");
    let cache = dir.path().join("cache");
    let cmd = replay_cmd(&format!("--log {}", common::shell_quote(log.to_str().unwrap())));

    let out = detect_with(&cmd, &["--cache-dir", cache.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let first = std::fs::read_to_string(&log).unwrap();
    assert_eq!(first.lines().count(), 40);

    let out = detect_with(&cmd, &["--cache-dir", cache.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read_to_string(&log).unwrap(),
        first,
        "second run should be served from the cache"
    );
}

#[test]
fn library_backends_agree_bit_for_bit() {
    let corpus = load_corpus(fixture("corpus20.jsonl")).unwrap();
    let pairs: Vec<_> = corpus.pairs().cloned().collect();

    let store = Arc::new(load_score_file(fixture("scores20.jsonl")).unwrap());
    let mut from_file = Scorer::new(Box::new(StoreBackend::new(store, None).unwrap()), None);
    let backend = SubprocessBackend::spawn(&replay_cmd(""), 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut from_process = Scorer::new(Box::new(backend), Some(ScoreCache::open(dir.path()).unwrap()));

    let a = from_file.score_segment_pairs(&pairs).unwrap();
    let b = from_process.score_segment_pairs(&pairs).unwrap();
    assert_eq!(a, b);
    for ((xy, _), (xy2, _)) in a.iter().zip(&b) {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(xy.token_logprobs()), bits(xy2.token_logprobs()));
    }
    assert_eq!(from_process.backend_requests(), 40);
}
