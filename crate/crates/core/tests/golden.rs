mod common;

use common::{fixture, golden, run_cli};

/// Set UPDATE_GOLDEN=1 to rewrite the files after an intended output change.
fn check(name: &str, extra: &[&str]) {
    let corpus = fixture("corpus20.jsonl");
    let scores = fixture("scores20.jsonl");
    let mut args: Vec<&str> = vec![extra[0], "--corpus", corpus.to_str().unwrap()];
    if extra[0] != "stats" {
        args.extend(["--scores-file", scores.to_str().unwrap()]);
    }
    args.extend(&extra[1..]);

    let (code, first, err) = run_cli(&args);
    assert_eq!(code, 0, "{err}");
    let (_, second, _) = run_cli(&args);
    assert_eq!(first, second, "{name} differs between runs");

    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &first).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(first, expected, "{name} does not match the golden file");
}

#[test]
fn detect_text() {
    check("detect.txt", &["detect"]);
}

#[test]
fn detect_json() {
    check("detect.json", &["detect", "--format", "json"]);
}

#[test]
fn evaluate_sentence_markdown_with_buckets() {
    check("evaluate_sentence.md", &["evaluate", "--buckets", "20"]);
}

#[test]
fn evaluate_document_csv() {
    check(
        "evaluate_document.csv",
        &["evaluate", "--level", "document", "--format", "csv"],
    );
}

#[test]
fn forensic_exhaustive() {
    check("forensic_exact.txt", &["forensic", "--doc", "news-de-en-1"]);
}

#[test]
fn forensic_monte_carlo() {
    check(
        "forensic_mc.json",
        &[
            "forensic",
            "--doc",
            "news-de-en-2",
            "--exact-max",
            "0",
            "--permutations",
            "2000",
            "--seed",
            "42",
            "--format",
            "json",
        ],
    );
}

#[test]
fn stats_table() {
    check("stats.md", &["stats", "--doc-threshold", "4"]);
}

#[test]
fn four_pair_detect_matches_hand_computation() {
    let corpus = fixture("four_pairs.jsonl");
    let scores = fixture("four_scores.jsonl");
    let (code, out, err) = run_cli(&[
        "detect",
        "--corpus",
        corpus.to_str().unwrap(),
        "--scores-file",
        scores.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out, std::fs::read_to_string(golden("four_pairs_detect.txt")).unwrap());
}

#[test]
fn stats_json_matches_hand_tally() {
    let corpus = fixture("corpus20.jsonl");
    let (code, out, _) = run_cli(&["stats", "--corpus", corpus.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code, 0);
    let stats: transdir::corpus::CorpusStats = serde_json::from_str(&out).unwrap();
    let rows: Vec<(&str, usize, usize, usize)> = stats
        .rows
        .iter()
        .map(|r| (r.direction.as_str(), r.source_sentences, r.documents, r.target_total()))
        .collect();
    assert_eq!(
        rows,
        [
            ("de-en", 6, 1, 6),
            ("de-fr", 3, 1, 3),
            ("en-de", 5, 1, 5),
            ("fr-de", 3, 1, 3),
            ("fr~zh", 3, 1, 3)
        ]
    );
    assert_eq!(
        (
            stats.total.source_sentences,
            stats.total.documents,
            stats.total.target_total()
        ),
        (20, 5, 20)
    );
}
