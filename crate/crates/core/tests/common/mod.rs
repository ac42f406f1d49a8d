#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Runs the CLI in-process. Returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (u8, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("transdir").chain(args.iter().copied());
    let code = transdir::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// Runs the built binary with a clean cache environment.
pub fn transdir() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_transdir"));
    cmd.env_remove("TRANSDIR_CACHE_DIR");
    cmd
}

pub fn replay_cmd(extra: &str) -> String {
    format!(
        "{} {} {extra}",
        shell_quote(env!("CARGO_BIN_EXE_score-replay")),
        shell_quote(fixture("scores20.jsonl").to_str().unwrap())
    )
}

pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

pub fn corpus20_args() -> Vec<String> {
    vec![
        "--corpus".into(),
        fixture("corpus20.jsonl").display().to_string(),
        "--scores-file".into(),
        fixture("scores20.jsonl").display().to_string(),
    ]
}
