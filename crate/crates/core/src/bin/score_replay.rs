//! Scorer process that answers protocol requests from a score file.
//!
//! Useful as a stand-in for a real model and, with the fault flags, for
//! exercising the engine's handling of misbehaving scorers.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use transdir::scoring::protocol::{self, Hello, RequestLine, ResponseLine};
use transdir::scoring::{load_score_file, CacheKey};

#[derive(Debug, Parser)]
#[command(name = "score-replay")]
struct Args {
    /// Score file to replay.
    scores: PathBuf,
    /// Scorer id to serve; required when the file holds several.
    #[arg(long)]
    scorer_id: Option<String>,
    /// Answer with an error for requests whose source or target contains this text.
    #[arg(long)]
    error_on: Option<String>,
    /// Exit without answering after this many requests.
    #[arg(long)]
    die_after: Option<usize>,
    /// Write a malformed line instead of the response to request number N (1-based).
    #[arg(long)]
    garbage_at: Option<usize>,
    /// Hold responses back and send each group of this many in reverse order.
    #[arg(long, default_value_t = 1)]
    reverse_window: usize,
    /// Leave the scorer id out of the handshake reply.
    #[arg(long)]
    anonymous: bool,
    /// Append every request id to this file, one per line.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let store = match load_score_file(&args.scores) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("score-replay: {e}");
            return ExitCode::from(2);
        }
    };
    let scorer_id = match args.scorer_id.clone() {
        Some(id) => id,
        None => {
            let ids: Vec<&str> = store.scorer_ids().collect();
            if ids.len() != 1 {
                eprintln!("score-replay: file holds {} scorer ids; pass --scorer-id", ids.len());
                return ExitCode::from(2);
            }
            ids[0].to_owned()
        }
    };

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut lines = stdin.lock().lines();

    match lines.next() {
        Some(Ok(line)) if protocol::decode_hello(&line).is_ok_and(|h| h.op == "hello") => {}
        _ => {
            eprintln!("score-replay: expected a hello line");
            return ExitCode::from(2);
        }
    }
    let reply = if args.anonymous {
        Hello::request()
    } else {
        Hello::reply(&scorer_id)
    };
    if out
        .write_all(protocol::encode(&reply).as_bytes())
        .and_then(|_| out.flush())
        .is_err()
    {
        return ExitCode::from(1);
    }

    let mut log = args.log.as_ref().map(|p| {
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(p)
            .expect("cannot open log file")
    });
    let mut pending: Vec<String> = Vec::new();
    let mut served = 0usize;
    for line in lines {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        served += 1;
        if args.die_after.is_some_and(|n| served > n) {
            return ExitCode::from(1);
        }
        let response = match serde_json::from_str::<RequestLine>(&line) {
            Ok(req) => {
                if let Some(f) = log.as_mut() {
                    let _ = writeln!(f, "{}", req.id);
                }
                if args.garbage_at == Some(served) {
                    "this is not json\n".to_owned()
                } else if args
                    .error_on
                    .as_deref()
                    .is_some_and(|t| req.source.contains(t) || req.target.contains(t))
                {
                    protocol::encode(&ResponseLine::error(&req.id, "refused by --error-on"))
                } else {
                    let key = CacheKey::new(&scorer_id, &req.src_lang, &req.tgt_lang, &req.source, &req.target);
                    match store.get(&key) {
                        Some(ts) => protocol::encode(&ResponseLine::scores(
                            &req.id,
                            ts.token_logprobs().to_vec(),
                            ts.tokens().map(<[String]>::to_vec),
                        )),
                        None => protocol::encode(&ResponseLine::error(&req.id, "no score for this request")),
                    }
                }
            }
            Err(e) => protocol::encode(&ResponseLine::error("", format!("bad request: {e}"))),
        };
        pending.push(response);
        if pending.len() >= args.reverse_window.max(1) {
            for r in pending.drain(..).rev() {
                if out.write_all(r.as_bytes()).is_err() {
                    return ExitCode::from(1);
                }
            }
            if out.flush().is_err() {
                return ExitCode::from(1);
            }
        }
    }
    for r in pending.drain(..).rev() {
        let _ = out.write_all(r.as_bytes());
    }
    let _ = out.flush();
    ExitCode::SUCCESS
}
