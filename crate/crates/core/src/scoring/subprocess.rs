use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::thread::{self, JoinHandle};

use super::protocol::{self, Hello, RequestLine, ResponseBody, PROTOCOL_VERSION};
use super::{Result, ScoreRequest, ScorerBackend, ScoringError, TokenScores};

pub const DEFAULT_BATCH_SIZE: usize = 32;

/// A scorer process driven over the newline-delimited JSON protocol.
///
/// Up to `batch_size` requests are written before responses are collected.
/// Stdout is drained on a separate thread so a chatty child can never block
/// on a full pipe while we are still writing.
pub struct SubprocessBackend {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    reader: Option<JoinHandle<()>>,
    scorer_id: String,
    batch_size: usize,
    command: String,
}

impl SubprocessBackend {
    pub fn spawn(command_line: &str, batch_size: usize) -> Result<Self> {
        let argv = shlex::split(command_line)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| ScoringError::ScorerUnavailable(format!("cannot parse scorer command {command_line:?}")))?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScoringError::ScorerUnavailable(format!("cannot start {:?}: {e}", argv[0])))?;

        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        let reader = thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });

        let mut backend = SubprocessBackend {
            child,
            stdin: Some(stdin),
            lines: rx,
            reader: Some(reader),
            scorer_id: String::new(),
            batch_size: batch_size.max(1),
            command: command_line.to_owned(),
        };
        backend.handshake()?;
        Ok(backend)
    }

    fn handshake(&mut self) -> Result<()> {
        self.send(&protocol::encode(&Hello::request()))?;
        let line = self.recv()?;
        let hello = protocol::decode_hello(&line).map_err(ScoringError::ProtocolViolation)?;
        if hello.op != "hello" || hello.protocol != PROTOCOL_VERSION {
            return Err(ScoringError::ProtocolViolation(format!(
                "unexpected handshake reply {line:?}"
            )));
        }
        self.scorer_id = hello
            .scorer_id
            .filter(|id| !id.is_empty())
            .ok_or_else(|| ScoringError::ProtocolViolation("handshake reply lacks scorer_id".into()))?;
        Ok(())
    }

    fn send(&mut self, text: &str) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| ScoringError::ScorerUnavailable("scorer input already closed".into()))?;
        stdin
            .write_all(text.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| {
                ScoringError::ScorerUnavailable(format!("scorer {:?} stopped accepting input: {e}", self.command))
            })
    }

    fn recv(&mut self) -> Result<String> {
        match self.lines.recv() {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ScoringError::ProtocolViolation(format!(
                "unreadable scorer output: {e}"
            ))),
            Err(_) => Err(ScoringError::ScorerUnavailable(format!(
                "scorer {:?} exited before answering",
                self.command
            ))),
        }
    }

    fn score_chunk(&mut self, chunk: &[ScoreRequest]) -> Result<Vec<Result<TokenScores>>> {
        let mut pending: HashMap<&str, usize> = HashMap::with_capacity(chunk.len());
        let mut payload = String::new();
        for (slot, req) in chunk.iter().enumerate() {
            if pending.insert(req.id.as_str(), slot).is_some() {
                return Err(ScoringError::InvalidRequest(format!(
                    "duplicate in-flight request id {}",
                    req.id
                )));
            }
            payload.push_str(&protocol::encode(&RequestLine {
                id: req.id.clone(),
                src_lang: req.src_lang.clone(),
                tgt_lang: req.tgt_lang.clone(),
                source: req.source.clone(),
                target: req.target.clone(),
            }));
        }
        self.send(&payload)?;

        let mut results: Vec<Option<Result<TokenScores>>> = (0..chunk.len()).map(|_| None).collect();
        while !pending.is_empty() {
            let line = self.recv()?;
            let (id, body) = protocol::decode_response(&line).map_err(ScoringError::ProtocolViolation)?;
            let slot = pending
                .remove(id.as_str())
                .ok_or_else(|| ScoringError::ProtocolViolation(format!("response for unknown request id {id:?}")))?;
            let req = &chunk[slot];
            results[slot] = Some(match body {
                ResponseBody::Error(message) => Err(ScoringError::ScorerError { id, message }),
                ResponseBody::Scores { token_logprobs, tokens } => TokenScores::new(
                    token_logprobs,
                    tokens,
                    self.scorer_id.clone(),
                    &req.src_lang,
                    &req.tgt_lang,
                )
                .map_err(|e| ScoringError::InvalidScores(format!("request {id}: {e}"))),
            });
        }
        Ok(results.into_iter().map(|r| r.expect("every slot answered")).collect())
    }
}

impl ScorerBackend for SubprocessBackend {
    fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<Result<TokenScores>>> {
        let mut out = Vec::with_capacity(requests.len());
        for chunk in requests.chunks(self.batch_size) {
            out.extend(self.score_chunk(chunk)?);
        }
        Ok(out)
    }
}

impl Drop for SubprocessBackend {
    fn drop(&mut self) {
        // closing stdin is the shutdown signal
        drop(self.stdin.take());
        if self.child.try_wait().ok().flatten().is_none() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
        if let Some(reader) = self.reader.take() {
            let _ = reader.join();
        }
    }
}
