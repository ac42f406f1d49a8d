//! Per-token conditional log-probabilities and the machinery that obtains them.
//!
//! Scores come from one of three places: a scorer subprocess speaking the
//! newline-delimited JSON protocol in [`protocol`], a precomputed score file
//! loaded into a [`ScoreStore`], or a content-addressed [`ScoreCache`]
//! directory. [`Scorer`] ties a backend and a cache together.

mod cache;
mod key;
pub mod protocol;
mod scorer;
mod store;
mod subprocess;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::ScoreCache;
pub use key::{canonicalize, CacheKey};
pub use scorer::{ScoreRequest, Scorer, ScorerBackend, StoreBackend};
pub use store::{load_score_file, read_score_records, ScoreRecord, ScoreStore};
pub use subprocess::{SubprocessBackend, DEFAULT_BATCH_SIZE};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("scorer error for request {id}: {message}")]
    ScorerError { id: String, message: String },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("invalid scores: {0}")]
    InvalidScores(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{path}:{line}: {message}")]
    ParseError { path: String, line: usize, message: String },
    #[error("conflicting duplicate score record for key {0}")]
    ConflictingDuplicate(CacheKey),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScoringError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        ScoringError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ScoringError>;

/// Log-probabilities of each token of one target segment given one source
/// segment, under a named scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScores {
    token_logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    scorer_id: String,
    src_lang: String,
    tgt_lang: String,
}

impl TokenScores {
    pub fn new(
        token_logprobs: Vec<f64>,
        tokens: Option<Vec<String>>,
        scorer_id: impl Into<String>,
        src_lang: impl Into<String>,
        tgt_lang: impl Into<String>,
    ) -> Result<Self> {
        validate_logprobs(&token_logprobs)?;
        if let Some(tokens) = &tokens {
            if tokens.len() != token_logprobs.len() {
                return Err(ScoringError::InvalidScores(format!(
                    "{} tokens but {} log-probabilities",
                    tokens.len(),
                    token_logprobs.len()
                )));
            }
        }
        Ok(TokenScores {
            token_logprobs,
            tokens,
            scorer_id: scorer_id.into(),
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
        })
    }

    pub fn token_logprobs(&self) -> &[f64] {
        &self.token_logprobs
    }

    pub fn tokens(&self) -> Option<&[String]> {
        self.tokens.as_deref()
    }

    pub fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    pub fn src_lang(&self) -> &str {
        &self.src_lang
    }

    pub fn tgt_lang(&self) -> &str {
        &self.tgt_lang
    }

    /// Number of scored target tokens.
    pub fn len(&self) -> usize {
        self.token_logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_logprobs.is_empty()
    }
}

/// Every entry must be finite and at most zero, and there must be at least one.
pub fn validate_logprobs(logprobs: &[f64]) -> Result<()> {
    if logprobs.is_empty() {
        return Err(ScoringError::InvalidScores("empty token log-probability list".into()));
    }
    for (i, &lp) in logprobs.iter().enumerate() {
        if !lp.is_finite() {
            return Err(ScoringError::InvalidScores(format!(
                "token {i} has non-finite log-probability {lp}"
            )));
        }
        if lp > 0.0 {
            return Err(ScoringError::InvalidScores(format!(
                "token {i} has positive log-probability {lp}"
            )));
        }
    }
    Ok(())
}
