use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_logprobs, CacheKey, Result, ScoringError, TokenScores};

/// One line of a score file, and the content of one cache entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub scorer_id: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub source: String,
    pub target: String,
    pub token_logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

impl ScoreRecord {
    pub fn from_scores(scores: &TokenScores, source: &str, target: &str) -> Self {
        ScoreRecord {
            scorer_id: scores.scorer_id().to_owned(),
            src_lang: scores.src_lang().to_owned(),
            tgt_lang: scores.tgt_lang().to_owned(),
            source: source.to_owned(),
            target: target.to_owned(),
            token_logprobs: scores.token_logprobs().to_vec(),
            tokens: scores.tokens().map(<[String]>::to_vec),
        }
    }

    pub fn key(&self) -> CacheKey {
        CacheKey::new(
            &self.scorer_id,
            &self.src_lang,
            &self.tgt_lang,
            &self.source,
            &self.target,
        )
    }

    pub fn to_token_scores(&self) -> Result<TokenScores> {
        TokenScores::new(
            self.token_logprobs.clone(),
            self.tokens.clone(),
            self.scorer_id.clone(),
            self.src_lang.clone(),
            self.tgt_lang.clone(),
        )
    }

    /// Single-line JSON; logprobs use the shortest representation that
    /// parses back to the same binary64 value.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("score records always serialize")
    }

    pub fn from_json_line(line: &str) -> std::result::Result<Self, String> {
        let record: ScoreRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        validate_logprobs(&record.token_logprobs).map_err(|e| e.to_string())?;
        Ok(record)
    }
}

/// Immutable in-memory index of precomputed scores.
#[derive(Debug, Default, Clone)]
pub struct ScoreStore {
    entries: HashMap<CacheKey, TokenScores>,
    scorer_ids: BTreeSet<String>,
}

fn same_payload(a: &TokenScores, b: &TokenScores) -> bool {
    a.token_logprobs().len() == b.token_logprobs().len()
        && a.token_logprobs()
            .iter()
            .zip(b.token_logprobs())
            .all(|(x, y)| x.to_bits() == y.to_bits())
        && a.tokens() == b.tokens()
}

impl ScoreStore {
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = ScoreRecord>,
    {
        let mut store = ScoreStore::default();
        for record in records {
            store.insert(&record)?;
        }
        Ok(store)
    }

    fn insert(&mut self, record: &ScoreRecord) -> Result<()> {
        let key = record.key();
        let scores = record.to_token_scores()?;
        if let Some(existing) = self.entries.get(&key) {
            if !same_payload(existing, &scores) {
                return Err(ScoringError::ConflictingDuplicate(key));
            }
            return Ok(());
        }
        self.scorer_ids.insert(record.scorer_id.clone());
        self.entries.insert(key, scores);
        Ok(())
    }

    pub fn get(&self, key: &CacheKey) -> Option<&TokenScores> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct scorer ids present, sorted.
    pub fn scorer_ids(&self) -> impl Iterator<Item = &str> {
        self.scorer_ids.iter().map(String::as_str)
    }
}

/// Parses every record of a newline-delimited JSON score file, in file order.
/// Blank lines are skipped.
pub fn read_score_records(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ScoringError::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ScoringError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            ScoreRecord::from_json_line(&line).map_err(|message| ScoringError::ParseError {
                path: path.display().to_string(),
                line: idx + 1,
                message,
            })?,
        );
    }
    Ok(records)
}

/// Loads a score file into a [`ScoreStore`]. Identical duplicate records
/// collapse into one; duplicates with different scores are an error.
pub fn load_score_file(path: impl AsRef<Path>) -> Result<ScoreStore> {
    ScoreStore::from_records(read_score_records(path)?)
}
