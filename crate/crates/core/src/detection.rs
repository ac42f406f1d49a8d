//! Sentence- and document-level translation direction decisions.
//!
//! Everything here works in the log domain. The token-averaged probability
//! of a segment is the arithmetic mean of its token log-probabilities; a
//! document pools all token log-probabilities of one direction and divides by
//! the total token count of that direction.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::TokenScores;

/// Number of terms above which sums switch from a running total to pairwise
/// summation.
const PAIRWISE_THRESHOLD: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("score directions do not mirror each other: {0}")]
    MismatchedPair(String),
    #[error("document has no segments")]
    EmptyDocument,
    #[error("invalid direction scores: {0}")]
    InvalidScores(String),
    #[error("invalid segment pair {pair_id}: {reason}")]
    InvalidPair { pair_id: String, reason: String },
    #[error("document {doc_id} is heterogeneous: {reason}")]
    HeterogeneousDocument { doc_id: String, reason: String },
}

/// Which side of a pair is the original.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "x2y")]
    X2Y,
    #[serde(rename = "y2x")]
    Y2X,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::X2Y => "x2y",
            Direction::Y2X => "y2x",
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::X2Y => Direction::Y2X,
            Direction::Y2X => Direction::X2Y,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Annotated original direction. `None` marks indirect translations where
/// neither side is the original.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GoldDirection {
    #[serde(rename = "x2y")]
    X2Y,
    #[serde(rename = "y2x")]
    Y2X,
    #[serde(rename = "none")]
    None,
    #[serde(rename = "unknown")]
    Unknown,
}

impl GoldDirection {
    pub fn direction(self) -> Option<Direction> {
        match self {
            GoldDirection::X2Y => Some(Direction::X2Y),
            GoldDirection::Y2X => Some(Direction::Y2X),
            GoldDirection::None | GoldDirection::Unknown => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GoldDirection::X2Y => "x2y",
            GoldDirection::Y2X => "y2x",
            GoldDirection::None => "none",
            GoldDirection::Unknown => "unknown",
        }
    }
}

impl From<Direction> for GoldDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::X2Y => GoldDirection::X2Y,
            Direction::Y2X => GoldDirection::Y2X,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TranslationType {
    #[serde(rename = "HT")]
    Ht,
    #[serde(rename = "NMT")]
    Nmt,
    #[serde(rename = "pre-NMT")]
    PreNmt,
    #[serde(rename = "LLM")]
    Llm,
    #[serde(rename = "unknown")]
    Unknown,
}

impl TranslationType {
    pub const ALL: [TranslationType; 5] = [
        TranslationType::Ht,
        TranslationType::Nmt,
        TranslationType::PreNmt,
        TranslationType::Llm,
        TranslationType::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TranslationType::Ht => "HT",
            TranslationType::Nmt => "NMT",
            TranslationType::PreNmt => "pre-NMT",
            TranslationType::Llm => "LLM",
            TranslationType::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for TranslationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One aligned sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub pair_id: String,
    pub doc_id: String,
    pub lang_x: String,
    pub lang_y: String,
    pub text_x: String,
    pub text_y: String,
    pub gold_direction: GoldDirection,
    pub translation_type: TranslationType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_tag: Option<String>,
}

impl SegmentPair {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let fail = |reason: &str| {
            Err(DetectionError::InvalidPair {
                pair_id: self.pair_id.clone(),
                reason: reason.to_owned(),
            })
        };
        if self.pair_id.is_empty() {
            return fail("empty pair_id");
        }
        if self.doc_id.is_empty() {
            return fail("empty doc_id");
        }
        if self.lang_x == self.lang_y {
            return fail("lang_x equals lang_y");
        }
        if self.text_x.trim().is_empty() || self.text_y.trim().is_empty() {
            return fail("empty text");
        }
        Ok(())
    }

    /// The gold-source side, or side X when no side is original.
    pub fn source_text(&self) -> &str {
        match self.gold_direction {
            GoldDirection::Y2X => &self.text_y,
            _ => &self.text_x,
        }
    }

    /// Unicode scalar values in [`source_text`](Self::source_text).
    pub fn source_char_len(&self) -> usize {
        self.source_text().chars().count()
    }
}

/// Segment pairs sharing one doc id, language pair and gold direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    doc_id: String,
    pairs: Vec<SegmentPair>,
}

impl Document {
    pub fn new(pairs: Vec<SegmentPair>) -> Result<Self, DetectionError> {
        let first = pairs.first().ok_or(DetectionError::EmptyDocument)?;
        let doc_id = first.doc_id.clone();
        for p in &pairs {
            p.validate()?;
            let reason = if p.doc_id != doc_id {
                Some(format!("pair {} belongs to document {}", p.pair_id, p.doc_id))
            } else if (p.lang_x.as_str(), p.lang_y.as_str()) != (first.lang_x.as_str(), first.lang_y.as_str()) {
                Some(format!(
                    "pair {} is {}-{}, document is {}-{}",
                    p.pair_id, p.lang_x, p.lang_y, first.lang_x, first.lang_y
                ))
            } else if p.gold_direction != first.gold_direction {
                Some(format!(
                    "pair {} has gold direction {}, document has {}",
                    p.pair_id,
                    p.gold_direction.as_str(),
                    first.gold_direction.as_str()
                ))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(DetectionError::HeterogeneousDocument { doc_id, reason });
            }
        }
        Ok(Document { doc_id, pairs })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn pairs(&self) -> &[SegmentPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lang_x(&self) -> &str {
        &self.pairs[0].lang_x
    }

    pub fn lang_y(&self) -> &str {
        &self.pairs[0].lang_y
    }

    pub fn gold_direction(&self) -> GoldDirection {
        self.pairs[0].gold_direction
    }

    pub fn into_pairs(self) -> Vec<SegmentPair> {
        self.pairs
    }
}

/// Summed log-probabilities and token counts of one segment pair in both
/// directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionScores {
    pub sum_xy: f64,
    pub count_xy: usize,
    pub sum_yx: f64,
    pub count_yx: usize,
}

impl DirectionScores {
    pub fn new(sum_xy: f64, count_xy: usize, sum_yx: f64, count_yx: usize) -> Result<Self, DetectionError> {
        for (name, sum, count) in [("xy", sum_xy, count_xy), ("yx", sum_yx, count_yx)] {
            if count == 0 {
                return Err(DetectionError::InvalidScores(format!("{name} token count is zero")));
            }
            if !sum.is_finite() || sum > 0.0 {
                return Err(DetectionError::InvalidScores(format!(
                    "{name} log-probability sum {sum} is not finite and <= 0"
                )));
            }
        }
        Ok(DirectionScores {
            sum_xy,
            count_xy,
            sum_yx,
            count_yx,
        })
    }

    /// `xy` must score y given x and `yx` x given y.
    pub fn from_token_scores(xy: &TokenScores, yx: &TokenScores) -> Result<Self, DetectionError> {
        check_mirrored(xy, yx)?;
        Ok(DirectionScores {
            sum_xy: seq_logprob(xy),
            count_xy: xy.len(),
            sum_yx: seq_logprob(yx),
            count_yx: yx.len(),
        })
    }

    /// log P_tok(y|x)
    pub fn logp_tok_xy(&self) -> f64 {
        self.sum_xy / self.count_xy as f64
    }

    /// log P_tok(x|y)
    pub fn logp_tok_yx(&self) -> f64 {
        self.sum_yx / self.count_yx as f64
    }

    /// The same segment seen from the other side.
    pub fn swapped(&self) -> Self {
        DirectionScores {
            sum_xy: self.sum_yx,
            count_xy: self.count_yx,
            sum_yx: self.sum_xy,
            count_yx: self.count_xy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionVerdict {
    pub predicted: Direction,
    pub tie: bool,
    /// log P_tok(y|x) - log P_tok(x|y)
    pub log_margin: f64,
    /// P_tok(y|x) / P_tok(x|y)
    pub prob_ratio: f64,
}

impl DirectionVerdict {
    /// X2Y only on a strictly larger forward average; ties go to Y2X.
    pub fn from_log_averages(logp_tok_xy: f64, logp_tok_yx: f64) -> Self {
        let log_margin = logp_tok_xy - logp_tok_yx;
        DirectionVerdict {
            predicted: if log_margin > 0.0 {
                Direction::X2Y
            } else {
                Direction::Y2X
            },
            tie: log_margin == 0.0,
            log_margin,
            prob_ratio: log_margin.exp(),
        }
    }
}

/// Sum of `xs`, pairwise above [`PAIRWISE_THRESHOLD`] terms.
pub(crate) fn stable_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_THRESHOLD {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    stable_sum(&xs[..mid]) + stable_sum(&xs[mid..])
}

/// log P(y|x): the sum of the token log-probabilities.
pub fn seq_logprob(ts: &TokenScores) -> f64 {
    stable_sum(ts.token_logprobs())
}

/// log P_tok(y|x): the mean token log-probability.
pub fn avg_token_logprob(ts: &TokenScores) -> f64 {
    seq_logprob(ts) / ts.len() as f64
}

fn check_mirrored(xy: &TokenScores, yx: &TokenScores) -> Result<(), DetectionError> {
    if xy.src_lang() != yx.tgt_lang() || xy.tgt_lang() != yx.src_lang() {
        return Err(DetectionError::MismatchedPair(format!(
            "{}->{} vs {}->{}",
            xy.src_lang(),
            xy.tgt_lang(),
            yx.src_lang(),
            yx.tgt_lang()
        )));
    }
    Ok(())
}

pub fn detect_sentence(xy: &TokenScores, yx: &TokenScores) -> Result<DirectionVerdict, DetectionError> {
    check_mirrored(xy, yx)?;
    Ok(DirectionVerdict::from_log_averages(
        avg_token_logprob(xy),
        avg_token_logprob(yx),
    ))
}

/// Token-weighted pooled mean over `(sum, count)` parts.
pub(crate) fn pooled_average<I>(parts: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, usize)>,
{
    let mut sums = Vec::new();
    let mut count = 0usize;
    for (s, c) in parts {
        sums.push(s);
        count += c;
    }
    if count == 0 {
        return None;
    }
    Some(stable_sum(&sums) / count as f64)
}

/// Document-level log P_tok: all segment sums pooled, divided by the total
/// token count.
pub fn doc_avg_token_logprob(segments: &[TokenScores]) -> Result<f64, DetectionError> {
    pooled_average(segments.iter().map(|ts| (seq_logprob(ts), ts.len()))).ok_or(DetectionError::EmptyDocument)
}

/// Pooled log P_tok(y|x) and log P_tok(x|y) of a document.
pub fn doc_log_averages(doc_scores: &[DirectionScores]) -> Result<(f64, f64), DetectionError> {
    let xy = pooled_average(doc_scores.iter().map(|d| (d.sum_xy, d.count_xy))).ok_or(DetectionError::EmptyDocument)?;
    let yx = pooled_average(doc_scores.iter().map(|d| (d.sum_yx, d.count_yx))).ok_or(DetectionError::EmptyDocument)?;
    Ok((xy, yx))
}

pub fn detect_document(doc_scores: &[DirectionScores]) -> Result<DirectionVerdict, DetectionError> {
    let (xy, yx) = doc_log_averages(doc_scores)?;
    Ok(DirectionVerdict::from_log_averages(xy, yx))
}
