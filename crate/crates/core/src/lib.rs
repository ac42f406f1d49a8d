//! Translation direction detection.
//!
//! Given a sentence-aligned pair of texts, the side that was translated is
//! predicted by comparing token-averaged conditional translation
//! probabilities in both directions: if a model finds `y` more probable given
//! `x` than `x` given `y`, then `x` is taken to be the original. Documents
//! pool token probabilities across all their segments, and a permutation test
//! measures how far a document-level decision is from chance.
//!
//! * [`scoring`] obtains per-token log-probabilities from a scorer process,
//!   a score file, or a content-addressed cache.
//! * [`detection`] turns them into sentence and document verdicts.
//! * [`statistics`] computes accuracies, directional bias, prediction ratios,
//!   length-bucketed accuracy and permutation p-values.
//! * [`corpus`] loads, imports, filters and summarizes parallel corpora.
//! * [`report`] renders results; [`cli`] drives it all from the command line.

pub mod cli;
pub mod corpus;
pub mod detection;
pub mod report;
pub mod scoring;
pub mod statistics;

pub use corpus::{corpus_stats, filter_corpus, load_corpus, save_corpus, Corpus, CorpusFilter};
pub use detection::{
    avg_token_logprob, detect_document, detect_sentence, doc_avg_token_logprob, seq_logprob, Direction,
    DirectionScores, DirectionVerdict, Document, GoldDirection, SegmentPair, TranslationType,
};
pub use scoring::{ScoreCache, ScoreRequest, ScoreStore, Scorer, TokenScores};
pub use statistics::{
    accuracy_by_direction, directional_bias, exact_permutation_test, length_bucket_accuracy, permutation_test,
    prediction_ratio, EvaluationReport, PValueReport, PermutationConfig,
};
