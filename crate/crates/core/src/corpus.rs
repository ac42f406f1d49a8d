//! Parallel corpora: loading, importing, filtering and summary statistics.
//!
//! The on-disk form is newline-delimited JSON, one [`SegmentPair`] per line:
//!
//! ```text
//! {"pair_id":"p1","doc_id":"d1","lang_x":"de","lang_y":"en","text_x":"…","text_y":"…","gold_direction":"x2y","translation_type":"HT"}
//! ```
//!
//! `gold_direction` is one of `x2y`, `y2x`, `none`, `unknown`;
//! `translation_type` one of `HT`, `NMT`, `pre-NMT`, `LLM`, `unknown`;
//! `system_id` and `dataset_tag` are optional.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{DetectionError, Document, GoldDirection, SegmentPair, TranslationType};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {message}")]
    ParseError { path: String, line: usize, message: String },
    #[error("document {doc_id} is heterogeneous: {reason}")]
    HeterogeneousDocument { doc_id: String, reason: String },
    #[error("duplicate pair_id {0}")]
    DuplicateSegmentId(String),
    #[error("line count mismatch: {x_lines} lines on the X side, {y_lines} on the Y side")]
    LineCountMismatch { x_lines: usize, y_lines: usize },
    #[error("line {0} is empty on one side only")]
    OneSidedEmptyLine(usize),
    #[error("boundary file has {boundaries} lines, text files have {lines}")]
    BoundaryCountMismatch { boundaries: usize, lines: usize },
    #[error("invalid import metadata: {0}")]
    InvalidMetadata(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    pub provenance: BTreeMap<String, String>,
}

impl Corpus {
    /// Groups pairs into documents by doc id, in order of first appearance.
    pub fn from_pairs(pairs: Vec<SegmentPair>) -> Result<Self, CorpusError> {
        let mut seen_ids = HashSet::new();
        let mut order: Vec<String> = Vec::new();
        let mut by_doc: HashMap<String, Vec<SegmentPair>> = HashMap::new();
        for pair in pairs {
            if !seen_ids.insert(pair.pair_id.clone()) {
                return Err(CorpusError::DuplicateSegmentId(pair.pair_id));
            }
            if !by_doc.contains_key(&pair.doc_id) {
                order.push(pair.doc_id.clone());
            }
            by_doc.entry(pair.doc_id.clone()).or_default().push(pair);
        }
        let documents = order
            .into_iter()
            .map(|id| Document::new(by_doc.remove(&id).expect("grouped")).map_err(from_detection))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Corpus {
            documents,
            provenance: BTreeMap::new(),
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_pairs(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &SegmentPair> {
        self.documents.iter().flat_map(|d| d.pairs().iter())
    }

    /// Writes the normalized corpus format. Loading the output yields an equal
    /// corpus, and saving that again yields identical bytes.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for pair in self.pairs() {
            serde_json::to_writer(&mut out, pair)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

fn from_detection(err: DetectionError) -> CorpusError {
    match err {
        DetectionError::HeterogeneousDocument { doc_id, reason } => {
            CorpusError::HeterogeneousDocument { doc_id, reason }
        }
        other => CorpusError::InvalidMetadata(other.to_string()),
    }
}

/// Parses the normalized format from any reader. `origin` names the source
/// in error messages.
pub fn read_corpus<R: BufRead>(reader: R, origin: &str) -> Result<Corpus, CorpusError> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(Path::new(origin), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::ParseError {
            path: origin.to_owned(),
            line: idx + 1,
            message,
        };
        let pair: SegmentPair = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        pair.validate().map_err(|e| parse_err(e.to_string()))?;
        pairs.push(pair);
    }
    Corpus::from_pairs(pairs)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_corpus(BufReader::new(file), &path.display().to_string())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, corpus.to_jsonl()).map_err(|e| io_err(path, e))
}

/// Metadata for [`import_aligned_files`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportMeta {
    pub lang_x: String,
    pub lang_y: String,
    pub gold_direction: GoldDirection,
    pub translation_type: TranslationType,
    pub system_id: Option<String>,
    pub dataset_tag: Option<String>,
    /// Used when there is no boundary file; every line joins this document.
    pub doc_id: String,
    /// File with one doc id per line, aligned with the text files.
    pub boundaries: Option<std::path::PathBuf>,
}

impl ImportMeta {
    pub fn new(lang_x: impl Into<String>, lang_y: impl Into<String>) -> Self {
        ImportMeta {
            lang_x: lang_x.into(),
            lang_y: lang_y.into(),
            gold_direction: GoldDirection::Unknown,
            translation_type: TranslationType::Unknown,
            system_id: None,
            dataset_tag: None,
            doc_id: "doc".into(),
            boundaries: None,
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Builds a corpus from two line-aligned plain-text files. Lines empty on
/// both sides are skipped; pair ids are `<doc_id>:<line number>`.
pub fn import_aligned_files(x_path: &Path, y_path: &Path, meta: &ImportMeta) -> Result<Corpus, CorpusError> {
    if meta.lang_x == meta.lang_y {
        return Err(CorpusError::InvalidMetadata("lang_x equals lang_y".into()));
    }
    let xs = read_lines(x_path)?;
    let ys = read_lines(y_path)?;
    if xs.len() != ys.len() {
        return Err(CorpusError::LineCountMismatch {
            x_lines: xs.len(),
            y_lines: ys.len(),
        });
    }
    let boundaries = match &meta.boundaries {
        Some(p) => {
            let b = read_lines(p)?;
            if b.len() != xs.len() {
                return Err(CorpusError::BoundaryCountMismatch {
                    boundaries: b.len(),
                    lines: xs.len(),
                });
            }
            Some(b)
        }
        None => None,
    };

    let mut pairs = Vec::new();
    for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
        let line = i + 1;
        match (x.trim().is_empty(), y.trim().is_empty()) {
            (true, true) => continue,
            (false, false) => {}
            _ => return Err(CorpusError::OneSidedEmptyLine(line)),
        }
        let doc_id = match &boundaries {
            Some(b) => b[i].trim().to_owned(),
            None => meta.doc_id.clone(),
        };
        if doc_id.is_empty() {
            return Err(CorpusError::InvalidMetadata(format!("line {line} has an empty doc id")));
        }
        pairs.push(SegmentPair {
            pair_id: format!("{doc_id}:{line}"),
            doc_id,
            lang_x: meta.lang_x.clone(),
            lang_y: meta.lang_y.clone(),
            text_x: x.clone(),
            text_y: y.clone(),
            gold_direction: meta.gold_direction,
            translation_type: meta.translation_type,
            system_id: meta.system_id.clone(),
            dataset_tag: meta.dataset_tag.clone(),
        });
    }
    Corpus::from_pairs(pairs)
}

/// Selection criteria; unset fields do not restrict.
///
/// Pair-level criteria (directions, types, tags) are applied first, then the
/// per-document sentence minimum, then the per-language-pair document minimum.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusFilter {
    pub directions: Option<BTreeSet<GoldDirection>>,
    pub translation_types: Option<BTreeSet<TranslationType>>,
    pub dataset_tags: Option<BTreeSet<String>>,
    pub min_doc_sentences: Option<usize>,
    /// Drops whole language pairs with fewer qualifying documents than this in
    /// either direction.
    pub min_docs_per_direction: Option<usize>,
}

impl CorpusFilter {
    fn keeps_pair(&self, p: &SegmentPair) -> bool {
        self.directions.as_ref().is_none_or(|s| s.contains(&p.gold_direction))
            && self
                .translation_types
                .as_ref()
                .is_none_or(|s| s.contains(&p.translation_type))
            && self
                .dataset_tags
                .as_ref()
                .is_none_or(|s| p.dataset_tag.as_ref().is_some_and(|t| s.contains(t)))
    }
}

/// Unordered language pair, smaller code first.
fn pair_group(doc: &Document) -> (String, String) {
    let (a, b) = (doc.lang_x(), doc.lang_y());
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

/// Gold source language of a document, if it has one.
fn source_lang(doc: &Document) -> Option<&str> {
    match doc.gold_direction() {
        GoldDirection::X2Y => Some(doc.lang_x()),
        GoldDirection::Y2X => Some(doc.lang_y()),
        _ => None,
    }
}

pub fn filter_corpus(corpus: &Corpus, filter: &CorpusFilter) -> Corpus {
    let mut docs: Vec<Document> = corpus
        .documents
        .iter()
        .filter_map(|doc| {
            let kept: Vec<SegmentPair> = doc.pairs().iter().filter(|p| filter.keeps_pair(p)).cloned().collect();
            if kept.is_empty() || filter.min_doc_sentences.is_some_and(|m| kept.len() < m) {
                return None;
            }
            Some(Document::new(kept).expect("a subset of a homogeneous document is homogeneous"))
        })
        .collect();

    if let Some(min_docs) = filter.min_docs_per_direction {
        let mut counts: HashMap<(String, String), HashMap<String, usize>> = HashMap::new();
        for doc in &docs {
            if let Some(src) = source_lang(doc) {
                *counts
                    .entry(pair_group(doc))
                    .or_default()
                    .entry(src.to_owned())
                    .or_default() += 1;
            }
        }
        docs.retain(|doc| {
            let group = pair_group(doc);
            let per_src = counts.get(&group);
            let n = |lang: &str| per_src.and_then(|m| m.get(lang)).copied().unwrap_or(0);
            n(&group.0) >= min_docs && n(&group.1) >= min_docs
        });
    }

    Corpus {
        documents: docs,
        provenance: corpus.provenance.clone(),
    }
}

/// Counts for one translation direction (or one indirect language pair).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionStats {
    /// `src-tgt` for directed rows, `x~y` for indirect, `x?y` for unknown.
    pub direction: String,
    /// Distinct source sentences (per document).
    pub source_sentences: usize,
    pub documents: usize,
    /// Documents with at least the threshold number of source sentences.
    pub documents_at_threshold: usize,
    /// Segment pairs per translation type, i.e. target sentences.
    pub target_sentences: BTreeMap<TranslationType, usize>,
}

impl DirectionStats {
    fn add(&mut self, other: &DirectionStats) {
        self.source_sentences += other.source_sentences;
        self.documents += other.documents;
        self.documents_at_threshold += other.documents_at_threshold;
        for (t, n) in &other.target_sentences {
            *self.target_sentences.entry(*t).or_default() += n;
        }
    }

    pub fn target_total(&self) -> usize {
        self.target_sentences.values().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub doc_threshold: usize,
    pub rows: Vec<DirectionStats>,
    pub total: DirectionStats,
}

fn direction_label(doc: &Document) -> String {
    let (x, y) = (doc.lang_x(), doc.lang_y());
    match doc.gold_direction() {
        GoldDirection::X2Y => format!("{x}-{y}"),
        GoldDirection::Y2X => format!("{y}-{x}"),
        GoldDirection::None => {
            let (a, b) = pair_group(doc);
            format!("{a}~{b}")
        }
        GoldDirection::Unknown => {
            let (a, b) = pair_group(doc);
            format!("{a}?{b}")
        }
    }
}

/// Per-direction counts, rows sorted by direction label. Several references
/// for one source sentence count once as a source sentence and once each as
/// target sentences.
pub fn corpus_stats(corpus: &Corpus, doc_threshold: usize) -> CorpusStats {
    let mut rows: BTreeMap<String, DirectionStats> = BTreeMap::new();
    for doc in corpus.documents() {
        let label = direction_label(doc);
        let row = rows.entry(label.clone()).or_insert_with(|| DirectionStats {
            direction: label,
            ..Default::default()
        });
        let sources: HashSet<&str> = doc.pairs().iter().map(SegmentPair::source_text).collect();
        row.source_sentences += sources.len();
        row.documents += 1;
        if sources.len() >= doc_threshold {
            row.documents_at_threshold += 1;
        }
        for p in doc.pairs() {
            *row.target_sentences.entry(p.translation_type).or_default() += 1;
        }
    }
    let mut total = DirectionStats {
        direction: "total".into(),
        ..Default::default()
    };
    for row in rows.values() {
        total.add(row);
    }
    CorpusStats {
        doc_threshold,
        rows: rows.into_values().collect(),
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, doc: &str, gold: GoldDirection, ty: TranslationType) -> SegmentPair {
        SegmentPair {
            pair_id: id.into(),
            doc_id: doc.into(),
            lang_x: "de".into(),
            lang_y: "en".into(),
            text_x: format!("Satz {id}"),
            text_y: format!("Sentence {id}"),
            gold_direction: gold,
            translation_type: ty,
            system_id: None,
            dataset_tag: None,
        }
    }

    fn doc_of(doc: &str, n: usize, gold: GoldDirection) -> Vec<SegmentPair> {
        (0..n)
            .map(|i| pair(&format!("{doc}-{i}"), doc, gold, TranslationType::Ht))
            .collect()
    }

    #[test]
    fn load_groups_documents_in_file_order() {
        let mut pairs = doc_of("b", 3, GoldDirection::X2Y);
        pairs.extend(doc_of("a", 3, GoldDirection::Y2X));
        let text = Corpus::from_pairs(pairs).unwrap().to_jsonl();
        let corpus = read_corpus(text.as_bytes(), "mem").unwrap();
        assert_eq!(corpus.documents().len(), 2);
        assert_eq!(corpus.documents()[0].doc_id(), "b");
        assert!(corpus.documents().iter().all(|d| d.len() == 3));
    }

    #[test]
    fn same_languages_is_a_parse_error() {
        let mut p = pair("p", "d", GoldDirection::X2Y, TranslationType::Ht);
        p.lang_y = "de".into();
        let line = serde_json::to_string(&p).unwrap();
        assert!(matches!(
            read_corpus(line.as_bytes(), "mem"),
            Err(CorpusError::ParseError { line: 1, .. })
        ));
    }

    #[test]
    fn mixed_gold_in_one_doc_is_heterogeneous() {
        let pairs = vec![
            pair("1", "d", GoldDirection::X2Y, TranslationType::Ht),
            pair("2", "d", GoldDirection::Y2X, TranslationType::Ht),
        ];
        assert!(matches!(
            Corpus::from_pairs(pairs),
            Err(CorpusError::HeterogeneousDocument { .. })
        ));
    }

    #[test]
    fn duplicate_pair_ids() {
        let pairs = vec![
            pair("1", "d", GoldDirection::X2Y, TranslationType::Ht),
            pair("1", "e", GoldDirection::X2Y, TranslationType::Ht),
        ];
        assert!(matches!(Corpus::from_pairs(pairs), Err(CorpusError::DuplicateSegmentId(id)) if id == "1"));
    }

    #[test]
    fn unknown_gold_label_is_rejected() {
        let line = r#"{"pair_id":"p","doc_id":"d","lang_x":"de","lang_y":"en","text_x":"a","text_y":"b","gold_direction":"sideways","translation_type":"HT"}"#;
        assert!(matches!(
            read_corpus(line.as_bytes(), "mem"),
            Err(CorpusError::ParseError { .. })
        ));
    }

    fn write(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn import_five_lines() {
        let dir = tempfile::tempdir().unwrap();
        let x = write(dir.path(), "x.txt", "a\nb\nc\nd\ne\n");
        let y = write(dir.path(), "y.txt", "A\nB\nC\nD\nE\n");
        let corpus = import_aligned_files(&x, &y, &ImportMeta::new("en", "de")).unwrap();
        assert_eq!(corpus.documents().len(), 1);
        assert_eq!(corpus.num_pairs(), 5);
        assert_eq!(corpus.documents()[0].pairs()[2].pair_id, "doc:3");
    }

    #[test]
    fn import_line_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let x = write(dir.path(), "x.txt", "a\nb\nc\nd\ne\n");
        let y = write(dir.path(), "y.txt", "A\nB\nC\nD\nE\nF\n");
        assert!(matches!(
            import_aligned_files(&x, &y, &ImportMeta::new("en", "de")),
            Err(CorpusError::LineCountMismatch { x_lines: 5, y_lines: 6 })
        ));
    }

    #[test]
    fn import_one_sided_empty_line() {
        let dir = tempfile::tempdir().unwrap();
        let x = write(dir.path(), "x.txt", "a\nb\nc\nd\ne\n");
        let y = write(dir.path(), "y.txt", "A\nB\n\nD\nE\n");
        assert!(matches!(
            import_aligned_files(&x, &y, &ImportMeta::new("en", "de")),
            Err(CorpusError::OneSidedEmptyLine(3))
        ));
    }

    #[test]
    fn import_skips_blank_lines_and_uses_boundaries() {
        let dir = tempfile::tempdir().unwrap();
        let x = write(dir.path(), "x.txt", "a\n\nb\nc\n");
        let y = write(dir.path(), "y.txt", "A\n \nB\nC\n");
        let b = write(dir.path(), "b.txt", "d1\nd1\nd2\nd2\n");
        let meta = ImportMeta {
            boundaries: Some(b),
            gold_direction: GoldDirection::X2Y,
            ..ImportMeta::new("en", "de")
        };
        let corpus = import_aligned_files(&x, &y, &meta).unwrap();
        let sizes: Vec<_> = corpus
            .documents()
            .iter()
            .map(|d| (d.doc_id().to_owned(), d.len()))
            .collect();
        assert_eq!(sizes, vec![("d1".to_owned(), 1), ("d2".to_owned(), 2)]);
    }

    #[test]
    fn min_doc_sentences_boundary() {
        let mut pairs = doc_of("nine", 9, GoldDirection::X2Y);
        pairs.extend(doc_of("ten", 10, GoldDirection::X2Y));
        pairs.extend(doc_of("eleven", 11, GoldDirection::X2Y));
        let corpus = Corpus::from_pairs(pairs).unwrap();
        let filter = CorpusFilter {
            min_doc_sentences: Some(10),
            ..Default::default()
        };
        assert_eq!(filter_corpus(&corpus, &filter).documents().len(), 2);
    }

    #[test]
    fn type_filter() {
        let pairs = vec![
            pair("1", "d", GoldDirection::X2Y, TranslationType::Ht),
            pair("2", "d", GoldDirection::X2Y, TranslationType::Nmt),
            pair("3", "e", GoldDirection::X2Y, TranslationType::Nmt),
        ];
        let corpus = Corpus::from_pairs(pairs).unwrap();
        let filter = CorpusFilter {
            translation_types: Some([TranslationType::Ht].into()),
            ..Default::default()
        };
        let out = filter_corpus(&corpus, &filter);
        assert_eq!(out.num_pairs(), 1);
        assert!(out.pairs().all(|p| p.translation_type == TranslationType::Ht));
    }

    #[test]
    fn min_docs_per_direction_drops_whole_pair_group() {
        let mut pairs = Vec::new();
        for i in 0..100 {
            pairs.extend(doc_of(&format!("de{i}"), 1, GoldDirection::X2Y));
        }
        for i in 0..99 {
            pairs.extend(doc_of(&format!("en{i}"), 1, GoldDirection::Y2X));
        }
        let corpus = Corpus::from_pairs(pairs).unwrap();
        let filter = CorpusFilter {
            min_docs_per_direction: Some(100),
            ..Default::default()
        };
        assert!(filter_corpus(&corpus, &filter).is_empty());
        let relaxed = CorpusFilter {
            min_docs_per_direction: Some(99),
            ..Default::default()
        };
        assert_eq!(filter_corpus(&corpus, &relaxed).documents().len(), 199);
    }

    #[test]
    fn empty_corpus_stats_are_zero() {
        let stats = corpus_stats(&Corpus::default(), 10);
        assert!(stats.rows.is_empty());
        assert_eq!(stats.total.source_sentences, 0);
        assert_eq!(stats.total.target_total(), 0);
    }

    #[test]
    fn stats_count_types() {
        let mut pairs: Vec<_> = (0..3)
            .map(|i| pair(&format!("h{i}"), "d", GoldDirection::X2Y, TranslationType::Ht))
            .collect();
        pairs.extend((0..2).map(|i| pair(&format!("n{i}"), "d", GoldDirection::X2Y, TranslationType::Nmt)));
        let stats = corpus_stats(&Corpus::from_pairs(pairs).unwrap(), 10);
        assert_eq!(stats.rows.len(), 1);
        let row = &stats.rows[0];
        assert_eq!(row.direction, "de-en");
        assert_eq!(row.source_sentences, 5);
        assert_eq!(row.target_sentences[&TranslationType::Ht], 3);
        assert_eq!(row.target_sentences[&TranslationType::Nmt], 2);
        assert_eq!(row.documents_at_threshold, 0);
        assert_eq!(
            stats.total,
            DirectionStats {
                direction: "total".into(),
                ..row.clone()
            }
        );
    }

    #[test]
    fn multi_reference_sources_count_once() {
        let mut a = pair("r1", "d", GoldDirection::X2Y, TranslationType::Ht);
        let mut b = pair("r2", "d", GoldDirection::X2Y, TranslationType::Ht);
        a.text_x = "Gleicher Satz".into();
        b.text_x = "Gleicher Satz".into();
        let stats = corpus_stats(&Corpus::from_pairs(vec![a, b]).unwrap(), 1);
        assert_eq!(stats.total.source_sentences, 1);
        assert_eq!(stats.total.target_total(), 2);
    }
}
