//! Serialization of results as CSV, JSON or Markdown.
//!
//! CSV and Markdown render accuracies as percentages with two decimals and
//! the bias with two decimals; JSON keeps full precision. All output is
//! deterministic for a given input.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::CorpusStats;
use crate::detection::{Direction, DirectionVerdict, TranslationType};
use crate::statistics::{EvaluationReport, PValueReport, SubsetKey};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unsupported format {0:?} (expected csv, json or markdown)")]
pub struct UnsupportedFormat(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    Csv,
    Json,
    #[default]
    Markdown,
}

impl FromStr for Format {
    type Err = UnsupportedFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(UnsupportedFormat(s.to_owned())),
        }
    }
}

/// Accuracy in [0, 1] as a percentage with two decimals.
pub fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

/// Three significant digits; scientific notation outside [1e-4, 1e3).
pub fn sig3(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mut exp = v.abs().log10().floor() as i32;
    let render = |exp: i32| {
        if !(-4..3).contains(&exp) {
            format!("{v:.2e}")
        } else {
            format!("{:.*}", (2 - exp) as usize, v)
        }
    };
    let mut s = render(exp);
    // rounding may carry into the next power of ten, e.g. 0.9996 -> "1.000"
    if (-4..3).contains(&exp) && s.parse::<f64>().is_ok_and(|r| r.abs() >= 10f64.powi(exp + 1)) {
        exp += 1;
        s = render(exp);
    }
    s
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("reports always serialize");
    out.push(b'\n');
    out
}

fn csv_block(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn md_table(out: &mut String, header: &[&str], align_right_from: usize, rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let rule: Vec<&str> = (0..header.len())
        .map(|i| if i >= align_right_from { "---:" } else { "---" })
        .collect();
    let _ = writeln!(out, "|{}|", rule.join("|"));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|c| md_escape(c)).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
}

fn tag(subset: &SubsetKey) -> String {
    subset.dataset_tag.clone().unwrap_or_else(|| "-".into())
}

const ACC_HEADER: [&str; 11] = [
    "pair", "type", "tag", "acc_xy", "acc_yx", "avg", "bias", "n_xy", "n_yx", "ties_xy", "ties_yx",
];

fn accuracy_rows(report: &EvaluationReport) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                format!("{}-{}", r.lang_x, r.lang_y),
                r.subset.translation_type.to_string(),
                tag(&r.subset),
                pct(r.acc_xy),
                pct(r.acc_yx),
                pct(r.avg),
                format!("{:.2}", r.bias),
                r.n_xy.to_string(),
                r.n_yx.to_string(),
                r.ties_xy.to_string(),
                r.ties_yx.to_string(),
            ]
        })
        .collect();
    rows.extend(report.macro_rows.iter().map(|m| {
        vec![
            "macro-avg".into(),
            m.subset.translation_type.to_string(),
            tag(&m.subset),
            pct(m.acc_xy),
            pct(m.acc_yx),
            pct(m.avg),
            format!("{:.2}", m.bias),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ]
    }));
    rows
}

fn ratio_rows(report: &EvaluationReport) -> Vec<Vec<String>> {
    report
        .ratio_rows
        .iter()
        .map(|r| {
            vec![
                format!("{}-{}", r.lang_x, r.lang_y),
                r.subset.translation_type.to_string(),
                tag(&r.subset),
                pct(r.ratio_xy),
                pct(r.ratio_yx),
                r.n.to_string(),
            ]
        })
        .collect()
}

fn bucket_rows(report: &EvaluationReport) -> Vec<Vec<String>> {
    report
        .length_buckets
        .iter()
        .flatten()
        .map(|b| vec![format!("{}-{}", b.lower, b.upper - 1), pct(b.accuracy), b.n.to_string()])
        .collect()
}

const RATIO_HEADER: [&str; 6] = ["pair", "type", "tag", "ratio_xy", "ratio_yx", "n"];
const BUCKET_HEADER: [&str; 3] = ["source_chars", "accuracy", "n"];

/// Renders an evaluation report. CSV output is one block per table, blocks
/// separated by an empty line; a report with a single accuracy row and
/// nothing else is a header plus one line.
pub fn emit_report(report: &EvaluationReport, format: Format) -> Vec<u8> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => {
            let mut out = csv_block(&ACC_HEADER, &accuracy_rows(report));
            if !report.ratio_rows.is_empty() {
                out.push(b'\n');
                out.extend(csv_block(&RATIO_HEADER, &ratio_rows(report)));
            }
            if report.length_buckets.is_some() {
                out.push(b'\n');
                out.extend(csv_block(&BUCKET_HEADER, &bucket_rows(report)));
            }
            out
        }
        Format::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "## {} level accuracy\n", capitalize(&report.level));
            md_table(
                &mut out,
                &[
                    "Pair", "Type", "Tag", "→", "←", "Avg.", "B", "n→", "n←", "ties→", "ties←",
                ],
                3,
                &accuracy_rows(report),
            );
            if !report.ratio_rows.is_empty() {
                let _ = writeln!(out, "\n## Prediction ratios without an original side\n");
                md_table(
                    &mut out,
                    &["Pair", "Type", "Tag", "→", "←", "n"],
                    3,
                    &ratio_rows(report),
                );
            }
            if report.length_buckets.is_some() {
                let _ = writeln!(out, "\n## Accuracy by source length (characters)\n");
                md_table(&mut out, &["Chars", "Acc.", "n"], 1, &bucket_rows(report));
            }
            out.into_bytes()
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

pub fn emit_stats(stats: &CorpusStats, format: Format) -> Vec<u8> {
    if format == Format::Json {
        return to_json(stats);
    }
    let types: Vec<TranslationType> = TranslationType::ALL
        .into_iter()
        .filter(|t| stats.total.target_sentences.contains_key(t))
        .collect();
    let docs_at = format!("docs_ge_{}", stats.doc_threshold);
    let mut header = vec!["direction", "source_sents", "docs", docs_at.as_str()];
    let type_cols: Vec<String> = types.iter().map(|t| format!("target_{t}")).collect();
    header.extend(type_cols.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = stats
        .rows
        .iter()
        .chain(std::iter::once(&stats.total))
        .map(|r| {
            let mut row = vec![
                r.direction.clone(),
                r.source_sentences.to_string(),
                r.documents.to_string(),
                r.documents_at_threshold.to_string(),
            ];
            row.extend(
                types
                    .iter()
                    .map(|t| r.target_sentences.get(t).copied().unwrap_or(0).to_string()),
            );
            row
        })
        .collect();
    match format {
        Format::Csv => csv_block(&header, &rows),
        _ => {
            let mut out = String::new();
            md_table(&mut out, &header, 1, &rows);
            out.into_bytes()
        }
    }
}

/// Verdict of one segment pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub pair_id: String,
    pub doc_id: String,
    pub lang_x: String,
    pub lang_y: String,
    pub sum_xy: f64,
    pub count_xy: usize,
    pub sum_yx: f64,
    pub count_yx: usize,
    pub logp_tok_xy: f64,
    pub logp_tok_yx: f64,
    #[serde(flatten)]
    pub verdict: DirectionVerdict,
}

/// Verdict of one document, from pooled scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentResult {
    pub doc_id: String,
    pub lang_x: String,
    pub lang_y: String,
    pub segments: usize,
    pub logp_tok_xy: f64,
    pub logp_tok_yx: f64,
    #[serde(flatten)]
    pub verdict: DirectionVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResults {
    pub scorer_id: String,
    pub pairs: Vec<PairResult>,
    pub documents: Vec<DocumentResult>,
}

fn predicted_label(v: &DirectionVerdict, lang_x: &str, lang_y: &str) -> String {
    let (src, tgt) = match v.predicted {
        Direction::X2Y => (lang_x, lang_y),
        Direction::Y2X => (lang_y, lang_x),
    };
    let tie = if v.tie { " tie" } else { "" };
    format!("{} ({src}->{tgt}){tie}", v.predicted)
}

/// One human-readable line per pair and per document.
pub fn render_detection_text(results: &DetectionResults) -> String {
    let mut out = String::new();
    for p in &results.pairs {
        let _ = writeln!(
            out,
            "pair {}\tP_tok(y|x)={}\tP_tok(x|y)={}\tratio={}\tpredicted={}",
            p.pair_id,
            sig3(p.logp_tok_xy.exp()),
            sig3(p.logp_tok_yx.exp()),
            sig3(p.verdict.prob_ratio),
            predicted_label(&p.verdict, &p.lang_x, &p.lang_y)
        );
    }
    for d in &results.documents {
        let _ = writeln!(
            out,
            "doc {}\tsegments={}\tP_tok(y|x)={}\tP_tok(x|y)={}\tratio={}\tpredicted={}",
            d.doc_id,
            d.segments,
            sig3(d.logp_tok_xy.exp()),
            sig3(d.logp_tok_yx.exp()),
            sig3(d.verdict.prob_ratio),
            predicted_label(&d.verdict, &d.lang_x, &d.lang_y)
        );
    }
    out
}

pub fn emit_detection(results: &DetectionResults, format: Format) -> Vec<u8> {
    match format {
        Format::Json => to_json(results),
        Format::Csv => {
            let header = [
                "level",
                "id",
                "doc_id",
                "lang_x",
                "lang_y",
                "segments",
                "logp_tok_xy",
                "logp_tok_yx",
                "log_margin",
                "prob_ratio",
                "predicted",
                "tie",
            ];
            let mut rows: Vec<Vec<String>> = results
                .pairs
                .iter()
                .map(|p| {
                    vec![
                        "pair".into(),
                        p.pair_id.clone(),
                        p.doc_id.clone(),
                        p.lang_x.clone(),
                        p.lang_y.clone(),
                        "1".into(),
                        p.logp_tok_xy.to_string(),
                        p.logp_tok_yx.to_string(),
                        p.verdict.log_margin.to_string(),
                        p.verdict.prob_ratio.to_string(),
                        p.verdict.predicted.to_string(),
                        p.verdict.tie.to_string(),
                    ]
                })
                .collect();
            rows.extend(results.documents.iter().map(|d| {
                vec![
                    "document".into(),
                    d.doc_id.clone(),
                    d.doc_id.clone(),
                    d.lang_x.clone(),
                    d.lang_y.clone(),
                    d.segments.to_string(),
                    d.logp_tok_xy.to_string(),
                    d.logp_tok_yx.to_string(),
                    d.verdict.log_margin.to_string(),
                    d.verdict.prob_ratio.to_string(),
                    d.verdict.predicted.to_string(),
                    d.verdict.tie.to_string(),
                ]
            }));
            csv_block(&header, &rows)
        }
        Format::Markdown => render_detection_text(results).into_bytes(),
    }
}

/// Everything the forensic command reports about one document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForensicReport {
    pub doc_id: String,
    pub lang_x: String,
    pub lang_y: String,
    pub segments: usize,
    pub logp_tok_xy: f64,
    pub logp_tok_yx: f64,
    pub verdict: DirectionVerdict,
    pub test: PValueReport,
    pub alpha: f64,
    pub conclusion: String,
}

/// Plain-language summary of a forensic result.
pub fn forensic_conclusion(
    lang_x: &str,
    lang_y: &str,
    verdict: &DirectionVerdict,
    test: &PValueReport,
    alpha: f64,
) -> String {
    let significant = test.p_value < alpha;
    if verdict.tie {
        return format!(
            "Both directions receive the same pooled probability, so the scores do not favour either language as the original (p = {}).",
            sig3(test.p_value)
        );
    }
    let (orig, trans) = match verdict.predicted {
        Direction::X2Y => (lang_x, lang_y),
        Direction::Y2X => (lang_y, lang_x),
    };
    let method = match test.method {
        crate::statistics::PermutationMethod::Exhaustive => "exhaustive enumeration of",
        crate::statistics::PermutationMethod::MonteCarlo => "a Monte Carlo sample of",
    };
    format!(
        "The {trans} segments are more probably translations of the {orig} segments than the reverse. \
         Under {method} {} swap permutations p = {}, so the null hypothesis that both directions are exchangeable is {} at alpha = {}.",
        test.n_permutations,
        sig3(test.p_value),
        if significant { "rejected" } else { "not rejected" },
        alpha
    )
}

pub fn emit_forensic(report: &ForensicReport, format: Format) -> Vec<u8> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => {
            let header = [
                "doc_id",
                "lang_x",
                "lang_y",
                "segments",
                "p_tok_xy",
                "p_tok_yx",
                "log_margin",
                "predicted",
                "tie",
                "method",
                "n_permutations",
                "seed",
                "extreme_count",
                "p_value",
            ];
            let row = vec![
                report.doc_id.clone(),
                report.lang_x.clone(),
                report.lang_y.clone(),
                report.segments.to_string(),
                report.logp_tok_xy.exp().to_string(),
                report.logp_tok_yx.exp().to_string(),
                report.verdict.log_margin.to_string(),
                report.verdict.predicted.to_string(),
                report.verdict.tie.to_string(),
                method_name(report.test.method).into(),
                report.test.n_permutations.to_string(),
                report.test.seed.map(|s| s.to_string()).unwrap_or_default(),
                report.test.extreme_count.to_string(),
                report.test.p_value.to_string(),
            ];
            csv_block(&header, &[row])
        }
        Format::Markdown => render_forensic_text(report).into_bytes(),
    }
}

fn method_name(m: crate::statistics::PermutationMethod) -> &'static str {
    match m {
        crate::statistics::PermutationMethod::MonteCarlo => "MONTE_CARLO",
        crate::statistics::PermutationMethod::Exhaustive => "EXHAUSTIVE",
    }
}

pub fn render_forensic_text(r: &ForensicReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "document: {} ({} segments)", r.doc_id, r.segments);
    let _ = writeln!(
        out,
        "pooled P_tok(y|x) [{}->{}]: {}",
        r.lang_x,
        r.lang_y,
        sig3(r.logp_tok_xy.exp())
    );
    let _ = writeln!(
        out,
        "pooled P_tok(x|y) [{}->{}]: {}",
        r.lang_y,
        r.lang_x,
        sig3(r.logp_tok_yx.exp())
    );
    let _ = writeln!(
        out,
        "verdict: {}  log_margin={}  ratio={}",
        predicted_label(&r.verdict, &r.lang_x, &r.lang_y),
        sig3(r.verdict.log_margin),
        sig3(r.verdict.prob_ratio)
    );
    let seed = r.test.seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
    let _ = writeln!(
        out,
        "permutation test: method={} permutations={} seed={} extreme={} p={}",
        method_name(r.test.method),
        r.test.n_permutations,
        seed,
        r.test.extreme_count,
        sig3(r.test.p_value)
    );
    let _ = writeln!(out, "{}", r.conclusion);
    out
}
