use std::io::Write;
use std::path::{Path, PathBuf};

use super::config::{ConfigFile, RunConfig, CACHE_DIR_ENV};
use super::{CacheAction, CliError, Command, CommonArgs, Level};
use crate::corpus::{corpus_stats, Corpus};
use crate::detection::{
    detect_document, doc_log_averages, DetectionError, DirectionScores, DirectionVerdict, Document,
};
use crate::report::{
    emit_detection, emit_forensic, emit_report, emit_stats, forensic_conclusion, render_detection_text,
    render_forensic_text, DetectionResults, DocumentResult, ForensicReport, Format, PairResult,
};
use crate::scoring::{read_score_records, ScoreCache, Scorer};
use crate::statistics::{
    evaluate, exact_permutation_test, permutation_test, EvaluationItem, EvaluationOptions, PermutationConfig,
    TiePolicy, DEFAULT_PERMUTATIONS,
};

impl From<DetectionError> for CliError {
    fn from(e: DetectionError) -> Self {
        match e {
            // Malformed scores are the scorer's fault, malformed pairs the input's.
            DetectionError::MismatchedPair(_) | DetectionError::InvalidScores(_) => CliError::Scorer(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

fn write_stdout(stdout: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    stdout
        .write_all(bytes)
        .map_err(|e| CliError::Input(format!("cannot write to stdout: {e}")))
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn env_cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

pub fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Detect { common } => detect(&common, stdout),
        Command::Evaluate {
            common,
            level,
            buckets,
            exclude_ties,
        } => evaluate_cmd(&common, level, buckets, exclude_ties, stdout),
        Command::Forensic {
            common,
            doc,
            permutations,
            seed,
            exact_max,
            small_sample_correction,
            alpha,
        } => forensic(
            &common,
            ForensicArgs {
                doc,
                permutations,
                seed,
                exact_max,
                small_sample_correction,
                alpha,
            },
            stdout,
        ),
        Command::Cache { action } => cache(action, stdout),
        Command::Stats { common, doc_threshold } => {
            let cfg = RunConfig::resolve(&common, env_cache_dir())?;
            let corpus = cfg.load_corpus()?;
            let stats = corpus_stats(&corpus, doc_threshold);
            let format = cfg.format.unwrap_or_default();
            write_stdout(stdout, &emit_stats(&stats, format))?;
            if let Some(out) = &cfg.out {
                write_out(out, &emit_stats(&stats, cfg.format.unwrap_or(Format::Json)))?;
            }
            Ok(())
        }
    }
}

/// Scores of every pair, document by document, in corpus order.
fn score_documents(scorer: &mut Scorer, corpus: &Corpus) -> Result<Vec<Vec<DirectionScores>>, CliError> {
    let pairs: Vec<_> = corpus.pairs().cloned().collect();
    let scored = scorer.score_segment_pairs(&pairs)?;
    let mut scored = scored.into_iter();
    let mut out = Vec::with_capacity(corpus.documents().len());
    for doc in corpus.documents() {
        let mut ds = Vec::with_capacity(doc.len());
        for _ in 0..doc.len() {
            let (xy, yx) = scored.next().expect("one score pair per segment");
            ds.push(DirectionScores::from_token_scores(&xy, &yx)?);
        }
        out.push(ds);
    }
    Ok(out)
}

fn non_empty(corpus: Corpus) -> Result<Corpus, CliError> {
    if corpus.is_empty() {
        return Err(CliError::Input("no segments left to analyse".into()));
    }
    Ok(corpus)
}

fn document_result(doc: &Document, scores: &[DirectionScores]) -> Result<DocumentResult, CliError> {
    let (xy, yx) = doc_log_averages(scores)?;
    Ok(DocumentResult {
        doc_id: doc.doc_id().to_owned(),
        lang_x: doc.lang_x().to_owned(),
        lang_y: doc.lang_y().to_owned(),
        segments: doc.len(),
        logp_tok_xy: xy,
        logp_tok_yx: yx,
        verdict: DirectionVerdict::from_log_averages(xy, yx),
    })
}

fn detect(common: &CommonArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(common, env_cache_dir())?;
    let corpus = non_empty(cfg.load_corpus()?)?;
    let mut scorer = cfg.open_scorer()?;
    let scores = score_documents(&mut scorer, &corpus)?;

    let mut results = DetectionResults {
        scorer_id: scorer.scorer_id().to_owned(),
        pairs: Vec::new(),
        documents: Vec::new(),
    };
    for (doc, ds) in corpus.documents().iter().zip(&scores) {
        for (p, s) in doc.pairs().iter().zip(ds) {
            let (xy, yx) = (s.logp_tok_xy(), s.logp_tok_yx());
            results.pairs.push(PairResult {
                pair_id: p.pair_id.clone(),
                doc_id: p.doc_id.clone(),
                lang_x: p.lang_x.clone(),
                lang_y: p.lang_y.clone(),
                sum_xy: s.sum_xy,
                count_xy: s.count_xy,
                sum_yx: s.sum_yx,
                count_yx: s.count_yx,
                logp_tok_xy: xy,
                logp_tok_yx: yx,
                verdict: DirectionVerdict::from_log_averages(xy, yx),
            });
        }
        results.documents.push(document_result(doc, ds)?);
    }

    match cfg.format {
        Some(f) => write_stdout(stdout, &emit_detection(&results, f))?,
        None => write_stdout(stdout, render_detection_text(&results).as_bytes())?,
    }
    if let Some(out) = &cfg.out {
        write_out(out, &emit_detection(&results, cfg.format.unwrap_or(Format::Json)))?;
    }
    Ok(())
}

fn evaluate_cmd(
    common: &CommonArgs,
    level: Level,
    buckets: Option<usize>,
    exclude_ties: bool,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(common, env_cache_dir())?;
    let corpus = non_empty(cfg.load_corpus()?)?;
    let mut scorer = cfg.open_scorer()?;
    let scores = score_documents(&mut scorer, &corpus)?;

    let mut items = Vec::new();
    for (doc, ds) in corpus.documents().iter().zip(&scores) {
        match level {
            Level::Sentence => {
                for (p, s) in doc.pairs().iter().zip(ds) {
                    items.push(EvaluationItem {
                        lang_x: p.lang_x.clone(),
                        lang_y: p.lang_y.clone(),
                        translation_type: p.translation_type,
                        dataset_tag: p.dataset_tag.clone(),
                        gold: p.gold_direction,
                        verdict: DirectionVerdict::from_log_averages(s.logp_tok_xy(), s.logp_tok_yx()),
                        source_char_len: Some(p.source_char_len()),
                    });
                }
            }
            Level::Document => {
                // Documents are homogeneous in gold and languages; type and tag
                // come from the first pair.
                let first = &doc.pairs()[0];
                items.push(EvaluationItem {
                    lang_x: doc.lang_x().to_owned(),
                    lang_y: doc.lang_y().to_owned(),
                    translation_type: first.translation_type,
                    dataset_tag: first.dataset_tag.clone(),
                    gold: doc.gold_direction(),
                    verdict: detect_document(ds)?,
                    source_char_len: None,
                });
            }
        }
    }

    let options = EvaluationOptions {
        ties: if exclude_ties {
            TiePolicy::Exclude
        } else {
            TiePolicy::CountAsY2X
        },
        bucket_width: buckets,
    };
    let level_name = match level {
        Level::Sentence => "sentence",
        Level::Document => "document",
    };
    let report = evaluate(level_name, &items, &options).map_err(|e| match e {
        crate::statistics::StatsError::EmptyInput => {
            CliError::Input("no items with a known gold direction to evaluate".into())
        }
        other => other.into(),
    })?;

    let format = cfg.format.unwrap_or_default();
    write_stdout(stdout, &emit_report(&report, format))?;
    if let Some(out) = &cfg.out {
        write_out(out, &emit_report(&report, format))?;
    }
    Ok(())
}

struct ForensicArgs {
    doc: Option<String>,
    permutations: Option<u64>,
    seed: Option<u64>,
    exact_max: usize,
    small_sample_correction: bool,
    alpha: f64,
}

fn forensic(common: &CommonArgs, args: ForensicArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Input(format!(
            "--alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    let cfg = RunConfig::resolve(common, env_cache_dir())?;
    let corpus = non_empty(cfg.load_corpus()?)?;
    let doc = match &args.doc {
        Some(id) => corpus
            .documents()
            .iter()
            .find(|d| d.doc_id() == id)
            .ok_or_else(|| CliError::Input(format!("no document {id:?} in the input")))?,
        None if corpus.documents().len() == 1 => &corpus.documents()[0],
        None => {
            return Err(CliError::Input(format!(
                "input holds {} documents; pick one with --doc",
                corpus.documents().len()
            )))
        }
    };
    if doc.len() < 2 {
        return Err(CliError::Input(format!(
            "document {} has {} segment; the permutation test needs at least 2",
            doc.doc_id(),
            doc.len()
        )));
    }

    let mut scorer = cfg.open_scorer()?;
    let scored = scorer.score_segment_pairs(doc.pairs())?;
    let ds = scored
        .iter()
        .map(|(xy, yx)| DirectionScores::from_token_scores(xy, yx))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = document_result(doc, &ds)?;

    let test = if doc.len() <= args.exact_max {
        exact_permutation_test(&ds, args.exact_max)?
    } else {
        let config = PermutationConfig {
            n_permutations: args.permutations.or(cfg.permutations).unwrap_or(DEFAULT_PERMUTATIONS),
            seed: args.seed.or(cfg.seed).unwrap_or(0),
            small_sample_correction: args.small_sample_correction,
        };
        permutation_test(&ds, &config)?
    };

    let conclusion = forensic_conclusion(&summary.lang_x, &summary.lang_y, &summary.verdict, &test, args.alpha);
    let report = ForensicReport {
        doc_id: summary.doc_id,
        lang_x: summary.lang_x,
        lang_y: summary.lang_y,
        segments: summary.segments,
        logp_tok_xy: summary.logp_tok_xy,
        logp_tok_yx: summary.logp_tok_yx,
        verdict: summary.verdict,
        test,
        alpha: args.alpha,
        conclusion,
    };
    match cfg.format {
        Some(f) => write_stdout(stdout, &emit_forensic(&report, f))?,
        None => write_stdout(stdout, render_forensic_text(&report).as_bytes())?,
    }
    if let Some(out) = &cfg.out {
        write_out(out, &emit_forensic(&report, cfg.format.unwrap_or(Format::Json)))?;
    }
    Ok(())
}

fn cache_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(dir) = flag.or_else(env_cache_dir) {
        return Ok(dir);
    }
    if let Some(path) = config {
        if let Some(dir) = ConfigFile::load(&path)?.cache_dir {
            return Ok(dir);
        }
    }
    Err(CliError::Input(format!(
        "no cache directory: give --cache-dir or set {CACHE_DIR_ENV}"
    )))
}

fn cache(action: CacheAction, stdout: &mut dyn Write) -> Result<(), CliError> {
    match action {
        CacheAction::Ls { cache_dir: dir, config } => {
            let cache = ScoreCache::open(cache_dir(dir, config)?)?;
            let mut out = String::new();
            for key in cache.keys()? {
                if let Some(r) = cache.get_record(&key)? {
                    out.push_str(&format!(
                        "{key}\t{}\t{}->{}\t{} tokens\n",
                        r.scorer_id,
                        r.src_lang,
                        r.tgt_lang,
                        r.token_logprobs.len()
                    ));
                }
            }
            write_stdout(stdout, out.as_bytes())
        }
        CacheAction::Clear { cache_dir: dir, config } => {
            let cache = ScoreCache::open(cache_dir(dir, config)?)?;
            let n = cache.clear()?;
            write_stdout(stdout, format!("removed {n} entries\n").as_bytes())
        }
        CacheAction::Import {
            scores_file,
            cache_dir: dir,
            config,
        } => {
            let cache = ScoreCache::open(cache_dir(dir, config)?)?;
            let records = read_score_records(&scores_file)?;
            for r in &records {
                if let Some(existing) = cache.get_record(&r.key())? {
                    let same = existing.token_logprobs.len() == r.token_logprobs.len()
                        && existing
                            .token_logprobs
                            .iter()
                            .zip(&r.token_logprobs)
                            .all(|(a, b)| a.to_bits() == b.to_bits());
                    if !same {
                        return Err(CliError::Scorer(format!(
                            "cache already holds different scores for key {}",
                            r.key()
                        )));
                    }
                    continue;
                }
                cache.put(r)?;
            }
            write_stdout(stdout, format!("imported {} records\n", records.len()).as_bytes())
        }
    }
}
