use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use super::{CliError, CommonArgs};
use crate::corpus::{self, Corpus, CorpusFilter, ImportMeta};
use crate::detection::{GoldDirection, TranslationType};
use crate::report::Format;
use crate::scoring::{self, ScoreCache, Scorer, StoreBackend, SubprocessBackend, DEFAULT_BATCH_SIZE};

/// Environment variable naming the score cache directory.
pub const CACHE_DIR_ENV: &str = "TRANSDIR_CACHE_DIR";

/// Optional TOML file with the same keys as the command-line flags, in
/// snake_case, plus `permutations` and `seed`. Relative paths are resolved
/// against the file's directory.
///
/// ```toml
/// scores_file = "scores.jsonl"
/// cache_dir = "cache"
/// corpus = "corpus.jsonl"
/// min_doc_sents = 10
/// types = "HT,NMT"
/// permutations = 10000
/// seed = 0
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scorer_cmd: Option<String>,
    pub scores_file: Option<PathBuf>,
    pub scorer_id: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub batch_size: Option<usize>,
    pub corpus: Option<PathBuf>,
    pub src: Option<PathBuf>,
    pub tgt: Option<PathBuf>,
    pub langs: Option<String>,
    pub gold: Option<String>,
    #[serde(rename = "type")]
    pub translation_type: Option<String>,
    pub boundaries: Option<PathBuf>,
    pub min_doc_sents: Option<usize>,
    pub min_docs_per_direction: Option<usize>,
    pub types: Option<String>,
    pub tags: Option<String>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
    pub permutations: Option<u64>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.scores_file,
            &mut cfg.cache_dir,
            &mut cfg.corpus,
            &mut cfg.src,
            &mut cfg.tgt,
            &mut cfg.boundaries,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Command(String),
    ScoresFile(PathBuf),
    /// Replay from the cache directory only.
    CacheOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSpec {
    Corpus(PathBuf),
    Aligned {
        src: PathBuf,
        tgt: PathBuf,
        meta: ImportMeta,
    },
}

/// Flags merged over the config file, validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    backend: Option<BackendSpec>,
    backend_error: Option<String>,
    pub scorer_id: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub batch_size: usize,
    pub input: Option<InputSpec>,
    pub filter: CorpusFilter,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub permutations: Option<u64>,
    pub seed: Option<u64>,
}

fn parse_list<T>(raw: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<BTreeSet<T>, CliError>
where
    T: Ord,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| CliError::Input(format!("unknown {what} {s:?}"))))
        .collect()
}

fn parse_gold(s: &str) -> Option<GoldDirection> {
    match s.to_ascii_lowercase().as_str() {
        "x2y" => Some(GoldDirection::X2Y),
        "y2x" => Some(GoldDirection::Y2X),
        "none" => Some(GoldDirection::None),
        "unknown" => Some(GoldDirection::Unknown),
        _ => None,
    }
}

impl RunConfig {
    /// Precedence: flag, then (for the cache directory only) the environment,
    /// then the config file.
    pub fn resolve(args: &CommonArgs, env_cache_dir: Option<PathBuf>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let pick = |flag: &Option<String>, cfg: &Option<String>| flag.clone().or_else(|| cfg.clone());
        let pick_path = |flag: &Option<PathBuf>, cfg: &Option<PathBuf>| flag.clone().or_else(|| cfg.clone());

        let scorer_cmd = pick(&args.scorer_cmd, &file.scorer_cmd);
        let scores_file = pick_path(&args.scores_file, &file.scores_file);
        let cache_dir = args.cache_dir.clone().or(env_cache_dir).or(file.cache_dir.clone());
        let scorer_id = pick(&args.scorer_id, &file.scorer_id);

        let (backend, backend_error) = match (scorer_cmd, scores_file) {
            (Some(_), Some(_)) => (
                None,
                Some("give either a scorer command or a score file, not both".to_owned()),
            ),
            (Some(cmd), None) => (Some(BackendSpec::Command(cmd)), None),
            (None, Some(path)) => (Some(BackendSpec::ScoresFile(path)), None),
            (None, None) if cache_dir.is_some() && scorer_id.is_some() => (Some(BackendSpec::CacheOnly), None),
            (None, None) => (
                None,
                Some("no scorer: give --scorer-cmd, --scores-file, or --cache-dir with --scorer-id".to_owned()),
            ),
        };

        let corpus_path = pick_path(&args.corpus, &file.corpus);
        let src = pick_path(&args.src, &file.src);
        let tgt = pick_path(&args.tgt, &file.tgt);
        let input = match (corpus_path, src, tgt) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(CliError::Input("give either --corpus or --src/--tgt, not both".into()))
            }
            (Some(c), None, None) => Some(InputSpec::Corpus(c)),
            (None, Some(src), Some(tgt)) => {
                let langs = pick(&args.langs, &file.langs)
                    .ok_or_else(|| CliError::Input("--src/--tgt need --langs X:Y".into()))?;
                let (lx, ly) = langs
                    .split_once(':')
                    .filter(|(x, y)| !x.is_empty() && !y.is_empty())
                    .ok_or_else(|| CliError::Input(format!("--langs must look like X:Y, got {langs:?}")))?;
                let mut meta = ImportMeta::new(lx, ly);
                if let Some(g) = pick(&args.gold, &file.gold) {
                    meta.gold_direction =
                        parse_gold(&g).ok_or_else(|| CliError::Input(format!("unknown gold direction {g:?}")))?;
                }
                if let Some(t) = pick(&args.translation_type, &file.translation_type) {
                    meta.translation_type = TranslationType::parse(&t)
                        .ok_or_else(|| CliError::Input(format!("unknown translation type {t:?}")))?;
                }
                meta.boundaries = pick_path(&args.boundaries, &file.boundaries);
                Some(InputSpec::Aligned { src, tgt, meta })
            }
            (None, Some(_), None) | (None, None, Some(_)) => {
                return Err(CliError::Input("--src and --tgt must be given together".into()))
            }
            (None, None, None) => None,
        };

        let mut filter = CorpusFilter {
            min_doc_sentences: args.min_doc_sents.or(file.min_doc_sents),
            min_docs_per_direction: args.min_docs_per_direction.or(file.min_docs_per_direction),
            ..Default::default()
        };
        if let Some(types) = pick(&args.types, &file.types) {
            filter.translation_types = Some(parse_list(&types, "translation type", TranslationType::parse)?);
        }
        if let Some(tags) = pick(&args.tags, &file.tags) {
            filter.dataset_tags = Some(parse_list(&tags, "dataset tag", |s| Some(s.to_owned()))?);
        }

        let format = pick(&args.format, &file.format)
            .map(|f| f.parse::<Format>().map_err(|e| CliError::Input(e.to_string())))
            .transpose()?;

        let out = pick_path(&args.out, &file.out);
        if let Some(out) = &out {
            let parent = out
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            if !parent.is_dir() {
                return Err(CliError::Input(format!(
                    "output directory {} does not exist",
                    parent.display()
                )));
            }
        }

        let batch_size = args.batch_size.or(file.batch_size).unwrap_or(DEFAULT_BATCH_SIZE);
        if batch_size == 0 {
            return Err(CliError::Input("--batch-size must be at least 1".into()));
        }

        Ok(RunConfig {
            backend,
            backend_error,
            scorer_id,
            cache_dir,
            batch_size,
            input,
            filter,
            format,
            out,
            permutations: file.permutations,
            seed: file.seed,
        })
    }

    pub fn backend(&self) -> Result<&BackendSpec, CliError> {
        self.backend
            .as_ref()
            .ok_or_else(|| CliError::Input(self.backend_error.clone().unwrap_or_default()))
    }

    /// Starts the configured backend. Scores are written to the cache
    /// directory, when one is configured, before they are used.
    pub fn open_scorer(&self) -> Result<Scorer, CliError> {
        let cache = self.cache_dir.as_ref().map(ScoreCache::open).transpose()?;
        match self.backend()? {
            BackendSpec::Command(cmd) => {
                let backend = SubprocessBackend::spawn(cmd, self.batch_size)?;
                if let Some(expected) = &self.scorer_id {
                    if expected != scoring::ScorerBackend::scorer_id(&backend) {
                        return Err(CliError::Scorer(format!(
                            "scorer reports id {:?}, expected {expected:?}",
                            scoring::ScorerBackend::scorer_id(&backend)
                        )));
                    }
                }
                Ok(Scorer::new(Box::new(backend), cache))
            }
            BackendSpec::ScoresFile(path) => {
                let store = scoring::load_score_file(path)?;
                let backend = StoreBackend::new(Arc::new(store), self.scorer_id.as_deref())?;
                Ok(Scorer::new(Box::new(backend), cache))
            }
            BackendSpec::CacheOnly => Ok(Scorer::cache_only(
                self.scorer_id.clone().expect("cache-only needs a scorer id"),
                cache.expect("cache-only needs a cache dir"),
            )),
        }
    }

    /// Loads the input and applies the configured filter.
    pub fn load_corpus(&self) -> Result<Corpus, CliError> {
        let corpus = match &self.input {
            Some(InputSpec::Corpus(path)) => corpus::load_corpus(path)?,
            Some(InputSpec::Aligned { src, tgt, meta }) => corpus::import_aligned_files(src, tgt, meta)?,
            None => {
                return Err(CliError::Input(
                    "no input: give --corpus or --src/--tgt with --langs".into(),
                ))
            }
        };
        Ok(corpus::filter_corpus(&corpus, &self.filter))
    }
}
