//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for input errors (bad flags, unreadable or
//! invalid corpora, missing gold labels), 3 for scorer errors (dead scorer
//! process, missing or malformed scores).

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{BackendSpec, ConfigFile, InputSpec, RunConfig, CACHE_DIR_ENV};

use crate::corpus::CorpusError;
use crate::scoring::ScoringError;
use crate::statistics::StatsError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SCORER: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Scorer(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Scorer(_) => EXIT_SCORER,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Scorer(m) => m,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::InvalidRequest(m) => CliError::Input(m),
            other => CliError::Scorer(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "transdir",
    version,
    about = "Detect the original translation direction of parallel text"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predict the original direction of every pair and document.
    Detect {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Accuracy, macro-averages and directional bias against gold labels.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Evaluate sentence pairs or whole documents.
        #[arg(long, value_enum, default_value_t = Level::Sentence)]
        level: Level,
        /// Add accuracy by source length, in buckets of this many characters.
        #[arg(long, num_args = 0..=1, default_missing_value = "20", value_name = "WIDTH")]
        buckets: Option<usize>,
        /// Leave tied verdicts out of accuracies instead of counting them as y2x.
        #[arg(long)]
        exclude_ties: bool,
    },
    /// Treat one document as a unit and test its verdict with a permutation test.
    Forensic {
        #[command(flatten)]
        common: CommonArgs,
        /// Document to analyse when the corpus holds several.
        #[arg(long)]
        doc: Option<String>,
        #[arg(long)]
        permutations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Enumerate all swap subsets up to this many segments.
        #[arg(long, default_value_t = crate::statistics::DEFAULT_EXACT_MAX_SEGMENTS)]
        exact_max: usize,
        /// Use (count + 1) / (N + 1) for Monte Carlo p-values.
        #[arg(long)]
        small_sample_correction: bool,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Inspect or fill the score cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Sentence and document counts per direction.
    Stats {
        #[command(flatten)]
        common: CommonArgs,
        /// Documents with at least this many source sentences are counted separately.
        #[arg(long, default_value_t = 10)]
        doc_threshold: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Sentence,
    Document,
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    /// List cached entries.
    Ls {
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Remove all cached entries.
    Clear {
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Copy every record of a score file into the cache.
    Import {
        scores_file: PathBuf,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Flags shared by the analysis commands. Every flag can also come from the
/// `--config` file; flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with defaults for any of these flags (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scorer process command line.
    #[arg(long)]
    pub scorer_cmd: Option<String>,
    /// Precomputed score file.
    #[arg(long)]
    pub scores_file: Option<PathBuf>,
    /// Scorer id to read from a multi-scorer score file or a cache.
    #[arg(long)]
    pub scorer_id: Option<String>,
    /// Score cache directory (also TRANSDIR_CACHE_DIR).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Requests in flight per scorer round trip.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Corpus in the normalized JSON-lines format.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// X side of a line-aligned plain-text pair.
    #[arg(long)]
    pub src: Option<PathBuf>,
    /// Y side of a line-aligned plain-text pair.
    #[arg(long)]
    pub tgt: Option<PathBuf>,
    /// Languages of --src and --tgt, as X:Y.
    #[arg(long)]
    pub langs: Option<String>,
    /// Gold direction for aligned files.
    #[arg(long)]
    pub gold: Option<String>,
    /// Translation type for aligned files.
    #[arg(long = "type")]
    pub translation_type: Option<String>,
    /// File with one doc id per aligned line.
    #[arg(long)]
    pub boundaries: Option<PathBuf>,
    #[arg(long)]
    pub min_doc_sents: Option<usize>,
    #[arg(long)]
    pub min_docs_per_direction: Option<usize>,
    /// Comma-separated translation types to keep.
    #[arg(long)]
    pub types: Option<String>,
    /// Comma-separated dataset tags to keep.
    #[arg(long)]
    pub tags: Option<String>,
    /// csv, json or markdown.
    #[arg(long)]
    pub format: Option<String>,
    /// Also write the machine-readable result here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(rendered.as_bytes());
            } else {
                let _ = stdout.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    match commands::dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}
