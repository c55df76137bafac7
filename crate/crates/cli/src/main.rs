//! `twparse`: tokenize, tag and parse tweets; train, ensemble and distill
//! models; evaluate and lint treebanks.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors, 3 when
//! `lint` finds error-severity violations.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("lint found {0} error(s)")]
    Lint(usize),
}

impl CliError {
    pub fn data(e: impl std::fmt::Display) -> CliError {
        CliError::Data(e.to_string())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Lint(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "twparse", version, about = "Tweet tokenization, tagging and dependency parsing")]
pub struct Cli {
    /// `key = value` file supplying defaults for any option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Read sentences with several roots by attaching the extra roots to
    /// the first one as `parataxis`.
    #[arg(long, global = true)]
    pub allow_multi_root: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Paths are files or `-` for stdin/stdout.
#[derive(Debug, Args)]
pub struct Io {
    #[arg(long, short, default_value = "-")]
    pub input: String,
    #[arg(long, short, default_value = "-")]
    pub output: String,
}

/// Model and training hyperparameters; each trainer reads the ones it uses.
#[derive(Debug, Args, Default)]
pub struct Hyper {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub word_dim: Option<usize>,
    #[arg(long)]
    pub char_dim: Option<usize>,
    #[arg(long)]
    pub char_hidden: Option<usize>,
    #[arg(long)]
    pub upos_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    #[arg(long)]
    pub action_dim: Option<usize>,
    #[arg(long)]
    pub min_word_count: Option<usize>,
    #[arg(long)]
    pub min_char_count: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Gradient-norm clipping threshold; 0 disables clipping.
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Training {
    /// Training treebank (CoNLL-U).
    #[arg(long)]
    pub train: PathBuf,
    /// Development treebank used for model selection.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Word vectors, one `word v1 ... vd` line per word.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split raw tweets (one per line) into tokens, writing CoNLL-U.
    Tokenize {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        io: Io,
    },
    /// Assign UPOS tags to a CoNLL-U file.
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        io: Io,
    },
    /// Parse a tagged CoNLL-U file with one parser or an ensemble.
    Parse {
        #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
        model: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        io: Io,
    },
    /// Tokenize, tag and parse raw tweets.
    Pipeline {
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        tagger: PathBuf,
        #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
        parser: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        io: Io,
    },
    /// Train a tokenizer on a treebank whose sentences carry `# text`.
    TrainTokenizer {
        #[command(flatten)]
        training: Training,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Train a UPOS tagger.
    TrainTagger {
        #[command(flatten)]
        training: Training,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Train one transition-based parser.
    TrainParser {
        #[command(flatten)]
        training: Training,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Train one parser per seed and write them with a checksummed manifest.
    TrainEnsemble {
        #[command(flatten)]
        training: Training,
        #[arg(long)]
        members: usize,
        /// One seed per member, as `3,5,8` or the inclusive range `1..5`
        /// (defaults to `1..members`).
        #[arg(long)]
        seeds: Option<String>,
        /// Directory for member models and `ensemble.tsv`.
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Train one parser on an ensemble's output distributions.
    Distill {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        training: Training,
        #[arg(long)]
        alpha: Option<f64>,
        /// `oracle` or `exploration` (which needs alpha = 1).
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Replace gold UPOS with k-fold cross-validated predictions.
    Jackknife {
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        hyper: Hyper,
        #[command(flatten)]
        io: Io,
    },
    /// Score predictions against gold, or measure parsing speed.
    Eval {
        /// tok, pos, las, pipeline or speed.
        #[arg(long)]
        metric: String,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// For `pos`: align tags by character span instead of position.
        #[arg(long)]
        auto_tokens: bool,
        /// For `speed`: sentences to parse.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, conflicts_with = "manifest")]
        parser: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Check annotation conventions; one report line per violation.
    Lint {
        #[arg(long, short, default_value = "-")]
        input: String,
        /// Known violations to tolerate, in report-line format.
        #[arg(long)]
        allowlist: Option<PathBuf>,
    },
    /// Shares of tweet-specific token classes, syntactic and not.
    Stats {
        #[arg(long, short, default_value = "-")]
        input: String,
        #[arg(long)]
        json: bool,
    },
    /// Replace at-mentions with @USER and URLs with URL, line by line.
    Anonymize {
        #[command(flatten)]
        io: Io,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("twparse: {e}");
            ExitCode::from(e.code())
        }
    }
}
