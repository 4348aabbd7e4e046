// SPDX-License-Identifier: Apache-2.0

mod commands;
mod models;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Mask-and-replace text rewriting with expert and anti-expert models.
#[derive(Parser)]
#[command(name = "marco", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every position of each input line and print the mask set as JSON.
    Mask(MaskArgs),
    /// Rewrite one text per line; prints original, masked and rewrite columns.
    Rewrite(RewriteArgs),
    /// Rewrite a development set under every grid point and rank the results.
    Sweep(SweepArgs),
    /// Score rewrites against their originals.
    Eval(EvalArgs),
    /// Build a vocabulary file from one or more corpora.
    Vocab(VocabArgs),
    /// Train an n-gram infilling model on a corpus.
    Train(TrainArgs),
    /// Serve a model file over TCP until killed.
    Serve(ServeArgs),
    /// Print the three score vectors and the ensembled distribution for one step.
    DecodeStep(DecodeStepArgs),
}

#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// Start from a dataset preset: magr, sbf or dynahate.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Start from a TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub repetition_penalty: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Collapse runs of adjacent masks into one.
    #[arg(long)]
    pub mask_collapse: bool,
}

#[derive(Args, Clone)]
pub struct IoArgs {
    /// Input file, one text per line (default: stdin).
    pub input: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct MaskArgs {
    /// Expert model file or tcp:// endpoint.
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub expert: String,
    /// Anti-expert model file or tcp:// endpoint.
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub antiexpert: String,
    /// Vocabulary file; required when every model is remote.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub io: IoArgs,
}

#[derive(Args)]
pub struct RewriteArgs {
    /// Base model file or tcp:// endpoint.
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub base: String,
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub expert: String,
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub antiexpert: String,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub io: IoArgs,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub base: String,
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub expert: String,
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub antiexpert: String,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Development set, one text per line.
    #[arg(long)]
    pub dev: PathBuf,
    /// TOML grid with tau, repetition_penalty, alpha1, alpha2 and temperature
    /// lists (default: the grid of the chosen preset, else magr).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Toxic word list, one per line.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// N-gram model file used for perplexity.
    #[arg(long)]
    pub fluency_model: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub toxicity_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub similarity_weight: f64,
    #[arg(long, default_value_t = 0.001)]
    pub fluency_weight: f64,
    /// Print only the best N rows.
    #[arg(long)]
    pub top: Option<usize>,
    /// Write the winning config as TOML.
    #[arg(long)]
    pub best_config: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Tsv,
    Json,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Original texts, one per line.
    #[arg(long, requires = "rewrites", conflicts_with = "pairs")]
    pub originals: Option<PathBuf>,
    /// Rewritten texts, aligned with --originals.
    #[arg(long, requires = "originals")]
    pub rewrites: Option<PathBuf>,
    /// Output of `marco rewrite`; FILTERED rows are skipped.
    #[arg(long, required_unless_present = "originals")]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Toxic word list, one per line.
    #[arg(long, required_unless_present = "toxicity_scores", conflicts_with = "toxicity_scores")]
    pub lexicon: Option<PathBuf>,
    /// Precomputed toxicity, `id<TAB>score` per line.
    #[arg(long)]
    pub toxicity_scores: Option<PathBuf>,
    /// N-gram model file used for perplexity.
    #[arg(long, required_unless_present = "fluency_scores", conflicts_with = "fluency_scores")]
    pub fluency_model: Option<PathBuf>,
    #[arg(long)]
    pub fluency_scores: Option<PathBuf>,
    /// Precomputed similarity (default: token-overlap F1).
    #[arg(long)]
    pub similarity_scores: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tsv")]
    pub format: ReportFormat,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct VocabArgs {
    /// Corpus files; words are numbered in first-seen order across them.
    #[arg(required = true)]
    pub corpus: Vec<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Model file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Fixed vocabulary; unknown words become <unk>.
    #[arg(long, conflicts_with = "vocab_out")]
    pub vocab: Option<PathBuf>,
    /// Write the vocabulary built from the corpus.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
    /// Corpus label: magr, sbf, dynahate or other.
    #[arg(long, default_value = "other")]
    pub source: String,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Add-k smoothing constant.
    #[arg(long, default_value_t = 0.1)]
    pub k: f64,
    /// Weight of the copy bias toward the conditioning sequence.
    #[arg(long, default_value_t = 0.7)]
    pub lambda: f64,
}

#[derive(Args)]
pub struct DecodeStepArgs {
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub base: String,
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub expert: String,
    #[arg(long, env = "MARCO_ENDPOINT")]
    pub antiexpert: String,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Original text, seen by the base model.
    #[arg(long)]
    pub condition: String,
    /// Masked text with `<mask>` tokens, seen by the expert pair
    /// (default: the condition).
    #[arg(long)]
    pub masked: Option<String>,
    /// Tokens generated so far.
    #[arg(long, default_value = "")]
    pub prefix: String,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:0")]
    pub bind: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Mask(a) => commands::mask(a),
        Command::Rewrite(a) => commands::rewrite(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Eval(a) => commands::eval(a),
        Command::Vocab(a) => commands::vocab(a),
        Command::Train(a) => commands::train(a),
        Command::Serve(a) => commands::serve(a),
        Command::DecodeStep(a) => commands::decode_step(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "marco: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
