//! `spellscan`: the batch pipeline from raw chapters to evaluation reports.
//!
//! Every command reads files and writes one artifact. Failures print a
//! single `error[<kind>]: <message>` line to stderr and exit nonzero
//! (2 for usage errors, 1 otherwise).

mod commands;
mod study;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "spellscan", version, about = "Recognize spell phrases in novel corpora")]
struct Cli {
    /// Run every data-parallel loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a directory of .txt chapters into a segments file.
    Ingest(IngestArgs),
    /// Label segments with a lexicon and write train/dev/eval datasets.
    Build(BuildArgs),
    /// Append lexicon words missing from a vocabulary.
    ExtendVocab(ExtendVocabArgs),
    /// Train a model on a built dataset directory.
    Train(TrainArgs),
    /// Run a checkpoint over segments or dataset records.
    Predict(PredictArgs),
    /// Score predictions against gold records.
    Evaluate(EvaluateArgs),
    /// Out-of-vocabulary dictionary baseline.
    Baseline(BaselineArgs),
    /// Per-piece attribution reports for a sequence checkpoint.
    Attribute(AttributeArgs),
    /// Segment a foreign corpus and keep the positively classified segments.
    Screen(ScreenArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// sentence, paragraph or sequence
    #[arg(long, default_value = "sentence")]
    pub split: String,
    #[arg(long, default_value_t = spellscan::corpus::DEFAULT_MAX_TOKENS)]
    pub max_tokens: usize,
    /// Vocabulary for token counting; required by the sequence split.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// incantations or combined
    #[arg(long, default_value = "combined")]
    pub mode: String,
    /// sequence or token
    #[arg(long, default_value = "sequence")]
    pub task: String,
    #[arg(long, default_value_t = 10)]
    pub neg_ratio: u32,
    #[arg(long, default_value_t = 0.2)]
    pub dev_fraction: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExtendVocabArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Flat TOML file with model and training keys.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// cls, mean or max (sequence task only)
    #[arg(long)]
    pub pooling: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Segments file or dataset file (records with seg_id and text or words).
    #[arg(long)]
    pub segments: PathBuf,
    /// Refuse the checkpoint unless it was trained with this vocabulary.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Expected task; must agree with the checkpoint's head.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// sequence or token
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long)]
    pub segments: PathBuf,
    /// Reference wordlist; repeat to merge several lists.
    #[arg(long, required = true)]
    pub wordlist: Vec<PathBuf>,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long, default_value = "combined")]
    pub mode: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AttributeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub segments: PathBuf,
    /// ansi or html
    #[arg(long, default_value = "html")]
    pub format: String,
    /// Class whose logit is attributed.
    #[arg(long, default_value = "positive")]
    pub target: String,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScreenArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub foreign_corpus: PathBuf,
    #[arg(long, default_value = "sentence")]
    pub split: String,
    #[arg(long, default_value_t = spellscan::corpus::DEFAULT_MAX_TOKENS)]
    pub max_tokens: usize,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let exec = if cli.sequential {
        spellscan::Exec::Sequential
    } else {
        spellscan::Exec::Parallel
    };
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&a, exec),
        Command::Build(a) => commands::build(&a, exec),
        Command::ExtendVocab(a) => commands::extend_vocab(&a),
        Command::Train(a) => commands::train(&a, exec),
        Command::Predict(a) => commands::predict(&a, exec),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Baseline(a) => commands::baseline(&a),
        Command::Attribute(a) => commands::attribute(&a, exec),
        Command::Screen(a) => commands::screen(&a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let one_line = e.message().replace('\n', " ");
            eprintln!("error[{}]: {}", e.kind(), one_line);
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
