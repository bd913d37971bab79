use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Referenceless fluency metrics, overlap baselines and evaluation against
/// human ratings.
#[derive(Debug, Parser)]
#[command(name = "fluency", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a WordPiece vocabulary from a corpus (one sentence per line).
    TrainSubword(TrainSubwordArgs),
    /// Train a Kneser-Ney n-gram LM, over words or over WordPiece units.
    TrainLm(TrainLmArgs),
    /// Score every dataset record with SLOR, NCE or PPL.
    Score(ScoreArgs),
    /// Score every dataset record with a reference-based overlap metric.
    Rouge(RougeArgs),
    /// Correlate score files with the human fluency ratings.
    Evaluate(EvaluateArgs),
    /// Combine a ROUGE score file with a SLOR score file.
    Combine(CombineArgs),
    /// Draw a seeded train/dev/test split of the dataset ids.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
struct TrainSubwordArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Vocabulary size including `<unk>`.
    #[arg(long)]
    target_size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainLmArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 0.75)]
    discount: f64,
    /// Tokens seen fewer times than this become `<unk>`.
    #[arg(long, default_value_t = 1)]
    unk_threshold: u64,
    /// Segment the corpus with this WordPiece vocabulary before training.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Slor,
    Nce,
    Ppl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Unit {
    Word,
    Wordpiece,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    kind: Kind,
    /// Model file from `train-lm`.
    #[arg(long, conflicts_with = "external", required_unless_present = "external")]
    lm: Option<PathBuf>,
    /// Externally computed log-probabilities (`#extscores v1` TSV).
    #[arg(long)]
    external: Option<PathBuf>,
    /// Unit space; `wordpiece` with `--lm` needs `--vocab`.
    #[arg(long, value_enum, default_value_t = Unit::Word)]
    unit: Unit,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Metric name for the score file header (default e.g. `WordSLOR`).
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OverlapChoice {
    #[value(name = "rouge-l")]
    RougeL,
    #[value(name = "lr2-r")]
    Lr2R,
    #[value(name = "lr2-f")]
    Lr2F,
    #[value(name = "lr3-r")]
    Lr3R,
    #[value(name = "lr3-f")]
    Lr3F,
}

#[derive(Debug, Args)]
struct RougeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = OverlapChoice::RougeL)]
    metric: OverlapChoice,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Group {
    None,
    System,
    Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Subset {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Score file; repeat to evaluate several metrics side by side.
    #[arg(long = "scores", required = true)]
    scores: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Group::None)]
    group_by: Group,
    /// Split file from `split`; restricts evaluation to `--subset`.
    #[arg(long, requires = "subset")]
    split: Option<PathBuf>,
    #[arg(long, value_enum, requires = "split")]
    subset: Option<Subset>,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    #[value(name = "rouge-lm")]
    RougeLm,
    Trained,
}

#[derive(Debug, Args)]
struct CombineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    rouge: PathBuf,
    #[arg(long)]
    slor: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::RougeLm)]
    method: Method,
    /// Split file. `rouge-lm` normalizes over its train ids (all ids if
    /// absent); `trained` fits on train and tunes on dev.
    #[arg(long, required_if_eq("method", "trained"))]
    split: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the fitted combiner as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    train: usize,
    #[arg(long)]
    dev: usize,
    /// Test size; defaults to every remaining record.
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Configuration problems exit with 1, failures while running with 2.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::TrainSubword(a) => commands::train_subword(a),
        Command::TrainLm(a) => commands::train_lm(a),
        Command::Score(a) => commands::score(a),
        Command::Rouge(a) => commands::rouge(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Combine(a) => commands::combine(a),
        Command::Split(a) => commands::split(a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let (label, err) = match &f {
                Failure::Validation(e) => ("invalid configuration", e),
                Failure::Runtime(e) => ("error", e),
            };
            eprintln!("fluency: {label}: {err:#}");
            f.code()
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
