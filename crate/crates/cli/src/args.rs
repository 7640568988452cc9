use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mlnmt::analysis::Distance;
use mlnmt::corpus::SamplingStrategy;
use mlnmt::synthetic::{LexiconStyle, WordOrder};
use mlnmt::training::OptimizerKind;
use mlnmt::Direction;

#[derive(Parser, Debug)]
#[command(name = "mlnmt", version, about = "Multilingual translation experiments with target-language tokens")]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads for parallel-safe regions.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// File of `key = value` lines applied before the command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic language family and its parallel corpora.
    #[command(args_override_self = true)]
    GenData(GenDataArgs),
    /// Train a shared wordpiece vocabulary with one `<2xx>` token per language.
    #[command(args_override_self = true)]
    BuildVocab(BuildVocabArgs),
    /// Train a multilingual model.
    #[command(args_override_self = true)]
    Train(TrainCmdArgs),
    /// Translate lines from a file or stdin into one target language.
    #[command(args_override_self = true)]
    Translate(TranslateArgs),
    /// BLEU and language-ID accuracy per direction.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Compare direct, bridged and zero-shot routes for an untrained direction.
    #[command(args_override_self = true)]
    ZeroShotEval(ZeroShotArgs),
    /// Continue training a checkpoint on a small amount of new parallel data.
    #[command(args_override_self = true)]
    Finetune(FinetuneArgs),
    /// Decode with a weighted mix of two target-language tokens.
    #[command(args_override_self = true)]
    MixSweep(MixSweepArgs),
    /// Export context-vector curves and correlate zero-shot BLEU with curve dissimilarity.
    #[command(args_override_self = true)]
    Analyze(AnalyzeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::BuildVocab(_) => "build-vocab",
            Command::Train(_) => "train",
            Command::Translate(_) => "translate",
            Command::Evaluate(_) => "evaluate",
            Command::ZeroShotEval(_) => "zero-shot-eval",
            Command::Finetune(_) => "finetune",
            Command::MixSweep(_) => "mix-sweep",
            Command::Analyze(_) => "analyze",
        }
    }
}

pub const SUBCOMMANDS: [&str; 9] =
    ["gen-data", "build-vocab", "train", "translate", "evaluate", "zero-shot-eval", "finetune", "mix-sweep", "analyze"];

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of languages; codes default to a, b, c, ...
    #[arg(long, default_value_t = 3)]
    pub languages: usize,
    /// Explicit language codes, overriding --languages.
    #[arg(long, value_delimiter = ',')]
    pub langs: Vec<String>,
    /// Word order per language; defaults cycle through all orders.
    #[arg(long, value_delimiter = ',')]
    pub orders: Vec<WordOrder>,
    /// Directions to generate, e.g. a-e,e-b; defaults to every ordered pair.
    #[arg(long, value_delimiter = ',')]
    pub directions: Vec<Direction>,
    #[arg(long, default_value_t = 5000)]
    pub pairs_per_dir: usize,
    #[arg(long, default_value_t = 100)]
    pub dev_per_dir: usize,
    #[arg(long, default_value_t = 200)]
    pub test_per_dir: usize,
    #[arg(long, default_value_t = 200)]
    pub concepts: usize,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1.1)]
    pub zipf: f64,
    #[arg(long, default_value_t = LexiconStyle::Cognate)]
    pub style: LexiconStyle,
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    /// Directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Target vocabulary size, forced symbols and `<2xx>` tokens excluded.
    #[arg(long, default_value_t = 400)]
    pub size: usize,
    /// Directions whose training text feeds the vocabulary; defaults to all.
    #[arg(long, value_delimiter = ',')]
    pub directions: Vec<Direction>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub attention_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub encoder_layers: usize,
    #[arg(long, default_value_t = 2)]
    pub decoder_layers: usize,
    /// Feed the source in its original order.
    #[arg(long)]
    pub no_reverse: bool,
    /// Add the mean encoder state to the output projection input.
    #[arg(long)]
    pub direct_connections: bool,
    #[arg(long, default_value_t = 1)]
    pub beam: usize,
    #[arg(long, default_value_t = 40)]
    pub max_decode_len: usize,
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = OptimizerKind::Adam)]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    /// Steps between dev evaluations; 0 evaluates only at the end.
    #[arg(long, default_value_t = 0)]
    pub eval_every: u64,
    #[arg(long, default_value_t = SamplingStrategy::Oversample)]
    pub strategy: SamplingStrategy,
}

#[derive(Args, Debug)]
pub struct TrainCmdArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training directions; defaults to every direction in the data directory.
    #[arg(long, value_delimiter = ',')]
    pub directions: Vec<Direction>,
    /// Continue from a checkpoint; its model settings are kept.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub target_lang: String,
    /// One sentence per line; stdin when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub beam: Option<usize>,
    /// Also write `report.tsv` with source and output columns here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Directions to score; defaults to the checkpoint's training directions.
    #[arg(long, value_delimiter = ',')]
    pub directions: Vec<Direction>,
    #[arg(long, default_value = "test", value_parser = ["dev", "test"])]
    pub split: String,
    #[arg(long)]
    pub beam: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ZeroShotArgs {
    /// The multilingual model.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub direction: Direction,
    #[arg(long)]
    pub pivot: String,
    /// A model trained on the direction itself.
    #[arg(long)]
    pub direct: Option<PathBuf>,
    /// The multilingual model after fine-tuning on the direction.
    #[arg(long)]
    pub incremental: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// New directions to train on.
    #[arg(long, value_delimiter = ',', required = true)]
    pub directions: Vec<Direction>,
    /// Training pairs taken from each new direction.
    #[arg(long, default_value_t = 500)]
    pub pairs: usize,
    /// Extra steps as a fraction of the checkpoint's step count.
    #[arg(long, default_value_t = 0.05)]
    pub fraction: f64,
    /// Share of each batch drawn from the original training directions.
    #[arg(long, default_value_t = 0.5)]
    pub replay_ratio: f64,
    /// Learning rate; defaults to the checkpoint's.
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Args, Debug)]
pub struct MixSweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Directory with the language manifest used for language identification.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    #[arg(long, default_value_t = 0.1)]
    pub w_step: f64,
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Languages of each tuple; defaults to every language in the data directory.
    #[arg(long, value_delimiter = ',')]
    pub langs: Vec<String>,
    /// Number of sentence tuples.
    #[arg(long, default_value_t = 50)]
    pub tuples: usize,
    #[arg(long, default_value = "euclidean")]
    pub distance: Distance,
}
