use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "fractamine",
    version,
    about = "Multifractal text features and the DeFFSi classifier"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Denoising diagnostics, fluctuation functions and H(q) for one series.
    Analyze(AnalyzeArgs),
    /// Generate synthetic series or corpora.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Train and evaluate the network on a corpus.
    Train(TrainArgs),
    /// Run the activation or multifractal-method comparison.
    Compare(CompareArgs),
}

#[derive(Args, Debug, Clone)]
pub struct MfaFlags {
    /// fs-mfa, mf-dhv or mf-dfa.
    #[arg(long, default_value = "fs-mfa")]
    pub method: String,
    /// Comma-separated q values (default: -10 to 10 in steps of 0.5).
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<String>,
    /// Scale range as min:max:count (log-spaced).
    #[arg(long)]
    pub scales: Option<String>,
    /// Historical-volatility window for fs-mfa and mf-dhv (default 16).
    #[arg(long)]
    pub vol_window: Option<usize>,
    /// on selects fs-mfa, off selects mf-dhv; not valid with mf-dfa.
    #[arg(long)]
    pub denoise: Option<Toggle>,
    /// Polynomial order for mf-dfa.
    #[arg(long, default_value_t = 1)]
    pub dfa_order: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Series file (.csv: one value per line; .json: array or {"values": [..]}).
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub mfa: MfaFlags,
    /// Output directory; without it the H(q) report is printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Gaussian white noise.
    Noise {
        #[arg(long, default_value_t = 8192)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fractional Gaussian noise.
    Fgn {
        #[arg(long)]
        hurst: f64,
        #[arg(long, default_value_t = 8192)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic binomial multiplicative cascade of length 2^levels.
    Cascade {
        #[arg(long, default_value_t = 13)]
        levels: u32,
        #[arg(long, default_value_t = 0.75)]
        p: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class-conditional embedded corpus.
    Corpus {
        #[command(flatten)]
        corpus: CorpusFlags,
        /// Emit per-token tags as well.
        #[arg(long)]
        tagged: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct CorpusFlags {
    #[arg(long, default_value_t = 300)]
    pub docs: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 48)]
    pub tokens: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    /// Seed of the generated corpus (defaults to --seed where that exists).
    #[arg(long)]
    pub corpus_seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelFlags {
    /// Dataset file; a synthetic corpus is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusFlags,
    /// Activation kind used at every Sital site.
    #[arg(long, default_value = "sital")]
    pub activation: String,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub lr_act: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Use the full-size network (h = 200, 256 filters, 5 blocks).
    #[arg(long)]
    pub full_scale: bool,
    /// Per-token tagging instead of document classification.
    #[arg(long)]
    pub tagging: bool,
    /// Method for the Hurst feature vector.
    #[arg(long, default_value = "fs-mfa")]
    pub method: String,
    /// q grid of the Hurst feature vector.
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<String>,
    /// Stop once an epoch's training accuracy reaches this value.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompareModeArg {
    Activations,
    Mfa,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub mode: CompareModeArg,
    #[command(flatten)]
    pub model: ModelFlags,
}
