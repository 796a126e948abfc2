//! `pim`: synthetic data, node features, negatives, training, embedding,
//! evaluation, fine-tuning and ablations, each stage reading and writing
//! plain files.

mod commands;
mod error;
mod io;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "pim", version, about = "Unsupervised path representation learning on road networks")]
#[command(after_help = "Every option can also be set in a key=value file passed with --config \
(keys are the long option names); flags override the file. A run manifest.json is accepted \
as a config file. PIM_THREADS caps the worker threads.")]
struct Cli {
    /// key=value config file or a previous run manifest
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic road network, path corpus and labels
    Synth(SynthArgs),
    /// Learn node2vec node features from an edge list
    Features(FeaturesArgs),
    /// Sample curriculum negatives for every path
    Negatives(NegativesArgs),
    /// Train the path encoder and discriminators
    Train(TrainArgs),
    /// Encode paths with a trained checkpoint
    Embed(EmbedArgs),
    /// Score predictions, or fit a regressor on embeddings and score it
    Eval(EvalArgs),
    /// Supervised travel-time regression, optionally from a checkpoint
    Finetune(FinetuneArgs),
    /// Compare objective modes, sampling strategies or negative counts
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Grid size as WIDTHxHEIGHT [default: 8x8]
    #[arg(long)]
    pub grid: Option<String>,
    /// Random geometric graph with this many nodes instead of a grid
    #[arg(long)]
    pub geometric: Option<usize>,
    /// Link radius of the geometric graph, in edge-length units [default: 1.5]
    #[arg(long)]
    pub radius: Option<f64>,
    /// Number of paths [default: 200]
    #[arg(long)]
    pub paths: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative sd of multiplicative travel-time noise [default: 0.05]
    #[arg(long)]
    pub label_noise: Option<f64>,
    /// Ranking softmax temperature in seconds [default: 20]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Keep detours up to this factor of the shortest length [default: 1.3]
    #[arg(long)]
    pub detour_factor: Option<f64>,
    /// Paths per OD pair [default: 3]
    #[arg(long)]
    pub max_variants: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// Edge list `u,v,length`
    #[arg(long)]
    pub graph: Option<String>,
    /// Feature dimension [default: 16]
    #[arg(long)]
    pub dim: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 10]
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    /// Nodes per walk [default: 20]
    #[arg(long)]
    pub walk_length: Option<usize>,
    /// Return parameter [default: 1]
    #[arg(long)]
    pub p: Option<f64>,
    /// In-out parameter [default: 1]
    #[arg(long)]
    pub q: Option<f64>,
    /// Skip-gram window [default: 5]
    #[arg(long)]
    pub window: Option<usize>,
    /// Negative samples per skip-gram pair [default: 5]
    #[arg(long)]
    pub sgns_negatives: Option<usize>,
    /// Passes over the walks [default: 5]
    #[arg(long)]
    pub sgns_epochs: Option<usize>,
    /// Initial skip-gram learning rate [default: 0.025]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Feature file
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct NegativesArgs {
    #[arg(long)]
    pub graph: Option<String>,
    /// Path file, one comma-separated path per line
    #[arg(long)]
    pub paths: Option<String>,
    /// Negatives per path [default: 4]
    #[arg(long)]
    pub k: Option<usize>,
    /// Leading random negatives of the curriculum [default: 2]
    #[arg(long)]
    pub n_random: Option<usize>,
    /// Diversity threshold of the first diversified negative [default: 0.6]
    #[arg(long)]
    pub tau1: Option<f64>,
    /// Diversity threshold of the second diversified negative [default: 0.9]
    #[arg(long)]
    pub tau2: Option<f64>,
    /// curriculum, random or topk [default: curriculum]
    #[arg(long)]
    pub strategy: Option<String>,
    /// Shortest-path candidates examined per diversified slot [default: 64]
    #[arg(long)]
    pub max_candidates: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long)]
    pub paths: Option<String>,
    #[arg(long)]
    pub features: Option<String>,
    /// Negative-set file; sampled with the default curriculum when absent
    #[arg(long)]
    pub negatives: Option<String>,
    /// [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Negatives per path [default: 4]
    #[arg(long)]
    pub k: Option<usize>,
    /// staged or all [default: staged]
    #[arg(long)]
    pub curriculum: Option<String>,
    /// joint, global or local [default: joint]
    #[arg(long)]
    pub mi_mode: Option<String>,
    /// GRU hidden size [default: 128]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Path representation size [default: 128]
    #[arg(long)]
    pub repr_dim: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Redraw negatives every epoch [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub resample_negatives: Option<bool>,
    /// Output directory for checkpoint and loss trace
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub paths: Option<String>,
    /// Checkpoint directory written by `train`
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Embedding file: header `N D`, one row per path
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// travel-time or ranking [default: travel-time]
    #[arg(long)]
    pub task: Option<String>,
    /// Predictions `path_id,value`
    #[arg(long)]
    pub pred: Option<String>,
    /// Ground truth labels
    #[arg(long)]
    pub truth: Option<String>,
    /// Path embeddings to fit a regressor on (instead of --pred)
    #[arg(long)]
    pub embeddings: Option<String>,
    /// Labels for --embeddings
    #[arg(long)]
    pub labels: Option<String>,
    /// ridge or gp [default: ridge]
    #[arg(long)]
    pub regressor: Option<String>,
    /// Ridge penalty [default: 0.001]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// GP kernel width; median heuristic when absent
    #[arg(long)]
    pub gamma: Option<f64>,
    /// GP noise variance; 1% of target variance when absent
    #[arg(long)]
    pub noise: Option<f64>,
    /// Seed of the 85/10/5 split [default: 0]
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Held-out predictions written here (with --embeddings)
    #[arg(long)]
    pub predictions: Option<String>,
    /// Report CSV
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub graph: Option<String>,
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub paths: Option<String>,
    /// Travel-time labels `path_id,travel_time_seconds`
    #[arg(long)]
    pub labels: Option<String>,
    /// Initialize the encoder from this checkpoint; cold start when absent
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Share of the training split used as labels [default: 1]
    #[arg(long)]
    pub fraction: Option<f64>,
    /// [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Cold-start GRU hidden size [default: 128]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Cold-start representation size [default: 128]
    #[arg(long)]
    pub repr_dim: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 0]
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// mi-mode, strategy or k
    #[arg(long)]
    pub axis: Option<String>,
    /// Synthetic grid [default: 8x8]
    #[arg(long)]
    pub grid: Option<String>,
    /// [default: 200]
    #[arg(long)]
    pub paths: Option<usize>,
    /// Data seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training seeds 0..N per variant [default: 3]
    #[arg(long)]
    pub seeds: Option<u64>,
    /// [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Node feature dimension [default: 16]
    #[arg(long)]
    pub dim: Option<usize>,
    /// [default: standard pipeline]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// [default: standard pipeline]
    #[arg(long)]
    pub repr_dim: Option<usize>,
    /// Comparison table CSV
    #[arg(long)]
    pub out: Option<String>,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("PIM_THREADS") else { return Ok(()) };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::config(format!("PIM_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let mut s = settings::Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => commands::synth(a, &mut s),
        Command::Features(a) => commands::features(a, &mut s),
        Command::Negatives(a) => commands::negatives(a, &mut s),
        Command::Train(a) => commands::train(a, &mut s),
        Command::Embed(a) => commands::embed(a, &mut s),
        Command::Eval(a) => commands::eval(a, &mut s),
        Command::Finetune(a) => commands::finetune(a, &mut s),
        Command::Ablate(a) => commands::ablate(a, &mut s),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let err = CliError::usage(first.trim_start_matches("error:").trim());
            eprintln!("{err}");
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
