//! `neurank`: rank neurons, probe top-k subsets, intervene on
//! representations and compare rankings.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neurank::eval::ProbeKind;
use neurank::probes::LinearHyper;
use neurank::rankings::Method;

#[derive(Parser)]
#[command(
    name = "neurank",
    version,
    about = "Neuron importance rankings for word representations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted attribute neurons.
    Synth(SynthArgs),
    /// Rank neurons for one attribute.
    Rank(RankArgs),
    /// Top-k probing curves, control tasks and significance tests.
    Probe(ProbeArgs),
    /// Aggregate curve files from several configs.
    Report(ReportArgs),
    /// Ablate or translate top-ranked neurons and decode.
    Intervene(InterveneArgs),
    /// Top-m overlap between rankings.
    Overlap(OverlapArgs),
}

#[derive(Args, Clone)]
pub struct Common {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// NRT1 representation file.
    #[arg(long)]
    pub reprs: PathBuf,
    /// Annotation TSV, one row per representation row.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub attribute: String,
    #[arg(long, default_value = "corpus")]
    pub corpus: String,
    #[arg(long, default_value = "0")]
    pub layer: String,
    #[arg(long, default_value_t = 0.7)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    pub dev_frac: f64,
}

#[derive(Args, Clone)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub l1: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub l2: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
}

impl HyperArgs {
    pub fn hyper(&self, seed: u64) -> LinearHyper {
        LinearHyper {
            l1: self.l1,
            l2: self.l2,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Generator spec file.
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the seed in the spec file.
    #[arg(long)]
    pub synth_seed: Option<u64>,
}

#[derive(Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "probeless,linear,gaussian,random"
    )]
    pub methods: Vec<Method>,
    /// Greedy steps for the Gaussian ranking (default: d); the rest follow by single-neuron accuracy.
    #[arg(long)]
    pub k_max: Option<usize>,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Ranking JSON files, or directories holding them.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rankings: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "linear,gaussian")]
    pub probes: Vec<ProbeKind>,
    /// k grid (default: 10..150 step 10, scaled to d).
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    /// Skip the control task.
    #[arg(long)]
    pub no_control: bool,
    /// ks for the significance matrix (default: 10, 50, 150 scaled to d).
    #[arg(long, value_delimiter = ',')]
    pub significance_ks: Vec<usize>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// `curves.json` files written by `probe`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub curves: Vec<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub clusters: usize,
    #[arg(long, value_delimiter = ',')]
    pub significance_ks: Vec<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InterventionKind {
    Ablation,
    Translation,
}

#[derive(Args)]
pub struct InterveneArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Decoder JSON (as written by `synth`).
    #[arg(long)]
    pub decoder: PathBuf,
    #[arg(long)]
    pub ranking: PathBuf,
    #[arg(long, value_enum, default_value = "translation")]
    pub method: InterventionKind,
    #[arg(long, default_value_t = neurank::interventions::DEFAULT_BETA)]
    pub beta: f64,
    /// Neuron counts (default: 0 followed by the probing k grid).
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
}

#[derive(Args)]
pub struct OverlapArgs {
    #[command(flatten)]
    pub common: Common,
    /// Ranking JSON files, or directories holding them.
    #[arg(long, value_delimiter = ',', required = true)]
    pub rankings: Vec<PathBuf>,
    /// Top-m size (default: min(d, 100)).
    #[arg(long)]
    pub m: Option<usize>,
}

fn main() -> ExitCode {
    let args = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let cli = Cli::parse_from(args);
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Rank(a) => commands::rank(a),
        Command::Probe(a) => commands::probe(a),
        Command::Report(a) => commands::report(a),
        Command::Intervene(a) => commands::intervene(a),
        Command::Overlap(a) => commands::overlap(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
