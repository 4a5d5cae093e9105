use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod presets;

#[derive(Parser, Debug)]
#[command(name = "convlogic", version, about = "Extract logic programs that approximate a CNN from its kernel activations")]
struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, env = "CONVLOGIC_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract a program from a dataset.
    Extract(ExtractArgs),
    /// Merge redundant rules of a program file.
    Simplify(SimplifyArgs),
    /// Report accuracy, fidelity and size of a program.
    Evaluate(EvaluateArgs),
    /// Explain one sample, or list predictions for a split.
    Infer(InferArgs),
    /// Extract and evaluate over a grid of layers and depths.
    Sweep(SweepArgs),
    /// List the training samples that activate a kernel most.
    Inspect(InspectArgs),
    /// Print a program with kernel labels substituted.
    Render(RenderArgs),
    /// Write a synthetic dataset with a planted teacher.
    Synth(SynthArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Entry layer of the program.
    #[arg(long, required_unless_present = "layers")]
    lep: Option<String>,
    /// Explicit layer list, `a,b,output` or `a..output`.
    #[arg(long, conflicts_with = "chain")]
    layers: Option<String>,
    /// Use every layer from the entry layer to the output.
    #[arg(long)]
    chain: bool,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    /// Minimum child fraction; 0.01 for one boundary, 0.1 otherwise.
    #[arg(long)]
    alpha: Option<f64>,
    /// Induce trees for every kernel of hidden layers, used or not.
    #[arg(long)]
    all_kernels: bool,
    /// Keep the rules exactly as read off the trees.
    #[arg(long)]
    no_simplify: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct SimplifyArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    program: PathBuf,
    /// Splits to report (default: all).
    #[arg(long = "split", value_delimiter = ',')]
    splits: Vec<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    program: PathBuf,
    #[arg(long, required_unless_present = "split", conflicts_with = "split")]
    sample: Option<usize>,
    /// Print one prediction per sample of this split.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Entry layers, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    leps: Vec<String>,
    /// `1..5` or a comma separated list.
    #[arg(long, default_value = "1..5")]
    depths: String,
    /// Defaults to 0.1 with --chain and 0.01 otherwise.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "split", value_delimiter = ',')]
    splits: Vec<String>,
    /// Extract every layer from each entry layer to the output.
    #[arg(long)]
    chain: bool,
    #[arg(long)]
    all_kernels: bool,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a summary table on stdout.
    #[arg(long)]
    table: bool,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    layer: String,
    #[arg(long)]
    kernel: usize,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// JSON generator configuration.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<presets::Preset>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Core(convlogic::Error),
}

impl From<convlogic::Error> for Failure {
    fn from(e: convlogic::Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = Result<(), Failure>;

fn run(cli: Cli) -> CmdResult {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Simplify(a) => commands::simplify(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Infer(a) => commands::infer(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Render(a) => commands::render(a),
        Command::Synth(a) => commands::synth(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Usage(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Core(e))) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
        Err(_) => ExitCode::from(3),
    }
}
