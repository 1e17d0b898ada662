mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Dense-connectivity architecture search: sampling, augmentation,
/// surrogate training and Metropolis-Hastings evolutionary search.
#[derive(Parser, Debug)]
#[command(name = "densewire", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Which space to work in. Defaults to the ImageNet preset.
#[derive(Args, Debug, Clone)]
pub struct SpaceArgs {
    /// Named preset: imagenet or cifar10.
    #[arg(long, conflicts_with_all = ["template", "num_vertices"])]
    pub preset: Option<String>,
    /// Meta-graph JSON whose stages and operators define the space (edges
    /// are ignored).
    #[arg(long, conflicts_with = "num_vertices")]
    pub template: Option<PathBuf>,
    /// Single-cell space with this many vertices.
    #[arg(long)]
    pub num_vertices: Option<usize>,
}

/// A single-cell space for exhaustive commands.
#[derive(Args, Debug, Clone)]
pub struct CellArgs {
    /// Vertices of the cell, including input and output.
    #[arg(long, default_value_t = 5, conflicts_with = "template")]
    pub num_vertices: usize,
    /// Single-cell meta-graph JSON giving stage and operators (edges are
    /// ignored).
    #[arg(long)]
    pub template: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    /// synthetic-a[:salt], synthetic-b[:salt], predictor:<model.json> or
    /// external:<command>.
    #[arg(long, default_value = "synthetic-a")]
    pub oracle: String,
    /// Training epochs requested from an external evaluator.
    #[arg(long, default_value_t = 10)]
    pub eval_epochs: u32,
    /// Fraction of training data requested from an external evaluator.
    #[arg(long, default_value_t = 1.0)]
    pub data_fraction: f64,
    /// Seconds to wait for each external reply.
    #[arg(long, default_value_t = 600)]
    pub oracle_timeout: u64,
    /// External evaluator processes to run side by side.
    #[arg(long, default_value_t = 1)]
    pub oracle_workers: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw distinct random architectures and score them.
    Sample {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// JSONL record store to write.
        #[arg(long)]
        out: PathBuf,
        /// Append instead of overwriting.
        #[arg(long)]
        append: bool,
    },
    /// Add isomorphic copies of every measured record.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = densewire::iso::DEFAULT_AUGMENT_FACTOR)]
        factor: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Train the surrogate on measured records and report held-out ranking.
    TrainPredictor {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Isomorphic copies per training record; 0 disables augmentation.
        #[arg(long, default_value_t = densewire::iso::DEFAULT_AUGMENT_FACTOR)]
        factor: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        weight_decay: Option<f64>,
        /// Hidden widths, comma separated.
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
    },
    /// Score meta-graphs with a trained checkpoint.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Meta-graph JSON files.
        #[arg(long = "in", num_args = 1.., required_unless_present = "records")]
        input: Vec<PathBuf>,
        /// JSONL record store; prints canon, stored and predicted values.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Run a search and write its per-round trace.
    Search {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        /// rs, ls, es or mh-es.
        #[arg(long, default_value = "mh-es")]
        strategy: String,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
        /// Children per round.
        #[arg(long, visible_alias = "pop", default_value_t = 96)]
        population: usize,
        /// Random samples before the first round.
        #[arg(long, visible_alias = "init-pop", default_value_t = 4096)]
        initial_population: usize,
        /// Initial temperature; accepts "inf".
        #[arg(long, default_value_t = 1e-3)]
        t0: f64,
        #[arg(long)]
        seed: u64,
        /// Trace CSV path; stdout when absent.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Where to write the best meta-graph as JSON.
        #[arg(long)]
        best_out: Option<PathBuf>,
    },
    /// Count valid cells and isomorphism classes of a small single-cell
    /// space.
    Enumerate {
        #[command(flatten)]
        cell: CellArgs,
        /// Write the meta-graphs as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
        /// With --out, write one representative per class only.
        #[arg(long)]
        classes: bool,
    },
    /// Compare the Metropolis chain with its exact stationary law.
    VerifyMcmc {
        #[command(flatten)]
        cell: CellArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 0.5)]
        temperature: f64,
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
        #[arg(long, default_value_t = 10_000)]
        burn_in: u64,
        #[arg(long)]
        seed: u64,
        /// Per-state CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a meta-graph as Graphviz DOT.
    ExportDot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a record store, or print the cost of one meta-graph.
    Stats {
        /// JSONL record store.
        #[arg(long, required_unless_present = "input", conflicts_with = "input")]
        store: Option<PathBuf>,
        /// Meta-graph JSON.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// With --in, also scale stage widths to fit this many MACs.
        #[arg(long, requires = "input")]
        budget: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
