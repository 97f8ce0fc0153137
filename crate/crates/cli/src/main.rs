//! `ipg`: generate, ingest, build, register desires, measure, query and serve
//! intention-aware policy graphs.
//!
//! Exit codes: 0 on success, 1 on domain errors, 2 on usage errors.
//! Set `IPG_LOG` (e.g. `info`, `debug`) for logging on stderr.

mod commands;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use setup::{AgentName, DiscName, EnvName};

#[derive(Debug, Parser)]
#[command(name = "ipg", version, about = "Intention-aware policy graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate trajectories from a built-in environment.
    Gen(GenArgs),
    /// Validate a trajectory file, optionally re-discretising raw payloads.
    Ingest(IngestArgs),
    /// Build a policy graph file from trajectories.
    Build(BuildArgs),
    /// Desire registration.
    #[command(subcommand)]
    Desires(DesiresCommand),
    /// Entropy, desire and intention reports.
    Metrics(MetricsArgs),
    /// What/how/why explanations.
    #[command(subcommand)]
    Query(QueryCommand),
    /// Unintentional, unfulfilled and stalled regions of one episode.
    Regions(RegionsArgs),
    /// Serve the HTTP/JSON API on loopback.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    env: EnvName,
    /// Defaults to `optimal` (traffic light) or `competent` (mini-kitchen).
    #[arg(long, value_enum)]
    agent: Option<AgentName>,
    /// Defaults to `traffic-light-g` or `mini-kitchen`.
    #[arg(long, value_enum)]
    discretiser: Option<DiscName>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectory file to write.
    #[arg(long)]
    out: PathBuf,
    /// Space file (variables and actions) to write.
    #[arg(long)]
    space_out: Option<PathBuf>,
    /// Example desire file to write.
    #[arg(long)]
    desires_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpaceArgs {
    /// Space file: `{"variables": [...], "actions": [...]}`.
    #[arg(long)]
    space: PathBuf,
    /// Comma-separated action names, when the space file has none.
    #[arg(long, value_delimiter = ',')]
    actions: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    space: SpaceArgs,
    /// Re-discretise the raw payloads with a built-in discretiser.
    #[arg(long, value_enum)]
    discretiser: Option<DiscName>,
    #[arg(long)]
    out: PathBuf,
    /// Space file of the output; needed with `--discretiser`.
    #[arg(long, requires = "discretiser")]
    space_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// One or more trajectory files.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PropagationArgs {
    /// Propagation threshold.
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Propagation budget in worklist updates.
    #[arg(long, default_value_t = 10_000_000)]
    max_updates: u64,
}

#[derive(Debug, Subcommand)]
enum DesiresCommand {
    /// Propagate desires and dump `state_id,desire_id,value` rows.
    Register {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        desires: PathBuf,
        /// CSV output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        propagation: PropagationArgs,
    },
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    desires: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    commitment: f64,
    /// Comma-separated thresholds for the trade-off curve.
    #[arg(long, conflicts_with = "curve_points")]
    curve: Option<String>,
    /// Trade-off curve on the grid k/n, k = 1..=n.
    #[arg(long)]
    curve_points: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    propagation: PropagationArgs,
    /// Compare returns against the graph's surrogate policy in this
    /// environment.
    #[arg(long, value_enum)]
    env: Option<EnvName>,
    #[arg(long, value_enum, requires = "env")]
    agent: Option<AgentName>,
    /// Must match the discretiser the graph was built with.
    #[arg(long, value_enum, requires = "env")]
    discretiser: Option<DiscName>,
    #[arg(long, default_value_t = 500)]
    reward_episodes: usize,
    #[arg(long, default_value_t = 100)]
    reward_horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    desires: PathBuf,
    /// Canonical state id, e.g. `held=S|pot_state=Empty|...`.
    #[arg(long)]
    state: String,
    #[arg(long, default_value_t = 0.5)]
    commitment: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    propagation: PropagationArgs,
}

#[derive(Debug, Subcommand)]
enum QueryCommand {
    /// Desires attributed to a state.
    What(QueryArgs),
    /// A plan from a state towards a desire.
    How {
        #[command(flatten)]
        query: QueryArgs,
        /// Defaults to the most strongly attributed desire.
        #[arg(long)]
        desire: Option<String>,
        /// Sample rollouts instead of planning greedily.
        #[arg(long)]
        stochastic: bool,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ipg_core::explain::DEFAULT_MAX_DEPTH)]
        max_depth: usize,
    },
    /// Why an action was taken at a state.
    Why {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        action: String,
    },
}

#[derive(Debug, Args)]
struct RegionsArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    desires: PathBuf,
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long)]
    episode: u64,
    #[arg(long, default_value_t = 0.5)]
    commitment: f64,
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    #[arg(long, default_value_t = 1)]
    grace: usize,
    #[arg(long, default_value_t = 50)]
    stall: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    propagation: PropagationArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Episodes for the timeline and region endpoints.
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Desires registered at start-up.
    #[arg(long)]
    desires: Option<PathBuf>,
    /// Default commitment threshold.
    #[arg(long, default_value_t = 0.5)]
    commitment: f64,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[command(flatten)]
    propagation: PropagationArgs,
}

/// An invalid combination of otherwise well-formed arguments.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IPG_LOG", "warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(Usage(msg)) = err.downcast_ref::<Usage>() {
                Cli::command()
                    .error(clap::error::ErrorKind::ArgumentConflict, msg)
                    .exit();
            }
            let kind = err
                .chain()
                .find_map(|e| e.downcast_ref::<ipg_core::Error>())
                .map_or("error", ipg_core::Error::kind);
            eprintln!("error[{kind}]: {err:#}");
            ExitCode::from(1)
        }
    }
}
