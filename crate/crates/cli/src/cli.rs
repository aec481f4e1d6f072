use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use sprintctl_core::{Adaptation, CurveMetric, CurveMode, SelectionStrategy};

#[derive(Debug, Parser)]
#[command(
    name = "sprintctl",
    version,
    about = "Plan, track and replan software projects from clustered experience curves",
    after_help = "Defaults for control, build, simulate and serve options can be set in a TOML file named by SPRINTCTL_CONFIG."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate historical curve and context files and summarize them.
    Ingest(IngestArgs),
    /// Cluster historical projects into an experience base file.
    Build(BuildArgs),
    /// Start tracking a new project with the best matching cluster curve.
    Plan(PlanArgs),
    /// Record a measurement for a tracked project and check the corridor.
    Track(TrackArgs),
    /// Reselect the cluster curve of a tracked project for a stated cause.
    Replan(ReplanArgs),
    /// Generate a synthetic project portfolio.
    Simulate(SimulateArgs),
    /// Score cluster selection on held-out projects against ground truth.
    Evaluate(EvaluateArgs),
    /// Write plot-ready CSV and a text summary for a project or an evaluation.
    Report(ReportArgs),
    /// Serve tracked projects over an HTTP JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InputFiles {
    /// Long-format curves CSV: project_id,attribute,t,value
    #[arg(long)]
    pub curves: PathBuf,
    /// Long-format contexts CSV: project_id,factor,value
    #[arg(long)]
    pub contexts: PathBuf,
    /// JSON list of {name, kind, weight} factor declarations
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputFiles,
    /// Accept only these attributes (repeatable)
    #[arg(long = "attribute", value_name = "NAME")]
    pub attributes: Vec<String>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("rule").required(true).args(["target_k", "threshold"])))]
pub struct BuildArgs {
    #[command(flatten)]
    pub input: InputFiles,
    /// Attribute to cluster (repeatable)
    #[arg(long = "attribute", value_name = "NAME", required = true)]
    pub attributes: Vec<String>,
    /// Choose the threshold that yields this many clusters
    #[arg(long)]
    pub target_k: Option<usize>,
    /// Fixed complete-linkage threshold
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Number of grid points
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub metric: Option<CurveMetric>,
    #[arg(long)]
    pub mode: Option<CurveMode>,
    /// Output experience base file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct ControlArgs {
    /// Relative deviation tolerated before an alert
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Measurements needed before curve matching
    #[arg(long)]
    pub min_prefix_points: Option<usize>,
    /// Progress from which hybrid selection trusts curve matching
    #[arg(long)]
    pub hybrid_switch: Option<f64>,
    #[arg(long)]
    pub adaptation: Option<Adaptation>,
    #[arg(long)]
    pub strategy: Option<SelectionStrategy>,
}

#[derive(Debug, Args)]
pub struct ContextArgs {
    /// JSON object mapping factor names to values
    #[arg(long = "context", value_name = "FILE")]
    pub context_file: Option<PathBuf>,
    /// Set a single factor (repeatable), applied after --context
    #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_assignment)]
    pub set: Vec<(String, String)>,
}

fn parse_assignment(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((name, value)) if !name.trim().is_empty() => Ok((name.trim().to_string(), value.trim().to_string())),
        _ => Err(format!("expected NAME=VALUE, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Experience base file
    #[arg(long)]
    pub base: PathBuf,
    /// Identifier of the new project
    #[arg(long)]
    pub id: String,
    /// Attribute to control; optional when the base holds a single one
    #[arg(long)]
    pub attribute: Option<String>,
    /// Planned duration in calendar units
    #[arg(long)]
    pub duration: f64,
    #[command(flatten)]
    pub context: ContextArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    /// Output tracked project file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("when").required(true).args(["t", "elapsed"])))]
pub struct TrackArgs {
    /// Tracked project file, updated in place
    #[arg(long)]
    pub project: PathBuf,
    /// Normalized progress in [0, 1]
    #[arg(long)]
    pub t: Option<f64>,
    /// Calendar time since start, divided by the planned duration
    #[arg(long)]
    pub elapsed: Option<f64>,
    /// Measured (cumulative) value
    #[arg(long, allow_hyphen_values = true)]
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CauseArg {
    WrongExperience,
    WrongContext,
    ChangedCharacteristics,
}

#[derive(Debug, Args)]
pub struct ReplanArgs {
    /// Tracked project file, updated in place
    #[arg(long)]
    pub project: PathBuf,
    /// Experience base; defaults to the one the project was planned with
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub cause: CauseArg,
    #[command(flatten)]
    pub context: ContextArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub archetypes: Option<usize>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub factors: Option<usize>,
    #[arg(long)]
    pub value_noise: Option<f64>,
    #[arg(long)]
    pub context_noise: Option<f64>,
    #[arg(long)]
    pub flip_prob: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub mode: Option<CurveMode>,
    #[arg(long)]
    pub attribute: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub test_curves: PathBuf,
    #[arg(long)]
    pub test_contexts: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// CSV with project_id,archetype[,split]
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long)]
    pub attribute: Option<String>,
    /// Selection strategy under evaluation
    #[arg(long, default_value_t = SelectionStrategy::Static)]
    pub strategy: SelectionStrategy,
    /// Progress observed before dynamic or hybrid selection
    #[arg(long, default_value_t = 0.5)]
    pub observe_until: f64,
    /// Write the full report as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["project", "evaluation"])))]
pub struct ReportArgs {
    /// Tracked project file
    #[arg(long)]
    pub project: Option<PathBuf>,
    /// Evaluation report JSON written by `evaluate --out`
    #[arg(long)]
    pub evaluation: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub base: PathBuf,
    /// Directory holding one `<id>.tp` file per tracked project
    #[arg(long)]
    pub projects: PathBuf,
    /// Address to listen on, e.g. 127.0.0.1:8080 (port 0 picks a free port)
    #[arg(long)]
    pub bind: Option<String>,
}
