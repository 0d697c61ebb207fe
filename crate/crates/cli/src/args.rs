use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ivscout::artifacts::SourceMode;
use ivscout::causal_model::Design;
use ivscout::pipeline::AggregateMode;
use ivscout::report::ReportFormat;

#[derive(Debug, Parser)]
#[command(
    name = "ivscout",
    version,
    about = "Search for instrumental, control, and running variables with a chat model",
    after_help = "Exit codes: 0 success, 1 invalid input, 2 backend or transcript failure, \
                  3 contract violation under --strict."
)]
pub struct Cli {
    /// Log filter, e.g. `info` or `ivscout=debug`. Overrides IVSCOUT_LOG.
    #[arg(long, global = true, value_name = "FILTER")]
    pub log: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a discovery flow for one query and write its artifacts.
    Discover(DiscoverArgs),
    /// Let a critic argue against a saved run's answer and record the revision.
    Adversary(AdversaryArgs),
    /// Combine the final sets of several runs of one query.
    Aggregate(AggregateArgs),
    /// Render the report of a run or aggregate directory.
    Report(ReportArgs),
    /// Inspect, render, and export the prompt catalog.
    Templates(TemplatesArgs),
    /// Re-run a saved run from its recorded transcripts and compare.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    Iv,
    Ci,
    Did,
    Rdd,
}

impl From<DesignArg> for Design {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Iv => Design::Iv,
            DesignArg::Ci => Design::ConditionalIndependence,
            DesignArg::Did => Design::DiffInDiff,
            DesignArg::Rdd => Design::RegressionDiscontinuity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlowArg {
    /// Search then refine (with covariates when the query has them).
    TwoStep,
    /// Role-play system message, then relevance, exclusion, and exogeneity steps.
    ThreeStep,
    /// Search IVs and characteristics together, then refine.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Call the backend directly.
    Live,
    /// Call the backend and store every reply.
    Record,
    /// Serve replies from stored transcripts only.
    Replay,
    /// Answer from a behavior script and store the replies.
    Mock,
}

impl From<ModeArg> for SourceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Live => SourceMode::Live,
            ModeArg::Record => SourceMode::Record,
            ModeArg::Replay => SourceMode::Replay,
            ModeArg::Mock => SourceMode::Mock,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregateArg {
    Union,
    Intersection,
}

impl From<AggregateArg> for AggregateMode {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::Union => AggregateMode::Union,
            AggregateArg::Intersection => AggregateMode::Intersection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    #[value(alias = "md")]
    Markdown,
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

/// Where replies come from and which model answers.
#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Live)]
    pub mode: ModeArg,

    /// Behavior script for `--mode mock`.
    #[arg(long, value_name = "FILE")]
    pub mock_script: Option<PathBuf>,

    /// Transcript store to record into or replay from. Defaults to the
    /// run directory's `transcripts/`.
    #[arg(long, value_name = "DIR")]
    pub transcripts: Option<PathBuf>,

    /// Chat-completions endpoint root. The API key is read from
    /// IVSCOUT_API_KEY (or OPENAI_API_KEY) and never written to disk.
    #[arg(long, env = "IVSCOUT_BASE_URL", hide_env_values = true, value_name = "URL")]
    pub base_url: Option<String>,

    /// Per-request timeout.
    #[arg(long, default_value_t = 120, value_name = "SECONDS")]
    pub timeout_secs: u64,

    /// Attempts per request before giving up on transport errors and rate limits.
    #[arg(long, default_value_t = 4, value_name = "N")]
    pub max_attempts: u32,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    /// Query file (JSON). Fields given as flags override it.
    #[arg(long, short = 'q', value_name = "FILE")]
    pub query: Option<PathBuf>,
    #[arg(long)]
    pub agent: Option<String>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub treatment: Option<String>,
    #[arg(long)]
    pub outcome: Option<String>,
    /// Per-period outcome label for difference-in-differences.
    #[arg(long)]
    pub outcome_t: Option<String>,
    /// Phrase for the level of the per-period outcome, e.g. "average wage level".
    #[arg(long)]
    pub outcome_level: Option<String>,
    #[arg(long)]
    pub confounders: Option<String>,
    /// Specific covariate value, e.g. "asian female" (repeatable).
    #[arg(long = "covariate", value_name = "VALUE")]
    pub covariates: Vec<String>,
    /// Covariate attribute name, rendered as "specific ..." (repeatable).
    #[arg(long = "covariate-kind", value_name = "NAME")]
    pub covariate_kinds: Vec<String>,
    /// Ask for one list per category label (repeatable).
    #[arg(long = "category", value_name = "LABEL")]
    pub categories: Vec<String>,
    #[arg(long)]
    pub k0: Option<u32>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub l0: Option<u32>,
    #[arg(long)]
    pub l: Option<u32>,
    #[arg(long)]
    pub j0: Option<u32>,
    #[arg(long)]
    pub j: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct DiscoverArgs {
    /// Which kind of variable to search for.
    #[arg(value_enum)]
    pub design: DesignArg,

    /// IV flow variant.
    #[arg(long, value_enum)]
    pub flow: Option<FlowArg>,

    #[command(flatten)]
    pub query: QueryArgs,

    #[command(flatten)]
    pub backend: BackendArgs,

    #[arg(long, env = "IVSCOUT_MODEL", default_value = "gpt-4")]
    pub model: String,

    /// Sampling temperature; omitted means the provider default.
    #[arg(long)]
    pub temperature: Option<f64>,

    /// Output directory. Defaults to `runs/<run id>`.
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Run id and session namespace. Defaults to the output directory name.
    #[arg(long)]
    pub run_id: Option<String>,

    /// Independent runs of the same query.
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub sessions: usize,

    /// Runs executed concurrently when `--sessions` is above one.
    #[arg(long, default_value_t = 4, value_name = "N")]
    pub parallelism: usize,

    /// Also write an aggregate of all runs.
    #[arg(long, value_enum, value_name = "MODE")]
    pub aggregate: Option<AggregateArg>,

    /// Follow each run with an adversarial round.
    #[arg(long)]
    pub adversary: bool,

    /// Model for the critic in the adversarial round. Defaults to `--model`.
    #[arg(long, value_name = "MODEL")]
    pub critic_model: Option<String>,

    /// Joint flow: stop after the first step so the characteristics list can be edited.
    #[arg(long)]
    pub curate: bool,

    /// Ask the refinement step for a contrasting list.
    #[arg(long)]
    pub contrast: bool,

    /// Ask why a name was left out of the refined list (repeatable).
    #[arg(long = "explain-exclusion", value_name = "NAME")]
    pub explain_exclusion: Vec<String>,

    /// Ask whether the answer drew on sources.
    #[arg(long)]
    pub probe_sources: bool,

    /// Three-step flow: send each step in a new session.
    #[arg(long)]
    pub separate_sessions: bool,

    /// Spell budget counts as words.
    #[arg(long)]
    pub words: bool,

    /// Ask for factors that are hard to quantify.
    #[arg(long)]
    pub hard_to_quantify: bool,

    /// Response-format instruction for the three-step system message.
    #[arg(long, value_name = "TEXT")]
    pub format_instruction: Option<String>,

    /// Skip the parallel-trend emphasis step of the DiD flow.
    #[arg(long)]
    pub no_did_emphasis: bool,

    /// Add the manipulation filter step to the RDD flow.
    #[arg(long)]
    pub rdd_refine: bool,

    /// Minimum name overlap for a dropped and an injected item to count as a rename.
    #[arg(long, value_name = "RATIO")]
    pub rename_threshold: Option<f64>,

    /// Exit with code 3 when a run breaks the subset contract.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AdversaryArgs {
    /// Run directory written by `discover`.
    pub run: PathBuf,

    #[command(flatten)]
    pub backend: BackendArgs,

    /// Model for the critic. Defaults to the run's model.
    #[arg(long, value_name = "MODEL")]
    pub critic_model: Option<String>,

    /// Critic sampling temperature. Defaults to the run's temperature.
    #[arg(long)]
    pub critic_temperature: Option<f64>,

    /// Exit with code 3 when the revision breaks the subset contract.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    /// Run directories to combine.
    #[arg(required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,

    #[arg(long, value_enum, default_value_t = AggregateArg::Union)]
    pub mode: AggregateArg,

    /// Directory for `aggregate.json` and the report.
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long, value_name = "ID")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run or aggregate directory.
    pub dir: PathBuf,

    #[arg(long, short = 'f', value_enum, default_value_t = FormatArg::Markdown)]
    pub format: FormatArg,

    /// Write to a file instead of standard output.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TemplatesArgs {
    #[command(subcommand)]
    pub command: TemplatesCommand,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// Query supplying the slot values.
    #[arg(long, short = 'q', value_name = "FILE")]
    pub query: PathBuf,

    /// Extra slot binding (repeatable), e.g. `--set defender_list="1. A"`.
    #[arg(long = "set", value_name = "SLOT=VALUE")]
    pub set: Vec<String>,

    #[arg(long)]
    pub choose_all: bool,
    #[arg(long)]
    pub contrast: bool,
    #[arg(long)]
    pub hard_to_quantify: bool,
    #[arg(long)]
    pub words: bool,
    /// Request one list per category (defaults to the query's categories).
    #[arg(long = "category", value_name = "LABEL")]
    pub categories: Vec<String>,
    #[arg(long, value_name = "TEXT")]
    pub format_instruction: Option<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum TemplatesCommand {
    /// List catalog entries with their slots.
    List,
    /// Print a template body with its slot markers.
    Show {
        id: String,
    },
    /// Render a template against a query.
    Render {
        /// Template id, e.g. P1 or DID_EMPH.
        #[arg(required_unless_present = "id")]
        template: Option<String>,
        /// Template id, as an alternative to the positional argument.
        #[arg(long, conflicts_with = "template")]
        id: Option<String>,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Write the whole catalog as JSON.
    Export {
        #[arg(long, short = 'o', value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// List stored example prompts, or print one.
    Fixtures {
        id: Option<String>,
    },
    /// Word diff between a stored example prompt and the rendering of its
    /// template against a query.
    Diff {
        /// Stored example id, e.g. P1-1.
        fixture: String,
        #[command(flatten)]
        render: RenderArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Run directory written by `discover`.
    pub run: PathBuf,

    /// Transcript store. Defaults to the run's `transcripts/`, then its parent's.
    #[arg(long, value_name = "DIR")]
    pub transcripts: Option<PathBuf>,

    /// Write the replayed run's artifacts here.
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: Option<PathBuf>,
}
