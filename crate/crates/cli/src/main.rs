// SPDX-License-Identifier: Apache-2.0

//! `lodgewright`: drives a workspace from the command line. Every failure
//! prints one `E_CODE: message` line on stderr and exits with status 1.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "lodgewright", version, about = "Hotel description generation workbench")]
struct Cli {
    /// Workspace directory.
    #[arg(long, global = true, env = "LODGEWRIGHT_WORKSPACE", default_value = "lodgewright-workspace")]
    workspace: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a provider and ingest one of its catalogs.
    Ingest(IngestArgs),
    /// Print the serialized context of a facility or of a record file.
    Context(ContextArgs),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    #[command(subcommand)]
    Prompt(PromptCommand),
    /// Run an experiment file against the inference backend.
    Generate(GenerateArgs),
    /// Memory, cost and device-map estimates.
    Plan(PlanArgs),
    /// Annotate runs and print their metrics.
    Evaluate(EvaluateArgs),
    /// Print the aggregated report table.
    Report(ReportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Provider descriptor file.
    #[arg(long)]
    provider: PathBuf,
    /// Catalog file, or `-` for stdin.
    catalog: PathBuf,
    /// Print the parsed records as JSON lines without touching the workspace.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ContextSource {
    #[arg(long)]
    facility: Option<String>,
    /// Facility record file, mapped with the shipped field map.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args)]
struct ContextArgs {
    #[command(flatten)]
    source: ContextSource,
    /// Print the whole context document as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Build one example per facility and assign the train/test split.
    Build {
        #[arg(long, default_value_t = 10)]
        train: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// List examples and their split.
    Split {
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
    },
    /// Write a split as fine-tuning JSON lines.
    Export {
        #[arg(long, value_enum)]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    FineTuneInstruction,
    SystemPromptChat,
}

#[derive(Subcommand)]
enum PromptCommand {
    /// Print the prompt a model would receive for a facility.
    Render {
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long)]
        facility: String,
        /// Chat template name.
        #[arg(long)]
        template: Option<String>,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    experiment: PathBuf,
    /// Backend URL; `echo://` answers with the prompt's context.
    #[arg(long, env = "LODGEWRIGHT_BACKEND_URL")]
    backend: String,
    #[arg(long, env = "LODGEWRIGHT_BACKEND_TOKEN", hide_env_values = true)]
    backend_token: Option<String>,
}

#[derive(Args)]
struct PlanArgs {
    /// Model profile file.
    #[arg(long, conflicts_with = "arch")]
    model: Option<PathBuf>,
    /// Built-in architecture instead of a profile file.
    #[arg(long, value_parser = ["mistral-7b", "mixtral-8x7b"])]
    arch: Option<String>,
    /// Quantization width for --arch.
    #[arg(long, default_value_t = 4)]
    bits: u8,
    #[arg(long, default_value_t = lodgewright_core::planner::DEFAULT_RUNTIME_BUFFER_GB)]
    buffer_gb: f64,
    /// Device profile list; plans a layer-to-device map.
    #[arg(long)]
    devices: Option<PathBuf>,
    /// Write the device map as JSON.
    #[arg(long, requires = "devices")]
    out: Option<PathBuf>,
    /// Hourly instance rate.
    #[arg(long, requires = "hours")]
    rate: Option<String>,
    #[arg(long, requires = "rate")]
    hours: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<String>,
    /// Annotate unannotated runs automatically.
    #[arg(long, conflicts_with = "annotations")]
    auto: bool,
    #[arg(long, default_value_t = lodgewright_core::evaluation::DEFAULT_MATCH_THRESHOLD)]
    threshold: f64,
    /// Annotation records as JSON lines.
    #[arg(long)]
    annotations: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    /// Model to report; all models with runs when omitted.
    #[arg(long)]
    model: Vec<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Write the report to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Port; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
