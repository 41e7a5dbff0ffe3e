// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use lodgewright_core::context::{ContextDocument, FieldMap};
use lodgewright_core::dataset::Split;
use lodgewright_core::evaluation::{render_report_table, AnnotationRecord, RunMetrics};
use lodgewright_core::generation::{backend_for_url, ExperimentSpec};
use lodgewright_core::ingest::{parse_catalog, FacilityRecord, ProviderDescriptor};
use lodgewright_core::planner::{
    estimate_cost, estimate_model_memory, plan_device_map, DeviceProfile, ModelProfile, Quantization,
    TransformerArchitecture,
};
use lodgewright_core::prompt::PromptStrategy;
use lodgewright_core::{Error, Workbench};
use lodgewright_service::{AppState, ServiceConfig};
use rust_decimal::Decimal;

use crate::{
    Cli, Command, ContextArgs, DatasetCommand, EvaluateArgs, FormatArg, GenerateArgs, IngestArgs, PlanArgs,
    PromptCommand, ReportArgs, ServeArgs, SplitArg, StrategyArg,
};

#[derive(Debug)]
pub struct Failure {
    code: String,
    message: String,
}

impl Failure {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_owned(), message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf).map_err(|e| Failure::new("E_IO", format!("stdin: {e}")))?;
        return Ok(buf);
    }
    std::fs::read(path).map_err(|e| Failure::new("E_IO", format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_slice(&read_bytes(path)?)
        .map_err(|e| Failure::new("E_INVALID_INPUT", format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult {
    std::fs::write(path, contents).map_err(|e| Failure::new("E_IO", format!("{}: {e}", path.display())))
}

fn json_line(value: &impl serde::Serialize) -> String {
    serde_json::to_string(value).expect("records serialize")
}

fn split(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    }
}

pub fn run(cli: Cli) -> CliResult {
    let open = || Workbench::open(&cli.workspace).map_err(Failure::from);
    match cli.command {
        Command::Ingest(args) => ingest(args, open),
        Command::Context(args) => context(args, open),
        Command::Dataset(cmd) => dataset(cmd, &open()?),
        Command::Prompt(PromptCommand::Render { strategy, facility, template }) => {
            let strategy = match strategy {
                StrategyArg::FineTuneInstruction => PromptStrategy::FineTuneInstruction,
                StrategyArg::SystemPromptChat => PromptStrategy::SystemPromptChat,
            };
            println!("{}", open()?.render_prompt(&facility, strategy, template.as_deref())?);
            Ok(())
        }
        Command::Generate(args) => generate(args, open()?),
        Command::Plan(args) => plan(args),
        Command::Evaluate(args) => evaluate(args, &open()?),
        Command::Report(args) => report(args, &open()?),
        Command::Serve(args) => serve(args, open()?),
    }
}

fn ingest(args: IngestArgs, open: impl Fn() -> CliResult<Workbench>) -> CliResult {
    let descriptor: ProviderDescriptor = read_json(&args.provider)?;
    let payload = read_bytes(&args.catalog)?;
    if args.dry_run {
        let records = parse_catalog(&payload, &descriptor).map_err(Error::from)?;
        for r in records {
            println!("{}", json_line(&r.cleaned()));
        }
        return Ok(());
    }
    let wb = open()?;
    wb.register_provider(descriptor.clone())?;
    let s = wb.ingest(&descriptor.provider_id, &payload)?;
    println!("{}: {} records, {} facilities, {} contexts", s.provider_id, s.records, s.facilities, s.contexts);
    for (facility, reason) in &s.skipped {
        eprintln!("skipped {facility}: {reason}");
    }
    Ok(())
}

fn context(args: ContextArgs, open: impl Fn() -> CliResult<Workbench>) -> CliResult {
    let doc = match (&args.source.facility, &args.source.record) {
        (Some(id), _) => open()?.context(id)?,
        (None, Some(path)) => {
            let record: FacilityRecord = read_json(path)?;
            ContextDocument::from_record(&record.cleaned(), &FieldMap::shipped()).map_err(Error::from)?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    if args.json {
        println!("{}", json_line(&doc));
    } else {
        println!("{}", doc.serialized);
    }
    Ok(())
}

fn dataset(cmd: DatasetCommand, wb: &Workbench) -> CliResult {
    match cmd {
        DatasetCommand::Build { train, seed } => {
            let s = wb.split(train, seed)?;
            println!("train {}, test {}", s.train.len(), s.test.len());
        }
        DatasetCommand::Split { split: filter } => {
            for e in wb.examples(filter.map(split)) {
                let name = match e.split {
                    Split::Train => "train",
                    Split::Test => "test",
                };
                println!("{}\t{name}", e.facility_id);
            }
        }
        DatasetCommand::Export { split: s, out } => {
            let n = wb.export(split(s), &out)?;
            println!("wrote {n} records to {}", out.display());
        }
    }
    Ok(())
}

fn runtime() -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Runtime::new().map_err(|e| Failure::new("E_IO", format!("runtime: {e}")))
}

fn generate(args: GenerateArgs, wb: Workbench) -> CliResult {
    let spec: ExperimentSpec = read_json(&args.experiment)?;
    let backend = backend_for_url(&args.backend, args.backend_token).map_err(Error::from)?;
    let report = runtime()?.block_on(wb.experiment(&spec, backend.as_ref()))?;
    println!("{} runs ({} reused), {} failed", report.runs.len(), report.reused, report.failures.len());
    for f in &report.failures {
        println!("failed {} {} #{}: {}", f.facility_id, f.model_id, f.repetition_index, f.error);
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(
            "E_GENERATION_FAILED",
            format!("{} of {} cells failed", report.failures.len(), report.cells()),
        ))
    }
}

fn decimal(flag: &str, s: &str) -> CliResult<Decimal> {
    Decimal::from_str(s).map_err(|e| Failure::new("E_INVALID_INPUT", format!("--{flag} `{s}`: {e}")))
}

fn plan(args: PlanArgs) -> CliResult {
    let invalid = |m: String| Failure::new("E_INVALID_INPUT", m);
    let profile = match (&args.model, &args.arch) {
        (Some(path), _) => Some(read_json::<ModelProfile>(path)?),
        (None, Some(name)) => {
            let q = Quantization::try_from(args.bits).map_err(invalid)?;
            let arch = match name.as_str() {
                "mistral-7b" => TransformerArchitecture::mistral_7b(),
                _ => TransformerArchitecture::mixtral_8x7b(),
            };
            Some(ModelProfile::from_architecture(name, &arch, q))
        }
        (None, None) => None,
    };
    if profile.is_none() && args.rate.is_none() {
        return Err(invalid("nothing to plan: give --model or --arch, or --rate and --hours".into()));
    }
    if let Some(p) = &profile {
        p.validate().map_err(Error::from)?;
        let gb = estimate_model_memory(p.parameter_count, p.quantization_bits, args.buffer_gb);
        println!(
            "{}: {:.3e} parameters at {}-bit, {:.1} GB with a {} GB buffer",
            p.model_id,
            p.parameter_count,
            p.quantization_bits.bits(),
            gb,
            args.buffer_gb
        );
        if let Some(path) = &args.devices {
            let devices: Vec<DeviceProfile> = read_json(path)?;
            if p.layer_sizes.is_empty() {
                return Err(invalid(format!("profile `{}` has no layer sizes to place", p.model_id)));
            }
            let plan = plan_device_map(&p.layer_sizes, &devices).map_err(Error::from)?;
            for d in &devices {
                let layers: Vec<String> = plan
                    .assignments
                    .iter()
                    .filter(|(_, dev)| **dev == d.device_id)
                    .map(|(l, _)| l.to_string())
                    .collect();
                println!(
                    "{}: {:.2} of {:.2} GB, {} layers",
                    d.device_id,
                    plan.per_device_load[&d.device_id],
                    d.budget(),
                    layers.len()
                );
            }
            if let Some(out) = &args.out {
                let json = serde_json::to_vec_pretty(&plan).expect("plan serializes");
                write_file(out, &json)?;
            }
        }
    }
    if let (Some(rate), Some(hours)) = (&args.rate, &args.hours) {
        let cost = estimate_cost(decimal("rate", rate)?, decimal("hours", hours)?).map_err(Error::from)?;
        println!("cost {}", cost.total);
    }
    Ok(())
}

fn format_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.1}"))
}

fn evaluate(args: EvaluateArgs, wb: &Workbench) -> CliResult {
    if let Some(path) = &args.annotations {
        let text = String::from_utf8(read_bytes(path)?).map_err(|e| Failure::new("E_INVALID_INPUT", e.to_string()))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: AnnotationRecord = serde_json::from_str(line)
                .map_err(|e| Failure::new("E_INVALID_INPUT", format!("{}:{}: {e}", path.display(), i + 1)))?;
            let run_id = record.run_id.clone();
            wb.annotate(&run_id, record)?;
        }
    } else if args.auto {
        wb.auto_annotate_pending(args.model.as_deref(), args.threshold)?;
    }
    let runs = wb.runs(args.model.as_deref());
    if runs.is_empty() {
        return Err(Error::NoRuns(args.model.clone()).into());
    }
    for run in runs {
        let metrics = wb.run_metrics(&run.run_id)?.map(|m: RunMetrics| m.rounded());
        let summary = match metrics {
            Some(m) => format!(
                "completeness {} precision {} hallucination {} length {}",
                format_pct(m.completeness_pct),
                format_pct(m.precision_pct),
                format_pct(m.hallucination_pct),
                m.length_words
            ),
            None => "unannotated".into(),
        };
        println!("{}\t{}\t{}\t{}\t{summary}", run.run_id, run.model_id, run.facility_id, run.repetition_index);
    }
    Ok(())
}

fn report(args: ReportArgs, wb: &Workbench) -> CliResult {
    let reports = wb.reports(&args.model)?;
    let text = match args.format {
        FormatArg::Text => render_report_table(&reports),
        FormatArg::Json => serde_json::to_string_pretty(&reports).expect("reports serialize"),
    };
    match &args.out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn serve(args: ServeArgs, wb: Workbench) -> CliResult {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let state = Arc::new(AppState::new(wb, ServiceConfig::from_env())?);
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| Failure::new("E_IO", format!("bind {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(|e| Failure::new("E_IO", e.to_string()))?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().ok();
        lodgewright_service::serve(listener, state).await.map_err(|e| Failure::new("E_IO", e.to_string()))
    })
}
