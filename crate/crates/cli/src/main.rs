mod model_file;
mod render;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stagesim::clock::{Clock, Tick};
use stagesim::metrics::{poll_queue_depth, summarize, Metrics, SummaryReport};
use stagesim::models as bundled;
use stagesim::scenario::{self, RampChange, RampRule, RampTrigger, RunError, ScenarioConfig};
use stagesim::stage::StageRef;

use model_file::RunFile;
use render::{render_compare, render_summary, OutputFormat};

/// Simulate service degradation under load and compare fault-tolerance
/// techniques against it.
#[derive(Parser)]
#[command(name = "stagesim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one model under a scenario and report the summary metrics.
    Run(RunArgs),
    /// Run several models under the same scenario, side by side.
    Compare(CompareArgs),
    /// List the bundled model names.
    Models,
}

#[derive(Args, Clone)]
struct ScenarioFlags {
    /// Random seed for a reproducible run. Defaults to the config file's
    /// seed, or 1.
    #[arg(long)]
    seed: Option<u64>,
    /// Total events to inject.
    #[arg(long)]
    events: Option<u64>,
    /// Arrival rate in events per 1,000 ticks.
    #[arg(long)]
    rate: Option<f64>,
    /// Grow the rate by --ramp-add every --ramp-every ticks.
    #[arg(long, requires = "ramp_add")]
    ramp_every: Option<Tick>,
    #[arg(long, requires = "ramp_every")]
    ramp_add: Option<f64>,
    /// Keyspace normal-distribution mean.
    #[arg(long)]
    keyspace_mean: Option<f64>,
    /// Keyspace normal-distribution standard deviation.
    #[arg(long)]
    keyspace_std: Option<f64>,
    /// Entry-queue depth sample period in ticks.
    #[arg(long, default_value_t = 1)]
    poll_period: Tick,
    /// Abort if the run has not drained by this tick.
    #[arg(long, default_value_t = 10_000_000)]
    max_ticks: Tick,
}

#[derive(Args)]
struct RunArgs {
    /// Bundled model name (see `stagesim models`).
    #[arg(long, conflicts_with = "config")]
    model: Option<String>,
    /// TOML file defining the model (and optionally the scenario).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioFlags,
    /// Stdout format.
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    /// Write the summary as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write raw samples as JSON lines to this path.
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated model names or config paths (at least two).
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<String>,
    #[command(flatten)]
    scenario: ScenarioFlags,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
    /// Write all summaries as a JSON array to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> OutputFormat {
        match f {
            Format::Human => OutputFormat::Human,
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

enum AppError {
    /// Bad arguments or config file: exit code 2.
    Config(String),
    /// The simulation could not complete: exit code 3.
    Runtime(String),
}

impl AppError {
    fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Models => {
            for name in bundled::registered_names() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// A model selector: a bundled name or a path to a TOML model file.
enum ModelSource {
    Bundled(bundled::Variant),
    File(RunFile),
}

impl ModelSource {
    fn resolve(selector: &str) -> Result<ModelSource, AppError> {
        if let Some(variant) = bundled::by_name(selector) {
            return Ok(ModelSource::Bundled(variant));
        }
        let path = PathBuf::from(selector);
        if path.exists() {
            return RunFile::load(&path).map(ModelSource::File);
        }
        Err(AppError::config(format!(
            "unknown model '{selector}' (not a bundled name or config path); try `stagesim models`"
        )))
    }

    fn label(&self) -> String {
        match self {
            ModelSource::Bundled(v) => format!("circleci:{}", v.label()),
            ModelSource::File(f) => f.label(),
        }
    }

    fn file_seed(&self) -> Option<u64> {
        match self {
            ModelSource::Bundled(_) => None,
            ModelSource::File(f) => f.seed(),
        }
    }

    /// Builds the stage graph and the scenario it ships with.
    fn build(
        &self,
        seed: u64,
        clock: &Clock,
        metrics: &Metrics,
    ) -> Result<(StageRef, ScenarioConfig), AppError> {
        match self {
            ModelSource::Bundled(variant) => {
                let model = bundled::build(
                    *variant,
                    &bundled::IncidentConfig::default(),
                    seed,
                    clock,
                    metrics,
                );
                Ok((model.entry, model.scenario))
            }
            ModelSource::File(file) => file.build(seed, clock, metrics),
        }
    }
}

struct RunOutput {
    label: String,
    report: SummaryReport,
    samples: Vec<u8>,
    scenario: ScenarioConfig,
}

fn apply_flags(scenario: &mut ScenarioConfig, flags: &ScenarioFlags, seed: u64) {
    scenario.seed = seed;
    if let Some(events) = flags.events {
        scenario.total_events = events;
    }
    if let Some(rate) = flags.rate {
        scenario.events_per_1000_ticks = rate;
    }
    if let (Some(every), Some(add)) = (flags.ramp_every, flags.ramp_add) {
        scenario.ramp = vec![RampRule {
            trigger: RampTrigger::Every(every),
            change: RampChange::Add(add),
        }];
    }
    if let Some(mean) = flags.keyspace_mean {
        scenario.keyspace_mean = mean;
    }
    if let Some(std) = flags.keyspace_std {
        scenario.keyspace_std = std;
    }
    scenario.max_ticks = Some(flags.max_ticks);
}

fn validate(scenario: &ScenarioConfig, flags: &ScenarioFlags) -> Result<(), AppError> {
    if scenario.total_events < 1 {
        return Err(AppError::config("--events must be at least 1"));
    }
    if scenario.events_per_1000_ticks <= 0.0 {
        return Err(AppError::config("--rate must be positive"));
    }
    if scenario.keyspace_std < 0.0 {
        return Err(AppError::config("--keyspace-std must be non-negative"));
    }
    if flags.poll_period < 1 {
        return Err(AppError::config("--poll-period must be at least 1"));
    }
    Ok(())
}

fn execute(source: &ModelSource, flags: &ScenarioFlags) -> Result<RunOutput, AppError> {
    let seed = flags.seed.or(source.file_seed()).unwrap_or(1);
    let clock = Clock::new();
    let metrics = Metrics::new();
    let (entry, mut scenario_cfg) = source.build(seed, &clock, &metrics)?;
    apply_flags(&mut scenario_cfg, flags, seed);
    validate(&scenario_cfg, flags)?;

    let poll = poll_queue_depth(&clock, &metrics, &entry, flags.poll_period);
    let run = scenario::run(&clock, &entry, &scenario_cfg).map_err(|err| match err {
        RunError::BudgetExceeded { .. } | RunError::Stalled { .. } => {
            AppError::Runtime(format!("{} ({})", err, source.label()))
        }
    })?;
    poll.cancel();

    let store = metrics.store();
    let report =
        summarize(&store, &run).map_err(|e| AppError::Runtime(format!("summarize failed: {e}")))?;
    let mut samples = Vec::new();
    store
        .write_sample_lines(&mut samples)
        .map_err(|e| AppError::Runtime(format!("sample serialization failed: {e}")))?;

    Ok(RunOutput {
        label: source.label(),
        report,
        samples,
        scenario: scenario_cfg,
    })
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), AppError> {
    fs::write(path, bytes)
        .map_err(|e| AppError::Runtime(format!("writing {}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> Result<(), AppError> {
    let source = match (&args.model, &args.config) {
        (Some(name), None) => ModelSource::resolve(name)?,
        (None, Some(path)) => ModelSource::File(RunFile::load(path)?),
        (None, None) => {
            return Err(AppError::config(
                "pass --model <name> or --config <file>; try `stagesim models`",
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let output = execute(&source, &args.scenario)?;

    print!(
        "{}",
        render_summary(&output.label, &output.report, args.format.into())
    );
    if let Some(path) = &args.out {
        let json = serde_json::to_vec_pretty(&output.report).expect("summary always serializes");
        write_file(path, &json)?;
    }
    if let Some(path) = &args.samples {
        write_file(path, &output.samples)?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), AppError> {
    if args.models.len() < 2 {
        return Err(AppError::config("compare needs at least two models"));
    }
    let mut outputs = Vec::new();
    for selector in &args.models {
        let source = ModelSource::resolve(selector)?;
        outputs.push(execute(&source, &args.scenario)?);
    }

    // Models may carry their own scenarios (config files); flag mismatches
    // but still emit the comparison.
    let reference = &outputs[0].scenario;
    for output in &outputs[1..] {
        if output.scenario != *reference {
            eprintln!(
                "warning: scenario for {} differs from {}; comparing anyway",
                output.label, outputs[0].label
            );
        }
    }

    let labeled: Vec<(&str, &SummaryReport)> = outputs
        .iter()
        .map(|o| (o.label.as_str(), &o.report))
        .collect();
    print!("{}", render_compare(&labeled, args.format.into()));
    if let Some(path) = &args.out {
        let reports: Vec<&SummaryReport> = outputs.iter().map(|o| &o.report).collect();
        let json = serde_json::to_vec_pretty(&reports).expect("summaries always serialize");
        write_file(path, &json)?;
    }
    Ok(())
}
