use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use prosim_core::calendar::AvailabilityMode;
use prosim_core::discovery::{discover_model, DiscoveryConfig, MultitaskMode};
use prosim_core::evaluation::{evaluate_model, sweep, RepeatedReport, SweepGrid};
use prosim_core::event_log::{read_csv_log, write_csv_path, ColumnMap, EventLog};
use prosim_core::metrics::MetricReport;
use prosim_core::sim::{simulate, simulate_with_arrivals, CalendarDocument, SimulationModel};
use prosim_core::synthgen::{
    generate_synthetic_log, inject_unavailability, Balance, GenerationConfig, PerturbationConfig,
    PerturbationMode, Scenario,
};

/// Simulate business processes with probabilistic resource calendars and
/// multitasking, discover such models from event logs and compare logs.
#[derive(Parser, Debug)]
#[command(name = "prosim", version)]
struct Cli {
    #[command(flatten)]
    columns: Columns,

    #[command(subcommand)]
    command: Command,
}

/// Column names of CSV event logs.
#[derive(Args, Debug)]
struct Columns {
    #[arg(long, global = true, default_value = "case_id")]
    case_column: String,
    #[arg(long, global = true, default_value = "activity")]
    activity_column: String,
    #[arg(long, global = true, default_value = "resource")]
    resource_column: String,
    #[arg(long, global = true, default_value = "start_time")]
    start_column: String,
    #[arg(long, global = true, default_value = "end_time")]
    end_column: String,
}

impl Columns {
    fn map(&self) -> ColumnMap {
        ColumnMap {
            case_id: self.case_column.clone(),
            activity: self.activity_column.clone(),
            resource: self.resource_column.clone(),
            start: self.start_column.clone(),
            end: self.end_column.clone(),
            ..ColumnMap::default()
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a simulation model from an event log.
    Discover(DiscoverArgs),
    /// Run a simulation model and write the simulated log.
    Simulate(SimulateArgs),
    /// Generate a ground-truth log with round-robin allocation.
    Generate(GenerateArgs),
    /// Inject a vacation-style break into a log.
    Perturb(PerturbArgs),
    /// Compare a simulated log (or model) with a real log.
    Evaluate(EvaluateArgs),
    /// Grid search over discovery parameters, minimizing RED on held-out traces.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct DiscoveryArgs {
    /// Calendar granule size in minutes; must divide 1440.
    #[arg(long, default_value_t = 60)]
    granule_minutes: u32,
    /// Trapezoidal decay in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Minimum observations for fitting a resource-activity duration.
    #[arg(long, default_value_t = 20)]
    kappa: usize,
    #[arg(long, value_enum, default_value_t = MultitaskArg::None)]
    multitask: MultitaskArg,
    /// Granule size for local multitasking; defaults to --granule-minutes.
    #[arg(long)]
    local_granule_minutes: Option<u32>,
    #[arg(long, value_enum, default_value_t = AvailabilityArg::Max)]
    availability: AvailabilityArg,
    /// Model whose control flow and arrival process are reused.
    #[arg(long)]
    template: Option<PathBuf>,
}

impl DiscoveryArgs {
    fn config(&self) -> DiscoveryConfig {
        DiscoveryConfig {
            granule_minutes: self.granule_minutes,
            beta: self.beta,
            kappa: self.kappa,
            multitask: self.multitask.into(),
            local_granule_minutes: self.local_granule_minutes,
            availability_mode: self.availability.into(),
        }
    }
}

#[derive(Args, Debug)]
struct DiscoverArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the discovered calendars to this file.
    #[arg(long)]
    dump_calendars: Option<PathBuf>,
    #[command(flatten)]
    discovery: DiscoveryArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "PROSIM_SEED", default_value_t = 0)]
    seed: u64,
    /// Override the model's case count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    cases: Option<u64>,
    /// Replay the case arrivals of this log instead of sampling them.
    #[arg(long)]
    arrivals: Option<PathBuf>,
    #[arg(long, value_enum)]
    availability: Option<AvailabilityArg>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = BalanceArg::Balanced)]
    balance: BalanceArg,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    cases: Option<u64>,
    #[arg(long, env = "PROSIM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum)]
    scenario: ScenarioArg,
    /// Break length in weeks.
    #[arg(long)]
    weeks: u32,
    /// Resource on break; with --substitute its work is handed over instead
    /// of shifting the log.
    #[arg(long, requires = "substitute")]
    resource: Option<String>,
    #[arg(long, requires = "resource")]
    substitute: Option<String>,
    #[arg(long, default_value_t = 0.10)]
    train_anchor: f64,
    #[arg(long, default_value_t = 0.60)]
    test_anchor: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    sim: Option<PathBuf>,
    /// Simulate this model instead of reading a simulated log.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..), requires = "model")]
    repetitions: u64,
    /// Sample arrivals from the model instead of replaying the real ones.
    #[arg(long, requires = "model")]
    sample_arrivals: bool,
    #[arg(long, env = "PROSIM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    log: PathBuf,
    /// Share of traces (chronological) used for discovery.
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    repetitions: u64,
    #[arg(long, env = "PROSIM_SEED", default_value_t = 0)]
    seed: u64,
    /// Write every cell's scores to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    discovery: DiscoveryArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MultitaskArg {
    None,
    Global,
    Local,
}

impl From<MultitaskArg> for MultitaskMode {
    fn from(m: MultitaskArg) -> Self {
        match m {
            MultitaskArg::None => MultitaskMode::None,
            MultitaskArg::Global => MultitaskMode::Global,
            MultitaskArg::Local => MultitaskMode::Local,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum AvailabilityArg {
    Abs,
    Rel,
    Max,
}

impl From<AvailabilityArg> for AvailabilityMode {
    fn from(m: AvailabilityArg) -> Self {
        match m {
            AvailabilityArg::Abs => AvailabilityMode::Abs,
            AvailabilityArg::Rel => AvailabilityMode::Rel,
            AvailabilityArg::Max => AvailabilityMode::Max,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum BalanceArg {
    Balanced,
    Unbalanced,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ScenarioArg {
    Train,
    Test,
    Tnt,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Table,
    Both,
}

fn load_log(path: &Path, columns: &ColumnMap) -> Result<EventLog> {
    read_csv_log(path, columns).with_context(|| format!("reading log {}", path.display()))
}

fn load_model(path: &Path) -> Result<SimulationModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    SimulationModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_log(path: &Path, log: &EventLog) -> Result<()> {
    write_csv_path(log, path).with_context(|| format!("writing log {}", path.display()))
}

fn discover(args: DiscoverArgs, columns: &ColumnMap) -> Result<()> {
    let log = load_log(&args.log, columns)?;
    let template = args.discovery.template.as_deref().map(load_model).transpose()?;
    let model = discover_model(&log, &args.discovery.config(), template.as_ref()).context("discover")?;
    write_json(&args.out, &model)?;
    if let Some(path) = args.dump_calendars {
        let calendars = model
            .resources
            .iter()
            .map(|(r, p)| (r.clone(), p.calendar.clone()))
            .collect();
        write_json(&path, &CalendarDocument::new(&calendars))?;
    }
    Ok(())
}

fn simulate_cmd(args: SimulateArgs, columns: &ColumnMap) -> Result<()> {
    let mut model = load_model(&args.model)?;
    if let Some(n) = args.cases {
        model.case_count = n as usize;
    }
    if let Some(a) = args.availability {
        model.availability_mode = a.into();
    }
    let log = match &args.arrivals {
        Some(path) => {
            let arrivals = load_log(path, columns)?.arrivals();
            simulate_with_arrivals(&model, &arrivals, args.seed)
        }
        None => simulate(&model, args.seed),
    }
    .context("simulate")?;
    write_log(&args.out, &log)
}

fn generate(args: GenerateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let cfg = GenerationConfig {
        balance: match args.balance {
            BalanceArg::Balanced => Balance::Balanced,
            BalanceArg::Unbalanced => Balance::Unbalanced,
        },
        seed: args.seed,
        case_count: args.cases.map(|n| n as usize),
    };
    let log = generate_synthetic_log(&model, &cfg).context("generate")?;
    write_log(&args.out, &log)
}

fn perturb(args: PerturbArgs, columns: &ColumnMap) -> Result<()> {
    let log = load_log(&args.log, columns)?;
    let scenario = match args.scenario {
        ScenarioArg::Train => Scenario::Train,
        ScenarioArg::Test => Scenario::Test,
        ScenarioArg::Tnt => Scenario::TrainAndTest,
    };
    let mut cfg = PerturbationConfig::new(scenario, args.weeks);
    cfg.train_anchor = args.train_anchor;
    cfg.test_anchor = args.test_anchor;
    if let (Some(resource), Some(substitute)) = (args.resource, args.substitute) {
        cfg.mode = PerturbationMode::Relabel {
            resource,
            substitute,
        };
    }
    let out = inject_unavailability(&log, &cfg).context("perturb")?;
    write_log(&args.out, &out)
}

fn print_table(rows: &[(&str, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in rows {
        println!("{k:<width$}  {v}");
    }
}

fn evaluate(args: EvaluateArgs, columns: &ColumnMap) -> Result<()> {
    let real = load_log(&args.real, columns)?;
    let (json, rows) = if let Some(path) = &args.sim {
        let sim = load_log(path, columns)?;
        let report = MetricReport::compute(&real, &sim).context("evaluate")?;
        let rows = vec![
            ("RED (h)", format!("{:.4}", report.red)),
            ("CTD (h)", format!("{:.4}", report.ctd)),
            ("MMR", format!("{:.4}", report.mmr)),
            ("real cases", report.real_cases.to_string()),
            ("sim cases", report.sim_cases.to_string()),
        ];
        (serde_json::to_string(&report)?, rows)
    } else {
        let model = load_model(args.model.as_deref().expect("clap requires --sim or --model"))?;
        let arrivals = (!args.sample_arrivals).then(|| real.arrivals());
        let report: RepeatedReport =
            evaluate_model(&real, &model, arrivals.as_deref(), args.repetitions as usize, args.seed)
                .context("evaluate")?;
        let rows = vec![
            ("RED (h)", format!("{:.4}", report.red)),
            ("CTD (h)", format!("{:.4}", report.ctd)),
            ("MMR", format!("{:.4}", report.mmr)),
            ("repetitions", report.repetitions.to_string()),
        ];
        let summary = serde_json::json!({
            "red": report.red,
            "ctd": report.ctd,
            "mmr": report.mmr,
            "repetitions": report.repetitions,
        });
        (summary.to_string(), rows)
    };
    if args.format != Format::Table {
        println!("{json}");
    }
    if args.format != Format::Json {
        print_table(&rows);
    }
    Ok(())
}

fn sweep_cmd(args: SweepArgs, columns: &ColumnMap) -> Result<()> {
    let log = load_log(&args.log, columns)?;
    let template = args.discovery.template.as_deref().map(load_model).transpose()?;
    let result = sweep(
        &log,
        &SweepGrid::default(),
        &args.discovery.config(),
        template.as_ref(),
        args.split,
        args.repetitions as usize,
        args.seed,
    )
    .context("sweep")?;
    if let Some(path) = &args.out {
        write_json(path, &result)?;
    }
    let best = &result.best;
    let red = best.report.as_ref().map(|r| r.red).unwrap_or(f64::NAN);
    println!(
        "{}",
        serde_json::json!({
            "granule_minutes": best.granule_minutes,
            "beta": best.beta,
            "kappa": best.kappa,
            "red": red,
        })
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let columns = cli.columns.map();
    match cli.command {
        Command::Discover(a) => discover(a, &columns),
        Command::Simulate(a) => simulate_cmd(a, &columns),
        Command::Generate(a) => generate(a),
        Command::Perturb(a) => perturb(a, &columns),
        Command::Evaluate(a) => evaluate(a, &columns),
        Command::Sweep(a) => sweep_cmd(a, &columns),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err
        .chain()
        .filter_map(|e| e.downcast_ref::<prosim_core::Error>())
        .any(|e| e.is_validation());
    if validation {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
