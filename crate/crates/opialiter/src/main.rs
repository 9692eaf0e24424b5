//! Command line front end.
//!
//! Exit codes: 0 when every check holds (or stays untriggered), 1 when any
//! check fails or ties, 2 for usage and parse errors, 3 for engine errors
//! (domain escape, nonconvergence, IO).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opialiter::diagnostics::{Status, TailWindow};
use opialiter::error::{Error, Result};
use opialiter::operators::{nonexpansive_zoo, zoo, OperatorSpec};
use opialiter::scenario::{
    check_trace, effective_seed, report_exit_code, run_scenario, CheckTraceOptions, DetailedCheck,
    RunOptions, RunReport, Scenario, Tolerances, TraceFileFormat,
};
use opialiter::space::Point;
use opialiter::suite;

#[derive(Parser)]
#[command(name = "opialiter", version, about = "Fixed-point iterations with tail-windowed convergence diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file: iterate, check, write trace and report.
    Run(RunArgs),
    /// Rerun diagnostics over a stored trace file.
    Check(CheckArgs),
    /// Run the built-in case catalog.
    Suite(SuiteArgs),
    /// List the built-in operator zoo.
    Zoo(ZooArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Output directory for trace and report artifacts.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Also write tidy per-check series for plotting.
    #[arg(long)]
    plot_data: bool,
    /// Print the full report as JSON instead of one line per check.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Trace file (.csv or .jsonl).
    trace: PathBuf,
    /// Force the trace format instead of inferring it from the extension.
    #[arg(long, value_parser = parse_format)]
    format: Option<TraceFileFormat>,
    /// Checks to run (ar, residual, lambda, opial, fejer, flat, sharp, local_ne).
    #[arg(long, value_delimiter = ',', default_value = "ar,residual,lambda,opial")]
    checks: Vec<String>,
    /// Probe points as a JSON array, e.g. '[[0,0],[1,0]]'.
    #[arg(long, value_parser = parse_points)]
    probes: Option<PointList>,
    /// Declared weak limit as a JSON point.
    #[arg(long, value_parser = parse_point)]
    limit: Option<Point>,
    /// Fejer anchor as a JSON point (defaults to the operator's fixed points).
    #[arg(long, value_parser = parse_point)]
    y: Option<Point>,
    /// Operator spec as JSON, needed by sharp/fejer/local_ne.
    #[arg(long, value_parser = parse_operator)]
    operator: Option<OperatorSpec>,
    /// Fraction of the domain diameter the flat cross gap must clear.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Domain diameter for the flat check (defaults to a bound from the trace).
    #[arg(long)]
    dm: Option<f64>,
    /// Tail window size (with --burn-in; defaults derive from the length).
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, requires = "window", default_value_t = 0)]
    burn_in: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol_ar: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_lambda: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_opial: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional directory to write the report into.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SuiteArgs {
    /// Run a single case instead of the whole catalog.
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ZooArgs {
    /// Only list nonexpansive entries.
    #[arg(long)]
    nonexpansive: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Clone)]
struct PointList(Vec<Point>);

fn parse_point(text: &str) -> std::result::Result<Point, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

fn parse_points(text: &str) -> std::result::Result<PointList, String> {
    serde_json::from_str(text).map(PointList).map_err(|e| e.to_string())
}

fn parse_operator(text: &str) -> std::result::Result<OperatorSpec, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

fn parse_format(text: &str) -> std::result::Result<TraceFileFormat, String> {
    match text {
        "csv" => Ok(TraceFileFormat::Csv),
        "jsonl" => Ok(TraceFileFormat::Jsonl),
        other => Err(format!("unknown format `{other}`; use csv or jsonl")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::Suite(args) => cmd_suite(args),
        Command::Zoo(args) => cmd_zoo(args),
    }
}

fn print_report(report: &RunReport, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(report).expect("reports serialize"));
        return;
    }
    println!(
        "trace: {} points, stop {}, final residual {:.3e}",
        report.trace.length,
        match report.trace.stop_reason {
            opialiter::StopReason::Tolerance => "tolerance",
            opialiter::StopReason::MaxIter => "max_iter",
            opialiter::StopReason::External => "external",
        },
        report.trace.final_residual
    );
    for v in &report.verdicts {
        println!("{}: {}", v.check, status_word(v.status));
    }
    if let Some(dir) = &report.artifacts.report {
        println!("report: {dir}");
    }
}

fn status_word(status: Status) -> &'static str {
    match status {
        Status::Holds => "holds",
        Status::Fails => "fails",
        Status::NotTriggered => "not_triggered",
        Status::Inconclusive => "inconclusive",
    }
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let scenario = Scenario::load(&args.scenario)?;
    let opts = RunOptions { out_dir: args.out.clone(), plot_data: args.plot_data };
    let report = run_scenario(&scenario, &opts)?;
    print_report(&report, args.json);
    Ok(report_exit_code(&report))
}

fn cmd_check(args: CheckArgs) -> Result<u8> {
    let mut checks = Vec::new();
    for name in &args.checks {
        let check = match DetailedCheck::from_name(name)? {
            DetailedCheck::Flat { .. } => DetailedCheck::Flat { delta: args.delta },
            DetailedCheck::Fejer { eta0, eta_rho, .. } => {
                DetailedCheck::Fejer { y: args.y.clone(), eta0, eta_rho }
            }
            other => other,
        };
        checks.push(check);
    }
    let window = match args.window {
        Some(size) => Some(TailWindow::new(args.burn_in, size)?),
        None => None,
    };
    let opts = CheckTraceOptions {
        trace_path: args.trace.clone(),
        format: args.format,
        checks,
        probes: args.probes.map(|p| p.0).unwrap_or_default(),
        limit: args.limit,
        operator: args.operator,
        d_m: args.dm,
        window,
        tolerances: Tolerances {
            ar: args.tol_ar,
            lambda: args.tol_lambda,
            opial: args.tol_opial,
            margin: args.tol_margin,
        },
        seed: effective_seed(args.seed)?,
        out_dir: args.out,
    };
    validate_tolerance_flags(&opts.tolerances)?;
    let report = check_trace(&opts)?;
    print_report(&report, args.json);
    Ok(report_exit_code(&report))
}

fn cmd_suite(args: SuiteArgs) -> Result<u8> {
    let results: Vec<(String, opialiter::Verdict)> = match &args.case {
        Some(key) => vec![(key.clone(), suite::run_case(key)?)],
        None => suite::run_all()?.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    };
    let mut failed = false;
    if args.json {
        let payload: Vec<serde_json::Value> = results
            .iter()
            .map(|(key, v)| {
                serde_json::json!({
                    "key": key,
                    "status": status_word(v.status),
                    "witnesses": v.witnesses,
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&payload).expect("verdicts serialize"));
    } else {
        for (key, v) in &results {
            println!("{key}: {}", status_word(v.status));
        }
    }
    for (_, v) in &results {
        if matches!(v.status, Status::Fails | Status::Inconclusive) {
            failed = true;
        }
    }
    Ok(u8::from(failed))
}

fn cmd_zoo(args: ZooArgs) -> Result<u8> {
    let entries = if args.nonexpansive { nonexpansive_zoo() } else { zoo() };
    if args.json {
        let payload: Vec<serde_json::Value> = entries
            .iter()
            .map(|e| {
                serde_json::json!({
                    "name": e.name,
                    "operator": e.operator.describe(),
                    "lipschitz": e.operator.lipschitz(),
                    "nonexpansive": e.operator.is_nonexpansive(),
                    "fixed_points": e.operator.known_fixed_points(),
                    "domain": e.domain.kind_name(),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&payload).expect("zoo serializes"));
    } else {
        for e in &entries {
            let lip = match e.operator.lipschitz() {
                Some(l) => format!("{l}"),
                None => "unknown".to_string(),
            };
            println!(
                "{}: {}; lipschitz {}; {} known fixed point(s); domain {}",
                e.name,
                e.operator.describe(),
                lip,
                e.operator.known_fixed_points().len(),
                e.domain.kind_name()
            );
        }
    }
    Ok(0)
}

fn validate_tolerance_flags(t: &Tolerances) -> Result<()> {
    for (name, v) in [
        ("--tol-ar", t.ar),
        ("--tol-lambda", t.lambda),
        ("--tol-opial", t.opial),
        ("--tol-margin", t.margin),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::validation(name, format!("must be finite and positive, got {v}")));
        }
    }
    Ok(())
}
