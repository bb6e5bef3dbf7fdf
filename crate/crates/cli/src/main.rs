//! `accessq`: run access-link scenarios, sweeps and QoS calculators.

mod calc;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use accessq_core::scenario::{
    mos_report, report, run_experiment, sweep, ExperimentOptions, ExperimentResult,
    ScenarioConfig, ScenarioError, SweepParameter, Validated, MOS_NETWORK_DELAYS_MS,
};
use accessq_core::units::{parse_millis, parse_rate};
use clap::{Args, Parser, Subcommand};

use output::Output;

#[derive(Parser)]
#[command(name = "accessq", version, about = "Access-link bottleneck simulator and QoS calculators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every repetition of a scenario and write CSV results.
    Run(RunArgs),
    /// Run one experiment per value of a parameter.
    Sweep(SweepArgs),
    /// Evaluate a closed-form calculator.
    Calc(calc::CalcArgs),
    /// MOS histograms for the VoIP calls of a scenario.
    Mos(MosArgs),
    /// Check a scenario file and report the offered utilization.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Override a field, e.g. `--set buffer.capacity=40`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Replace `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Print machine-readable JSON instead of text.
    #[arg(long)]
    json: bool,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Validated, ScenarioError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("run.seed={seed}"));
        }
        ScenarioConfig::load(&self.scenario, &overrides)?.validate()
    }

    fn default_out(&self) -> PathBuf {
        let stem = self
            .scenario
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Path::new("results").join(stem)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory [default: results/<scenario name>].
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// buffer_size, r_out or r_in [default: the file's `[sweep]` section].
    #[arg(long)]
    parameter: Option<SweepParameter>,
    /// Comma-separated values; rates accept unit suffixes.
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
}

#[derive(Args)]
struct MosArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Network one-way delays in ms [default: 20,40,60,100,120,140].
    #[arg(long, value_delimiter = ',', value_parser = parse_millis)]
    delays: Vec<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

/// Errors tagged with the exit status they map to.
enum Failure {
    Usage(String),
    Scenario(ScenarioError),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Scenario(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Scenario(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

fn summary_output(out: &mut Output, result: &ExperimentResult) {
    out.text("config_hash", &result.provenance.config_hash);
    out.int("seed", result.provenance.seed);
    out.int("repetitions", result.provenance.repetitions as u64);
    out.rate("offered_rate", result.offered_rate);
    out.number("advisory_utilization", result.advisory_utilization);
    out.summaries(&result.summaries);
}

fn options(threads: Option<usize>) -> ExperimentOptions {
    ExperimentOptions { threads }
}

fn cmd_run(args: &RunArgs) -> Result<Output, Failure> {
    let v = args.scenario.load()?;
    let result = run_experiment(&v, options(args.threads))?;
    let dir = args.out.clone().unwrap_or_else(|| args.scenario.default_out());
    let files = report::write_experiment(&result, &dir)?;
    let mut out = Output::new(args.scenario.json);
    out.path("scenario", &args.scenario.scenario);
    summary_output(&mut out, &result);
    out.files(&dir, &files);
    Ok(out)
}

fn cmd_sweep(args: &SweepArgs) -> Result<Output, Failure> {
    let v = args.scenario.load()?;
    let (parameter, values) = match (args.parameter, &v.config.sweep) {
        (Some(p), _) => {
            if args.values.is_empty() {
                return Err(Failure::Usage("--parameter needs --values".into()));
            }
            let values = args
                .values
                .iter()
                .map(|s| parse_rate(s).map_err(|e| Failure::Usage(e.to_string())))
                .collect::<Result<Vec<f64>, _>>()?;
            (p, values)
        }
        (None, Some(s)) => (s.parameter, s.values()),
        (None, None) => {
            return Err(Failure::Usage(
                "scenario has no [sweep] section; pass --parameter and --values".into(),
            ))
        }
    };
    let points = sweep(&v, parameter, &values, options(args.threads))?;
    let dir = args.out.clone().unwrap_or_else(|| args.scenario.default_out());
    let files = report::write_sweep(parameter, &points, &dir)?;
    let mut out = Output::new(args.scenario.json);
    out.path("scenario", &args.scenario.scenario);
    out.text("parameter", parameter.name());
    out.sweep(parameter, &points);
    out.files(&dir, &files);
    Ok(out)
}

fn cmd_mos(args: &MosArgs) -> Result<Output, Failure> {
    let v = args.scenario.load()?;
    let result = run_experiment(&v, options(args.threads))?;
    let delays = if args.delays.is_empty() {
        MOS_NETWORK_DELAYS_MS.to_vec()
    } else {
        args.delays.clone()
    };
    let mos = mos_report(&result, &delays)?;
    let dir = args.out.clone().unwrap_or_else(|| args.scenario.default_out());
    let files = report::write_mos(&mos, &dir)?;
    let mut out = Output::new(args.scenario.json);
    out.path("scenario", &args.scenario.scenario);
    out.int("calls", mos.calls as u64);
    out.mos(&mos);
    out.files(&dir, &files);
    Ok(out)
}

fn cmd_validate(args: &ValidateArgs) -> Result<Output, Failure> {
    let mut out = Output::new(args.scenario.json);
    out.path("scenario", &args.scenario.scenario);
    match args.scenario.load() {
        Ok(v) => {
            out.flag("valid", true);
            out.int("flows", v.config.flows.len() as u64);
            out.rate("offered_rate", v.offered_rate);
            out.rate("r_out", v.config.link.r_out);
            out.number("utilization", v.advisory_utilization);
            out.text("config_hash", &v.config.config_hash());
            Ok(out)
        }
        Err(ScenarioError::Invalid(issues)) => {
            out.flag("valid", false);
            out.issues(&issues);
            out.fail();
            Ok(out)
        }
        Err(e) => Err(e.into()),
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
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Calc(a) => calc::run(a).map_err(Failure::Usage),
        Command::Mos(a) => cmd_mos(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(out) => out.finish(),
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Scenario(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
