//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or input error,
//! 3 premise violation in `transform --direction forward`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use rayon::prelude::*;
use serde::Serialize;

use crate::feasibility::{self, BellInequality, Check, FeasibilityError, Prop1Options};
use crate::ontology::{LocalHVModel, OntologicalModel, Side, ValidationReport};
use crate::qubit::{
    bell_joint, canonical_scenario, canonical_scenario_float, wigner_inequality_value, PlanarAngle, Scenario,
    WignerConvention,
};
use crate::scalar::{Mode, Scalar};
use crate::simplex::LpResult;
use crate::transform::{self, TransformError};

pub const SCHEMA: &str = "bellgate/1";
pub const SCAN_HEADER: &str = "theta,prop2_feasible,min_slack,wigner_strict01";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PREMISE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "bellgate",
    version,
    about = "Hidden-variable feasibility checks for planar qubits and the Bell state"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-system question: one measure per state, equal mixtures across decompositions.
    CheckProp1(Prop1Args),
    /// Bell-pair question: a local model for the Bell state on the chosen settings.
    CheckProp2(ScenarioArgs),
    /// Bell-pair question over the family of settings (0, θ, 2θ), float mode.
    Scan(ScanArgs),
    /// Turn a single-system model into a local model or back.
    Transform(TransformArgs),
    /// Compare a model file against the quantum predictions.
    ValidateModel(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Measurement angles: integers in units of π/4 (exact) or radians (float).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "scenario")]
    pub angles: Option<Vec<String>>,
    /// Arithmetic backend.
    #[arg(long, env = "BELLGATE_MODE")]
    pub mode: Option<Mode>,
    /// Scenario JSON file instead of --angles.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    pub with_timings: bool,
}

#[derive(Debug, Args)]
pub struct Prop1Args {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Drop the decomposition-equality rows.
    #[arg(long)]
    pub no_equality: bool,
    /// Use cells with responses in {0, 1/2, 1} instead of deterministic cells.
    #[arg(long)]
    pub stochastic_cells: bool,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long, default_value_t = std::f64::consts::PI / 20.0, allow_hyphen_values = true)]
    pub from: f64,
    #[arg(long, default_value_t = 9.0 * std::f64::consts::PI / 20.0, allow_hyphen_values = true)]
    pub to: f64,
    /// Grid points, endpoints included.
    #[arg(long, default_value_t = 9)]
    pub steps: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long, value_enum)]
    pub direction: Direction,
    /// Single-system model (forward) or local model (reverse).
    #[arg(long)]
    pub model: PathBuf,
    /// Conditioning event SIDE:MEAS:BIT for the reverse direction, e.g. B:X:0.
    #[arg(long)]
    pub condition: Option<String>,
    /// Scenario supplying the decompositions for the forward direction.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Single-system model or local model JSON.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Premise(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Premise(_) => EXIT_PREMISE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Premise(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<FeasibilityError> for CliError {
    fn from(e: FeasibilityError) -> Self {
        match e {
            FeasibilityError::Qubit(_)
            | FeasibilityError::FloatModeWithExactRequest
            | FeasibilityError::TooManySettings(_) => CliError::Usage(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        match e {
            TransformError::PremiseViolated(_) => CliError::Premise(e.to_string()),
            TransformError::Model(_)
            | TransformError::ZeroProbabilityCondition(_)
            | TransformError::MissingMeasurement(_) => CliError::Usage(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::CheckProp1(args) => cmd_check_prop1(&args, stdout),
        Command::CheckProp2(args) => cmd_check_prop2(&args, stdout),
        Command::Scan(args) => cmd_scan(&args, stdout),
        Command::Transform(args) => cmd_transform(&args, stdout),
        Command::ValidateModel(args) => cmd_validate_model(&args, stdout),
    }
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| internal(format!("writing {}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(internal),
    }
}

fn to_json(value: &impl Serialize) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(internal)?;
    text.push('\n');
    Ok(text)
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))
}

fn read_scenario(path: &Path) -> Result<Scenario, CliError> {
    serde_json::from_str(&read_file(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Scenario from `--scenario`, `--angles` or the canonical defaults.
pub fn resolve_scenario(args: &ScenarioArgs) -> Result<Scenario, CliError> {
    if let Some(path) = &args.scenario {
        let scenario = read_scenario(path)?;
        if let Some(mode) = args.mode {
            if mode != scenario.mode() {
                return Err(usage(format!(
                    "--mode {mode} disagrees with the scenario file's mode {}",
                    scenario.mode()
                )));
            }
        }
        return Ok(scenario);
    }
    let mode = args.mode.unwrap_or(Mode::Exact);
    let Some(raw) = &args.angles else {
        return Ok(match mode {
            Mode::Exact => canonical_scenario(),
            Mode::Float => canonical_scenario_float(),
        });
    };
    let angles = raw
        .iter()
        .map(|s| {
            let s = s.trim();
            match mode {
                Mode::Exact => s
                    .parse::<i64>()
                    .map(PlanarAngle::quarter_pi)
                    .map_err(|_| usage(format!("exact angles are integers in units of pi/4, got {s:?}"))),
                Mode::Float => match s.parse::<f64>() {
                    Ok(r) if r.is_finite() => Ok(PlanarAngle::radians(r)),
                    _ => Err(usage(format!("float angles are finite radians, got {s:?}"))),
                },
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    if angles.is_empty() {
        return Err(usage("--angles needs at least one value"));
    }
    Scenario::from_measurement_angles(&angles).map_err(usage)
}

#[derive(Serialize)]
struct CommandEcho {
    name: &'static str,
    mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    angles: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decomposition_equality: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    deterministic_cells: Option<bool>,
}

#[derive(Serialize)]
struct ProblemSummary {
    variables: usize,
    rows: usize,
}

#[derive(Serialize)]
struct CertificateEntry {
    row: String,
    y: Scalar,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
enum ResultReport {
    /// Nonzero entries of the witness, keyed by column.
    Feasible { witness: IndexMap<String, Scalar> },
    /// Nonzero certificate entries, keyed by row, and the margin `yᵀb`.
    Infeasible { margin: Scalar, certificate: Vec<CertificateEntry> },
}

#[derive(Serialize)]
struct WignerValues {
    strict01: Scalar,
    differ: Scalar,
}

#[derive(Serialize)]
struct Timings {
    build_and_solve_ms: f64,
}

#[derive(Serialize)]
struct CheckReport<'a> {
    schema: &'static str,
    command: CommandEcho,
    scenario: &'a Scenario,
    problem: ProblemSummary,
    result: ResultReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    inequality: Option<BellInequality>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_slack: Option<Scalar>,
    wigner: Option<WignerValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

fn result_report(check: &Check) -> Result<ResultReport, CliError> {
    let p = &check.problem;
    Ok(match &check.result {
        LpResult::Feasible { x } => ResultReport::Feasible {
            witness: p
                .columns
                .iter()
                .zip(x)
                .filter(|(_, v)| !v.is_zero())
                .map(|(c, v)| (c.clone(), v.clone()))
                .collect(),
        },
        LpResult::Infeasible { certificate } => ResultReport::Infeasible {
            margin: check.margin().ok_or_else(|| internal("certificate failed re-verification"))?,
            certificate: p
                .rows
                .iter()
                .zip(&certificate.y)
                .filter(|(_, y)| !y.is_zero())
                .map(|(r, y)| CertificateEntry { row: r.to_string(), y: y.clone() })
                .collect(),
        },
    })
}

fn wigner_values(scenario: &Scenario) -> Result<Option<WignerValues>, CliError> {
    if scenario.measurements().len() < 3 {
        return Ok(None);
    }
    Ok(Some(WignerValues {
        strict01: wigner_inequality_value(scenario, WignerConvention::Strict01).map_err(internal)?,
        differ: wigner_inequality_value(scenario, WignerConvention::Differ).map_err(internal)?,
    }))
}

fn echo(name: &'static str, args: &ScenarioArgs, scenario: &Scenario) -> CommandEcho {
    CommandEcho {
        name,
        mode: scenario.mode(),
        angles: args.angles.clone(),
        scenario_file: args.scenario.as_ref().map(|p| p.display().to_string()),
        decomposition_equality: None,
        deterministic_cells: None,
    }
}

pub fn cmd_check_prop1(args: &Prop1Args, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scenario = resolve_scenario(&args.scenario)?;
    let options = Prop1Options {
        include_decomposition_equality: !args.no_equality,
        deterministic_cells: !args.stochastic_cells,
        require_exact: false,
    };
    let start = Instant::now();
    let check = feasibility::check_prop1(&scenario, options)?;
    let elapsed = start.elapsed();
    let mut command = echo("check-prop1", &args.scenario, &scenario);
    command.decomposition_equality = Some(options.include_decomposition_equality);
    command.deterministic_cells = Some(options.deterministic_cells);
    let report = CheckReport {
        schema: SCHEMA,
        command,
        scenario: &scenario,
        problem: ProblemSummary { variables: check.problem.num_columns(), rows: check.problem.num_rows() },
        result: result_report(&check)?,
        inequality: None,
        min_slack: None,
        wigner: wigner_values(&scenario)?,
        timings: args.scenario.with_timings.then_some(Timings { build_and_solve_ms: elapsed.as_secs_f64() * 1e3 }),
    };
    emit(args.scenario.out.as_deref(), &to_json(&report)?, stdout)
}

pub fn cmd_check_prop2(args: &ScenarioArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scenario = resolve_scenario(args)?;
    let start = Instant::now();
    let check = feasibility::check_prop2(&scenario)?;
    let elapsed = start.elapsed();
    let (inequality, min_slack) = match check.result.certificate() {
        Some(cert) => (
            Some(feasibility::extract_inequality(cert, &check.problem)?),
            Some(feasibility::min_slack(&check.problem)?.epsilon),
        ),
        None => (None, None),
    };
    let report = CheckReport {
        schema: SCHEMA,
        command: echo("check-prop2", args, &scenario),
        scenario: &scenario,
        problem: ProblemSummary { variables: check.problem.num_columns(), rows: check.problem.num_rows() },
        result: result_report(&check)?,
        inequality,
        min_slack,
        wigner: wigner_values(&scenario)?,
        timings: args.with_timings.then_some(Timings { build_and_solve_ms: elapsed.as_secs_f64() * 1e3 }),
    };
    emit(args.out.as_deref(), &to_json(&report)?, stdout)
}

/// One grid point of the (0, θ, 2θ) family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub theta: f64,
    pub prop2_feasible: bool,
    pub min_slack: f64,
    pub wigner_strict01: f64,
}

impl ScanRow {
    pub fn to_csv(&self) -> String {
        format!("{:.12},{},{:.12},{:.12}", self.theta, self.prop2_feasible, self.min_slack, self.wigner_strict01)
    }
}

pub fn scan_point(theta: f64) -> Result<ScanRow, CliError> {
    let angles = [0.0, theta, 2.0 * theta].map(PlanarAngle::radians);
    let scenario = Scenario::from_measurement_angles(&angles).map_err(usage)?;
    let check = feasibility::check_prop2(&scenario)?;
    let slack = feasibility::min_slack(&check.problem)?;
    let wigner = wigner_inequality_value(&scenario, WignerConvention::Strict01).map_err(internal)?;
    Ok(ScanRow {
        theta,
        prop2_feasible: check.is_feasible(),
        min_slack: slack.epsilon.to_f64(),
        wigner_strict01: wigner.to_f64(),
    })
}

/// Evaluates the grid concurrently; rows come back ordered by θ.
pub fn scan(from: f64, to: f64, steps: usize) -> Result<Vec<ScanRow>, CliError> {
    if !(from.is_finite() && to.is_finite()) || from >= to || steps < 2 {
        return Err(usage(format!("need finite from < to and steps >= 2, got from={from} to={to} steps={steps}")));
    }
    let step = (to - from) / (steps - 1) as f64;
    (0..steps).into_par_iter().map(|i| scan_point(from + step * i as f64)).collect()
}

pub fn cmd_scan(args: &ScanArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let rows = scan(args.from, args.to, args.steps)?;
    let mut text = String::from(SCAN_HEADER);
    text.push('\n');
    for row in &rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    emit(args.out.as_deref(), &text, stdout)
}

fn parse_condition(raw: &str) -> Result<(Side, String, u8), CliError> {
    let bad = || usage(format!("--condition expects SIDE:MEAS:BIT, got {raw:?}"));
    let (side, rest) = raw.split_once(':').ok_or_else(bad)?;
    let (meas, bit) = rest.rsplit_once(':').ok_or_else(bad)?;
    let side = match side {
        "A" | "a" => Side::A,
        "B" | "b" => Side::B,
        _ => return Err(bad()),
    };
    let bit = match bit {
        "0" => 0,
        "1" => 1,
        _ => return Err(bad()),
    };
    if meas.is_empty() {
        return Err(bad());
    }
    Ok((side, meas.to_string(), bit))
}

/// Canonical scenario of `mode` restricted to the given measurement labels.
fn default_scenario_for(mode: Mode, measurements: &[String]) -> Result<Scenario, CliError> {
    let base = match mode {
        Mode::Exact => canonical_scenario(),
        Mode::Float => canonical_scenario_float(),
    };
    let labels: Vec<&str> = measurements.iter().map(String::as_str).collect();
    let scenario = base.restricted_to(&labels).map_err(usage)?;
    if scenario.measurements().len() != measurements.len() {
        return Err(usage("model measurements are not all canonical (Z, Z+X, X); pass --scenario"));
    }
    Ok(scenario)
}

fn model_scenario(path: Option<&Path>, mode: Mode, measurements: &[String]) -> Result<Scenario, CliError> {
    match path {
        Some(p) => read_scenario(p),
        None => default_scenario_for(mode, measurements),
    }
}

pub fn cmd_transform(args: &TransformArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = read_file(&args.model)?;
    let output = match args.direction {
        Direction::Forward => {
            let model: OntologicalModel =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", args.model.display())))?;
            let scenario = model_scenario(args.scenario.as_deref(), model.mode(), model.responses().measurements())?;
            to_json(&transform::forward_charlie(&model, &scenario)?)?
        }
        Direction::Reverse => {
            let lhv: LocalHVModel =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", args.model.display())))?;
            let raw = args.condition.as_deref().ok_or_else(|| usage("--direction reverse needs --condition"))?;
            let (side, meas, bit) = parse_condition(raw)?;
            to_json(&transform::reverse_group(&lhv, side, &meas, bit)?)?
        }
    };
    emit(args.out.as_deref(), &output, stdout)
}

#[derive(Serialize)]
struct CorrelationResidual {
    setting_a: String,
    setting_b: String,
    a: u8,
    b: u8,
    predicted: Scalar,
    quantum: Scalar,
    residual: Scalar,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ValidationBody {
    Ontological {
        #[serde(flatten)]
        report: ValidationReport,
    },
    LocalHv {
        reproduces_bell_state: bool,
        correlations: Vec<CorrelationResidual>,
    },
}

#[derive(Serialize)]
struct ValidationOutput<'a> {
    schema: &'static str,
    scenario: &'a Scenario,
    validation: ValidationBody,
}

fn validate_lhv(lhv: &LocalHVModel, scenario: &Scenario) -> Result<ValidationBody, CliError> {
    let mut correlations = Vec::new();
    for ma in scenario.measurements() {
        for mb in scenario.measurements() {
            for a in 0..2u8 {
                for b in 0..2u8 {
                    let predicted = lhv.predict_lhv(&ma.label, &mb.label, a, b).map_err(usage)?;
                    let quantum = bell_joint(ma, mb, a, b).map_err(internal)?;
                    let residual = predicted.sub(&quantum).map_err(usage)?;
                    correlations.push(CorrelationResidual {
                        setting_a: ma.label.clone(),
                        setting_b: mb.label.clone(),
                        a,
                        b,
                        predicted,
                        quantum,
                        residual,
                    });
                }
            }
        }
    }
    let reproduces_bell_state = correlations.iter().all(|c| c.residual.is_zero());
    Ok(ValidationBody::LocalHv { reproduces_bell_state, correlations })
}

pub fn cmd_validate_model(args: &ValidateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = read_file(&args.model)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", args.model.display())))?;
    let parse_err = |e: serde_json::Error| usage(format!("{}: {e}", args.model.display()));
    let (scenario, body) = if value.get("settings").is_some() {
        let lhv: LocalHVModel = serde_json::from_value(value).map_err(parse_err)?;
        let scenario = model_scenario(args.scenario.as_deref(), lhv.mode(), lhv.settings())?;
        let body = validate_lhv(&lhv, &scenario)?;
        (scenario, body)
    } else {
        let model: OntologicalModel = serde_json::from_value(value).map_err(parse_err)?;
        let scenario = model_scenario(args.scenario.as_deref(), model.mode(), model.responses().measurements())?;
        let report = model.validate(&scenario).map_err(usage)?;
        (scenario, ValidationBody::Ontological { report })
    };
    let output = ValidationOutput { schema: SCHEMA, scenario: &scenario, validation: body };
    emit(args.out.as_deref(), &to_json(&output)?, stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("bellgate").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn condition_parsing() {
        assert_eq!(parse_condition("B:Z+X:0").unwrap(), (Side::B, "Z+X".to_string(), 0));
        assert_eq!(parse_condition("A:M:1:1").unwrap(), (Side::A, "M:1".to_string(), 1));
        assert!(parse_condition("C:Z:0").is_err());
        assert!(parse_condition("B:Z:2").is_err());
        assert!(parse_condition("B::0").is_err());
    }

    #[test]
    fn exact_angles_must_be_integers() {
        let (code, _, err) = run_args(&["check-prop2", "--mode", "exact", "--angles", "0,0.5"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("pi/4"));
    }

    #[test]
    fn bad_flag_is_usage_error() {
        assert_eq!(run_args(&["check-prop1", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["scan", "--from", "1", "--to", "0.5"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn scan_orders_rows() {
        let rows = scan(0.1, 0.3, 3).unwrap();
        let thetas: Vec<f64> = rows.iter().map(|r| r.theta).collect();
        assert_eq!(thetas.len(), 3);
        assert!(thetas.windows(2).all(|w| w[0] < w[1]));
    }
}
