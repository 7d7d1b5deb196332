//! Experiment commands behind the `flround` binary. Every command writes CSV
//! with a header row and numbers to 9 significant digits.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use flround::rigid::{ordering_from_rigid, rigid_to_session, solve_rigid, RigidOptions};
use flround::session::{
    enumerate_orderings, run_algorithm1, trace_csv, Algorithm1Options, SessionSchedule, TraceRow,
};
use flround::sim::{replay_schedule, run_policy, timeline_csv, Policy, SimOptions};
use flround::{Error, Overrides, RoundOutcome, Scenario};
use rayon::prelude::*;

/// Residual up to which an optimizer's round counts as feasible.
pub const FEAS_TOL: f64 = 1e-6;
/// Largest number of FL UEs whose orderings are enumerated.
pub const ORDERING_CAP: usize = 7;

#[derive(Debug, Parser)]
#[command(name = "flround", version, about = "Schedule one federated-learning round in a shared cell")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario JSON file. Without it a scenario is generated from --seed.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Generation parameter override, e.g. `K=8` or `theta=300`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_override)]
    pub overrides: Vec<(String, f64)>,
    /// Write the CSV here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Slot length in seconds for the simulators and the replay.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Relative objective change that stops the iterative solvers.
    #[arg(long, global = true, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long = "max-iter", global = true, default_value_t = 50)]
    pub max_iter: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method and print its round.
    Solve {
        #[arg(long, value_enum)]
        method: Method,
        /// Energy weight of every FL UE.
        #[arg(long)]
        lambda: Option<f64>,
        /// Write the per-iteration trace of the session method here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the slot-level audit of the schedule here as JSON.
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Write the schedule here as JSON.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Trace the energy-time trade-off over a list of energy weights.
    Pareto {
        #[arg(long, value_delimiter = ',', required = true)]
        lambda: Vec<f64>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::Session, Method::Rigid])]
        method: Vec<Method>,
    },
    /// Rank every uplink ordering and mark the one the rigid solution picks.
    Orderings {
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Vary one parameter and run each method at every value.
    Sweep {
        #[arg(long, value_enum)]
        param: Param,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(
            long,
            value_enum,
            value_delimiter = ',',
            default_values_t = [Method::Session, Method::Rigid, Method::Msr, Method::Mmr]
        )]
        method: Vec<Method>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run the slot schedulers.
    Baselines {
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Baseline::Msr, Baseline::Mmr])]
        method: Vec<Baseline>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Write the per-slot timeline here. Needs a single method.
        #[arg(long)]
        timeline: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Session,
    Rigid,
    Msr,
    Mmr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Session => "session",
            Method::Rigid => "rigid",
            Method::Msr => "msr",
            Method::Mmr => "mmr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Msr,
    Mmr,
}

impl From<Baseline> for Method {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::Msr => Method::Msr,
            Baseline::Mmr => Method::Mmr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Param {
    Lambda,
    #[value(name = "K")]
    K,
    Theta,
    Seed,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Lambda => "lambda",
            Param::K => "K",
            Param::Theta => "theta",
            Param::Seed => "seed",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad command line or input file.
    Usage(String),
    /// A round could not be scheduled.
    Infeasible(String),
    Failed(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) | CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            e if is_usage(&e) => CliError::Usage(e.to_string()),
            Error::Infeasible(m) => CliError::Infeasible(m),
            other => CliError::Failed(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.into())
    }
}

/// How a command ended when it produced its output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Output was written but some round is infeasible.
    Infeasible,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

/// `v` with 9 significant digits.
pub fn sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        format!("{:.*}", (8 - exp) as usize, v)
    } else {
        format!("{v:.8e}")
    }
}

/// Solver settings shared by every method.
#[derive(Debug, Clone)]
pub struct Settings {
    pub eps: f64,
    pub max_iter: usize,
    pub delta: Option<f64>,
}

impl Settings {
    fn algorithm1(&self) -> Algorithm1Options {
        Algorithm1Options { eps: self.eps, max_iter: self.max_iter, ..Default::default() }
    }

    fn rigid(&self) -> RigidOptions {
        RigidOptions { eps: self.eps, max_iter: self.max_iter, ..Default::default() }
    }

    fn sim(&self, timeline: bool) -> SimOptions {
        SimOptions { delta: self.delta, timeline }
    }
}

/// Result of running one method on one scenario.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub outcome: RoundOutcome,
    pub iterations: usize,
    pub feasible: bool,
    /// Session form of the optimizers' schedules.
    pub schedule: Option<SessionSchedule>,
    pub trace: Vec<TraceRow>,
}

/// Runs `method`. The session method uses the ordering of the rigid
/// solution. Convex subproblems solved are reported as iterations; the slot
/// schedulers report none.
pub fn run_method(sc: &Scenario, method: Method, set: &Settings) -> flround::Result<MethodRun> {
    match method {
        Method::Session => {
            let rigid = solve_rigid(sc, &set.rigid())?;
            let ordering = ordering_from_rigid(&rigid.solution, sc);
            let r = run_algorithm1(sc, &ordering, &set.algorithm1())?;
            Ok(MethodRun {
                feasible: r.outcome.is_feasible(FEAS_TOL),
                outcome: r.outcome,
                iterations: r.iterations,
                schedule: Some(r.schedule),
                trace: r.trace,
            })
        }
        Method::Rigid => {
            let r = solve_rigid(sc, &set.rigid())?;
            Ok(MethodRun {
                feasible: r.outcome.is_feasible(FEAS_TOL),
                schedule: Some(rigid_to_session(&r.solution, sc)?),
                outcome: r.outcome,
                iterations: r.iterations,
                trace: Vec::new(),
            })
        }
        Method::Msr | Method::Mmr => {
            let policy = if method == Method::Msr { Policy::Msr } else { Policy::Mmr };
            let r = run_policy(sc, policy, &set.sim(false))?;
            Ok(MethodRun {
                feasible: r.outcome.is_feasible(FEAS_TOL),
                outcome: r.outcome,
                iterations: 0,
                schedule: None,
                trace: Vec::new(),
            })
        }
    }
}

/// Loads `--scenario` or generates one from the seed and overrides.
pub fn base_scenario(common: &Common, seed: u64) -> Result<Scenario, CliError> {
    match &common.scenario {
        Some(path) => {
            if !common.overrides.is_empty() {
                return Err(CliError::Usage("--set only applies to generated scenarios".into()));
            }
            Scenario::load(path).map(|l| l.scenario).map_err(|e| match e {
                Error::Io(io) => CliError::Usage(format!("{}: {io}", path.display())),
                other => other.into(),
            })
        }
        None => {
            let ov: Overrides = common.overrides.iter().cloned().collect();
            Ok(Scenario::generate(seed, &ov)?)
        }
    }
}

fn set_lambda(sc: &mut Scenario, lambda: f64) -> Result<(), CliError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CliError::Usage(format!("lambda must be nonnegative, got {lambda}")));
    }
    for ue in sc.fl_ues.iter_mut() {
        if let Some(w) = ue.workload.as_mut() {
            w.energy_weight = lambda;
        }
    }
    Ok(())
}

/// Scenario of one sweep point.
fn sweep_scenario(common: &Common, param: Param, value: f64) -> Result<Scenario, CliError> {
    let mut sc = match param {
        Param::Seed => {
            if common.scenario.is_some() {
                return Err(CliError::Usage("a seed sweep needs a generated scenario".into()));
            }
            if !(value >= 0.0 && value.fract() == 0.0) {
                return Err(CliError::Usage(format!("seed must be a nonnegative integer, got {value}")));
            }
            base_scenario(common, value as u64)?
        }
        _ => base_scenario(common, common.seed)?,
    };
    match param {
        Param::Lambda => set_lambda(&mut sc, value)?,
        Param::K => {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                return Err(CliError::Usage(format!("K must be a positive integer, got {value}")));
            }
            sc.radio.num_rbs = value as u32;
        }
        Param::Theta => {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(CliError::Usage(format!("theta must be nonnegative, got {value}")));
            }
            sc.hb_threshold = value * 8.0 * 1000.0;
        }
        Param::Seed => {}
    }
    Ok(sc)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Failed(anyhow::anyhow!("{}: {e}", path.display())))
}

const ROW_HEADER: &str = "method,seed,T_s,E_total_J,objective,feasible,iterations";

fn row(method: Method, seed: u64, run: &flround::Result<MethodRun>) -> String {
    match run {
        Ok(r) => format!(
            "{},{seed},{},{},{},{},{}",
            method.name(),
            sig9(r.outcome.latency),
            sig9(r.outcome.total_energy()),
            sig9(r.outcome.objective),
            r.feasible,
            r.iterations
        ),
        Err(_) => format!("{},{seed},nan,nan,nan,false,0", method.name()),
    }
}

fn failed(run: &flround::Result<MethodRun>) -> bool {
    !matches!(run, Ok(r) if r.feasible)
}

/// Per-point failures are reported and the command goes on. Bad input ends
/// the command.
fn note_failure(label: &str, run: &flround::Result<MethodRun>) -> Result<(), CliError> {
    match run {
        Ok(r) if !r.feasible => {
            eprintln!("{label}: round violates its constraints (worst residual {:e})", r.outcome.max_residual());
        }
        Ok(_) => {}
        Err(e) if is_usage(e) => return Err(CliError::Usage(e.to_string())),
        Err(e) => eprintln!("{label}: {e}"),
    }
    Ok(())
}

fn is_usage(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidScenario(_) | Error::UnknownParameter(_) | Error::Schema(_) | Error::InvalidArgument(_)
    )
}

/// Runs a parsed command line, writing CSV to `--out` or `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<Status, CliError> {
    let common = &cli.common;
    if let Some(d) = common.delta {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CliError::Usage(format!("--delta must be positive, got {d}")));
        }
    }
    if !(common.eps > 0.0) || common.max_iter == 0 {
        return Err(CliError::Usage("--eps and --max-iter must be positive".into()));
    }
    let set = Settings { eps: common.eps, max_iter: common.max_iter, delta: common.delta };
    let mut csv = String::new();
    let status = match &cli.command {
        Command::Solve { method, lambda, trace, audit, schedule } => {
            solve(common, &set, *method, *lambda, trace.as_deref(), audit.as_deref(), schedule.as_deref(), &mut csv)?
        }
        Command::Pareto { lambda, method } => pareto(common, &set, lambda, method, &mut csv)?,
        Command::Orderings { lambda } => orderings(common, &set, *lambda, &mut csv)?,
        Command::Sweep { param, values, method, lambda } => sweep(common, &set, *param, values, method, *lambda, &mut csv)?,
        Command::Baselines { method, lambda, timeline } => {
            baselines(common, &set, method, *lambda, timeline.as_deref(), &mut csv)?
        }
    };
    match &common.out {
        Some(path) => write_file(path, &csv)?,
        None => stdout.write_all(csv.as_bytes())?,
    }
    Ok(status)
}

#[allow(clippy::too_many_arguments)]
fn solve(
    common: &Common,
    set: &Settings,
    method: Method,
    lambda: Option<f64>,
    trace: Option<&Path>,
    audit: Option<&Path>,
    schedule: Option<&Path>,
    csv: &mut String,
) -> Result<Status, CliError> {
    let mut sc = base_scenario(common, common.seed)?;
    if let Some(l) = lambda {
        set_lambda(&mut sc, l)?;
    }
    if trace.is_some() && method != Method::Session {
        return Err(CliError::Usage("--trace needs --method session".into()));
    }
    if (audit.is_some() || schedule.is_some()) && matches!(method, Method::Msr | Method::Mmr) {
        return Err(CliError::Usage("--audit and --schedule need an optimizer method".into()));
    }
    let run = run_method(&sc, method, set);
    if let Err(e) = &run {
        if is_usage(e) {
            return Err(CliError::Usage(e.to_string()));
        }
    }
    csv.push_str(ROW_HEADER);
    csv.push('\n');
    csv.push_str(&row(method, sc.rng_seed, &run));
    csv.push('\n');
    let r = match run {
        Ok(r) => r,
        Err(Error::Infeasible(m)) => {
            eprintln!("infeasible: {m}");
            return Ok(Status::Infeasible);
        }
        Err(e) => {
            eprintln!("{e}");
            return Ok(Status::Infeasible);
        }
    };
    if let Some(path) = trace {
        write_file(path, &trace_csv(&r.trace))?;
    }
    if let Some(sch) = &r.schedule {
        if let Some(path) = schedule {
            write_file(path, &sch.to_json()?)?;
        }
        if let Some(path) = audit {
            let rep = replay_schedule(sch, &sc, set.delta)?;
            write_file(path, &rep.to_json()?)?;
        }
    }
    if r.feasible {
        Ok(Status::Ok)
    } else {
        eprintln!("infeasible: worst residual {:e}", r.outcome.max_residual());
        Ok(Status::Infeasible)
    }
}

fn check_methods<T>(methods: &[T]) -> Result<(), CliError> {
    if methods.is_empty() {
        Err(CliError::Usage("at least one method is required".into()))
    } else {
        Ok(())
    }
}

fn pareto(common: &Common, set: &Settings, lambdas: &[f64], methods: &[Method], csv: &mut String) -> Result<Status, CliError> {
    check_methods(methods)?;
    if lambdas.is_empty() {
        return Err(CliError::Usage("at least one lambda is required".into()));
    }
    let base = base_scenario(common, common.seed)?;
    let mut points = Vec::new();
    for &l in lambdas {
        let mut sc = base.clone();
        set_lambda(&mut sc, l)?;
        for &m in methods {
            points.push((l, m, sc.clone()));
        }
    }
    let runs: Vec<flround::Result<MethodRun>> = points.par_iter().map(|(_, m, sc)| run_method(sc, *m, set)).collect();
    let mut status = Status::Ok;
    for ((l, m, _), run) in points.iter().zip(&runs) {
        note_failure(&format!("{} at lambda {l}", m.name()), run)?;
        if failed(run) {
            status = Status::Infeasible;
        }
    }
    // session points that are feasible form the reference front
    let front: Vec<(f64, f64)> = points
        .iter()
        .zip(&runs)
        .filter(|((_, m, _), r)| *m == Method::Session && !failed(r))
        .map(|(_, r)| {
            let o = &r.as_ref().unwrap().outcome;
            (o.latency, o.total_energy())
        })
        .collect();
    csv.push_str("method,lambda,T_s,E_total_J,objective,feasible,dominated\n");
    let mut all_dominated = true;
    for ((l, m, _), run) in points.iter().zip(&runs) {
        let (t, e, obj, ok) = match run {
            Ok(r) => (r.outcome.latency, r.outcome.total_energy(), r.outcome.objective, r.feasible),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN, false),
        };
        let dominated = if *m == Method::Session {
            String::new()
        } else {
            let d = ok && front.iter().any(|&(ft, fe)| ft <= t && fe <= e);
            all_dominated &= d;
            d.to_string()
        };
        csv.push_str(&format!("{},{},{},{},{},{ok},{dominated}\n", m.name(), sig9(*l), sig9(t), sig9(e), sig9(obj)));
    }
    if methods.contains(&Method::Session) && methods.len() > 1 {
        eprintln!("session front dominates the other fronts: {all_dominated}");
    }
    Ok(status)
}

fn orderings(common: &Common, set: &Settings, lambda: Option<f64>, csv: &mut String) -> Result<Status, CliError> {
    let mut sc = base_scenario(common, common.seed)?;
    if let Some(l) = lambda {
        set_lambda(&mut sc, l)?;
    }
    if sc.num_fl() > ORDERING_CAP {
        return Err(CliError::Usage(format!(
            "{} FL UEs; enumerating orderings is limited to {ORDERING_CAP}",
            sc.num_fl()
        )));
    }
    let rigid = solve_rigid(&sc, &set.rigid())?;
    let pick = ordering_from_rigid(&rigid.solution, &sc);
    let ranked = enumerate_orderings(&sc, ORDERING_CAP, &set.algorithm1())?;
    csv.push_str("rank,ordering,objective,rigid_based\n");
    let mut status = Status::Ok;
    for (i, (o, obj)) in ranked.iter().enumerate() {
        if !obj.is_finite() {
            status = Status::Infeasible;
        }
        csv.push_str(&format!("{},{o},{},{}\n", i + 1, sig9(*obj), *o == pick));
    }
    if let Some(rank) = ranked.iter().position(|(o, _)| *o == pick) {
        eprintln!("rigid-based ordering {pick} ranks {} of {}", rank + 1, ranked.len());
    }
    Ok(status)
}

fn sweep(
    common: &Common,
    set: &Settings,
    param: Param,
    values: &[f64],
    methods: &[Method],
    lambda: Option<f64>,
    csv: &mut String,
) -> Result<Status, CliError> {
    check_methods(methods)?;
    if values.is_empty() {
        return Err(CliError::Usage("at least one value is required".into()));
    }
    if lambda.is_some() && param == Param::Lambda {
        return Err(CliError::Usage("--lambda conflicts with --param lambda".into()));
    }
    let mut points = Vec::new();
    for &v in values {
        let mut sc = sweep_scenario(common, param, v)?;
        if let Some(l) = lambda {
            set_lambda(&mut sc, l)?;
        }
        for &m in methods {
            points.push((v, m, sc.clone()));
        }
    }
    // rows come back in point order whatever order they finish in
    let runs: Vec<flround::Result<MethodRun>> = points.par_iter().map(|(_, m, sc)| run_method(sc, *m, set)).collect();
    csv.push_str(&format!("param,value,{ROW_HEADER}\n"));
    let mut status = Status::Ok;
    for ((v, m, sc), run) in points.iter().zip(&runs) {
        note_failure(&format!("{} at {}={v}", m.name(), param.name()), run)?;
        if failed(run) {
            status = Status::Infeasible;
        }
        csv.push_str(&format!("{},{},{}\n", param.name(), sig9(*v), row(*m, sc.rng_seed, run)));
    }
    Ok(status)
}

fn baselines(
    common: &Common,
    set: &Settings,
    methods: &[Baseline],
    lambda: Option<f64>,
    timeline: Option<&Path>,
    csv: &mut String,
) -> Result<Status, CliError> {
    check_methods(methods)?;
    if timeline.is_some() && methods.len() != 1 {
        return Err(CliError::Usage("--timeline needs exactly one method".into()));
    }
    let mut sc = base_scenario(common, common.seed)?;
    if let Some(l) = lambda {
        set_lambda(&mut sc, l)?;
    }
    csv.push_str(ROW_HEADER);
    csv.push('\n');
    let mut status = Status::Ok;
    for &b in methods {
        let policy = match b {
            Baseline::Msr => Policy::Msr,
            Baseline::Mmr => Policy::Mmr,
        };
        let run = run_policy(&sc, policy, &set.sim(timeline.is_some())).map(|r| {
            if let Some(path) = timeline {
                if let Err(e) = write_file(path, &timeline_csv(&r.timeline)) {
                    eprintln!("{e}");
                }
            }
            MethodRun {
                feasible: r.outcome.is_feasible(FEAS_TOL),
                outcome: r.outcome,
                iterations: 0,
                schedule: None,
                trace: Vec::new(),
            }
        });
        note_failure(b.to_possible_value().unwrap().get_name(), &run)?;
        if failed(&run) {
            status = Status::Infeasible;
        }
        csv.push_str(&row(b.into(), sc.rng_seed, &run));
        csv.push('\n');
    }
    Ok(status)
}
