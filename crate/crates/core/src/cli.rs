//! Command-line front end: `analyze`, `simulate`, `compare`, `scenarios`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 divergence,
//! 4 run not settled, 5 comparison failed.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::{predict, AnalysisReport};
use crate::error::{ScenarioError, SimError};
use crate::scenario::{builtin, builtin_summary, Scenario, BUILTIN_NAMES};
use crate::sim::{compare, detect_clusters, integrate, lyapunov_trace, Reconciliation, SimOutcome, TopicVerdict, Trajectory, Verdict};
use crate::weights::{FeedbackMode, SignSmoothing, DEFAULT_SIGMOID_GAIN};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_NOT_SETTLED: u8 = 4;
pub const EXIT_COMPARE_FAIL: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "multitopic", version, about = "Multi-topic opinion dynamics: simulate and predict consensus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SmoothingArg {
    Exact,
    Sigmoid,
    Signum,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Predict the consensus regime from the coupling structure.
    Analyze {
        /// Scenario file, or the name of a built-in scenario.
        scenario: String,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a scenario and report clusters.
    Simulate {
        /// Scenario file, or the name of a built-in scenario.
        #[arg(required_unless_present = "all")]
        scenario: Option<String>,
        /// Run every built-in scenario concurrently.
        #[arg(long, conflicts_with = "scenario")]
        all: bool,
        /// Integration step.
        #[arg(long)]
        h: Option<f64>,
        /// Final time.
        #[arg(long)]
        tf: Option<f64>,
        /// Cluster gap tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum)]
        smoothing: Option<SmoothingArg>,
        /// Sigmoid gain.
        #[arg(long)]
        ke: Option<f64>,
        /// Write every `stride`-th step to the CSV.
        #[arg(long)]
        stride: Option<usize>,
        /// Directory for `<name>.csv` and `<name>.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate and check the outcome against the prediction.
    Compare {
        /// Scenario file, or the name of a built-in scenario.
        scenario: String,
    },
    /// List the built-in scenarios, optionally writing their files.
    Scenarios {
        #[arg(long)]
        emit: Option<PathBuf>,
    },
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Io { .. } => EXIT_IO,
            _ => EXIT_INVALID,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_INVALID,
        };
        Failure::new(code, e.to_string())
    }
}

/// Loads a scenario file; a missing path that names a built-in loads it.
pub fn resolve(arg: &str) -> Result<Scenario, Failure> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = builtin(arg) {
            return Ok(s);
        }
    }
    Ok(Scenario::load(path)?)
}

fn blocks(b: &[Vec<usize>]) -> String {
    b.iter()
        .map(|c| {
            let m: Vec<String> = c.iter().map(|i| (i + 1).to_string()).collect();
            format!("{{{}}}", m.join(","))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn numbers(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{:.6}", x + 0.0)).collect();
    format!("[{}]", s.join(", "))
}

fn smoothing_label(s: SignSmoothing) -> String {
    match s {
        SignSmoothing::Exact => "exact".to_string(),
        SignSmoothing::Sigmoid { gain } => format!("sigmoid (gain {gain})"),
        SignSmoothing::Signum { alpha } => format!("signum (alpha {alpha})"),
    }
}

pub fn analysis_report(s: &Scenario, r: &AnalysisReport) -> String {
    let mut out = String::new();
    let c = &r.classification;
    let yes = |b: bool| if b { "yes" } else { "no" };
    let _ = writeln!(out, "scenario: {}", s.name);
    let _ = writeln!(out, "agents: {}  topics: {}  edges: {}", s.topology.n, s.topology.d, s.topology.m());
    let _ = writeln!(out, "regime: {}", r.regime.label());
    match r.cluster_bound {
        Some(b) => {
            let _ = writeln!(out, "cluster bound: {b}");
        }
        None => {
            let _ = writeln!(out, "cluster bound: none");
        }
    }
    let _ = writeln!(out, "all couplings PSD: {}", yes(r.spectral.all_psd));
    let _ = writeln!(out, "all-topic coupled: {}", yes(c.all_topic_coupled));
    let _ = writeln!(out, "homogeneous: {}", yes(c.homogeneous));
    let _ = writeln!(out, "direct gains all zero: {}", yes(c.phi_zero));
    let _ = writeln!(out, "complete coupling graphs: {}", yes(c.complete_coupling_graphs));
    out.push_str("edges:\n");
    for (e, check) in s.topology.edges.iter().zip(&r.spectral.per_edge) {
        let _ = writeln!(out, "  {e}: {} eigenvalues {}", check.class.label(), numbers(&check.eigenvalues));
    }
    out.push_str("topics:\n");
    for (p, comps) in r.topic_components.iter().enumerate() {
        let _ = writeln!(
            out,
            "  {}: p-coupled {}, consensus graph components {}",
            p + 1,
            yes(c.p_coupled[p]),
            blocks(comps)
        );
    }
    if r.warnings.is_empty() {
        out.push_str("warnings: none\n");
    } else {
        out.push_str("warnings:\n");
        for w in &r.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}

pub fn outcome_report(s: &Scenario, traj: &Trajectory, o: &SimOutcome) -> String {
    let mut out = String::new();
    let mode = match s.feedback.mode {
        FeedbackMode::InverseProportional => "inverse-proportional",
        FeedbackMode::Proportional => "proportional",
    };
    let _ = writeln!(out, "scenario: {}", s.name);
    let _ = writeln!(out, "feedback: {mode}, {}", smoothing_label(s.feedback.smoothing));
    let _ = writeln!(out, "step: {}  horizon: {}  cluster tol: {:e}", s.solver.step, traj.times.last().copied().unwrap_or(0.0), s.solver.cluster_tol);
    let _ = writeln!(
        out,
        "settled: {} (|dx/dt|_inf = {:.3e}, threshold {:e})",
        if o.settled { "yes" } else { "no" },
        o.final_rate,
        s.solver.steady_tol
    );
    out.push_str("topics:\n");
    for (p, v) in o.verdicts.iter().enumerate() {
        let values = numbers(&o.cluster_values[p]);
        match v {
            TopicVerdict::Consensus => {
                let _ = writeln!(out, "  {}: consensus at {values}", p + 1);
            }
            TopicVerdict::Clustered(b) => {
                let _ = writeln!(out, "  {}: clustered {} at {values}", p + 1, blocks(b));
            }
        }
    }
    let _ = writeln!(out, "global clusters: {}", blocks(&o.partition.global));
    let trace = lyapunov_trace(traj);
    let _ = writeln!(
        out,
        "lyapunov: {} (V0 = {:.6}, V(tf) = {:.6}, max increase {:.3e})",
        if o.lyapunov_monotone { "non-increasing" } else { "INCREASED" },
        trace.values.first().copied().unwrap_or(0.0),
        trace.values.last().copied().unwrap_or(0.0),
        trace.max_violation
    );
    let _ = writeln!(out, "conservation drift: {:.3e}", o.conservation_drift);
    out
}

pub fn reconciliation_report(s: &Scenario, r: &Reconciliation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", s.name);
    let _ = writeln!(out, "regime: {}", r.regime.label());
    let _ = writeln!(out, "verdict: {}", r.verdict.label());
    for n in &r.notes {
        let _ = writeln!(out, "  {n}");
    }
    out
}

/// `t,agent,topic,value` rows at every `stride`-th step plus the last one.
pub fn trajectory_csv(traj: &Trajectory, stride: usize) -> String {
    let stride = stride.max(1);
    let last = traj.len().saturating_sub(1);
    let mut out = String::from("t,agent,topic,value\n");
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        if k % stride != 0 && k != last {
            continue;
        }
        for i in 0..traj.n {
            for p in 0..traj.d {
                let _ = writeln!(out, "{t},{},{},{}", i + 1, p + 1, x[i * traj.d + p]);
            }
        }
    }
    out
}

/// Writes through a temporary sibling so a failed write leaves no file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let tmp = path.with_extension("partial");
    let io = |e: std::io::Error| Failure::new(EXIT_IO, format!("{}: {e}", path.display()));
    fs::write(&tmp, contents).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", dir.display())))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub h: Option<f64>,
    pub tf: Option<f64>,
    pub tol: Option<f64>,
    pub smoothing: Option<SmoothingArg>,
    pub ke: Option<f64>,
    pub stride: Option<usize>,
}

pub fn apply_overrides(s: &mut Scenario, o: &Overrides) -> Result<(), Failure> {
    if let Some(h) = o.h {
        s.solver.step = h;
    }
    if let Some(tf) = o.tf {
        s.solver.horizon = tf;
    }
    if let Some(tol) = o.tol {
        s.solver.cluster_tol = tol;
    }
    if let Some(stride) = o.stride {
        if stride == 0 {
            return Err(Failure::new(EXIT_INVALID, "--stride must be at least 1"));
        }
        s.solver.stride = stride;
    }
    if let Some(sm) = o.smoothing {
        s.feedback.smoothing = match sm {
            SmoothingArg::Exact => SignSmoothing::Exact,
            SmoothingArg::Sigmoid => SignSmoothing::Sigmoid {
                gain: DEFAULT_SIGMOID_GAIN,
            },
            SmoothingArg::Signum => SignSmoothing::Signum {
                alpha: crate::weights::DEFAULT_SIGNUM_ALPHA,
            },
        };
    }
    if let Some(ke) = o.ke {
        match &mut s.feedback.smoothing {
            SignSmoothing::Sigmoid { gain } => *gain = ke,
            _ => return Err(Failure::new(EXIT_INVALID, "--ke applies to sigmoid smoothing only")),
        }
    }
    for (name, v) in [("--h", s.solver.step), ("--tf", s.solver.horizon), ("--tol", s.solver.cluster_tol)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Failure::new(EXIT_INVALID, format!("{name} must be positive and finite")));
        }
    }
    s.feedback
        .check()
        .map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))
}

/// Result of one simulation, ready to be printed or written.
pub struct SimRun {
    pub scenario: Scenario,
    pub report: String,
    pub csv: String,
    pub settled: bool,
}

pub fn run_simulation(s: Scenario) -> Result<SimRun, Failure> {
    let traj = integrate(&s.initial, &s.topology, &s.spec, &s.feedback, &s.solver.settings())?;
    let outcome = detect_clusters(&traj, s.solver.cluster_tol, s.solver.steady_tol);
    Ok(SimRun {
        report: outcome_report(&s, &traj, &outcome),
        csv: trajectory_csv(&traj, s.solver.stride),
        settled: outcome.settled,
        scenario: s,
    })
}

fn emit_run(run: &SimRun, out: Option<&Path>, stdout: &mut String) -> Result<u8, Failure> {
    stdout.push_str(&run.report);
    if !run.settled {
        return Err(Failure::new(
            EXIT_NOT_SETTLED,
            format!("{}: not settled; extend the horizon (--tf)", run.scenario.name),
        ));
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_atomic(&dir.join(format!("{}.csv", run.scenario.name)), &run.csv)?;
        write_atomic(&dir.join(format!("{}.txt", run.scenario.name)), &run.report)?;
    }
    Ok(EXIT_OK)
}

fn simulate_all(o: &Overrides, out: Option<&Path>, stdout: &mut String) -> Result<u8, Failure> {
    let mut scenarios = Vec::new();
    for name in BUILTIN_NAMES {
        let mut s = builtin(name).expect("listed built-in");
        apply_overrides(&mut s, o)?;
        scenarios.push(s);
    }
    let results: Vec<Result<SimRun, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .into_iter()
            .map(|s| scope.spawn(move || run_simulation(s)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation worker panicked"))
            .collect()
    });
    let mut code = EXIT_OK;
    let mut errors = Vec::new();
    for r in results {
        let outcome = r.and_then(|run| emit_run(&run, out, stdout));
        if let Err(f) = outcome {
            code = code.max(f.code);
            errors.push(f.message);
        }
        stdout.push('\n');
    }
    if errors.is_empty() {
        Ok(code)
    } else {
        Err(Failure::new(code, errors.join("\n")))
    }
}

/// Runs one command, appending its standard output to `stdout`.
pub fn execute(cli: Cli, stdout: &mut String) -> Result<u8, Failure> {
    match cli.command {
        Command::Analyze { scenario, out } => {
            let s = resolve(&scenario)?;
            let r = predict(&s.topology, &s.spec).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
            let text = analysis_report(&s, &r);
            match out {
                Some(path) => write_atomic(&path, &text)?,
                None => stdout.push_str(&text),
            }
            Ok(EXIT_OK)
        }
        Command::Simulate {
            scenario,
            all,
            h,
            tf,
            tol,
            smoothing,
            ke,
            stride,
            out,
        } => {
            let o = Overrides {
                h,
                tf,
                tol,
                smoothing,
                ke,
                stride,
            };
            if all {
                return simulate_all(&o, out.as_deref(), stdout);
            }
            let mut s = resolve(scenario.as_deref().expect("clap requires a scenario"))?;
            apply_overrides(&mut s, &o)?;
            let run = run_simulation(s)?;
            emit_run(&run, out.as_deref(), stdout)
        }
        Command::Compare { scenario } => {
            let s = resolve(&scenario)?;
            let report = predict(&s.topology, &s.spec).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
            let traj = integrate(&s.initial, &s.topology, &s.spec, &s.feedback, &s.solver.settings())?;
            let outcome = detect_clusters(&traj, s.solver.cluster_tol, s.solver.steady_tol);
            let rec = compare(&report, &outcome);
            stdout.push_str(&reconciliation_report(&s, &rec));
            if !outcome.settled {
                return Err(Failure::new(
                    EXIT_NOT_SETTLED,
                    format!("{}: not settled; extend the horizon", s.name),
                ));
            }
            Ok(match rec.verdict {
                Verdict::Fail => EXIT_COMPARE_FAIL,
                Verdict::Pass | Verdict::Informational => EXIT_OK,
            })
        }
        Command::Scenarios { emit } => {
            if let Some(dir) = &emit {
                ensure_dir(dir)?;
            }
            for name in BUILTIN_NAMES {
                let s = builtin(name).expect("listed built-in");
                let summary = builtin_summary(name).unwrap_or_default();
                match &emit {
                    Some(dir) => {
                        let path = dir.join(format!("{name}.toml"));
                        write_atomic(&path, &s.to_toml())?;
                        let _ = writeln!(stdout, "{name}\t{}", path.display());
                    }
                    None => {
                        let _ = writeln!(stdout, "{name}\t{summary}");
                    }
                }
            }
            Ok(EXIT_OK)
        }
    }
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = String::new();
    let result = execute(cli, &mut stdout);
    let mut handle = std::io::stdout().lock();
    let _ = handle.write_all(stdout.as_bytes());
    let _ = handle.flush();
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
