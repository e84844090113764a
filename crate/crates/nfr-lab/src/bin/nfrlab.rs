//! Command-line front end: tree enumeration, operator and term-family
//! evaluation on stored fields, the two solvers, cross-validation, and the
//! experiment suites.
//!
//! Exit codes: 0 on success, 1 when a run completes but a declared check
//! fails (suite failures, replay mismatches, non-converging iterations),
//! 2 on budget refusals and configuration or file errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use nfr_lab::ensemble;
use nfr_lab::gauge::gauge_forward;
use nfr_lab::operators::{
    eval_cubic_t, eval_cubic_t_physical, eval_quintic, interaction_rhs, split_cubic,
};
use nfr_lab::schedule::{ScheduleLaw, ThresholdSchedule};
use nfr_lab::solver::{
    cross_validate, measure_c_hat, solve_normal_form, solve_reference, write_trajectory_to,
    SolverConfig, SolverError,
};
use nfr_lab::suite::{replay, run_suite, ExperimentSpec, SuiteKind};
use nfr_lab::terms::{eval_remainder, eval_t0, eval_tq, eval_tt1, OpBudget, TermsError};
use nfr_lab::trees::enumerate_trees;
use nfr_lab::{FrequencyGrid, SpectralField};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nfrlab",
    about = "Numerical laboratory for normal-form reduction of the gauged derivative NLS flow"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ordered-tree combinatorics.
    Trees {
        #[command(subcommand)]
        cmd: TreesCmd,
    },
    /// Single-operator evaluation on a field.
    Op {
        #[command(subcommand)]
        cmd: OpCmd,
    },
    /// Term-family evaluation on a field.
    Nfr {
        #[command(subcommand)]
        cmd: NfrCmd,
    },
    /// Integrate the flow from a config file.
    Solve {
        #[command(subcommand)]
        cmd: SolveCmd,
    },
    /// Compare the two solvers.
    Validate {
        #[command(subcommand)]
        cmd: ValidateCmd,
    },
    /// Run and replay experiment suites.
    Suite {
        #[command(subcommand)]
        cmd: SuiteCmd,
    },
}

#[derive(Subcommand)]
enum TreesCmd {
    /// Print the tree count for each generation up to the given depth.
    Enumerate {
        #[arg(long, default_value_t = 6)]
        max_level: usize,
    },
}

#[derive(Subcommand)]
enum OpCmd {
    /// Apply one operator and report the norms of the result.
    Eval {
        #[arg(long, value_enum)]
        op: OpName,
        #[command(flatten)]
        input: FieldSource,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Sobolev index for the reported norms.
        #[arg(long, default_value_t = 0.6)]
        s: f64,
        /// First-generation cutoff; split operators only.
        #[arg(long, default_value_t = 16.0)]
        cutoff: f64,
        /// Write the output field here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OpName {
    /// Substituted derivative cubic, frequency route.
    Cubic,
    /// Substituted derivative cubic, dealiased physical route.
    CubicPhysical,
    /// Substituted quintic.
    Quintic,
    /// Full interaction right-hand side.
    Rhs,
    /// Low-modulation part of the derivative cubic.
    SplitLow,
    /// High-modulation part of the derivative cubic.
    SplitHigh,
}

#[derive(Subcommand)]
enum NfrCmd {
    /// Evaluate one term family and report the norms of the result.
    Eval {
        #[arg(long, value_enum)]
        family: FamilyName,
        /// Truncation level J the family is taken at.
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[command(flatten)]
        input: FieldSource,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, default_value_t = 0.6)]
        s: f64,
        #[arg(long, default_value_t = 16.0)]
        n_cutoff: f64,
        #[arg(long, value_enum, default_value_t = LawName::Minimal)]
        law: LawName,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyName {
    /// Boundary family (evaluated at the endpoints, not integrated).
    Boundary,
    /// Quintic-substitution family.
    QuinticSubstitution,
    /// Almost-resonant window family.
    WindowResonant,
    /// Remainder passed to the next reduction step.
    Remainder,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum LawName {
    Minimal,
    Polynomial,
}

impl From<LawName> for ScheduleLaw {
    fn from(law: LawName) -> ScheduleLaw {
        match law {
            LawName::Minimal => ScheduleLaw::Minimal,
            LawName::Polynomial => ScheduleLaw::Polynomial,
        }
    }
}

/// Where an input field comes from: a stored file, a Gaussian profile, or
/// a seeded random draw with unit H^s norm.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct FieldSource {
    /// Field file (`# nfr-lab spectral field` format).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Amplitude of Gaussian data `eps·e^{-x²/4}`; needs --n/--box-length.
    #[arg(long)]
    gaussian: Option<f64>,
    /// Seed for a random unit-norm field; needs --n/--box-length.
    #[arg(long)]
    random_seed: Option<u64>,
}

/// Grid for generated (non-file) inputs; ignored when --input is given.
#[derive(Args)]
struct GridArgs {
    /// Mode count (a power of two).
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Periodic box length.
    #[arg(long, default_value_t = 20.0)]
    box_length: f64,
}

#[derive(Subcommand)]
enum SolveCmd {
    /// Fourth-order integration of the full interaction flow.
    Reference {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fixed-point iteration of the truncated normal form.
    Nfr {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum ValidateCmd {
    /// Run both solvers from one config and report the discrepancy.
    Cross {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum SuiteCmd {
    /// Run a suite from a spec file or canonical parameters.
    Run {
        /// Spec file (TOML). Mutually exclusive with --suite.
        #[arg(long, conflicts_with = "suite")]
        spec: Option<PathBuf>,
        /// Suite name for a canonical run: trees, operator_bounds,
        /// weak_bounds, decay, solver_xval, conservation.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "suite-out")]
        outdir: PathBuf,
    },
    /// Re-run the spec embedded in a report and compare bitwise.
    Replay {
        #[arg(long)]
        report: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// Solve/validate config file.

/// Config file for `solve` and `validate`: the solver fields at top level,
/// plus where the data comes from and where results go.
#[derive(Debug, Serialize, Deserialize)]
struct RunConfig {
    #[serde(flatten)]
    solver: SolverConfig,
    initial: InitialSpec,
    #[serde(default)]
    output: OutputSpec,
    #[serde(default)]
    constant: ConstantSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum InitialSpec {
    /// `epsilon · e^{-x²/4}`, ungauged.
    Gaussian { epsilon: f64 },
    /// Stored ungauged field.
    File { path: PathBuf },
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct OutputSpec {
    /// Directory for trajectory and report files; default current dir.
    dir: Option<PathBuf>,
}

/// Controls for the measured contraction constant ĉ.
#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct ConstantSpec {
    /// Pin the constant instead of measuring it.
    c_hat: Option<f64>,
    samples: usize,
    seed: u64,
    /// Reference cutoff the level-1 family norms are scaled by.
    n_ref: f64,
}

impl Default for ConstantSpec {
    fn default() -> Self {
        ConstantSpec { c_hat: None, samples: 20, seed: 1, n_ref: 16.0 }
    }
}

impl RunConfig {
    fn load(path: &PathBuf) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    fn initial_field(&self) -> Result<SpectralField, CliError> {
        match &self.initial {
            InitialSpec::Gaussian { epsilon } => {
                Ok(ensemble::gaussian_data(self.solver.grid(), *epsilon))
            }
            InitialSpec::File { path } => {
                let field = nfr_lab::grid::read_field_from(path)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                if field.grid() != self.solver.grid() {
                    return Err(CliError::config(format!(
                        "{}: field grid (n={}, L={}) does not match the config grid (n={}, L={})",
                        path.display(),
                        field.grid().n(),
                        field.grid().box_length(),
                        self.solver.n,
                        self.solver.box_length,
                    )));
                }
                Ok(field)
            }
        }
    }

    fn outdir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn resolve_c_hat(&self) -> Result<f64, CliError> {
        if let Some(c) = self.constant.c_hat {
            return Ok(c);
        }
        measure_c_hat(
            self.solver.grid(),
            self.solver.s,
            self.constant.n_ref,
            self.solver.schedule_law,
            self.constant.seed,
            self.constant.samples,
        )
        .map_err(CliError::from)
    }
}

// ---------------------------------------------------------------------------
// Error-to-exit-code plumbing.

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: 2 }
    }

    fn failure(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: 1 }
    }
}

impl From<TermsError> for CliError {
    fn from(e: TermsError) -> Self {
        CliError { message: e.to_string(), code: 2 }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        let code = match &e {
            SolverError::NotCompliant { .. } | SolverError::Terms(_) => 2,
            SolverError::BlowUp { .. } | SolverError::NoConvergence { .. } => 1,
        };
        CliError { message: e.to_string(), code }
    }
}

fn io_err(context: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("{}: {e}", context.display()))
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.cmd {
        Cmd::Trees { cmd: TreesCmd::Enumerate { max_level } } => trees_enumerate(max_level),
        Cmd::Op { cmd: OpCmd::Eval { op, input, grid, t, s, cutoff, output } } => {
            op_eval(op, input, grid, t, s, cutoff, output)
        }
        Cmd::Nfr { cmd: NfrCmd::Eval { family, level, input, grid, t, s, n_cutoff, law, output } } => {
            nfr_eval(family, level, input, grid, t, s, n_cutoff, law, output)
        }
        Cmd::Solve { cmd: SolveCmd::Reference { config } } => solve_cmd(&config, false),
        Cmd::Solve { cmd: SolveCmd::Nfr { config } } => solve_cmd(&config, true),
        Cmd::Validate { cmd: ValidateCmd::Cross { config } } => validate_cross(&config),
        Cmd::Suite { cmd: SuiteCmd::Run { spec, suite, seed, outdir } } => {
            suite_run(spec, suite, seed, outdir)
        }
        Cmd::Suite { cmd: SuiteCmd::Replay { report } } => suite_replay(&report),
    }
}

fn trees_enumerate(max_level: usize) -> Result<u8, CliError> {
    for level in 1..=max_level {
        let trees = enumerate_trees(level)
            .map_err(|e| CliError::config(format!("generation {level}: {e}")))?;
        println!("J={level} count={}", trees.len());
    }
    Ok(0)
}

fn load_field(source: &FieldSource, gen: &GridArgs, s: f64) -> Result<SpectralField, CliError> {
    if let Some(path) = &source.input {
        return nfr_lab::grid::read_field_from(path).map_err(|e| io_err(path, e));
    }
    let grid = FrequencyGrid::new(gen.n, gen.box_length);
    if let Some(eps) = source.gaussian {
        return Ok(ensemble::gaussian_data(grid, eps));
    }
    if let Some(seed) = source.random_seed {
        let mut rng = ensemble::stream(seed, "cli", 0);
        return Ok(ensemble::unit_field(grid, s, &mut rng));
    }
    Err(CliError::config("no input source given"))
}

fn print_norms(label: &str, field: &SpectralField, s: f64, output: Option<PathBuf>) -> Result<u8, CliError> {
    if let Some(path) = &output {
        nfr_lab::grid::write_field_to(path, field).map_err(|e| io_err(path, e))?;
    }
    let doc = serde_json::json!({
        "operator": label,
        "n": field.grid().n(),
        "box_length": field.grid().box_length(),
        "l2_norm": field.l2_norm(),
        "hs_norm": { "s": s, "value": field.hs_norm(s) },
        "weak_norm": { "s": s - 1.0, "value": field.hs_norm(s - 1.0) },
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("norms serialize"));
    Ok(0)
}

fn op_eval(
    op: OpName,
    input: FieldSource,
    grid: GridArgs,
    t: f64,
    s: f64,
    cutoff: f64,
    output: Option<PathBuf>,
) -> Result<u8, CliError> {
    let v = load_field(&input, &grid, s)?;
    let (label, result) = match op {
        OpName::Cubic => ("cubic", eval_cubic_t(&v, t)),
        OpName::CubicPhysical => ("cubic-physical", eval_cubic_t_physical(&v, t)),
        OpName::Quintic => ("quintic", eval_quintic(&v, t)),
        OpName::Rhs => ("rhs", interaction_rhs(&v, t)),
        OpName::SplitLow => ("split-low", split_cubic(&v, t, cutoff).0),
        OpName::SplitHigh => ("split-high", split_cubic(&v, t, cutoff).1),
    };
    print_norms(label, &result, s, output)
}

#[allow(clippy::too_many_arguments)]
fn nfr_eval(
    family: FamilyName,
    level: usize,
    input: FieldSource,
    grid: GridArgs,
    t: f64,
    s: f64,
    n_cutoff: f64,
    law: LawName,
    output: Option<PathBuf>,
) -> Result<u8, CliError> {
    let v = load_field(&input, &grid, s)?;
    let sched = ThresholdSchedule::new(s, n_cutoff, law.into());
    let budget = OpBudget::default();
    let (label, result) = match family {
        FamilyName::Boundary => ("boundary", eval_t0(level, &v, t, &sched, budget)),
        FamilyName::QuinticSubstitution => {
            ("quintic-substitution", eval_tq(level, &v, t, &sched, budget))
        }
        FamilyName::WindowResonant => ("window-resonant", eval_tt1(level, &v, t, &sched, budget)),
        FamilyName::Remainder => ("remainder", eval_remainder(level, &v, t, &sched, budget)),
    };
    print_norms(label, &result?, s, output)
}

fn solve_cmd(config: &PathBuf, normal_form: bool) -> Result<u8, CliError> {
    let cfg = RunConfig::load(config)?;
    let u0 = cfg.initial_field()?;
    let outdir = cfg.outdir();
    std::fs::create_dir_all(&outdir).map_err(|e| io_err(&outdir, e))?;
    let s = cfg.solver.s;

    let (traj, residuals, compliance) = if normal_form {
        let c_hat = cfg.resolve_c_hat()?;
        let v0 = gauge_forward(&u0);
        let run = solve_normal_form(&v0, &cfg.solver, c_hat)?;
        (run.trajectory, Some(run.residuals), Some(run.compliance))
    } else {
        (solve_reference(&u0, &cfg.solver)?, None, None)
    };

    let stem = if normal_form { "nfr" } else { "reference" };
    let traj_path = outdir.join(format!("{stem}_trajectory.csv"));
    write_trajectory_to(&traj_path, &traj).map_err(|e| io_err(&traj_path, e))?;

    let norms: Vec<f64> = (0..traj.len()).map(|k| traj.field(k).hs_norm(s)).collect();
    let doc = serde_json::json!({
        "kind": traj.meta.kind,
        "config_hash": traj.meta.config_hash,
        "trajectory": traj_path,
        "snapshots": traj.len(),
        "hs_norms": { "s": s, "values": norms },
        "picard_residuals": residuals,
        "compliance": compliance,
    });
    let report_path = outdir.join(format!("{stem}_run.json"));
    std::fs::write(&report_path, serde_json::to_string_pretty(&doc).expect("run serializes"))
        .map_err(|e| io_err(&report_path, e))?;
    println!("{}", serde_json::to_string_pretty(&doc).expect("run serializes"));
    Ok(0)
}

fn validate_cross(config: &PathBuf) -> Result<u8, CliError> {
    let cfg = RunConfig::load(config)?;
    let u0 = cfg.initial_field()?;
    let c_hat = cfg.resolve_c_hat()?;
    let outdir = cfg.outdir();
    std::fs::create_dir_all(&outdir).map_err(|e| io_err(&outdir, e))?;
    let xval = cross_validate(&u0, &cfg.solver, c_hat)?;
    let doc = serde_json::to_value(&xval).expect("cross-validation serializes");
    let report_path = outdir.join("cross_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&doc).expect("serializes"))
        .map_err(|e| io_err(&report_path, e))?;
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializes"));
    Ok(0)
}

fn suite_run(
    spec_path: Option<PathBuf>,
    suite: Option<String>,
    seed: u64,
    outdir: PathBuf,
) -> Result<u8, CliError> {
    let spec = match (spec_path, suite) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            toml::from_str::<ExperimentSpec>(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => {
            let kind = SuiteKind::parse(&name)
                .ok_or_else(|| CliError::config(format!("unknown suite '{name}'")))?;
            ExperimentSpec::canonical(kind, seed, outdir)
        }
        (None, None) => return Err(CliError::config("pass --spec <file> or --suite <name>")),
    };
    let report = run_suite(&spec).map_err(|e| CliError {
        message: e.to_string(),
        code: e.exit_code() as u8,
    })?;
    let verdict = if report.passed { "pass" } else { "FAIL" };
    for case in &report.cases {
        println!(
            "[{}] {} — {}",
            if case.pass { "pass" } else { "FAIL" },
            case.name,
            format_case_summary(case),
        );
    }
    println!(
        "suite {}: {} ({} cases, {:.1}s) -> {}",
        spec.suite.name(),
        verdict,
        report.cases.len(),
        report.wall_seconds,
        spec.outdir.display(),
    );
    if report.passed {
        Ok(0)
    } else {
        Err(CliError::failure(format!("suite {} has failing cases", spec.suite.name())))
    }
}

fn format_case_summary(case: &nfr_lab::suite::CaseRecord) -> String {
    if let Some(fit) = case.slopes.first() {
        format!(
            "slope {:.3} (bound {:.3}), residual {:.3}",
            fit.slope, fit.slope_bound, fit.residual
        )
    } else if case.values.is_empty() {
        "empty".to_string()
    } else {
        let checked = case.values.iter().filter(|v| v.bound.is_some()).count();
        format!("{} values, {} checked", case.values.len(), checked)
    }
}

fn suite_replay(report: &PathBuf) -> Result<u8, CliError> {
    let outcome = replay(report).map_err(|e| CliError {
        message: e.to_string(),
        code: e.exit_code() as u8,
    })?;
    if outcome.matched {
        println!("replay matched: every measured value identical to 0 ulp");
        Ok(0)
    } else {
        for diff in &outcome.diffs {
            println!("diff: {diff}");
        }
        Err(CliError::failure(format!(
            "replay diverged in {} place(s)",
            outcome.diffs.len()
        )))
    }
}
