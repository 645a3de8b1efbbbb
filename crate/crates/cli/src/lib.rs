//! `biotlab`: run, audit and report on Biot poroelasticity simulations.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
//! 3 Picard non-convergence, 4 invariant or inequality violation. Every
//! failure is also written to standard error as one JSON line.

pub mod config;
pub mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use biot_core::cases::Physics;
use biot_core::diagnostics::{
    compatibility_check, energy_audit, mms_convergence, operator_audit, oracle_compare, temporal_convergence, DtRule,
};
use biot_core::mesh::{BcLayout, TriMesh};
use biot_core::operators::{Discretization, DEFAULT_DENSE_CAP, ZERO_EIGENVALUE_TOL};
use biot_core::solver::{picard_solve, weak_form_residual, BiotProblem, PermeabilityArgument, PicardOutcome};
use biot_core::spaces::Field;
use biot_core::Error;
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{parse_config, ConfigError, RunConfig};

/// Largest `|mean(ζⁿ)|`, `|mean(pⁿ)|` accepted in the pure Neumann layout.
pub const MEAN_DRIFT_TOL: f64 = 1e-10;
/// Largest relative reduced/monolithic pressure gap accepted by `compare`.
pub const ORACLE_TOL: f64 = 1e-8;
/// Operator audit thresholds.
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const NEGATIVE_EIGENVALUE_TOL: f64 = 1e-11;
pub const DRIFT_TOL: f64 = 0.25;

#[derive(Debug, Parser)]
#[command(name = "biotlab", version, about = "Finite-element lab for quasi-static nonlinear Biot poroelasticity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the run described by a config file and write its outputs.
    Run { config: PathBuf },
    /// Manufactured-solution convergence study.
    Mms {
        #[arg(long, default_value = "mms1")]
        case: String,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        levels: Vec<usize>,
        /// `h2` (Δt ∝ h²) or `tiny`.
        #[arg(long, default_value = "h2")]
        dt_rule: String,
        /// Mesh level of the temporal study.
        #[arg(long, default_value_t = 16)]
        temporal_n: usize,
        #[arg(long, default_value_t = 0.5)]
        temporal_t: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025")]
        temporal_dts: Vec<f64>,
        /// Skip the temporal study.
        #[arg(long)]
        no_temporal: bool,
        #[arg(long, default_value_t = 1.8)]
        min_order: f64,
        #[arg(long, default_value_t = 0.9)]
        min_temporal_order: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Spectrum of the pressure-to-dilation operator on several meshes.
    Operators {
        #[arg(long, value_delimiter = ',', default_value = "4,8")]
        n: Vec<usize>,
        #[arg(long, default_value = "neumann")]
        bc: String,
        #[arg(long, default_value_t = DEFAULT_DENSE_CAP)]
        cap: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-audit the trajectory stored by a previous `run`.
    Audit { config: PathBuf },
    /// Reduced versus monolithic solve with the permeability frozen.
    Compare { config: PathBuf },
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(ConfigError),
    Core(Error),
    Io { path: PathBuf, message: String },
    Violation(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Config(_) => 2,
            Failure::Core(Error::IncompatibleSource { .. }) => 2,
            Failure::Core(Error::NonConvergence { .. }) => 3,
            Failure::Violation(_) => 4,
            Failure::Core(_) | Failure::Io { .. } => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "Usage",
            Failure::Config(_) => "Config",
            Failure::Core(Error::IncompatibleSource { .. }) => "IncompatibleSource",
            Failure::Core(Error::NonConvergence { .. }) => "NonConvergence",
            Failure::Core(_) => "Solver",
            Failure::Io { .. } => "Io",
            Failure::Violation(_) => "InvariantViolation",
        }
    }

    /// Single-line JSON record for the error stream.
    pub fn record(&self) -> String {
        let mut rec = json!({ "error": self.kind(), "exit_code": self.exit_code() });
        let message = match self {
            Failure::Usage(m) | Failure::Violation(m) => m.clone(),
            Failure::Config(e) => {
                rec["line"] = json!(e.line);
                rec["key"] = json!(e.key);
                e.message.clone()
            }
            Failure::Core(e) => {
                if let Error::NonConvergence { iterations, residual } = e {
                    rec["iterations"] = json!(iterations);
                    rec["residual"] = json!(residual);
                }
                e.to_string()
            }
            Failure::Io { path, message } => {
                rec["path"] = json!(path.display().to_string());
                message.clone()
            }
        };
        rec["message"] = json!(message);
        rec.to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let f = Failure::Usage(e.to_string().lines().next().unwrap_or("").to_string());
            eprintln!("{}", f.record());
            return f.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.record());
            f.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Outcome {
    match command {
        Command::Run { config } => run(&config),
        Command::Mms {
            case,
            levels,
            dt_rule,
            temporal_n,
            temporal_t,
            temporal_dts,
            no_temporal,
            min_order,
            min_temporal_order,
            out,
        } => {
            let rule = DtRule::from_name(&dt_rule).ok_or_else(|| Failure::Usage(format!("unknown dt rule `{dt_rule}`")))?;
            let temporal = (!no_temporal).then_some((temporal_n, temporal_t, temporal_dts.as_slice()));
            mms(&case, &levels, rule, temporal, (min_order, min_temporal_order), &out)
        }
        Command::Operators { n, bc, cap, out } => {
            let layout = BcLayout::from_name(&bc).ok_or_else(|| Failure::Usage(format!("unknown layout `{bc}`")))?;
            operators(&n, layout, cap, &out)
        }
        Command::Audit { config } => audit(&config),
        Command::Compare { config } => compare(&config),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io { path: path.to_path_buf(), message: e.to_string() })
}

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    output::write(dir, name, contents).map_err(|e| Failure::Io { path: dir.join(name), message: e.to_string() })
}

/// Config plus its output directory; a relative `out.dir` is taken from the
/// directory holding the config file.
fn load(path: &Path) -> Result<(RunConfig, PathBuf), Failure> {
    let text = read(path).map_err(|f| match f {
        Failure::Io { message, .. } => Failure::Config(ConfigError { line: None, key: None, message: format!("{}: {message}", path.display()) }),
        other => other,
    })?;
    let cfg = parse_config(&text)?;
    let out = if cfg.out_dir.is_absolute() {
        cfg.out_dir.clone()
    } else {
        path.parent().unwrap_or(Path::new(".")).join(&cfg.out_dir)
    };
    Ok((cfg, out))
}

fn problem(cfg: &RunConfig) -> Result<BiotProblem, Failure> {
    let disc = Discretization::new(TriMesh::unit_square(cfg.n, cfg.layout)?, cfg.physics)?;
    let p = BiotProblem::from_case(disc, cfg.model(), &cfg.case(), cfg.dt, cfg.t_end, cfg.incompatible)?;
    for w in p.warnings() {
        println!("source mean removed at t = {}: integral was {:e}", w.time, w.integral);
    }
    Ok(p)
}

fn settings(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    cfg.resolved()
}

fn solve(cfg: &RunConfig, problem: &BiotProblem, out: &Path, head: &str) -> Result<PicardOutcome, Failure> {
    let outcome = picard_solve(problem, &problem.zero_dilation_guess(), &cfg.picard)?;
    write(out, "picard.csv", &output::picard_csv(head, &outcome.report))?;
    println!(
        "picard ({}): {} iterations, converged = {}",
        outcome.report.mode.name(),
        outcome.report.iterations,
        outcome.report.converged
    );
    Ok(outcome.into_result()?)
}

/// Checks shared by `run` and `audit`; writes `energy_name` and returns the
/// violations found.
fn audit_trajectory(
    problem: &BiotProblem,
    traj: &biot_core::solver::Trajectory,
    out: &Path,
    head: &str,
    energy_name: &str,
) -> Result<(Vec<String>, serde_json::Value), Failure> {
    let mut violations = Vec::new();
    let (ledger, holds) = energy_audit(problem, traj)?;
    write(out, energy_name, &output::energy_csv(head, &ledger, holds))?;
    println!("energy inequality: lhs {:e} rhs {:e} holds = {holds}", ledger.lhs, ledger.rhs);
    if !holds {
        violations.push(format!("energy inequality fails: lhs {:e} > rhs {:e}", ledger.lhs, ledger.rhs));
    }
    let residual = weak_form_residual(problem, traj, PermeabilityArgument::OwnDilation)?;
    println!("weak-form residual: momentum {:e} mass {:e}", residual.momentum, residual.mass);
    let mut summary = json!({
        "energy": { "holds": holds, "lhs": ledger.lhs, "rhs": ledger.rhs, "margin": ledger.margin, "variant": ledger.variant.name() },
        "weak_form_residual": { "momentum": residual.momentum, "mass": residual.mass },
    });
    if problem.disc().layout() == BcLayout::AllNeumann {
        let rec = compatibility_check(problem, traj)?;
        println!("neumann mean drift: {:e}", rec.max_drift);
        summary["neumann_max_mean_drift"] = json!(rec.max_drift);
        if rec.max_drift > MEAN_DRIFT_TOL {
            violations.push(format!("mean drift {:e} exceeds {MEAN_DRIFT_TOL:e}", rec.max_drift));
        }
    }
    Ok((violations, summary))
}

/// Bad command-line values surface from the core as argument errors.
fn usage(e: Error) -> Failure {
    match e {
        Error::InvalidArgument(m) => Failure::Usage(m),
        Error::UnknownCase(_) | Error::CapExceeded { .. } => Failure::Usage(e.to_string()),
        other => Failure::Core(other),
    }
}

fn violation(violations: Vec<String>) -> Outcome {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(violations.join("; ")))
    }
}

fn run(path: &Path) -> Outcome {
    let (cfg, out) = load(path)?;
    let head = output::header("run", &settings(&cfg));
    let problem = problem(&cfg)?;
    let outcome = solve(&cfg, &problem, &out, &head)?;
    let traj = &outcome.trajectory;
    write(&out, "trajectory.dat", &output::trajectory_dat(&head, traj))?;
    write(&out, "config.resolved", &head)?;
    let model = cfg.model();
    for (i, state) in traj.steps.iter().enumerate() {
        let title = format!("biotlab {} step {} t = {}", biot_core::VERSION, i + 1, output::float(traj.times[i + 1]));
        write(&out, &format!("fields_{:04}.vtk", i + 1), &output::vtk(&title, problem.disc().mesh(), state, &model))?;
    }
    let (violations, mut summary) = audit_trajectory(&problem, traj, &out, &head, "energy.csv")?;
    summary["version"] = json!(biot_core::VERSION);
    summary["config"] = settings(&cfg).into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    summary["picard"] = json!({
        "mode": outcome.report.mode.name(),
        "iterations": outcome.report.iterations,
        "converged": outcome.report.converged,
        "final_residual": outcome.report.residuals.last(),
    });
    summary["steps"] = json!(traj.len());
    summary["violations"] = json!(violations);
    write(&out, "summary.json", &format!("{}\n", serde_json::to_string_pretty(&summary).expect("plain json")))?;
    println!("wrote {}", out.display());
    violation(violations)
}

fn audit(path: &Path) -> Outcome {
    let (cfg, out) = load(path)?;
    let head = output::header("audit", &settings(&cfg));
    let problem = problem(&cfg)?;
    let stored = out.join("trajectory.dat");
    let text = read(&stored)?;
    let traj = output::read_trajectory(&text).map_err(|m| Failure::Io { path: stored.clone(), message: m })?;
    let (violations, _) = audit_trajectory(&problem, &traj, &out, &head, "audit_energy.csv")?;
    violation(violations)
}

fn compare(path: &Path) -> Outcome {
    let (cfg, out) = load(path)?;
    let head = output::header("compare", &settings(&cfg));
    let problem = problem(&cfg)?;
    // frozen at the nonlinear limit, so k varies in space and time
    let z: Vec<Field> = if problem.model().is_constant() {
        problem.zero_dilation_guess()
    } else {
        solve(&cfg, &problem, &out, &head)?.trajectory.dilation_trace()
    };
    let rec = oracle_compare(&problem, &z, DEFAULT_DENSE_CAP)?;
    let mut s = head;
    let _ = writeln!(s, "# relative_l2l2 = {}", output::float(rec.relative_l2l2));
    s.push_str("step,max_abs_diff\n");
    for (i, d) in rec.per_step_max.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, output::float(*d));
    }
    write(&out, "compare.csv", &s)?;
    println!("reduced vs monolithic: relative L2(L2) pressure gap {:e}", rec.relative_l2l2);
    if rec.relative_l2l2 > ORACLE_TOL {
        return Err(Failure::Violation(format!("pressure gap {:e} exceeds {ORACLE_TOL:e}", rec.relative_l2l2)));
    }
    Ok(())
}

fn mms(
    case: &str,
    levels: &[usize],
    rule: DtRule,
    temporal: Option<(usize, f64, &[f64])>,
    (min_order, min_temporal_order): (f64, f64),
    out: &Path,
) -> Outcome {
    let mut params = vec![
        ("case", case.to_string()),
        ("levels", levels.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")),
        ("dt_rule", rule.name().to_string()),
        ("min_order", min_order.to_string()),
    ];
    if let Some((n, t, dts)) = temporal {
        params.push(("temporal_n", n.to_string()));
        params.push(("temporal_t", t.to_string()));
        params.push(("temporal_dts", dts.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")));
        params.push(("min_temporal_order", min_temporal_order.to_string()));
    }
    let head = output::header("mms", &params);
    let table = mms_convergence(case, levels, rule).map_err(usage)?;
    write(out, "rates.csv", &output::rates_csv(&head, &table))?;
    let mut violations = Vec::new();
    for r in &table.rows {
        println!("n = {:3}  err_u_h1 {:.3e}  err_p_l2 {:.3e}", r.n, r.errors.u_h1, r.errors.p_l2);
    }
    if let Some(last) = table.last() {
        if let (Some(ou), Some(op)) = (last.order_u, last.order_p) {
            println!("finest-pair orders: u {ou:.3}  p {op:.3}");
            if ou < min_order || op < min_order {
                violations.push(format!("spatial orders u {ou:.3}, p {op:.3} below {min_order}"));
            }
        }
    }
    if let Some((n, t, dts)) = temporal {
        let study = temporal_convergence(case, n, t, dts).map_err(usage)?;
        write(out, "temporal.csv", &output::temporal_csv(&head, &study))?;
        if let Some(o) = study.orders.last() {
            println!("temporal order: {o:.3}");
            if *o < min_temporal_order {
                violations.push(format!("temporal order {o:.3} below {min_temporal_order}"));
            }
        }
    }
    violation(violations)
}

fn operators(levels: &[usize], layout: BcLayout, cap: usize, out: &Path) -> Outcome {
    let physics = Physics::default();
    let head = output::header(
        "operators",
        &[
            ("n", levels.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")),
            ("bc", layout.name().to_string()),
            ("cap", cap.to_string()),
        ],
    );
    let rows = operator_audit(levels, layout, physics, cap).map_err(usage)?;
    write(out, "operators.csv", &output::operators_csv(&head, &rows))?;
    let mut violations = Vec::new();
    for r in &rows {
        println!(
            "n = {:3} {}: zeros {} min {:.3e} smallest nonzero {:.6e} symmetry {:.1e} kernel {:.1e}",
            r.n,
            r.layout.name(),
            r.zero_count,
            r.min_eigenvalue,
            r.smallest_nonzero,
            r.symmetry_residual,
            r.kernel_residual
        );
        if r.zero_count != 1 {
            violations.push(format!("n = {}: {} eigenvalues within {ZERO_EIGENVALUE_TOL:e} of zero", r.n, r.zero_count));
        }
        if r.kernel_residual > ZERO_EIGENVALUE_TOL {
            violations.push(format!("n = {}: kernel residual {:e}", r.n, r.kernel_residual));
        }
        if r.symmetry_residual > SYMMETRY_TOL {
            violations.push(format!("n = {}: symmetry residual {:e}", r.n, r.symmetry_residual));
        }
        if r.min_eigenvalue < -NEGATIVE_EIGENVALUE_TOL {
            violations.push(format!("n = {}: negative eigenvalue {:e}", r.n, r.min_eigenvalue));
        }
        if layout == BcLayout::AllNeumann {
            if let Some(d) = r.drift.filter(|d| *d >= DRIFT_TOL) {
                violations.push(format!("n = {}: smallest nonzero eigenvalue drifted by {d:.3}", r.n));
            }
        }
    }
    violation(violations)
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
