//! `fracimp check|solve|steer <config> [--out PATH] [--control PATH] [--force]`

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{load, Loaded};
use crate::control::steer;
use crate::error::{Error, Result};
use crate::hypotheses::check_all;
use crate::solver::{verify_initial_condition, MeshControl, Solver};
use crate::system::{Branch, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_LOAD: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fracimp", version, about = "Fractional evolution systems with non-instantaneous impulses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the hypothesis constants.
    Check {
        config: PathBuf,
        /// Report path (standard output when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for the mild solution.
    Solve {
        config: PathBuf,
        /// Trajectory CSV path (standard output when absent); the report goes
        /// to `<out>.report.toml`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Control CSV `t,u_0,..`; zero control when absent.
        #[arg(long)]
        control: Option<PathBuf>,
        /// Iterate even when the contraction constant is not below 1.
        #[arg(long)]
        force: bool,
    },
    /// Synthesize a steering control.
    Steer {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Steer even when the hypotheses fail.
        #[arg(long)]
        force: bool,
    },
}

/// `{:.16e}`: 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,interval_index,branch,comp_0..,weighted_norm`
pub fn trajectory_csv(z: &Trajectory) -> String {
    let rows = z.rows();
    let n = rows.first().map_or(0, |r| r.value.len());
    let mut s = String::from("t,interval_index,branch");
    for i in 0..n {
        let _ = write!(s, ",comp_{i}");
    }
    s.push_str(",weighted_norm\n");
    for row in rows {
        let branch = match row.branch {
            Branch::Flow(_) => "flow",
            Branch::Impulse(_) => "impulse",
        };
        let _ = write!(s, "{},{},{}", num(row.t), row.interval, branch);
        for v in row.value.iter() {
            let _ = write!(s, ",{}", num(*v));
        }
        let _ = writeln!(s, ",{}", num(row.weighted_norm));
    }
    s
}

/// `t,u_0..u_{k-1}` on the flow meshes.
pub fn control_csv(u: &MeshControl, solver: &Solver) -> String {
    let mut s = String::from("t");
    for i in 0..u.dim() {
        let _ = write!(s, ",u_{i}");
    }
    s.push('\n');
    for (t, v) in u.rows(solver) {
        s.push_str(&num(t));
        for x in v.iter() {
            let _ = write!(s, ",{}", num(*x));
        }
        s.push('\n');
    }
    s
}

/// Read a control CSV and interpolate it linearly onto the solver mesh.
pub fn read_control(path: &Path, solver: &Solver) -> Result<MeshControl> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let k = solver.spec().control_dim();
    let mut rows: Vec<(f64, DVector<f64>)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|x| x.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if vals.len() != k + 1 {
            return Err(Error::Config(format!("{}:{}: expected {} columns, got {}", path.display(), i + 1, k + 1, vals.len())));
        }
        if let Some((t, _)) = rows.last() {
            if !(vals[0] > *t) {
                return Err(Error::Config(format!("{}:{}: times must increase", path.display(), i + 1)));
            }
        }
        rows.push((vals[0], DVector::from_column_slice(&vals[1..])));
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: no control rows", path.display())));
    }
    solver.control_from_fn(|t| {
        let j = rows.partition_point(|(x, _)| *x < t);
        if j == 0 {
            return rows[0].1.clone();
        }
        if j == rows.len() {
            return rows[j - 1].1.clone();
        }
        let (ta, ua) = &rows[j - 1];
        let (tb, ub) = &rows[j];
        let w = (t - ta) / (tb - ta);
        ua * (1.0 - w) + ub * w
    })
}

#[derive(Debug, Serialize)]
struct SolveSidecar {
    iterations: usize,
    converged: bool,
    contraction_estimate: f64,
    nu: f64,
    pc_norm: f64,
    initial_condition_defect: f64,
    residuals: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SteerSidecar {
    converged: bool,
    terminal_error: f64,
    epsilon: f64,
    mainass_value: f64,
    iterations: Vec<usize>,
    decay_ratios: Vec<f64>,
    cauchy_ratios: Vec<f64>,
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::HypothesisViolated(_) => EXIT_FAIL,
        Error::NonConvergence { .. } | Error::SingularTerminalOperator(_) => EXIT_NONCONVERGENCE,
        _ => EXIT_LOAD,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::Io(e.to_string()))
}

fn describe(e: &Error) -> String {
    match e {
        Error::NonConvergence { iterations, last_error, ratio } => {
            format!("no convergence after {iterations} iterations: last error {last_error:.3e}, decay ratio {ratio:.3}")
        }
        other => other.to_string(),
    }
}

/// Run one command; returns the process exit code.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> i32 {
    let (config, force) = match &cli.command {
        Command::Check { config, .. } => (config, false),
        Command::Solve { config, force, .. } | Command::Steer { config, force, .. } => (config, *force),
    };
    let mut loaded = match load(config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_LOAD;
        }
    };
    if force {
        loaded.solver.allow_hypothesis_violation = true;
        if let Some(p) = loaded.steering.as_mut() {
            p.allow_violation = true;
        }
    }
    let res = match &cli.command {
        Command::Check { out, .. } => cmd_check(&loaded, out.as_deref(), stdout),
        Command::Solve { out, control, .. } => cmd_solve(&loaded, out.as_deref(), control.as_deref(), stdout),
        Command::Steer { out, .. } => cmd_steer(&loaded, out),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            exit_for(&e)
        }
    }
}

fn cmd_check(l: &Loaded, out: Option<&Path>, stdout: &mut dyn Write) -> Result<i32> {
    let report = check_all(&l.spec, 0.0);
    let text = to_toml(&report)?;
    match out {
        Some(p) => write_file(p, &text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(if report.all_pass() { EXIT_OK } else { EXIT_FAIL })
}

fn cmd_solve(l: &Loaded, out: Option<&Path>, control: Option<&Path>, stdout: &mut dyn Write) -> Result<i32> {
    let solver = Solver::new(&l.spec, &l.solver)?;
    let u = match control {
        Some(p) => read_control(p, &solver)?,
        None => solver.zero_control(),
    };
    let (z, report) = solver.solve(&u)?;
    let csv = trajectory_csv(&z);
    let sidecar = SolveSidecar {
        iterations: report.iterations,
        converged: report.converged,
        contraction_estimate: report.contraction_estimate,
        nu: solver.nu(),
        pc_norm: z.pc_norm()?,
        initial_condition_defect: verify_initial_condition(&l.spec, &z, &solver.config().quad)?,
        residuals: report.residual_history,
    };
    match out {
        Some(p) => {
            write_file(p, &csv)?;
            let mut side = p.as_os_str().to_owned();
            side.push(".report.toml");
            write_file(Path::new(&side), &to_toml(&sidecar)?)?;
        }
        None => stdout.write_all(csv.as_bytes())?,
    }
    Ok(EXIT_OK)
}

fn cmd_steer(l: &Loaded, dir: &Path) -> Result<i32> {
    let problem = l
        .steering
        .as_ref()
        .ok_or_else(|| Error::Config("the configuration has no [steering] section".into()))?;
    let solver = Solver::new(&l.spec, &l.solver)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let out = steer(&solver, problem)?;
    let err = (out.trajectory.terminal() - &problem.target).norm();
    write_file(&dir.join("control.csv"), &control_csv(&out.control, &solver))?;
    write_file(&dir.join("trajectory.csv"), &trajectory_csv(&out.trajectory))?;
    write_file(&dir.join("run.csv"), &out.run.to_csv())?;
    let report = check_all(&l.spec, out.control.norm_lq(&solver, l.spec.q));
    let side = SteerSidecar {
        converged: out.run.converged(),
        terminal_error: err,
        epsilon: problem.epsilon,
        mainass_value: report.mainass_value,
        iterations: out.run.intervals.iter().map(|iv| iv.iterations()).collect(),
        decay_ratios: out.run.intervals.iter().map(|iv| iv.decay_ratio()).collect(),
        cauchy_ratios: out.run.intervals.iter().map(|iv| iv.max_cauchy_ratio()).collect(),
    };
    write_file(&dir.join("report.toml"), &to_toml(&side)?)?;
    Ok(if err <= problem.epsilon { EXIT_OK } else { EXIT_NONCONVERGENCE })
}

/// Logger filter from `FRACIMP_LOG` (`quiet`, `info` or `debug`).
pub fn log_filter(value: Option<&str>) -> log::LevelFilter {
    match value.map(str::trim) {
        Some("quiet") => log::LevelFilter::Error,
        Some("info") => log::LevelFilter::Info,
        Some("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    }
}
