//! Command-line surface. Exit codes: 0 success, 1 invalid input or usage,
//! 2 solver non-convergence or failed verification, 3 I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use lunar_descent::integrate::{propagate, PiecewiseLinearSchedule, StepControl};
use lunar_descent::nlp::{check_gradients, SolverStatus};
use lunar_descent::numfmt::sig9;
use lunar_descent::oracle::verify_solution;
use lunar_descent::pareto::{refine_maximum, sweep, CollocationSolver, ParetoResult, SweepSpec};
use lunar_descent::transcription::{initial_guess, solve_scenario, transcribe, TrajectorySolution};
use lunar_descent::{Error, Result};

use crate::config::{load_config, RunConfig};
use crate::io::{read_pareto, read_trajectory, write_pareto, write_text, write_trajectory, TrajectoryTable};
use crate::plot::{pareto_plot, trajectory_plots};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Gradient check threshold, relative.
const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Largest acceptable scaled defect.
const DEFECT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "lunar-descent", version, about = "Minimum-fuel lunar descent and engine sizing trade studies")]
struct Cli {
    /// TOML run configuration, or `default` for the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<String>,
    /// Output directory (overrides output.directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Solve in the equatorial plane without rotation.
    #[arg(long, global = true)]
    planar: bool,
    /// Collocation nodes (overrides scenario.nodes).
    #[arg(long, global = true, value_name = "N")]
    nodes: Option<usize>,
    /// Concurrent inner solves in sweeps (overrides sweep.parallel).
    #[arg(long, global = true, value_name = "K")]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one descent and write trajectory.csv and solve_report.txt.
    Solve,
    /// Sweep the rated thrust of a single engine and refine the maximum.
    Pareto {
        /// Golden-section evaluations (overrides sweep.refine_iterations).
        #[arg(long, value_name = "K")]
        refine: Option<usize>,
    },
    /// Sweep the number of identical engines.
    Engines,
    /// Re-propagate a stored trajectory's controls with the adaptive integrator.
    Propagate {
        /// Trajectory CSV (default: <out>/trajectory.csv).
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// Solve, then check derivatives, defects and the re-propagation oracle.
    Check,
    /// Render SVG charts from stored CSVs.
    Plot {
        /// Trajectory CSV (default: <out>/trajectory.csv).
        #[arg(long, value_name = "PATH")]
        trajectory: Option<PathBuf>,
        /// Pareto CSV (default: <out>/pareto.csv when present).
        #[arg(long, value_name = "PATH")]
        pareto: Option<PathBuf>,
    },
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Csv { .. } => EXIT_IO,
        Error::NoSolution(_) | Error::AllPointsFailed { .. } | Error::PropagationAbort { .. } => EXIT_UNCONVERGED,
        _ => EXIT_INVALID,
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let cfg = resolve_config(cli)?;
    let out = cfg.output.directory.clone();
    match &cli.command {
        Command::Solve => cmd_solve(&cfg, &out),
        Command::Pareto { refine } => cmd_pareto(&cfg, &out, refine.unwrap_or(cfg.sweep.refine_iterations)),
        Command::Engines => cmd_engines(&cfg, &out),
        Command::Propagate { input } => cmd_propagate(&cfg, &out, &input.clone().unwrap_or_else(|| out.join("trajectory.csv"))),
        Command::Check => cmd_check(&cfg, &out),
        Command::Plot { trajectory, pareto } => cmd_plot(&out, trajectory.as_deref(), pareto.as_deref()),
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match cli.config.as_deref() {
        None | Some("default") => load_config("")?,
        Some(path) => load_config(&crate::io::read_text(Path::new(path))?)?,
    };
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    if cli.planar {
        cfg.scenario.planar = true;
    }
    if let Some(n) = cli.nodes {
        cfg.scenario.nodes = n;
    }
    if let Some(k) = cli.parallel {
        cfg.sweep.parallel = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn solve(cfg: &RunConfig) -> Result<TrajectorySolution> {
    let engine = cfg.engine()?;
    let clock = Instant::now();
    let (sol, _) = solve_scenario(&cfg.scenario, &engine, &cfg.constants.moon(), &cfg.solver, None)?;
    eprintln!("solved in {:.2} s: {}", clock.elapsed().as_secs_f64(), sol.status);
    Ok(sol)
}

fn solve_report(cfg: &RunConfig, sol: &TrajectorySolution) -> Result<String> {
    let engine = cfg.engine()?;
    let last = sol.states.last().expect("solutions have nodes");
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("status", sol.status.to_string());
    kv("outer_iterations", sol.iterations.to_string());
    kv("nodes", cfg.scenario.nodes.to_string());
    kv("planar", cfg.scenario.planar.to_string());
    kv("max_thrust_N", sig9(engine.max_thrust));
    kv("isp_s", sig9(engine.isp));
    kv("engine_mass_kg", sig9(engine.dry_mass));
    kv("t_f_s", sig9(sol.t_f));
    kv("final_mass_kg", sig9(sol.final_mass));
    kv("propellant_kg", sig9(sol.propellant()));
    kv("effective_payload_kg", sig9(sol.final_mass - engine.dry_mass));
    kv("final_altitude_m", sig9(last.r - cfg.constants.radius));
    kv("final_w_ms", sig9(last.w));
    kv("final_u_ms", sig9(last.u));
    kv("final_v_ms", sig9(last.v));
    kv("max_defect", sig9(sol.max_defect));
    kv("constraint_violation", sig9(sol.constraint_violation));
    kv("stationarity", sig9(sol.stationarity));
    Ok(s)
}

fn status_code(status: SolverStatus) -> i32 {
    if status == SolverStatus::Converged {
        EXIT_OK
    } else {
        EXIT_UNCONVERGED
    }
}

fn write_trajectory_plots(cfg: &RunConfig, out: &Path, table: &TrajectoryTable) -> Result<()> {
    if cfg.output.plots {
        for (name, svg) in trajectory_plots(table)? {
            write_text(&out.join(name), &svg)?;
        }
    }
    Ok(())
}

fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let sol = solve(cfg)?;
    write_trajectory(&sol, cfg.constants.radius, &out.join("trajectory.csv"))?;
    let report = solve_report(cfg, &sol)?;
    write_text(&out.join("solve_report.txt"), &report)?;
    write_trajectory_plots(cfg, out, &TrajectoryTable::from_solution(&sol, cfg.constants.radius))?;
    print!("{report}");
    Ok(status_code(sol.status))
}

fn run_sweep(cfg: &RunConfig, spec: &SweepSpec) -> Result<(ParetoResult, CollocationSolver)> {
    let solver = CollocationSolver { consts: cfg.constants.moon(), config: cfg.solver.clone() };
    let clock = Instant::now();
    let result = sweep(spec, &solver, cfg.sweep.parallel)?;
    eprintln!("swept {} points in {:.1} s", result.points.len(), clock.elapsed().as_secs_f64());
    for p in result.points.iter().filter(|p| !p.converged()) {
        eprintln!("t_max {} N, n {}: {}", sig9(p.t_max), p.n, p.diagnostic.as_deref().unwrap_or("not converged"));
    }
    Ok((result, solver))
}

fn finish_sweep(cfg: &RunConfig, result: &ParetoResult, csv: &Path, svg: &Path) -> Result<i32> {
    write_pareto(result, csv)?;
    if cfg.output.plots {
        write_text(svg, &pareto_plot(result)?)?;
    }
    if let Some(best) = result.best() {
        println!("maximizer_t_max_N={}", sig9(best.t_max));
        println!("maximizer_n_engines={}", best.n);
        println!("maximizer_thrust_to_mass0_ms2={}", sig9(best.thrust_to_mass0));
        println!("maximizer_effective_payload_kg={}", sig9(best.effective_payload));
        println!("boundary_maximizer={}", result.boundary_maximizer);
        println!("adjacent_failure={}", result.adjacent_failure);
    }
    if let Some((a, b)) = result.refine_bracket {
        println!("refine_bracket_N={},{}", sig9(a), sig9(b));
    }
    Ok(EXIT_OK)
}

fn cmd_pareto(cfg: &RunConfig, out: &Path, refine: usize) -> Result<i32> {
    let spec = cfg.thrust_sweep()?;
    let (mut result, solver) = run_sweep(cfg, &spec)?;
    if refine > 0 {
        match refine_maximum(&result, &spec, &solver, refine) {
            Ok(r) => result = r,
            Err(Error::RefinementRefused(msg)) => eprintln!("warning: refinement refused: {msg}"),
            Err(e) => return Err(e),
        }
    }
    finish_sweep(cfg, &result, &out.join("pareto.csv"), &out.join("pareto.svg"))
}

fn cmd_engines(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let (result, _) = run_sweep(cfg, &cfg.count_sweep())?;
    finish_sweep(cfg, &result, &out.join("engines.csv"), &out.join("engines.svg"))
}

fn cmd_propagate(cfg: &RunConfig, out: &Path, input: &Path) -> Result<i32> {
    let table = read_trajectory(input)?;
    if table.len() < 2 {
        return Err(Error::EmptyInput(format!("{}: need at least two rows", input.display())));
    }
    let engine = cfg.engine()?;
    let consts = if cfg.scenario.planar { cfg.constants.moon().non_rotating() } else { cfg.constants.moon() };
    let schedule = PiecewiseLinearSchedule::new(table.times.clone(), table.controls.clone())?;
    let span = table.times[table.len() - 1] - table.times[0];
    let traj = propagate(&table.states[0], &schedule, engine.isp, &consts, span, StepControl::Adaptive { rel_tol: 1e-10 })?;

    let propagated = TrajectoryTable {
        times: traj.times.iter().map(|t| t + table.times[0]).collect(),
        states: traj.states.clone(),
        controls: traj.times.iter().map(|t| lunar_descent::integrate::ControlSchedule::command_at(&schedule, *t)).collect(),
        radius: table.radius,
    };
    write_text(&out.join("propagated.csv"), &propagated.to_csv())?;

    let (a, b) = (traj.last(), &table.states[table.len() - 1]);
    let mut s = String::new();
    let _ = writeln!(s, "steps={}", traj.times.len() - 1);
    let _ = writeln!(s, "altitude_error_m={}", sig9(a.r - b.r));
    let _ = writeln!(s, "w_error_ms={}", sig9(a.w - b.w));
    let _ = writeln!(s, "u_error_ms={}", sig9(a.u - b.u));
    let _ = writeln!(s, "v_error_ms={}", sig9(a.v - b.v));
    let _ = writeln!(s, "mass_error_kg={}", sig9(a.m - b.m));
    print!("{s}");
    Ok(EXIT_OK)
}

fn cmd_check(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let engine = cfg.engine()?;
    let consts = cfg.constants.moon();
    let problem = transcribe(&cfg.scenario, &engine, &consts)?;
    let guess = initial_guess(&problem);
    let at_guess = check_gradients(&problem, &guess).max_discrepancy();
    let (sol, z) = solve_scenario(&cfg.scenario, &engine, &consts, &cfg.solver, None)?;
    let at_solution = check_gradients(&problem, &z).max_discrepancy();

    let gradient_ok = at_guess <= GRADIENT_TOLERANCE && at_solution <= GRADIENT_TOLERANCE;
    let defect_ok = sol.max_defect <= DEFECT_TOLERANCE;
    let mut s = solve_report(cfg, &sol)?;
    let _ = writeln!(s, "gradient_error_at_guess={}", sig9(at_guess));
    let _ = writeln!(s, "gradient_error_at_solution={}", sig9(at_solution));
    let _ = writeln!(s, "gradient_ok={gradient_ok}");
    let _ = writeln!(s, "defect_ok={defect_ok}");
    let oracle_ok = if sol.status == SolverStatus::Converged {
        let report = verify_solution(&sol, &cfg.scenario, &engine, &consts)?;
        s.push_str(&report.to_string());
        report.pass()
    } else {
        let _ = writeln!(s, "oracle_pass=false");
        let _ = writeln!(s, "failure=solver status {}", sol.status);
        false
    };
    let pass = gradient_ok && defect_ok && oracle_ok;
    let _ = writeln!(s, "check_pass={pass}");
    write_text(&out.join("check_report.txt"), &s)?;
    print!("{s}");
    Ok(if pass { EXIT_OK } else { EXIT_UNCONVERGED })
}

fn cmd_plot(out: &Path, trajectory: Option<&Path>, pareto: Option<&Path>) -> Result<i32> {
    let default_pareto = out.join("pareto.csv");
    let (trajectory, pareto) = match (trajectory, pareto) {
        (None, None) => (Some(out.join("trajectory.csv")), default_pareto.exists().then_some(default_pareto)),
        (t, p) => (t.map(Path::to_path_buf), p.map(Path::to_path_buf)),
    };
    if let Some(path) = trajectory {
        let table = read_trajectory(&path)?;
        for (name, svg) in trajectory_plots(&table)? {
            write_text(&out.join(name), &svg)?;
        }
    }
    if let Some(path) = pareto {
        let result = read_pareto(&path)?;
        write_text(&out.join("pareto.svg"), &pareto_plot(&result)?)?;
    }
    Ok(EXIT_OK)
}
