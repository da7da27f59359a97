//! Trajectory and Pareto CSV files.

use std::fs;
use std::path::Path;

use lunar_descent::dynamics::{LanderState, ThrustCommand};
use lunar_descent::numfmt::sig9;
use lunar_descent::pareto::{parse_table, tabulate, ParetoResult, SweepMode};
use lunar_descent::transcription::TrajectorySolution;
use lunar_descent::{Error, Result};

pub const TRAJECTORY_COLUMNS: [&str; 12] =
    ["t_s", "r_m", "alt_m", "theta_rad", "phi_rad", "w_ms", "u_ms", "v_ms", "m_kg", "T_N", "alpha_rad", "beta_rad"];

/// One row per collocation node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub states: Vec<LanderState>,
    pub controls: Vec<ThrustCommand>,
    /// Moon radius used for the altitude column, m.
    pub radius: f64,
}

impl TrajectoryTable {
    pub fn from_solution(sol: &TrajectorySolution, radius: f64) -> Self {
        Self { times: sol.times.clone(), states: sol.states.clone(), controls: sol.controls.clone(), radius }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn altitudes(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.r - self.radius).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = TRAJECTORY_COLUMNS.join(",");
        out.push('\n');
        for ((t, s), c) in self.times.iter().zip(&self.states).zip(&self.controls) {
            let row = [*t, s.r, s.r - self.radius, s.theta, s.phi, s.w, s.u, s.v, s.m, c.thrust, c.alpha, c.beta];
            out.push_str(&row.iter().map(|v| sig9(*v)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    /// Parse a table written by [`TrajectoryTable::to_csv`]. The radius is
    /// recovered from the `r_m` and `alt_m` columns of the first row.
    pub fn from_csv(text: &str, path: &str) -> Result<Self> {
        let bad = |message: String| Error::Csv { path: path.to_string(), message };
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(TRAJECTORY_COLUMNS) {
            return Err(bad(format!("expected header {}", TRAJECTORY_COLUMNS.join(","))));
        }
        let mut table = Self { times: Vec::new(), states: Vec::new(), controls: Vec::new(), radius: f64::NAN };
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let v: Vec<f64> = record
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| bad(format!("row {}: {f:?}: {e}", i + 1))))
                .collect::<Result<_>>()?;
            if i == 0 {
                table.radius = v[1] - v[2];
            }
            table.times.push(v[0]);
            table.states.push(LanderState { r: v[1], theta: v[3], phi: v[4], w: v[5], u: v[6], v: v[7], m: v[8] });
            table.controls.push(ThrustCommand::new(v[9], v[10], v[11]));
        }
        if table.is_empty() {
            return Err(Error::EmptyInput(format!("{path}: no trajectory rows")));
        }
        if table.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("t_s must be strictly increasing".into()));
        }
        Ok(table)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_trajectory(sol: &TrajectorySolution, radius: f64, path: &Path) -> Result<()> {
    write_text(path, &TrajectoryTable::from_solution(sol, radius).to_csv())
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryTable> {
    TrajectoryTable::from_csv(&read_text(path)?, &path.display().to_string())
}

pub fn write_pareto(result: &ParetoResult, path: &Path) -> Result<()> {
    write_text(path, &tabulate(result))
}

/// Read a Pareto CSV; the sweep mode is inferred from the engine counts.
pub fn read_pareto(path: &Path) -> Result<ParetoResult> {
    let text = read_text(path)?;
    let result = parse_table(&text, SweepMode::MaxThrust).map_err(|e| with_path(e, path))?;
    if result.points.iter().any(|p| p.n != 1) {
        return parse_table(&text, SweepMode::EngineCount).map_err(|e| with_path(e, path));
    }
    Ok(result)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Csv { message, .. } => Error::Csv { path: path.display().to_string(), message },
        other => other,
    }
}
