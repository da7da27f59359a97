//! Outer engine-sizing layer: solve the inner descent at each grid point,
//! charge the engine dry mass and locate the payload maximizer.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::MoonConstants;
use crate::engine::{effective_payload, resolve_cluster, ClusterEngineModel, EngineCharacterization, QuadraticEngineModel};
use crate::error::{Error, Result};
use crate::nlp::{SolverConfig, SolverStatus};
use crate::numfmt::sig9;
use crate::transcription::{solve_scenario, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    EngineCount,
    MaxThrust,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    /// Clusters of identical engines.
    EngineCount { counts: Vec<u32>, engine: ClusterEngineModel },
    /// A single engine whose mass and isp follow the thrust, N.
    MaxThrust { thrusts: Vec<f64>, model: QuadraticEngineModel },
}

impl SweepGrid {
    pub fn mode(&self) -> SweepMode {
        match self {
            SweepGrid::EngineCount { .. } => SweepMode::EngineCount,
            SweepGrid::MaxThrust { .. } => SweepMode::MaxThrust,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepGrid::EngineCount { counts, .. } => counts.len(),
            SweepGrid::MaxThrust { thrusts, .. } => thrusts.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Thrusts from `low` to `high` inclusive in steps of `step`, N.
    pub fn thrust_range(low: f64, high: f64, step: f64, model: QuadraticEngineModel) -> Result<Self> {
        if !(step > 0.0 && low > 0.0 && high >= low) {
            return Err(Error::validation("sweep.thrust_range", format!("need 0 < low <= high and step > 0, got {low}..{high} by {step}")));
        }
        let count = ((high - low) / step + 1e-9).floor() as usize + 1;
        let thrusts = (0..count).map(|i| low + step * i as f64).collect();
        Ok(SweepGrid::MaxThrust { thrusts, model })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub grid: SweepGrid,
    pub scenario: ScenarioSpec,
    /// Start each point from the previous converged solution.
    pub warm_start: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::EmptyInput("sweep grid has no points".into()));
        }
        match &self.grid {
            SweepGrid::EngineCount { counts, engine } => {
                engine.validate()?;
                if counts[0] == 0 {
                    return Err(Error::validation("sweep.counts", "engine counts must be positive"));
                }
                if counts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::validation("sweep.counts", "must be strictly increasing"));
                }
            }
            SweepGrid::MaxThrust { thrusts, model } => {
                model.validate()?;
                if thrusts.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    return Err(Error::validation("sweep.thrusts", "thrusts must be positive and finite"));
                }
                if thrusts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::validation("sweep.thrusts", "must be strictly increasing"));
                }
            }
        }
        self.scenario.validate()
    }

    fn engine_at(&self, i: usize) -> Result<(f64, u32, EngineCharacterization)> {
        match &self.grid {
            SweepGrid::EngineCount { counts, engine } => {
                let e = resolve_cluster(&engine.clone().with_count(counts[i]))?;
                Ok((e.max_thrust, counts[i], e))
            }
            SweepGrid::MaxThrust { thrusts, model } => Ok((thrusts[i], 1, model.characterize(thrusts[i])?)),
        }
    }
}

/// What the outer layer needs from one inner solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub status: SolverStatus,
    /// kg.
    pub final_mass: f64,
    /// s.
    pub t_f: f64,
    /// Decision vector to seed a neighbouring solve.
    pub warm: Option<Vec<f64>>,
    pub diagnostic: Option<String>,
}

pub trait InnerSolver: Sync {
    fn solve_point(&self, scenario: &ScenarioSpec, engine: &EngineCharacterization, warm: Option<&[f64]>) -> Result<InnerOutcome>;
}

/// The collocation descent solver.
#[derive(Debug, Clone)]
pub struct CollocationSolver {
    pub consts: MoonConstants,
    pub config: SolverConfig,
}

impl InnerSolver for CollocationSolver {
    fn solve_point(&self, scenario: &ScenarioSpec, engine: &EngineCharacterization, warm: Option<&[f64]>) -> Result<InnerOutcome> {
        let (sol, z) = solve_scenario(scenario, engine, &self.consts, &self.config, warm)?;
        let diagnostic = (sol.status != SolverStatus::Converged).then(|| {
            format!(
                "status {} after {} outer iterations, violation {:.3e}, stationarity {:.3e}",
                sol.status, sol.iterations, sol.constraint_violation, sol.stationarity
            )
        });
        Ok(InnerOutcome { status: sol.status, final_mass: sol.final_mass, t_f: sol.t_f, warm: Some(z), diagnostic })
    }
}

/// An inner solver given by a closed-form final mass, for tests and benches.
pub struct FnSolver<F>(pub F);

impl<F> InnerSolver for FnSolver<F>
where
    F: Fn(&EngineCharacterization) -> Option<f64> + Sync,
{
    fn solve_point(&self, _scenario: &ScenarioSpec, engine: &EngineCharacterization, _warm: Option<&[f64]>) -> Result<InnerOutcome> {
        Ok(match (self.0)(engine) {
            Some(m) => InnerOutcome { status: SolverStatus::Converged, final_mass: m, t_f: 0.0, warm: None, diagnostic: None },
            None => InnerOutcome {
                status: SolverStatus::Infeasible,
                final_mass: f64::NAN,
                t_f: f64::NAN,
                warm: None,
                diagnostic: Some("no landing".into()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    /// N.
    pub t_max: f64,
    pub n: u32,
    /// s.
    pub isp_used: f64,
    /// kg.
    pub engine_dry_mass: f64,
    /// kg.
    pub final_mass: f64,
    /// kg.
    pub effective_payload: f64,
    /// m/s².
    pub thrust_to_mass0: f64,
    pub status: SolverStatus,
    /// s.
    pub t_f: f64,
    pub diagnostic: Option<String>,
}

impl ParetoPoint {
    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }

    fn abscissa(&self, mode: SweepMode) -> f64 {
        match mode {
            SweepMode::EngineCount => self.n as f64,
            SweepMode::MaxThrust => self.t_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoResult {
    pub mode: SweepMode,
    /// In increasing thrust (or count) order.
    pub points: Vec<ParetoPoint>,
    /// Best converged point, smallest thrust on ties.
    pub maximizer: Option<usize>,
    /// No converged point on one side of the maximizer.
    pub boundary_maximizer: bool,
    /// A neighbour of the maximizer did not converge.
    pub adjacent_failure: bool,
    /// Final golden-section bracket, N.
    pub refine_bracket: Option<(f64, f64)>,
}

impl ParetoResult {
    pub fn from_points(mode: SweepMode, points: Vec<ParetoPoint>) -> Self {
        let mut best: Option<usize> = None;
        for (i, p) in points.iter().enumerate() {
            if p.converged() && best.map_or(true, |b| p.effective_payload > points[b].effective_payload) {
                best = Some(i);
            }
        }
        let (boundary_maximizer, adjacent_failure) = match best {
            Some(b) => {
                let before = points[..b].iter().any(ParetoPoint::converged);
                let after = points[b + 1..].iter().any(ParetoPoint::converged);
                let failed_neighbour = (b > 0 && !points[b - 1].converged()) || points.get(b + 1).is_some_and(|p| !p.converged());
                (!(before && after), failed_neighbour)
            }
            None => (false, false),
        };
        Self { mode, points, maximizer: best, boundary_maximizer, adjacent_failure, refine_bracket: None }
    }

    pub fn best(&self) -> Option<&ParetoPoint> {
        self.maximizer.map(|i| &self.points[i])
    }

    pub fn converged(&self) -> impl Iterator<Item = &ParetoPoint> {
        self.points.iter().filter(|p| p.converged())
    }
}

fn make_point(spec: &SweepSpec, t_max: f64, n: u32, engine: &EngineCharacterization, outcome: Result<InnerOutcome>) -> ParetoPoint {
    let base = |status, final_mass: f64, t_f, diagnostic| ParetoPoint {
        t_max,
        n,
        isp_used: engine.isp,
        engine_dry_mass: engine.dry_mass,
        final_mass,
        effective_payload: effective_payload(final_mass, engine.dry_mass),
        thrust_to_mass0: t_max / spec.scenario.initial_mass,
        status,
        t_f,
        diagnostic,
    };
    match outcome {
        Ok(o) => base(o.status, o.final_mass, o.t_f, o.diagnostic),
        Err(e) => base(SolverStatus::NumericalFailure, f64::NAN, f64::NAN, Some(e.to_string())),
    }
}

fn solve_index(spec: &SweepSpec, solver: &dyn InnerSolver, i: usize, warm: Option<&[f64]>) -> (ParetoPoint, Option<Vec<f64>>) {
    match spec.engine_at(i) {
        Ok((t_max, n, engine)) => {
            let outcome = solver.solve_point(&spec.scenario, &engine, warm);
            let next = match &outcome {
                Ok(o) if o.status == SolverStatus::Converged => o.warm.clone(),
                _ => None,
            };
            (make_point(spec, t_max, n, &engine, outcome), next)
        }
        Err(e) => {
            let (t_max, n) = match &spec.grid {
                SweepGrid::EngineCount { counts, engine } => (engine.per_engine_max_thrust * counts[i] as f64, counts[i]),
                SweepGrid::MaxThrust { thrusts, .. } => (thrusts[i], 1),
            };
            let point = ParetoPoint {
                t_max,
                n,
                isp_used: f64::NAN,
                engine_dry_mass: f64::NAN,
                final_mass: f64::NAN,
                effective_payload: f64::NAN,
                thrust_to_mass0: t_max / spec.scenario.initial_mass,
                status: SolverStatus::NumericalFailure,
                t_f: f64::NAN,
                diagnostic: Some(e.to_string()),
            };
            (point, None)
        }
    }
}

#[cfg(feature = "parallel")]
fn solve_all(spec: &SweepSpec, solver: &dyn InnerSolver, parallelism: usize) -> Result<Vec<ParetoPoint>> {
    use rayon::prelude::*;
    if parallelism <= 1 {
        return Ok(solve_sequential(spec, solver));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::validation("parallel", e.to_string()))?;
    Ok(pool.install(|| (0..spec.grid.len()).into_par_iter().map(|i| solve_index(spec, solver, i, None).0).collect()))
}

#[cfg(not(feature = "parallel"))]
fn solve_all(spec: &SweepSpec, solver: &dyn InnerSolver, _parallelism: usize) -> Result<Vec<ParetoPoint>> {
    Ok(solve_sequential(spec, solver))
}

fn solve_sequential(spec: &SweepSpec, solver: &dyn InnerSolver) -> Vec<ParetoPoint> {
    (0..spec.grid.len()).map(|i| solve_index(spec, solver, i, None).0).collect()
}

/// Solve every grid point. Independent points run on up to `parallelism`
/// threads; warm starting chains them and runs in order. The result does
/// not depend on `parallelism`.
pub fn sweep(spec: &SweepSpec, solver: &dyn InnerSolver, parallelism: usize) -> Result<ParetoResult> {
    spec.validate()?;
    let points = if spec.warm_start {
        let mut warm: Option<Vec<f64>> = None;
        let mut points = Vec::with_capacity(spec.grid.len());
        for i in 0..spec.grid.len() {
            let (p, next) = solve_index(spec, solver, i, warm.as_deref());
            if next.is_some() {
                warm = next;
            }
            points.push(p);
        }
        points
    } else {
        solve_all(spec, solver, parallelism)?
    };
    if !points.iter().any(ParetoPoint::converged) {
        let diagnostics = points
            .iter()
            .map(|p| {
                format!(
                    "t_max {} N, n {}: {} ({})",
                    sig9(p.t_max),
                    p.n,
                    p.status,
                    p.diagnostic.as_deref().unwrap_or("no diagnostic")
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        return Err(Error::AllPointsFailed { count: points.len(), diagnostics });
    }
    Ok(ParetoResult::from_points(spec.grid.mode(), points))
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the payload peak between the grid neighbours
/// of an interior maximizer. Each new evaluation costs one iteration.
pub fn refine_maximum(result: &ParetoResult, spec: &SweepSpec, solver: &dyn InnerSolver, iterations: usize) -> Result<ParetoResult> {
    let SweepGrid::MaxThrust { model, .. } = &spec.grid else {
        return Err(Error::RefinementRefused("only thrust sweeps are continuous".into()));
    };
    let Some(best) = result.maximizer else {
        return Err(Error::RefinementRefused("no converged maximizer".into()));
    };
    if result.boundary_maximizer {
        return Err(Error::RefinementRefused(format!(
            "maximizer at t_max = {} N sits on the edge of the converged grid; extend the grid",
            sig9(result.points[best].t_max)
        )));
    }
    if iterations == 0 {
        return Ok(result.clone());
    }
    let mode = result.mode;
    let mut points = result.points.clone();
    let lo_pt = points[..best].iter().rev().find(|p| p.converged()).expect("interior maximizer");
    let hi_pt = points[best + 1..].iter().find(|p| p.converged()).expect("interior maximizer");
    let (mut a, mut b) = (lo_pt.t_max, hi_pt.t_max);

    let evaluate = |t: f64, points: &mut Vec<ParetoPoint>| -> f64 {
        let p = match model.characterize(t) {
            Ok(engine) => {
                let outcome = solver.solve_point(&spec.scenario, &engine, None);
                make_point(spec, t, 1, &engine, outcome)
            }
            Err(e) => ParetoPoint {
                t_max: t,
                n: 1,
                isp_used: f64::NAN,
                engine_dry_mass: f64::NAN,
                final_mass: f64::NAN,
                effective_payload: f64::NAN,
                thrust_to_mass0: t / spec.scenario.initial_mass,
                status: SolverStatus::NumericalFailure,
                t_f: f64::NAN,
                diagnostic: Some(e.to_string()),
            },
        };
        let value = if p.converged() { p.effective_payload } else { f64::NEG_INFINITY };
        points.push(p);
        value
    };

    let mut used = 0;
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = evaluate(c, &mut points);
    used += 1;
    if used < iterations {
        let mut fd = evaluate(d, &mut points);
        used += 1;
        while used < iterations {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - GOLDEN * (b - a);
                fc = evaluate(c, &mut points);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + GOLDEN * (b - a);
                fd = evaluate(d, &mut points);
            }
            used += 1;
        }
        if fc >= fd {
            b = d;
        } else {
            a = c;
        }
    }
    points.sort_by(|p, q| p.abscissa(mode).total_cmp(&q.abscissa(mode)));
    let mut refined = ParetoResult::from_points(mode, points);
    refined.refine_bracket = Some((a, b));
    Ok(refined)
}

pub const PARETO_COLUMNS: [&str; 10] = [
    "t_max_N",
    "n_engines",
    "isp_s",
    "engine_mass_kg",
    "final_mass_kg",
    "effective_payload_kg",
    "thrust_to_mass0_ms2",
    "t_f_s",
    "status",
    "is_maximizer",
];

/// Pareto table as CSV text, one row per point.
pub fn tabulate(result: &ParetoResult) -> String {
    let mut out = PARETO_COLUMNS.join(",");
    out.push('\n');
    for (i, p) in result.points.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            sig9(p.t_max),
            p.n,
            sig9(p.isp_used),
            sig9(p.engine_dry_mass),
            sig9(p.final_mass),
            sig9(p.effective_payload),
            sig9(p.thrust_to_mass0),
            sig9(p.t_f),
            p.status,
            result.maximizer == Some(i)
        );
    }
    out
}

/// Inverse of [`tabulate`]. Flags are recomputed from the rows.
pub fn parse_table(text: &str, mode: SweepMode) -> Result<ParetoResult> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Csv { path: "<pareto>".into(), message: e.to_string() })?;
    if headers.iter().ne(PARETO_COLUMNS.iter().copied()) {
        return Err(Error::Csv {
            path: "<pareto>".into(),
            message: format!("expected columns {}, found {}", PARETO_COLUMNS.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut points = Vec::new();
    let mut marked = None;
    for (line, record) in reader.records().enumerate() {
        let row = line + 2;
        let record = record.map_err(|e| Error::Csv { path: "<pareto>".into(), message: e.to_string() })?;
        let bad = |col: &str, v: &str| Error::Csv { path: "<pareto>".into(), message: format!("row {row}: bad {col} value {v:?}") };
        let num = |k: usize| record[k].parse::<f64>().map_err(|_| bad(PARETO_COLUMNS[k], &record[k]));
        let status = SolverStatus::parse(&record[8]).ok_or_else(|| bad("status", &record[8]))?;
        let n = record[1].parse::<u32>().map_err(|_| bad("n_engines", &record[1]))?;
        let is_max = record[9].parse::<bool>().map_err(|_| bad("is_maximizer", &record[9]))?;
        if is_max {
            marked = Some(points.len());
        }
        points.push(ParetoPoint {
            t_max: num(0)?,
            n,
            isp_used: num(2)?,
            engine_dry_mass: num(3)?,
            final_mass: num(4)?,
            effective_payload: num(5)?,
            thrust_to_mass0: num(6)?,
            status,
            t_f: num(7)?,
            diagnostic: None,
        });
    }
    let result = ParetoResult::from_points(mode, points);
    if marked != result.maximizer {
        return Err(Error::Csv {
            path: "<pareto>".into(),
            message: format!("is_maximizer marks row {marked:?} but the best converged row is {:?}", result.maximizer),
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stub_mass(e: &EngineCharacterization) -> Option<f64> {
        Some(2300.0 - 3.5e9 / (e.max_thrust * e.max_thrust))
    }

    fn case2_spec(thrusts: Vec<f64>) -> SweepSpec {
        SweepSpec {
            grid: SweepGrid::MaxThrust { thrusts, model: QuadraticEngineModel::default() },
            scenario: ScenarioSpec::default(),
            warm_start: false,
        }
    }

    fn default_thrusts() -> Vec<f64> {
        (2..=16).map(|k| 2000.0 * k as f64).collect()
    }

    /// Payload of the stub at thrust `t`, brute forced on a fine grid.
    fn stub_argmax(low: f64, high: f64) -> f64 {
        let m = QuadraticEngineModel::default();
        let f = |t: f64| 2300.0 - 3.5e9 / (t * t) - m.engine_mass(t).unwrap();
        let n = 200_000;
        (0..=n)
            .map(|i| low + (high - low) * i as f64 / n as f64)
            .max_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap()
    }

    #[test]
    fn stub_sweep_finds_the_interior_argmax() {
        let spec = case2_spec(default_thrusts());
        let r = sweep(&spec, &FnSolver(stub_mass), 1).unwrap();
        assert_eq!(r.points.len(), 15);
        let best = r.best().unwrap();
        let exact = stub_argmax(4000.0, 32000.0);
        let nearest = default_thrusts().into_iter().min_by(|a, b| (a - exact).abs().total_cmp(&(b - exact).abs())).unwrap();
        assert_eq!(best.t_max, nearest);
        assert!(!r.boundary_maximizer && !r.adjacent_failure);
        for p in &r.points {
            assert_eq!(p.effective_payload, p.final_mass - p.engine_dry_mass);
            assert_eq!(p.thrust_to_mass0, p.t_max / 4000.0);
        }
    }

    #[test]
    fn single_point_grid_is_a_boundary_maximizer() {
        let r = sweep(&case2_spec(vec![12_000.0]), &FnSolver(stub_mass), 1).unwrap();
        assert_eq!(r.maximizer, Some(0));
        assert!(r.boundary_maximizer);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let spec = case2_spec(default_thrusts());
        let a = sweep(&spec, &FnSolver(stub_mass), 1).unwrap();
        let b = sweep(&spec, &FnSolver(stub_mass), 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(tabulate(&a), tabulate(&b));
    }

    #[test]
    fn total_failure_reports_every_point() {
        let spec = case2_spec(vec![4000.0, 6000.0, 8000.0]);
        match sweep(&spec, &FnSolver(|_: &EngineCharacterization| None), 2) {
            Err(Error::AllPointsFailed { count, diagnostics }) => {
                assert_eq!(count, 3);
                assert_eq!(diagnostics.lines().count(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn failed_neighbour_is_flagged() {
        let spec = case2_spec(default_thrusts());
        let solver = FnSolver(|e: &EngineCharacterization| if e.max_thrust == 12_000.0 { None } else { stub_mass(e) });
        let r = sweep(&spec, &solver, 1).unwrap();
        assert!(r.best().unwrap().t_max != 12_000.0);
        assert!(r.adjacent_failure, "{:?}", r.best());
    }

    #[test]
    fn ties_go_to_the_smallest_thrust() {
        let spec = case2_spec(vec![4000.0, 6000.0, 8000.0]);
        let model = QuadraticEngineModel::default();
        let solver = FnSolver(move |e: &EngineCharacterization| Some(100.0 + model.engine_mass(e.max_thrust).unwrap()));
        let r = sweep(&spec, &solver, 1).unwrap();
        assert_eq!(r.maximizer, Some(0));
    }

    #[test]
    fn refinement_converges_to_the_stub_vertex() {
        let model = QuadraticEngineModel::default();
        // Payload is a parabola with its vertex at 13.3 kN.
        let vertex = 13_300.0;
        let solver = FnSolver(move |e: &EngineCharacterization| {
            Some(2000.0 - 1e-6 * (e.max_thrust - vertex).powi(2) + model.engine_mass(e.max_thrust).unwrap())
        });
        let spec = case2_spec(default_thrusts());
        let coarse = sweep(&spec, &solver, 1).unwrap();
        let fine = refine_maximum(&coarse, &spec, &solver, 16).unwrap();
        let best = fine.best().unwrap().t_max;
        assert!((best - vertex).abs() < 0.005 * vertex, "{best}");
        let (a, b) = fine.refine_bracket.unwrap();
        assert!(b - a <= 0.01 * 2000.0, "{a} {b}");
        assert!(fine.points.windows(2).all(|w| w[0].t_max < w[1].t_max));
    }

    #[test]
    fn zero_iterations_is_a_no_op() {
        let spec = case2_spec(default_thrusts());
        let coarse = sweep(&spec, &FnSolver(stub_mass), 1).unwrap();
        assert_eq!(refine_maximum(&coarse, &spec, &FnSolver(stub_mass), 0).unwrap(), coarse);
    }

    #[test]
    fn monotone_payload_refuses_refinement() {
        let spec = case2_spec(default_thrusts());
        let solver = FnSolver(|e: &EngineCharacterization| Some(1e3 + e.max_thrust));
        let r = sweep(&spec, &solver, 1).unwrap();
        assert!(r.boundary_maximizer);
        assert!(matches!(refine_maximum(&r, &spec, &solver, 10), Err(Error::RefinementRefused(_))));
    }

    #[test]
    fn engine_count_grid_uses_the_cluster_model() {
        let spec = SweepSpec {
            grid: SweepGrid::EngineCount { counts: vec![5, 10, 13], engine: ClusterEngineModel::default() },
            scenario: ScenarioSpec::default(),
            warm_start: false,
        };
        let r = sweep(&spec, &FnSolver(stub_mass), 1).unwrap();
        let p = &r.points[1];
        assert_eq!((p.t_max, p.n, p.isp_used, p.engine_dry_mass), (9000.0, 10, 310.0, 80.0));
        assert!(matches!(refine_maximum(&r, &spec, &FnSolver(stub_mass), 5), Err(Error::RefinementRefused(_))));
    }

    #[test]
    fn table_round_trips() {
        let spec = case2_spec(default_thrusts());
        let solver = FnSolver(|e: &EngineCharacterization| if e.max_thrust == 4000.0 { None } else { stub_mass(e) });
        let r = sweep(&spec, &solver, 1).unwrap();
        let text = tabulate(&r);
        assert_eq!(text.lines().count(), 16);
        assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 1);
        let back = parse_table(&text, SweepMode::MaxThrust).unwrap();
        assert_eq!(back.maximizer, r.maximizer);
        for (p, q) in r.points.iter().zip(&back.points) {
            assert_eq!(p.status, q.status);
            for (x, y) in [(p.t_max, q.t_max), (p.final_mass, q.final_mass), (p.effective_payload, q.effective_payload)] {
                assert!(x.is_nan() && y.is_nan() || ((x - y) / x).abs() <= 5e-9, "{x} {y}");
            }
        }
        assert_eq!(tabulate(&back), text);
    }

    #[test]
    fn empty_result_is_header_only() {
        let r = ParetoResult::from_points(SweepMode::MaxThrust, vec![]);
        assert_eq!(tabulate(&r), format!("{}\n", PARETO_COLUMNS.join(",")));
    }

    #[test]
    fn rejects_unsorted_grids() {
        let spec = case2_spec(vec![6000.0, 4000.0]);
        assert!(matches!(sweep(&spec, &FnSolver(stub_mass), 1), Err(Error::Validation { .. })));
        let spec = case2_spec(vec![]);
        assert!(matches!(sweep(&spec, &FnSolver(stub_mass), 1), Err(Error::EmptyInput(_))));
    }
}
