//! Direct collocation of the minimum-fuel descent problem.
//!
//! Decision vector, all in scaled units: node `k` of `N` occupies
//! `10k..10k+10` as `[r, theta, phi, w, u, v, m, T, alpha, beta]`, and the
//! free final time sits at index `10N`. Nodes are uniformly spaced in time.
//! Controls are linear between nodes, so the Hermite–Simpson midpoint
//! control is the average of the two node controls.
//!
//! Constraint rows are the segment defects (segment-major), then the
//! initial boundary rows, then the final boundary rows.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    derivative_unchecked, jacobian_unchecked, ControlVector, LanderState, MoonConstants, StateVector, ThrustCommand,
    POLE_GUARD,
};
use crate::engine::EngineCharacterization;
use crate::error::{Error, Result};
use crate::nlp::{self, HessianStructure, NlpProblem, SolverConfig, SolverReport, SolverStatus, SparseMatrix};

pub const NODE_VARS: usize = 10;

const ALL_STATES: [usize; 7] = [0, 1, 2, 3, 4, 5, 6];
/// Latitude and north velocity are pinned in planar mode.
const PLANAR_STATES: [usize; 5] = [0, 1, 3, 4, 6];

type NodeJacobian = SMatrix<f64, 7, NODE_VARS>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollocationScheme {
    HermiteSimpson,
    Trapezoidal,
}

impl CollocationScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            CollocationScheme::HermiteSimpson => "hermite_simpson",
            CollocationScheme::Trapezoidal => "trapezoidal",
        }
    }
}

/// Boundary conditions, control bounds and mesh for one descent.
/// Altitudes are measured from the mean lunar radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    /// m.
    pub initial_altitude: f64,
    /// rad; used only when the initial longitude is not free.
    pub initial_longitude: f64,
    /// rad; used only when the initial latitude is not free.
    pub initial_latitude: f64,
    pub free_initial_longitude: bool,
    pub free_initial_latitude: bool,
    /// Radial (up) velocity, m/s.
    pub initial_w: f64,
    /// East velocity, m/s.
    pub initial_u: f64,
    /// North velocity, m/s.
    pub initial_v: f64,
    /// kg.
    pub initial_mass: f64,
    /// m.
    pub final_altitude: f64,
    /// rad.
    pub target_longitude: f64,
    /// rad.
    pub target_latitude: f64,
    /// Lower thrust bound as a fraction of the engine's maximum thrust.
    pub min_throttle: f64,
    /// rad.
    pub alpha_max: f64,
    /// rad.
    pub beta_max: f64,
    /// Pin latitude, north velocity and thrust azimuth, and ignore rotation.
    pub planar: bool,
    pub nodes: usize,
    /// s.
    pub final_time_bounds: (f64, f64),
    pub scheme: CollocationScheme,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            initial_altitude: 30_000.0,
            initial_longitude: 0.0,
            initial_latitude: 0.0,
            free_initial_longitude: true,
            free_initial_latitude: true,
            initial_w: 0.0,
            initial_u: 1688.0,
            initial_v: 0.0,
            initial_mass: 4000.0,
            final_altitude: 800.0,
            target_longitude: 0.0,
            target_latitude: 0.0,
            min_throttle: 0.0,
            alpha_max: std::f64::consts::PI,
            beta_max: std::f64::consts::FRAC_PI_2,
            planar: false,
            nodes: 60,
            final_time_bounds: (50.0, 2000.0),
            scheme: CollocationScheme::HermiteSimpson,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("scenario.initial_longitude", self.initial_longitude),
            ("scenario.initial_latitude", self.initial_latitude),
            ("scenario.initial_w", self.initial_w),
            ("scenario.initial_u", self.initial_u),
            ("scenario.initial_v", self.initial_v),
            ("scenario.target_longitude", self.target_longitude),
            ("scenario.target_latitude", self.target_latitude),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::validation(key, "must be finite"));
            }
        }
        if !(self.final_altitude > 0.0 && self.final_altitude.is_finite()) {
            return Err(Error::validation("scenario.final_altitude", "must be positive"));
        }
        if !(self.initial_altitude > self.final_altitude && self.initial_altitude.is_finite()) {
            return Err(Error::validation("scenario.initial_altitude", "must exceed the final altitude"));
        }
        if !(self.initial_mass > 0.0 && self.initial_mass.is_finite()) {
            return Err(Error::validation("scenario.initial_mass", "must be positive"));
        }
        let pole = std::f64::consts::FRAC_PI_2 - POLE_GUARD;
        if self.target_latitude.abs() >= pole.min(1.4) {
            return Err(Error::validation("scenario.target_latitude", "too close to a pole"));
        }
        if !self.free_initial_latitude && self.initial_latitude.abs() >= pole.min(1.4) {
            return Err(Error::validation("scenario.initial_latitude", "too close to a pole"));
        }
        if !(self.min_throttle >= 0.0 && self.min_throttle < 1.0) {
            return Err(Error::validation("scenario.min_throttle", "must lie in [0, 1)"));
        }
        if !(self.alpha_max > 0.0 && self.alpha_max <= std::f64::consts::PI) {
            return Err(Error::validation("scenario.alpha_max", "must lie in (0, pi]"));
        }
        if !(self.beta_max > 0.0 && self.beta_max <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::validation("scenario.beta_max", "must lie in (0, pi/2]"));
        }
        if self.nodes < 10 {
            return Err(Error::validation("scenario.nodes", format!("{} nodes; need at least 10", self.nodes)));
        }
        let (lo, hi) = self.final_time_bounds;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::validation("scenario.final_time_bounds", "need 0 < low < high"));
        }
        if self.planar {
            if self.initial_v != 0.0 {
                return Err(Error::validation("scenario.initial_v", "planar mode needs zero north velocity"));
            }
            if self.target_latitude != 0.0 {
                return Err(Error::validation("scenario.target_latitude", "planar mode flies the equatorial plane"));
            }
            if !self.free_initial_latitude && self.initial_latitude != self.target_latitude {
                return Err(Error::validation("scenario.initial_latitude", "planar mode needs equal initial and target latitude"));
            }
            if self.alpha_max < std::f64::consts::PI {
                return Err(Error::validation("scenario.alpha_max", "planar mode pins alpha to 0 or pi"));
            }
        }
        Ok(())
    }

    /// Thrust azimuth pinned in planar mode: against the east velocity.
    fn planar_alpha(&self) -> f64 {
        if self.initial_u >= 0.0 {
            std::f64::consts::PI
        } else {
            0.0
        }
    }
}

/// Characteristic units of the scaled problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Units {
    pub length: f64,
    pub speed: f64,
    pub time: f64,
    pub mass: f64,
    pub thrust: f64,
}

impl Units {
    pub fn new(consts: &MoonConstants, mass: f64) -> Self {
        let length = consts.radius;
        let speed = (consts.mu / consts.radius).sqrt();
        let time = length / speed;
        Self { length, speed, time, mass, thrust: mass * consts.mu / (consts.radius * consts.radius) }
    }
}

/// A transcribed descent, immutable after construction.
#[derive(Debug, Clone)]
pub struct TranscribedProblem {
    scenario: ScenarioSpec,
    engine: EngineCharacterization,
    consts: MoonConstants,
    units: Units,
    /// Physical value of one scaled unit, per node variable.
    node_scale: SVector<f64, NODE_VARS>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    kept: &'static [usize],
    /// `(variable index, scaled target)` for each boundary row.
    boundary: Vec<(usize, f64)>,
    initial_rows: usize,
    warnings: Vec<String>,
}

struct Segment {
    d0: NodeJacobian,
    d1: NodeJacobian,
    dtf: StateVector,
}

pub fn transcribe(scenario: &ScenarioSpec, engine: &EngineCharacterization, consts: &MoonConstants) -> Result<TranscribedProblem> {
    scenario.validate()?;
    consts.validate()?;
    let engine = EngineCharacterization::new(engine.max_thrust, engine.isp, engine.dry_mass)?;
    let consts = if scenario.planar { consts.non_rotating() } else { *consts };
    let units = Units::new(&consts, scenario.initial_mass);
    let mut node_scale = SVector::<f64, NODE_VARS>::zeros();
    for (i, s) in [units.length, 1.0, 1.0, units.speed, units.speed, units.speed, units.mass, units.thrust, 1.0, 1.0]
        .into_iter()
        .enumerate()
    {
        node_scale[i] = s;
    }

    let n = scenario.nodes;
    let r0 = consts.radius + scenario.initial_altitude;
    let rf = consts.radius + scenario.final_altitude;
    let mut lo_node = [0.0; NODE_VARS];
    let mut hi_node = [0.0; NODE_VARS];
    let phys = [
        (consts.radius, r0 + 2.0 * (r0 - rf) + 10_000.0),
        (scenario.target_longitude - std::f64::consts::PI, scenario.target_longitude + std::f64::consts::PI),
        (-1.4, 1.4),
        (-2.0 * units.speed, 2.0 * units.speed),
        (-2.0 * units.speed, 2.0 * units.speed),
        (-2.0 * units.speed, 2.0 * units.speed),
        (0.1 * scenario.initial_mass, 1.1 * scenario.initial_mass),
        (scenario.min_throttle * engine.max_thrust, engine.max_thrust),
        (-scenario.alpha_max, scenario.alpha_max),
        (-scenario.beta_max, scenario.beta_max),
    ];
    for i in 0..NODE_VARS {
        lo_node[i] = phys[i].0 / node_scale[i];
        hi_node[i] = phys[i].1 / node_scale[i];
    }
    if scenario.planar {
        for (i, v) in [(2, scenario.target_latitude), (5, 0.0), (8, scenario.planar_alpha())] {
            lo_node[i] = v;
            hi_node[i] = v;
        }
    }
    let mut lower = Vec::with_capacity(NODE_VARS * n + 1);
    let mut upper = Vec::with_capacity(NODE_VARS * n + 1);
    for _ in 0..n {
        lower.extend_from_slice(&lo_node);
        upper.extend_from_slice(&hi_node);
    }
    lower.push(scenario.final_time_bounds.0 / units.time);
    upper.push(scenario.final_time_bounds.1 / units.time);

    let last = NODE_VARS * (n - 1);
    let mut boundary = vec![
        (0, r0 / units.length),
        (3, scenario.initial_w / units.speed),
        (4, scenario.initial_u / units.speed),
    ];
    if !scenario.planar {
        boundary.push((5, scenario.initial_v / units.speed));
    }
    boundary.push((6, 1.0));
    if !scenario.free_initial_longitude {
        boundary.push((1, scenario.initial_longitude));
    }
    if !scenario.free_initial_latitude && !scenario.planar {
        boundary.push((2, scenario.initial_latitude));
    }
    let initial_rows = boundary.len();
    boundary.push((last, rf / units.length));
    boundary.push((last + 1, scenario.target_longitude));
    if !scenario.planar {
        boundary.push((last + 2, scenario.target_latitude));
    }
    boundary.push((last + 3, 0.0));
    boundary.push((last + 4, 0.0));
    if !scenario.planar {
        boundary.push((last + 5, 0.0));
    }

    let mut warnings = Vec::new();
    let accel = engine.max_thrust / scenario.initial_mass;
    let g_target = consts.gravity_at(rf);
    if accel <= g_target {
        warnings.push(format!(
            "thrust-to-mass {accel:.4} m/s² does not exceed gravity {g_target:.4} m/s² at the target; expect an infeasible solve"
        ));
    }

    Ok(TranscribedProblem {
        scenario: scenario.clone(),
        engine,
        consts,
        units,
        node_scale,
        lower,
        upper,
        kept: if scenario.planar { &PLANAR_STATES } else { &ALL_STATES },
        boundary,
        initial_rows,
        warnings,
    })
}

impl TranscribedProblem {
    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn engine(&self) -> &EngineCharacterization {
        &self.engine
    }

    /// Constants used by the dynamics (rotation removed in planar mode).
    pub fn constants(&self) -> &MoonConstants {
        &self.consts
    }

    pub fn units(&self) -> &Units {
        &self.units
    }

    pub fn nodes(&self) -> usize {
        self.scenario.nodes
    }

    pub fn dimension(&self) -> usize {
        NODE_VARS * self.scenario.nodes + 1
    }

    pub fn defect_count(&self) -> usize {
        self.kept.len() * (self.scenario.nodes - 1)
    }

    pub fn initial_boundary_count(&self) -> usize {
        self.initial_rows
    }

    pub fn final_boundary_count(&self) -> usize {
        self.boundary.len() - self.initial_rows
    }

    /// Physical value of one scaled unit for every decision variable.
    pub fn scaling(&self) -> Vec<f64> {
        let mut s: Vec<f64> = (0..self.scenario.nodes).flat_map(|_| self.node_scale.iter().copied()).collect();
        s.push(self.units.time);
        s
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn tf_index(&self) -> usize {
        NODE_VARS * self.scenario.nodes
    }

    fn scaled_rhs(&self, z: &[f64]) -> StateVector {
        let (x, c) = self.unscale_node(z);
        let f = derivative_unchecked(&x, &c, self.engine.isp, &self.consts);
        StateVector::from_fn(|i, _| f[i] * self.units.time / self.node_scale[i])
    }

    fn scaled_rhs_jacobian(&self, z: &[f64]) -> (StateVector, NodeJacobian) {
        let (x, c) = self.unscale_node(z);
        let f = derivative_unchecked(&x, &c, self.engine.isp, &self.consts);
        let (a, b) = jacobian_unchecked(&x, &c, self.engine.isp, &self.consts);
        let fs = StateVector::from_fn(|i, _| f[i] * self.units.time / self.node_scale[i]);
        let g = NodeJacobian::from_fn(|i, j| {
            let raw = if j < 7 { a[(i, j)] } else { b[(i, j - 7)] };
            raw * self.node_scale[j] * self.units.time / self.node_scale[i]
        });
        (fs, g)
    }

    fn unscale_node(&self, z: &[f64]) -> (StateVector, ControlVector) {
        let x = StateVector::from_fn(|i, _| z[i] * self.node_scale[i]);
        let c = ControlVector::from_fn(|i, _| z[7 + i] * self.node_scale[7 + i]);
        (x, c)
    }

    fn step(&self, tf: f64) -> f64 {
        tf / (self.scenario.nodes - 1) as f64
    }

    fn segment_defect(&self, z0: &[f64], z1: &[f64], tf: f64) -> StateVector {
        let h = self.step(tf);
        let x0 = StateVector::from_column_slice(&z0[..7]);
        let x1 = StateVector::from_column_slice(&z1[..7]);
        let f0 = self.scaled_rhs(z0);
        let f1 = self.scaled_rhs(z1);
        match self.scenario.scheme {
            CollocationScheme::Trapezoidal => x1 - x0 - (f0 + f1) * (0.5 * h),
            CollocationScheme::HermiteSimpson => {
                let zm = self.midpoint_node(z0, z1, &f0, &f1, h);
                let fm = self.scaled_rhs(zm.as_slice());
                x1 - x0 - (f0 + fm * 4.0 + f1) * (h / 6.0)
            }
        }
    }

    fn midpoint_node(&self, z0: &[f64], z1: &[f64], f0: &StateVector, f1: &StateVector, h: f64) -> SVector<f64, NODE_VARS> {
        SVector::<f64, NODE_VARS>::from_fn(|i, _| {
            let mean = 0.5 * (z0[i] + z1[i]);
            if i < 7 {
                mean + h / 8.0 * (f0[i] - f1[i])
            } else {
                mean
            }
        })
    }

    fn segment(&self, z0: &[f64], z1: &[f64], tf: f64) -> Segment {
        let nm1 = (self.scenario.nodes - 1) as f64;
        let h = self.step(tf);
        let e = NodeJacobian::from_fn(|i, j| if i == j { 1.0 } else { 0.0 });
        let (f0, g0) = self.scaled_rhs_jacobian(z0);
        let (f1, g1) = self.scaled_rhs_jacobian(z1);
        match self.scenario.scheme {
            CollocationScheme::Trapezoidal => Segment {
                d0: -e - g0 * (0.5 * h),
                d1: e - g1 * (0.5 * h),
                dtf: -(f0 + f1) / (2.0 * nm1),
            },
            CollocationScheme::HermiteSimpson => {
                let zm = self.midpoint_node(z0, z1, &f0, &f1, h);
                let (fm, gm) = self.scaled_rhs_jacobian(zm.as_slice());
                let am = gm.fixed_view::<7, 7>(0, 0).into_owned();
                let half_controls = NodeJacobian::from_fn(|i, j| if j >= 7 { 0.5 * gm[(i, j)] } else { 0.0 });
                let dxm0 = e * 0.5 + g0 * (h / 8.0);
                let dxm1 = e * 0.5 - g1 * (h / 8.0);
                let dxm_tf = (f0 - f1) / (8.0 * nm1);
                let dfm0 = am * dxm0 + half_controls;
                let dfm1 = am * dxm1 + half_controls;
                let dfm_tf = am * dxm_tf;
                Segment {
                    d0: -e - (g0 + dfm0 * 4.0) * (h / 6.0),
                    d1: e - (g1 + dfm1 * 4.0) * (h / 6.0),
                    dtf: -(f0 + fm * 4.0 + f1) / (6.0 * nm1) - dfm_tf * (4.0 * h / 6.0),
                }
            }
        }
    }

    fn node<'z>(&self, z: &'z [f64], k: usize) -> &'z [f64] {
        &z[NODE_VARS * k..NODE_VARS * (k + 1)]
    }

    /// Scaled defect rows only.
    pub fn defects(&self, z: &[f64]) -> Vec<f64> {
        let tf = z[self.tf_index()];
        let mut out = Vec::with_capacity(self.defect_count());
        for k in 0..self.scenario.nodes - 1 {
            let d = self.segment_defect(self.node(z, k), self.node(z, k + 1), tf);
            out.extend(self.kept.iter().map(|&i| d[i]));
        }
        out
    }

    pub fn max_defect(&self, z: &[f64]) -> f64 {
        self.defects(z).iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    /// Scaled decision vector for physical node states, controls and final time.
    pub fn pack(&self, states: &[LanderState], controls: &[ThrustCommand], t_f: f64) -> Result<Vec<f64>> {
        let n = self.scenario.nodes;
        if states.len() != n {
            return Err(Error::Dimension { expected: n, got: states.len() });
        }
        if controls.len() != n {
            return Err(Error::Dimension { expected: n, got: controls.len() });
        }
        let mut z = Vec::with_capacity(self.dimension());
        for (s, c) in states.iter().zip(controls) {
            let phys = [s.r, s.theta, s.phi, s.w, s.u, s.v, s.m, c.thrust, c.alpha, c.beta];
            z.extend(phys.iter().zip(self.node_scale.iter()).map(|(v, sc)| v / sc));
        }
        z.push(t_f / self.units.time);
        Ok(z)
    }

    /// Physical node times, states and controls of a scaled decision vector.
    pub fn unpack(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<LanderState>, Vec<ThrustCommand>, f64)> {
        if z.len() != self.dimension() {
            return Err(Error::Dimension { expected: self.dimension(), got: z.len() });
        }
        let n = self.scenario.nodes;
        let t_f = z[self.tf_index()] * self.units.time;
        let times = (0..n).map(|k| if k + 1 == n { t_f } else { t_f * k as f64 / (n - 1) as f64 }).collect();
        let mut states = Vec::with_capacity(n);
        let mut controls = Vec::with_capacity(n);
        for k in 0..n {
            let (x, c) = self.unscale_node(self.node(z, k));
            states.push(LanderState::from_vector(&x));
            controls.push(ThrustCommand::new(c[0], c[1], c[2]));
        }
        Ok((times, states, controls, t_f))
    }

    /// Maps a local segment variable (`0..20` node pair, `20` final time)
    /// to its global index.
    fn local_to_global(&self, k: usize, j: usize) -> usize {
        if j < 2 * NODE_VARS {
            NODE_VARS * k + j
        } else {
            self.tf_index()
        }
    }

    /// `J_seg^T mu` over the 21 local variables of segment `k`.
    fn segment_adjoint(&self, y: &[f64; 2 * NODE_VARS + 1], mu: &[f64]) -> [f64; 2 * NODE_VARS + 1] {
        let s = self.segment(&y[..NODE_VARS], &y[NODE_VARS..2 * NODE_VARS], y[2 * NODE_VARS]);
        let mut out = [0.0; 2 * NODE_VARS + 1];
        for (q, &i) in self.kept.iter().enumerate() {
            let m = mu[q];
            if m == 0.0 {
                continue;
            }
            for j in 0..NODE_VARS {
                out[j] += m * s.d0[(i, j)];
                out[NODE_VARS + j] += m * s.d1[(i, j)];
            }
            out[2 * NODE_VARS] += m * s.dtf[i];
        }
        out
    }
}

impl NlpProblem for TranscribedProblem {
    fn num_variables(&self) -> usize {
        self.dimension()
    }

    fn num_constraints(&self) -> usize {
        self.defect_count() + self.boundary.len()
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, z: &[f64]) -> f64 {
        -z[NODE_VARS * (self.scenario.nodes - 1) + 6]
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        let d = self.defects(z);
        out[..d.len()].copy_from_slice(&d);
        for (row, &(var, target)) in out[d.len()..].iter_mut().zip(&self.boundary) {
            *row = z[var] - target;
        }
    }

    fn objective_gradient(&self, _z: &[f64]) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.dimension()];
        g[NODE_VARS * (self.scenario.nodes - 1) + 6] = -1.0;
        Some(g)
    }

    fn constraint_jacobian(&self, z: &[f64]) -> Option<SparseMatrix> {
        let tf = z[self.tf_index()];
        let mut jac = SparseMatrix::new(self.num_constraints(), self.dimension());
        let mut row = 0;
        for k in 0..self.scenario.nodes - 1 {
            let s = self.segment(self.node(z, k), self.node(z, k + 1), tf);
            for &i in self.kept {
                let entries = &mut jac.rows[row];
                entries.reserve(2 * NODE_VARS + 1);
                for j in 0..NODE_VARS {
                    entries.push((NODE_VARS * k + j, s.d0[(i, j)]));
                }
                for j in 0..NODE_VARS {
                    entries.push((NODE_VARS * (k + 1) + j, s.d1[(i, j)]));
                }
                entries.push((self.tf_index(), s.dtf[i]));
                row += 1;
            }
        }
        for &(var, _) in &self.boundary {
            jac.rows[row].push((var, 1.0));
            row += 1;
        }
        Some(jac)
    }

    fn jacobian_sparsity(&self) -> Option<Vec<Vec<usize>>> {
        let mut rows = Vec::with_capacity(self.num_constraints());
        for k in 0..self.scenario.nodes - 1 {
            let cols: Vec<usize> = (NODE_VARS * k..NODE_VARS * (k + 2)).chain([self.tf_index()]).collect();
            rows.extend(self.kept.iter().map(|_| cols.clone()));
        }
        rows.extend(self.boundary.iter().map(|&(var, _)| vec![var]));
        Some(rows)
    }

    /// The objective is linear, so only the defect rows contribute. Each
    /// segment block is a central difference of the analytic `J^T mu`.
    fn lagrangian_hessian(&self, z: &[f64], _obj_factor: f64, multipliers: &[f64]) -> Option<Vec<(usize, usize, f64)>> {
        const L: usize = 2 * NODE_VARS + 1;
        let tf = z[self.tf_index()];
        let nk = self.kept.len();
        let mut out = Vec::with_capacity((self.scenario.nodes - 1) * L * (L + 1) / 2);
        for k in 0..self.scenario.nodes - 1 {
            let mu = &multipliers[k * nk..(k + 1) * nk];
            if mu.iter().all(|m| *m == 0.0) {
                continue;
            }
            let mut y = [0.0; L];
            y[..2 * NODE_VARS].copy_from_slice(&z[NODE_VARS * k..NODE_VARS * (k + 2)]);
            y[2 * NODE_VARS] = tf;
            let mut block = [[0.0; L]; L];
            for j in 0..L {
                let step = 6e-6 * y[j].abs().max(1.0);
                let (mut yp, mut ym) = (y, y);
                yp[j] += step;
                ym[j] -= step;
                let gp = self.segment_adjoint(&yp, mu);
                let gm = self.segment_adjoint(&ym, mu);
                for i in 0..L {
                    block[i][j] = (gp[i] - gm[i]) / (2.0 * step);
                }
            }
            for i in 0..L {
                for j in 0..=i {
                    let v = 0.5 * (block[i][j] + block[j][i]);
                    if v != 0.0 {
                        let (gi, gj) = (self.local_to_global(k, i), self.local_to_global(k, j));
                        let (a, b) = if gi >= gj { (gi, gj) } else { (gj, gi) };
                        out.push((a, b, v));
                    }
                }
            }
        }
        Some(out)
    }

    fn hessian_structure(&self) -> HessianStructure {
        HessianStructure::Arrow { half_bandwidth: 2 * NODE_VARS - 1, border: 1 }
    }
}

/// Rough duration of the descent: long enough to cancel the initial speed
/// and to lose the altitude at full thrust.
fn final_time_estimate(scenario: &ScenarioSpec, engine: &EngineCharacterization) -> f64 {
    let speed = (scenario.initial_w.powi(2) + scenario.initial_u.powi(2) + scenario.initial_v.powi(2)).sqrt();
    let accel = engine.max_thrust / scenario.initial_mass;
    let drop = (scenario.initial_altitude - scenario.final_altitude).abs();
    let (lo, hi) = scenario.final_time_bounds;
    (speed / accel).max(2.0 * (drop / accel).sqrt()).clamp(lo, hi)
}

/// Deterministic starting point: final time from the speed to kill or the
/// height to lose, linear state interpolation between the boundary values,
/// mass falling to a rocket-equation estimate, thrust at 70% pointed against
/// the initial horizontal velocity.
pub fn initial_guess(problem: &TranscribedProblem) -> Vec<f64> {
    let sc = &problem.scenario;
    let k = &problem.consts;
    let n = sc.nodes;
    let r0 = k.radius + sc.initial_altitude;
    let rf = k.radius + sc.final_altitude;
    let speed = (sc.initial_w.powi(2) + sc.initial_u.powi(2) + sc.initial_v.powi(2)).sqrt();
    let t_f = final_time_estimate(sc, &problem.engine);

    let cos_f = sc.target_latitude.cos();
    let theta0 = if sc.free_initial_longitude {
        sc.target_longitude - (0.5 * sc.initial_u * t_f) / (rf * cos_f)
    } else {
        sc.initial_longitude
    };
    let phi0 = if sc.planar {
        sc.target_latitude
    } else if sc.free_initial_latitude {
        sc.target_latitude - (0.5 * sc.initial_v * t_f) / rf
    } else {
        sc.initial_latitude
    };
    let m_f = sc.initial_mass * (-speed / (problem.engine.isp * k.g0)).exp();
    let alpha = if sc.planar {
        sc.planar_alpha()
    } else if speed > 0.0 && (sc.initial_u != 0.0 || sc.initial_v != 0.0) {
        let a = (-sc.initial_v).atan2(-sc.initial_u);
        // atan2 returns -pi for an exactly retrograde east velocity.
        if a <= -std::f64::consts::PI + 1e-15 {
            std::f64::consts::PI
        } else {
            a
        }
    } else {
        0.0
    };
    let thrust = 0.7 * problem.engine.max_thrust;
    let mut states = Vec::with_capacity(n);
    let mut controls = Vec::with_capacity(n);
    for i in 0..n {
        let s = i as f64 / (n - 1) as f64;
        let lerp = |a: f64, b: f64| a + s * (b - a);
        states.push(LanderState {
            r: lerp(r0, rf),
            theta: lerp(theta0, sc.target_longitude),
            phi: lerp(phi0, sc.target_latitude),
            w: lerp(sc.initial_w, 0.0),
            u: lerp(sc.initial_u, 0.0),
            v: lerp(sc.initial_v, 0.0),
            m: lerp(sc.initial_mass, m_f),
        });
        controls.push(ThrustCommand::new(thrust, alpha, 0.15));
    }
    let z = problem.pack(&states, &controls, t_f).expect("guess has one sample per node");
    z.iter()
        .zip(problem.lower.iter().zip(&problem.upper))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect()
}

/// A solved (or attempted) descent in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySolution {
    /// s, from the start of the descent.
    pub times: Vec<f64>,
    pub states: Vec<LanderState>,
    pub controls: Vec<ThrustCommand>,
    /// s.
    pub t_f: f64,
    /// kg.
    pub final_mass: f64,
    /// Scaled objective `-m(t_f)/m0`.
    pub objective: f64,
    pub status: SolverStatus,
    pub iterations: usize,
    /// Largest scaled defect.
    pub max_defect: f64,
    /// Largest scaled constraint residual, boundary rows included.
    pub constraint_violation: f64,
    pub stationarity: f64,
}

impl TrajectorySolution {
    /// Reported pitch: elevation of the thrust vector above the local
    /// horizontal, rad.
    pub fn pitch(&self) -> Vec<f64> {
        self.controls.iter().map(|c| c.beta).collect()
    }

    pub fn initial_state(&self) -> &LanderState {
        &self.states[0]
    }

    pub fn propellant(&self) -> f64 {
        self.states[0].m - self.final_mass
    }
}

pub fn extract_solution(problem: &TranscribedProblem, z: &[f64], report: &SolverReport) -> Result<TrajectorySolution> {
    let (times, states, controls, t_f) = problem.unpack(z)?;
    let mut c = vec![0.0; problem.num_constraints()];
    problem.constraints(z, &mut c);
    let final_mass = states.last().map(|s| s.m).unwrap_or(f64::NAN);
    Ok(TrajectorySolution {
        times,
        states,
        controls,
        t_f,
        final_mass,
        objective: problem.objective(z),
        status: report.status,
        iterations: report.iterations,
        max_defect: problem.max_defect(z),
        constraint_violation: c.iter().fold(0.0, |a, b| a.max(b.abs())),
        stationarity: report.stationarity,
    })
}

/// Solver settings for trajectory problems. The constraint tolerance is
/// tighter than the generic default: one scaled unit of altitude is a lunar
/// radius, so 1e-6 would allow metres of terminal error.
pub fn trajectory_solver_config() -> SolverConfig {
    SolverConfig { constraint_tolerance: 1e-9, ..SolverConfig::default() }
}

/// Transcribe, solve from the deterministic guess (or `start`), and extract.
pub fn solve_scenario(
    scenario: &ScenarioSpec,
    engine: &EngineCharacterization,
    consts: &MoonConstants,
    config: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<(TrajectorySolution, Vec<f64>)> {
    let problem = transcribe(scenario, engine, consts)?;
    let guess = match start {
        Some(z) if z.len() == problem.dimension() => z.to_vec(),
        _ => initial_guess(&problem),
    };
    let (z, report) = nlp::solve(&problem, &guess, config)?;
    Ok((extract_solution(&problem, &z, &report)?, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{propagate, PiecewiseLinearSchedule, StepControl};
    use crate::nlp::check_gradients;

    fn engine12() -> EngineCharacterization {
        EngineCharacterization::new(12_000.0, 305.0, 67.45).unwrap()
    }

    #[test]
    fn layout_dimensions() {
        let p = transcribe(&ScenarioSpec::default(), &engine12(), &MoonConstants::default()).unwrap();
        assert_eq!(p.dimension(), 601);
        assert_eq!(p.defect_count(), 7 * 59);
        assert_eq!(p.initial_boundary_count(), 5);
        assert_eq!(p.final_boundary_count(), 6);
        assert!(p.lower_bounds().iter().zip(p.upper_bounds()).all(|(l, u)| l.is_finite() && u.is_finite() && l <= u));
        let planar = ScenarioSpec { planar: true, ..ScenarioSpec::default() };
        let p = transcribe(&planar, &engine12(), &MoonConstants::default()).unwrap();
        assert_eq!(p.defect_count(), 5 * 59);
        assert_eq!(p.initial_boundary_count(), 4);
        assert_eq!(p.final_boundary_count(), 4);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let e = engine12();
        let k = MoonConstants::default();
        for bad in [
            ScenarioSpec { nodes: 9, ..ScenarioSpec::default() },
            ScenarioSpec { final_altitude: 40_000.0, ..ScenarioSpec::default() },
            ScenarioSpec { final_altitude: 0.0, ..ScenarioSpec::default() },
            ScenarioSpec { min_throttle: 1.0, ..ScenarioSpec::default() },
            ScenarioSpec { final_time_bounds: (0.0, 100.0), ..ScenarioSpec::default() },
            ScenarioSpec { target_latitude: 1.5, ..ScenarioSpec::default() },
            ScenarioSpec { planar: true, initial_v: 3.0, ..ScenarioSpec::default() },
        ] {
            assert!(transcribe(&bad, &e, &k).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn weak_engine_warns() {
        let weak = EngineCharacterization::new(900.0, 310.0, 8.0).unwrap();
        let p = transcribe(&ScenarioSpec::default(), &weak, &MoonConstants::default()).unwrap();
        assert_eq!(p.warnings().len(), 1);
        assert!(transcribe(&ScenarioSpec::default(), &engine12(), &MoonConstants::default()).unwrap().warnings().is_empty());
    }

    #[test]
    fn objective_gradient_is_unit_on_final_mass() {
        let p = transcribe(&ScenarioSpec::default(), &engine12(), &MoonConstants::default()).unwrap();
        let g = p.objective_gradient(&initial_guess(&p)).unwrap();
        assert_eq!(g[10 * 59 + 6], -1.0);
        assert_eq!(g.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn guess_seeds_final_time_from_braking_acceleration() {
        let p = transcribe(&ScenarioSpec::default(), &engine12(), &MoonConstants::default()).unwrap();
        let z = initial_guess(&p);
        let t_f = z[600] * p.units().time;
        assert!((t_f - 1688.0 / 3.0).abs() < 1e-9, "{t_f}");
        assert!(z.iter().zip(p.lower_bounds().iter().zip(p.upper_bounds())).all(|(v, (l, u))| l <= v && v <= u));
        assert_eq!(z, initial_guess(&p));
    }

    #[test]
    fn degenerate_guess_is_constant() {
        let sc = ScenarioSpec {
            initial_altitude: 1000.0,
            final_altitude: 999.0,
            initial_u: 0.0,
            ..ScenarioSpec::default()
        };
        let p = transcribe(&sc, &engine12(), &MoonConstants::default()).unwrap();
        let (_, states, _, _) = p.unpack(&initial_guess(&p)).unwrap();
        for s in &states {
            assert_eq!(s.m, 4000.0);
            assert_eq!(s.u, 0.0);
            assert_eq!(s.theta, 0.0);
        }
    }

    #[test]
    fn pack_and_unpack_round_trip() {
        let p = transcribe(&ScenarioSpec::default(), &engine12(), &MoonConstants::default()).unwrap();
        let z = initial_guess(&p);
        let (_, states, controls, t_f) = p.unpack(&z).unwrap();
        let back = p.pack(&states, &controls, t_f).unwrap();
        for (a, b) in z.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
        assert!(p.unpack(&z[1..]).is_err());
    }

    #[test]
    fn trapezoidal_defect_vanishes_on_constant_derivative() {
        // Coasting in free space with no rotation: only theta moves, linearly.
        let k = MoonConstants { gravity: crate::dynamics::Gravity::Uniform(1e-30), omega: 0.0, ..MoonConstants::default() };
        let sc = ScenarioSpec {
            initial_altitude: 1000.0,
            final_altitude: 500.0,
            initial_u: 0.0,
            scheme: CollocationScheme::Trapezoidal,
            nodes: 12,
            ..ScenarioSpec::default()
        };
        let p = transcribe(&sc, &engine12(), &k).unwrap();
        let (r, w, t_f) = (k.radius + 1000.0, -0.2, 110.0);
        let states: Vec<LanderState> = (0..12)
            .map(|i| LanderState { r: r + w * t_f * i as f64 / 11.0, w, m: 3000.0, ..Default::default() })
            .collect();
        let controls = vec![ThrustCommand::coast(); 12];
        let z = p.pack(&states, &controls, t_f).unwrap();
        assert!(p.max_defect(&z) < 1e-15, "{}", p.max_defect(&z));
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        for scheme in [CollocationScheme::HermiteSimpson, CollocationScheme::Trapezoidal] {
            let sc = ScenarioSpec { nodes: 12, scheme, ..ScenarioSpec::default() };
            let p = transcribe(&sc, &engine12(), &MoonConstants::default()).unwrap();
            let mut z = initial_guess(&p);
            for (i, v) in z.iter_mut().enumerate() {
                *v += 1e-3 * ((i * 7919 % 13) as f64 - 6.0) / 6.0 * v.abs().max(1e-2);
            }
            let report = check_gradients(&p, &z);
            assert!(report.max_discrepancy() < 1e-4, "{scheme:?}: {report:?}");
        }
    }

    #[test]
    fn hessian_matches_jacobian_differences() {
        let sc = ScenarioSpec { nodes: 10, ..ScenarioSpec::default() };
        let p = transcribe(&sc, &engine12(), &MoonConstants::default()).unwrap();
        let z = initial_guess(&p);
        let mu: Vec<f64> = (0..p.num_constraints()).map(|i| ((i % 5) as f64 - 2.0) * 0.3).collect();
        let n = p.dimension();
        let mut h = vec![vec![0.0; n]; n];
        for (i, j, v) in p.lagrangian_hessian(&z, 1.0, &mu).unwrap() {
            h[i][j] += v;
            if i != j {
                h[j][i] += v;
            }
        }
        let grad = |z: &[f64]| p.constraint_jacobian(z).unwrap().tr_mul_vec(&mu);
        for j in [0, 6, 7, 8, 9, 33, 47, n - 1] {
            let step = 1e-6;
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += step;
            zm[j] -= step;
            let (gp, gm) = (grad(&zp), grad(&zm));
            for i in 0..n {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                assert!((fd - h[i][j]).abs() < 1e-5 * fd.abs().max(1.0), "({i}, {j}): {fd} vs {}", h[i][j]);
            }
        }
    }

    /// Observed order of `max|defect| / h` between meshes of `n` and `2n-1`
    /// nodes, with node states taken from a tight propagation under the
    /// same linear control.
    fn defect_order(scheme: CollocationScheme, n: usize) -> f64 {
        let k = MoonConstants::default();
        let t_f = 300.0;
        let control = |t: f64| ThrustCommand::new(9_000.0 + 5.0 * t, std::f64::consts::PI - 1e-4 * t, 0.1 + 1e-3 * t);
        let mut ratios = Vec::new();
        for nodes in [n, 2 * n - 1] {
            let sc = ScenarioSpec { nodes, scheme, ..ScenarioSpec::default() };
            let p = transcribe(&sc, &engine12(), &k).unwrap();
            let times: Vec<f64> = (0..nodes).map(|i| t_f * i as f64 / (nodes - 1) as f64).collect();
            let commands: Vec<ThrustCommand> = times.iter().map(|&t| control(t)).collect();
            let schedule = PiecewiseLinearSchedule::new(times.clone(), commands.clone()).unwrap();
            let s0 = LanderState { r: k.radius + 30_000.0, u: 1688.0, m: 4000.0, ..Default::default() };
            let tr = propagate(&s0, &schedule, 305.0, &k, t_f, StepControl::Adaptive { rel_tol: 1e-13 }).unwrap();
            let states: Vec<LanderState> = times
                .iter()
                .map(|t| {
                    let i = tr.times.iter().position(|s| (s - t).abs() < 1e-9).unwrap();
                    tr.states[i]
                })
                .collect();
            let z = p.pack(&states, &commands, t_f).unwrap();
            let h = t_f / p.units().time / (nodes - 1) as f64;
            ratios.push(p.max_defect(&z) / h);
        }
        (ratios[0] / ratios[1]).log2()
    }

    #[test]
    fn trapezoidal_defects_shrink_at_second_order() {
        let order = defect_order(CollocationScheme::Trapezoidal, 11);
        assert!(order >= 1.9, "{order}");
    }

    #[test]
    fn hermite_simpson_defects_shrink_at_fourth_order() {
        let order = defect_order(CollocationScheme::HermiteSimpson, 11);
        assert!(order >= 3.5, "{order}");
    }
}
