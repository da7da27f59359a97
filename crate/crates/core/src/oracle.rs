//! Independent checks on solver output: a closed-form vertical landing and
//! an adaptive re-propagation of converged trajectories.

use std::fmt;

use crate::dynamics::{Gravity, LanderState, MoonConstants};
#[cfg(test)]
use crate::dynamics::ThrustCommand;
use crate::engine::EngineCharacterization;
use crate::error::{Error, Result};
use crate::integrate::{propagate, PiecewiseLinearSchedule, StepControl};
use crate::nlp::SolverStatus;
use crate::transcription::{ScenarioSpec, TrajectorySolution};

/// One-dimensional landing under constant gravity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalScenario {
    /// Height above the landing point, m.
    pub h0: f64,
    /// Downward speed, m/s.
    pub v0: f64,
    /// m/s².
    pub g: f64,
    /// N.
    pub t_max: f64,
    /// s.
    pub isp: f64,
    /// kg.
    pub m0: f64,
}

impl VerticalScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return Err(Error::validation("vertical.h0", "must be positive"));
        }
        if !self.v0.is_finite() {
            return Err(Error::validation("vertical.v0", "must be finite"));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::validation("vertical.g", "must be non-negative"));
        }
        if !(self.isp > 0.0 && self.m0 > 0.0 && self.t_max > 0.0) {
            return Err(Error::validation("vertical", "thrust, isp and mass must be positive"));
        }
        if !(self.t_max / self.m0 > self.g) {
            return Err(Error::validation(
                "vertical.t_max",
                format!("thrust-to-mass {} m/s² must exceed gravity {} m/s²", self.t_max / self.m0, self.g),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BangBangLanding {
    /// s.
    pub coast: f64,
    /// s.
    pub burn: f64,
    /// kg.
    pub propellant: f64,
    /// Final bisection bracket on the ignition time, s.
    pub ignition_bracket: (f64, f64),
    /// Height at zero velocity for the returned ignition time, m.
    pub height_residual: f64,
}

/// Height and downward speed after a full-thrust burn of length `t`
/// started at `(h, vdown)` with mass `m`.
fn burn_state(h: f64, vdown: f64, m: f64, mdot: f64, c: f64, g: f64, t: f64) -> (f64, f64) {
    let mt = m - mdot * t;
    let ln = (m / mt).ln();
    let vup = -vdown + c * ln - g * t;
    let h_end = h - vdown * t - 0.5 * g * t * t + c * (t - mt / mdot * ln);
    (h_end, -vup)
}

/// Burn length that stops the descent, and the height where that happens.
fn stop_burn(h: f64, vdown: f64, scn: &VerticalScenario, mdot: f64, c: f64) -> Option<(f64, f64)> {
    if vdown <= 0.0 {
        return Some((0.0, h));
    }
    // Upward velocity grows monotonically while thrust exceeds weight.
    let mut lo = 0.0;
    let mut hi = scn.m0 / mdot * (1.0 - 1e-12);
    if burn_state(h, vdown, scn.m0, mdot, c, scn.g, hi).1 > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if burn_state(h, vdown, scn.m0, mdot, c, scn.g, mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    Some((t, burn_state(h, vdown, scn.m0, mdot, c, scn.g, t).0))
}

/// Free fall followed by a full-thrust burn that reaches zero height and
/// zero speed together. `g0` converts specific impulse to exhaust speed.
pub fn solve_vertical_bangbang(scn: &VerticalScenario, g0: f64) -> Result<BangBangLanding> {
    solve_vertical_bangbang_with_tolerance(scn, g0, 1e-12)
}

/// As [`solve_vertical_bangbang`], stopping the ignition-time bisection
/// once the bracket is narrower than `tol` seconds.
pub fn solve_vertical_bangbang_with_tolerance(scn: &VerticalScenario, g0: f64, tol: f64) -> Result<BangBangLanding> {
    scn.validate()?;
    if !(tol > 0.0) {
        return Err(Error::validation("tolerance", "must be positive"));
    }
    let c = scn.isp * g0;
    let mdot = scn.t_max / c;
    let coast = |t: f64| (scn.h0 - scn.v0 * t - 0.5 * scn.g * t * t, scn.v0 + scn.g * t);
    let end_height = |t: f64| {
        let (h, vd) = coast(t);
        stop_burn(h, vd, scn, mdot, c)
    };

    let Some((_, h_now)) = end_height(0.0) else {
        return Err(Error::NoSolution("propellant runs out before the descent stops".into()));
    };
    if h_now < 0.0 {
        return Err(Error::NoSolution(format!(
            "immediate ignition stops the descent {:.3} m below the landing point",
            -h_now
        )));
    }

    // Coasting until impact certainly undershoots.
    let t_ground = if scn.g > 0.0 {
        (-scn.v0 + (scn.v0 * scn.v0 + 2.0 * scn.g * scn.h0).sqrt()) / scn.g
    } else if scn.v0 > 0.0 {
        scn.h0 / scn.v0
    } else {
        return Err(Error::NoSolution("the lander never descends".into()));
    };
    let (mut lo, mut hi) = (0.0, t_ground);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match end_height(mid) {
            Some((_, h)) if h >= 0.0 => lo = mid,
            _ => hi = mid,
        }
    }
    let (h, vd) = coast(lo);
    let (burn, residual) = stop_burn(h, vd, scn, mdot, c)
        .ok_or_else(|| Error::NoSolution("propellant runs out before the descent stops".into()))?;
    Ok(BangBangLanding {
        coast: lo,
        burn,
        propellant: mdot * burn,
        ignition_bracket: (lo, hi),
        height_residual: residual,
    })
}

/// Lift applied when posing the vertical landing to the trajectory solver,
/// whose target must sit above the surface. Uniform gravity makes the shift
/// immaterial.
pub const VERTICAL_TARGET_ALTITUDE: f64 = 100.0;

/// The same landing as a planar trajectory problem with uniform gravity.
pub fn vertical_as_trajectory(
    scn: &VerticalScenario,
    g0: f64,
    nodes: usize,
) -> Result<(ScenarioSpec, EngineCharacterization, MoonConstants)> {
    scn.validate()?;
    let consts = MoonConstants { omega: 0.0, g0, gravity: Gravity::Uniform(scn.g), ..MoonConstants::default() };
    let spec = ScenarioSpec {
        initial_altitude: VERTICAL_TARGET_ALTITUDE + scn.h0,
        final_altitude: VERTICAL_TARGET_ALTITUDE,
        initial_w: -scn.v0,
        initial_u: 0.0,
        initial_v: 0.0,
        initial_mass: scn.m0,
        planar: true,
        nodes,
        final_time_bounds: (5.0, 600.0),
        ..ScenarioSpec::default()
    };
    spec.validate()?;
    Ok((spec, EngineCharacterization::new(scn.t_max, scn.isp, 1.0)?, consts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleTolerances {
    /// m.
    pub altitude: f64,
    /// m/s, per velocity component.
    pub velocity: f64,
    /// kg.
    pub propellant: f64,
}

impl OracleTolerances {
    /// 0.1% of the altitude drop, 1 m/s and 0.5 kg.
    pub fn for_scenario(scenario: &ScenarioSpec) -> Self {
        Self {
            altitude: 1e-3 * (scenario.initial_altitude - scenario.final_altitude).abs(),
            velocity: 1.0,
            propellant: 0.5,
        }
    }
}

/// Re-propagated minus collocated terminal state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TerminalErrors {
    /// m.
    pub altitude: f64,
    /// m, along the local east direction.
    pub downrange: f64,
    /// m, along the local north direction.
    pub crossrange: f64,
    /// m/s.
    pub w: f64,
    pub u: f64,
    pub v: f64,
    /// kg.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub terminal: TerminalErrors,
    /// Re-propagated minus collocated propellant, kg.
    pub propellant_difference: f64,
    pub tolerances: OracleTolerances,
    pub altitude_ok: bool,
    pub velocity_ok: bool,
    pub propellant_ok: bool,
    /// Largest tolerance-normalised error at each node.
    pub node_errors: Vec<f64>,
    /// First node whose normalised error exceeds one.
    pub first_divergent_node: Option<usize>,
    /// Set when the propagation could not reach the final time.
    pub failure: Option<String>,
}

impl OracleReport {
    pub fn pass(&self) -> bool {
        self.failure.is_none() && self.altitude_ok && self.velocity_ok && self.propellant_ok
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.terminal;
        writeln!(f, "oracle_pass={}", self.pass())?;
        writeln!(f, "altitude_error_m={:.9e}", t.altitude)?;
        writeln!(f, "downrange_error_m={:.9e}", t.downrange)?;
        writeln!(f, "crossrange_error_m={:.9e}", t.crossrange)?;
        writeln!(f, "w_error_ms={:.9e}", t.w)?;
        writeln!(f, "u_error_ms={:.9e}", t.u)?;
        writeln!(f, "v_error_ms={:.9e}", t.v)?;
        writeln!(f, "mass_error_kg={:.9e}", t.mass)?;
        writeln!(f, "propellant_difference_kg={:.9e}", self.propellant_difference)?;
        writeln!(f, "altitude_tolerance_m={:.9e}", self.tolerances.altitude)?;
        writeln!(f, "velocity_tolerance_ms={:.9e}", self.tolerances.velocity)?;
        writeln!(f, "propellant_tolerance_kg={:.9e}", self.tolerances.propellant)?;
        match self.first_divergent_node {
            Some(k) => writeln!(f, "first_divergent_node={k}")?,
            None => writeln!(f, "first_divergent_node=none")?,
        }
        if let Some(msg) = &self.failure {
            writeln!(f, "failure={msg}")?;
        }
        Ok(())
    }
}

/// Controls between nodes as the collocation schemes model them: straight
/// lines (the Hermite–Simpson midpoint control is the node average).
pub fn control_schedule(sol: &TrajectorySolution) -> Result<PiecewiseLinearSchedule> {
    PiecewiseLinearSchedule::new(sol.times.clone(), sol.controls.clone())
}

const ORACLE_TOLERANCE: f64 = 1e-10;

fn normalised(a: &LanderState, b: &LanderState, consts: &MoonConstants, tol: &OracleTolerances) -> f64 {
    let pos = ((a.r - b.r).abs())
        .max(consts.radius * (a.theta - b.theta).abs() * b.phi.cos())
        .max(consts.radius * (a.phi - b.phi).abs());
    let vel = (a.w - b.w).abs().max((a.u - b.u).abs()).max((a.v - b.v).abs());
    (pos / tol.altitude).max(vel / tol.velocity).max((a.m - b.m).abs() / tol.propellant)
}

/// Re-propagate the solution's controls from its first node with an
/// adaptive Dormand–Prince integrator and compare against the nodes.
pub fn verify_solution(
    sol: &TrajectorySolution,
    scenario: &ScenarioSpec,
    engine: &EngineCharacterization,
    consts: &MoonConstants,
) -> Result<OracleReport> {
    if sol.status != SolverStatus::Converged {
        return Err(Error::validation("solution.status", format!("expected converged, got {}", sol.status)));
    }
    if sol.states.len() < 2 || sol.states.len() != sol.times.len() {
        return Err(Error::Dimension { expected: sol.times.len().max(2), got: sol.states.len() });
    }
    let consts = if scenario.planar { consts.non_rotating() } else { *consts };
    let tolerances = OracleTolerances::for_scenario(scenario);
    let schedule = control_schedule(sol)?;
    let span = *sol.times.last().expect("at least two nodes");
    let step = StepControl::Adaptive { rel_tol: ORACLE_TOLERANCE };
    let collocated_end = sol.states.last().expect("at least two nodes");

    let mut report = OracleReport {
        terminal: TerminalErrors::default(),
        propellant_difference: 0.0,
        tolerances,
        altitude_ok: false,
        velocity_ok: false,
        propellant_ok: false,
        node_errors: Vec::new(),
        first_divergent_node: None,
        failure: None,
    };
    let trajectory = match propagate(&sol.states[0], &schedule, engine.isp, &consts, span, step) {
        Ok(t) => t,
        Err(e @ Error::PropagationAbort { .. }) => {
            report.failure = Some(e.to_string());
            return Ok(report);
        }
        Err(e) => return Err(e),
    };

    let mut j = 0;
    for (k, (t, s)) in sol.times.iter().zip(&sol.states).enumerate() {
        while j + 1 < trajectory.times.len() && trajectory.times[j] < *t {
            j += 1;
        }
        let e = normalised(&trajectory.states[j], s, &consts, &tolerances);
        if e > 1.0 && report.first_divergent_node.is_none() {
            report.first_divergent_node = Some(k);
        }
        report.node_errors.push(e);
    }

    let end = trajectory.last();
    report.terminal = TerminalErrors {
        altitude: end.r - collocated_end.r,
        downrange: consts.radius * (end.theta - collocated_end.theta) * collocated_end.phi.cos(),
        crossrange: consts.radius * (end.phi - collocated_end.phi),
        w: end.w - collocated_end.w,
        u: end.u - collocated_end.u,
        v: end.v - collocated_end.v,
        mass: end.m - collocated_end.m,
    };
    report.propellant_difference = -(end.m - collocated_end.m);
    report.altitude_ok = report.terminal.altitude.abs() < tolerances.altitude;
    report.velocity_ok = [report.terminal.w, report.terminal.u, report.terminal.v]
        .iter()
        .all(|e| e.abs() < tolerances.velocity);
    report.propellant_ok = report.propellant_difference.abs() < tolerances.propellant;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::ControlSchedule;

    fn table_vertical() -> VerticalScenario {
        VerticalScenario { h0: 2000.0, v0: 0.0, g: 1.62, t_max: 12_000.0, isp: 305.0, m0: 4000.0 }
    }

    /// Fixed-step RK4 on the 1D equations, one phase at a time.
    fn simulate(scn: &VerticalScenario, coast: f64, burn: f64, dt: f64, g0: f64) -> (f64, f64, f64) {
        let mdot = scn.t_max / (scn.isp * g0);
        let mut y = [scn.h0, -scn.v0, scn.m0];
        for (on, span) in [(false, coast), (true, burn)] {
            let f = |y: [f64; 3]| {
                if on {
                    [y[1], scn.t_max / y[2] - scn.g, -mdot]
                } else {
                    [y[1], -scn.g, 0.0]
                }
            };
            let n = (span / dt).ceil().max(1.0) as usize;
            let h = span / n as f64;
            let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
            for _ in 0..n {
                let k1 = f(y);
                let k2 = f(add(y, k1, 0.5 * h));
                let k3 = f(add(y, k2, 0.5 * h));
                let k4 = f(add(y, k3, h));
                for j in 0..3 {
                    y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
            }
        }
        (y[0], y[1], scn.m0 - y[2])
    }

    #[test]
    fn table_landing_matches_fine_grid_simulation() {
        let scn = table_vertical();
        let sol = solve_vertical_bangbang(&scn, 9.81).unwrap();
        assert!(sol.coast > 0.0 && sol.burn > 0.0);
        assert!(sol.height_residual.abs() < 1e-4, "{sol:?}");
        let (h, v, prop) = simulate(&scn, sol.coast, sol.burn, 1e-4, 9.81);
        assert!(h.abs() < 1e-4 && v.abs() < 1e-6, "h {h} v {v}");
        assert!((prop - sol.propellant).abs() < 0.01, "{prop} vs {}", sol.propellant);
    }

    #[test]
    fn weightless_burn_obeys_rocket_equation() {
        let scn = VerticalScenario { h0: 1e9, v0: 50.0, g: 0.0, t_max: 1000.0, isp: 300.0, m0: 1000.0 };
        let sol = solve_vertical_bangbang(&scn, 9.81).unwrap();
        let c = 300.0 * 9.81;
        let mdot = 1000.0 / c;
        let dv = c * (1000.0 / (1000.0 - mdot * sol.burn)).ln();
        assert!((dv - 50.0).abs() < 1e-9, "{dv}");
    }

    #[test]
    fn hover_boundary_is_rejected() {
        let scn = VerticalScenario { t_max: 1.62 * 4000.0, ..table_vertical() };
        assert!(matches!(solve_vertical_bangbang(&scn, 9.81), Err(Error::Validation { .. })));
    }

    #[test]
    fn late_start_has_no_solution() {
        let scn = VerticalScenario { h0: 10.0, v0: 200.0, ..table_vertical() };
        assert!(matches!(solve_vertical_bangbang(&scn, 9.81), Err(Error::NoSolution(_))));
    }

    #[test]
    fn bisection_bracket_is_tight_and_stable() {
        let scn = table_vertical();
        let a = solve_vertical_bangbang_with_tolerance(&scn, 9.81, 1e-6).unwrap();
        let b = solve_vertical_bangbang_with_tolerance(&scn, 9.81, 1e-7).unwrap();
        let (lo, hi) = a.ignition_bracket;
        assert!(hi - lo <= 1e-6);
        assert!((a.propellant - b.propellant).abs() < 1e-3);
        let mdot = scn.t_max / (scn.isp * 9.81);
        let c = scn.isp * 9.81;
        let end = |t: f64| {
            let h = scn.h0 - 0.5 * scn.g * t * t;
            stop_burn(h, scn.g * t, &scn, mdot, c).map(|s| s.1).unwrap_or(f64::NEG_INFINITY)
        };
        assert!(end(lo) >= 0.0 && end(hi) < 0.0);
    }

    fn circular_solution(consts: &MoonConstants) -> (TrajectorySolution, ScenarioSpec) {
        let r = consts.radius + 30_000.0;
        let speed = (consts.mu / r).sqrt();
        let rate = speed / r;
        let n = 21;
        let t_f = 1500.0;
        let times: Vec<f64> = (0..n).map(|i| t_f * i as f64 / (n - 1) as f64).collect();
        let states = times
            .iter()
            .map(|t| LanderState { r, theta: rate * t, phi: 0.0, w: 0.0, u: speed, v: 0.0, m: 4000.0 })
            .collect();
        let sol = TrajectorySolution {
            times,
            states,
            controls: vec![ThrustCommand::coast(); n],
            t_f,
            final_mass: 4000.0,
            objective: -1.0,
            status: SolverStatus::Converged,
            iterations: 0,
            max_defect: 0.0,
            constraint_violation: 0.0,
            stationarity: 0.0,
        };
        let spec = ScenarioSpec { planar: true, ..ScenarioSpec::default() };
        (sol, spec)
    }

    #[test]
    fn exact_coast_passes_at_integrator_accuracy() {
        let consts = MoonConstants::default();
        let (sol, spec) = circular_solution(&consts);
        let engine = EngineCharacterization::new(12_000.0, 305.0, 1.0).unwrap();
        let rep = verify_solution(&sol, &spec, &engine, &consts).unwrap();
        assert!(rep.pass(), "{rep}");
        assert!(rep.terminal.altitude.abs() < 1e-3 && rep.terminal.u.abs() < 1e-6, "{rep}");
        assert_eq!(rep.first_divergent_node, None);
    }

    #[test]
    fn corrupted_control_is_localised() {
        let consts = MoonConstants::default();
        let (mut sol, spec) = circular_solution(&consts);
        sol.controls[12] = ThrustCommand::new(12_000.0, 0.0, std::f64::consts::FRAC_PI_2);
        let engine = EngineCharacterization::new(12_000.0, 305.0, 1.0).unwrap();
        let rep = verify_solution(&sol, &spec, &engine, &consts).unwrap();
        assert!(!rep.pass());
        let k = rep.first_divergent_node.unwrap();
        assert!((12..=13).contains(&k), "{k}");
        assert!(rep.node_errors[..11].iter().all(|e| *e < 1e-3));
    }

    #[test]
    fn unconverged_solutions_are_refused() {
        let consts = MoonConstants::default();
        let (mut sol, spec) = circular_solution(&consts);
        sol.status = SolverStatus::MaxIterations;
        let engine = EngineCharacterization::new(12_000.0, 305.0, 1.0).unwrap();
        assert!(verify_solution(&sol, &spec, &engine, &consts).is_err());
    }

    #[test]
    fn schedule_reproduces_node_controls() {
        let consts = MoonConstants::default();
        let (mut sol, _) = circular_solution(&consts);
        sol.controls[3] = ThrustCommand::new(500.0, 1.0, 0.2);
        let s = control_schedule(&sol).unwrap();
        let c = s.command_at(sol.times[3]);
        assert_eq!((c.thrust, c.alpha, c.beta), (500.0, 1.0, 0.2));
    }
}
