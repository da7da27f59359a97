//! Fixed-step RK4 and adaptive Dormand–Prince 5(4) propagation of the
//! lander dynamics.

use crate::dynamics::{derivative_unchecked, LanderState, MoonConstants, StateVector, ThrustCommand, POLE_GUARD};
use crate::error::{Error, Result};

/// Anything that yields a thrust command as a function of time since the
/// start of propagation.
pub trait ControlSchedule {
    fn command_at(&self, t: f64) -> ThrustCommand;

    /// Times (strictly inside the span) where the command is not smooth.
    /// Propagation steps land exactly on them.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl ControlSchedule for ThrustCommand {
    fn command_at(&self, _t: f64) -> ThrustCommand {
        *self
    }
}

impl<F: Fn(f64) -> ThrustCommand> ControlSchedule for F {
    fn command_at(&self, t: f64) -> ThrustCommand {
        self(t)
    }
}

/// Node-sampled commands joined by straight lines.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearSchedule {
    times: Vec<f64>,
    commands: Vec<ThrustCommand>,
}

impl PiecewiseLinearSchedule {
    pub fn new(times: Vec<f64>, commands: Vec<ThrustCommand>) -> Result<Self> {
        if times.len() != commands.len() {
            return Err(Error::Dimension { expected: times.len(), got: commands.len() });
        }
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("schedule.times", "need at least two strictly increasing times"));
        }
        Ok(Self { times, commands })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

impl ControlSchedule for PiecewiseLinearSchedule {
    /// `t` is measured from the first sample time.
    fn command_at(&self, t: f64) -> ThrustCommand {
        let t = t + self.times[0];
        let n = self.times.len();
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let (a, b) = (&self.commands[k], &self.commands[k + 1]);
        ThrustCommand::new(
            a.thrust + s * (b.thrust - a.thrust),
            a.alpha + s * (b.alpha - a.alpha),
            a.beta + s * (b.beta - a.beta),
        )
    }

    fn breakpoints(&self) -> Vec<f64> {
        let t0 = self.times[0];
        self.times[1..self.times.len() - 1].iter().map(|t| t - t0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    /// Classical RK4 with (at most) this step, s.
    Fixed(f64),
    /// Dormand–Prince with this relative tolerance.
    Adaptive { rel_tol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<LanderState>,
}

impl Trajectory {
    pub fn last(&self) -> &LanderState {
        self.states.last().expect("trajectory always holds the initial sample")
    }
}

struct Rhs<'a, S: ControlSchedule + ?Sized> {
    schedule: &'a S,
    isp: f64,
    consts: &'a MoonConstants,
}

impl<S: ControlSchedule + ?Sized> Rhs<'_, S> {
    fn eval(&self, t: f64, x: &StateVector) -> StateVector {
        let c = self.schedule.command_at(t).to_vector();
        derivative_unchecked(x, &c, self.isp, self.consts)
    }

    fn guard(&self, t: f64, x: &StateVector) -> Result<()> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::PropagationAbort { time: t, reason: "non-finite state".into() });
        }
        if x[0] < self.consts.radius {
            return Err(Error::PropagationAbort {
                time: t,
                reason: format!("surface impact (r = {:.3} m)", x[0]),
            });
        }
        if x[2].abs() >= std::f64::consts::FRAC_PI_2 - POLE_GUARD {
            return Err(Error::PropagationAbort { time: t, reason: "pole singularity".into() });
        }
        if !(x[6] > 0.0) {
            return Err(Error::PropagationAbort { time: t, reason: "mass exhausted".into() });
        }
        Ok(())
    }

    /// Guard the end of a step from `(t0, x0)`; a surface crossing is dated
    /// by bisection on a single RK4 sub-step.
    fn guard_step(&self, t0: f64, x0: &StateVector, t1: f64, x1: &StateVector) -> Result<()> {
        match self.guard(t1, x1) {
            Err(Error::PropagationAbort { reason, .. }) if x1[0] < self.consts.radius && x0[0] >= self.consts.radius => {
                let (mut lo, mut hi) = (0.0, t1 - t0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if rk4_step(self, t0, x0, mid)[0] < self.consts.radius {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Err(Error::PropagationAbort { time: t0 + hi, reason })
            }
            other => other,
        }
    }
}

/// Propagate `initial` over `[0, t_span]`. The output holds the initial
/// sample, every accepted step, and ends exactly at `t_span`.
pub fn propagate<S: ControlSchedule + ?Sized>(
    initial: &LanderState,
    schedule: &S,
    isp: f64,
    consts: &MoonConstants,
    t_span: f64,
    step: StepControl,
) -> Result<Trajectory> {
    if !(t_span > 0.0) {
        return Err(Error::validation("t_span", "must be positive"));
    }
    if !(isp > 0.0) {
        return Err(Error::validation("isp", "must be positive"));
    }
    let rhs = Rhs { schedule, isp, consts };
    let mut x = initial.to_vector();
    rhs.guard(0.0, &x)?;

    let mut stops: Vec<f64> = schedule
        .breakpoints()
        .into_iter()
        .filter(|&b| b > 0.0 && b < t_span)
        .collect();
    stops.push(t_span);

    let mut out = Trajectory { times: vec![0.0], states: vec![*initial] };
    let mut t = 0.0;
    let mut h_adaptive = None;
    for stop in stops {
        match step {
            StepControl::Fixed(h) => {
                if !(h > 0.0) {
                    return Err(Error::validation("step", "fixed step must be positive"));
                }
                let n = ((stop - t) / h).ceil().max(1.0) as usize;
                let dt = (stop - t) / n as f64;
                for i in 0..n {
                    let (t0, x0) = (t, x);
                    x = rk4_step(&rhs, t, &x, dt);
                    t = if i + 1 == n { stop } else { t + dt };
                    rhs.guard_step(t0, &x0, t, &x)?;
                    out.times.push(t);
                    out.states.push(LanderState::from_vector(&x));
                }
            }
            StepControl::Adaptive { rel_tol } => {
                dopri_segment(&rhs, &mut t, &mut x, stop, rel_tol, &mut h_adaptive, &mut out)?;
            }
        }
    }
    Ok(out)
}

fn rk4_step<S: ControlSchedule + ?Sized>(rhs: &Rhs<'_, S>, t: f64, x: &StateVector, h: f64) -> StateVector {
    let k1 = rhs.eval(t, x);
    let k2 = rhs.eval(t + 0.5 * h, &(x + k1 * (0.5 * h)));
    let k3 = rhs.eval(t + 0.5 * h, &(x + k2 * (0.5 * h)));
    let k4 = rhs.eval(t + h, &(x + k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn dopri_segment<S: ControlSchedule + ?Sized>(
    rhs: &Rhs<'_, S>,
    t: &mut f64,
    x: &mut StateVector,
    stop: f64,
    rel_tol: f64,
    h_state: &mut Option<f64>,
    out: &mut Trajectory,
) -> Result<()> {
    if !(rel_tol > 0.0) {
        return Err(Error::validation("rel_tol", "must be positive"));
    }
    let abs_tol = rel_tol * 1e-3;
    let mut h = h_state.unwrap_or(((stop - *t) * 1e-3).max(1e-6));
    let mut rejections = 0usize;
    while *t < stop {
        let last = *t + h >= stop;
        let h_try = if last { stop - *t } else { h };
        let k1 = rhs.eval(*t, x);
        let k2 = rhs.eval(*t + C2 * h_try, &(*x + k1 * (A21 * h_try)));
        let k3 = rhs.eval(*t + C3 * h_try, &(*x + (k1 * A31 + k2 * A32) * h_try));
        let k4 = rhs.eval(*t + C4 * h_try, &(*x + (k1 * A41 + k2 * A42 + k3 * A43) * h_try));
        let k5 = rhs.eval(*t + C5 * h_try, &(*x + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h_try));
        let k6 = rhs.eval(*t + h_try, &(*x + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h_try));
        let x5 = *x + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h_try;
        let k7 = rhs.eval(*t + h_try, &x5);
        let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h_try;

        let mut norm = 0.0f64;
        for i in 0..x.len() {
            let sc = abs_tol + rel_tol * x[i].abs().max(x5[i].abs());
            norm = norm.max((err[i] / sc).abs());
        }
        if !norm.is_finite() {
            return Err(Error::PropagationAbort { time: *t, reason: "non-finite step error".into() });
        }
        if norm <= 1.0 {
            let (t0, x0) = (*t, *x);
            *t = if last { stop } else { *t + h_try };
            *x = x5;
            rhs.guard_step(t0, &x0, *t, x)?;
            out.times.push(*t);
            out.states.push(LanderState::from_vector(x));
            rejections = 0;
            if !last {
                h = h_try * (0.9 * norm.max(1e-10).powf(-0.2)).min(5.0);
            }
        } else {
            rejections += 1;
            if rejections > 60 {
                return Err(Error::PropagationAbort { time: *t, reason: "step size underflow".into() });
            }
            h = h_try * (0.9 * norm.powf(-0.2)).max(0.1);
        }
    }
    *h_state = Some(h);
    Ok(())
}
