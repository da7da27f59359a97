//! Translational equations of motion of a lander in the moon-centred,
//! moon-fixed spherical frame.
//!
//! State ordering everywhere in the crate is `[r, theta, phi, w, u, v, m]`:
//! radius, longitude, latitude, radial velocity, east velocity, north
//! velocity and mass. Controls are ordered `[T, alpha, beta]`, where
//! `alpha` is the thrust azimuth measured from east toward north in the
//! local horizontal plane and `beta` the elevation of the thrust vector
//! above the local horizontal.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 7;
pub const CONTROL_DIM: usize = 3;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type ControlVector = SVector<f64, CONTROL_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type ControlJacobian = SMatrix<f64, STATE_DIM, CONTROL_DIM>;

/// Distance from either pole inside which the spherical equations are refused.
pub const POLE_GUARD: f64 = 1e-6;

/// How the central attraction is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gravity {
    /// `mu / r^2`.
    InverseSquare,
    /// Constant downward acceleration in m/s², independent of radius.
    Uniform(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoonConstants {
    /// Gravitational parameter, m³/s².
    pub mu: f64,
    /// Rotation rate, rad/s.
    pub omega: f64,
    /// Mean radius, m.
    pub radius: f64,
    /// Standard gravity used to convert specific impulse, m/s².
    pub g0: f64,
    pub gravity: Gravity,
}

impl Default for MoonConstants {
    fn default() -> Self {
        Self {
            mu: 4.9028e12,
            omega: 2.6617e-6,
            radius: 1.7374e6,
            g0: 9.81,
            gravity: Gravity::InverseSquare,
        }
    }
}

impl MoonConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::validation("constants.mu", "must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::validation("constants.radius", "must be positive"));
        }
        if !(self.omega >= 0.0) {
            return Err(Error::validation("constants.omega", "must be non-negative"));
        }
        if !(self.g0 > 0.0) {
            return Err(Error::validation("constants.g0", "must be positive"));
        }
        if let Gravity::Uniform(g) = self.gravity {
            if !(g > 0.0) {
                return Err(Error::validation("constants.uniform_gravity", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn surface_gravity(&self) -> f64 {
        match self.gravity {
            Gravity::InverseSquare => self.mu / (self.radius * self.radius),
            Gravity::Uniform(g) => g,
        }
    }

    pub fn gravity_at(&self, r: f64) -> f64 {
        match self.gravity {
            Gravity::InverseSquare => self.mu / (r * r),
            Gravity::Uniform(g) => g,
        }
    }

    /// Copy with the rotation switched off.
    pub fn non_rotating(&self) -> Self {
        Self { omega: 0.0, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LanderState {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub w: f64,
    pub u: f64,
    pub v: f64,
    pub m: f64,
}

impl LanderState {
    pub fn to_vector(&self) -> StateVector {
        StateVector::from([self.r, self.theta, self.phi, self.w, self.u, self.v, self.m])
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            r: x[0],
            theta: x[1],
            phi: x[2],
            w: x[3],
            u: x[4],
            v: x[5],
            m: x[6],
        }
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self::from_slice(x.as_slice())
    }

    pub fn speed(&self) -> f64 {
        (self.w * self.w + self.u * self.u + self.v * self.v).sqrt()
    }

    fn check_domain(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::Domain(format!("radius {} must be positive", self.r)));
        }
        if !(self.m > 0.0) {
            return Err(Error::Domain(format!("mass {} must be positive", self.m)));
        }
        if !(self.phi.abs() < std::f64::consts::FRAC_PI_2 - POLE_GUARD) {
            return Err(Error::Domain(format!("latitude {} too close to a pole", self.phi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThrustCommand {
    /// Thrust magnitude, N.
    pub thrust: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ThrustCommand {
    pub fn new(thrust: f64, alpha: f64, beta: f64) -> Self {
        Self { thrust, alpha, beta }
    }

    pub fn coast() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> ControlVector {
        ControlVector::from([self.thrust, self.alpha, self.beta])
    }

    pub fn from_slice(c: &[f64]) -> Self {
        Self::new(c[0], c[1], c[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub r_dot: f64,
    pub theta_dot: f64,
    pub phi_dot: f64,
    pub w_dot: f64,
    pub u_dot: f64,
    pub v_dot: f64,
    pub m_dot: f64,
}

impl StateDerivative {
    pub fn to_vector(&self) -> StateVector {
        StateVector::from([
            self.r_dot,
            self.theta_dot,
            self.phi_dot,
            self.w_dot,
            self.u_dot,
            self.v_dot,
            self.m_dot,
        ])
    }

    fn from_vector(d: &StateVector) -> Self {
        Self {
            r_dot: d[0],
            theta_dot: d[1],
            phi_dot: d[2],
            w_dot: d[3],
            u_dot: d[4],
            v_dot: d[5],
            m_dot: d[6],
        }
    }
}

/// Time derivative of the lander state under a thrust command.
pub fn state_derivative(
    state: &LanderState,
    cmd: &ThrustCommand,
    isp: f64,
    consts: &MoonConstants,
) -> Result<StateDerivative> {
    state.check_domain()?;
    if !(isp > 0.0) {
        return Err(Error::Domain(format!("specific impulse {isp} must be positive")));
    }
    let d = derivative_unchecked(&state.to_vector(), &cmd.to_vector(), isp, consts);
    Ok(StateDerivative::from_vector(&d))
}

/// Partial derivatives of the state derivative with respect to the state
/// (7x7) and to the control (7x3).
pub fn dynamics_jacobian(
    state: &LanderState,
    cmd: &ThrustCommand,
    isp: f64,
    consts: &MoonConstants,
) -> Result<(StateJacobian, ControlJacobian)> {
    state.check_domain()?;
    if !(isp > 0.0) {
        return Err(Error::Domain(format!("specific impulse {isp} must be positive")));
    }
    Ok(jacobian_unchecked(&state.to_vector(), &cmd.to_vector(), isp, consts))
}

/// Equations of motion without domain checks, for hot loops whose variables
/// are already confined by bounds.
pub(crate) fn derivative_unchecked(
    x: &StateVector,
    c: &ControlVector,
    isp: f64,
    k: &MoonConstants,
) -> StateVector {
    let (r, phi, w, u, v, m) = (x[0], x[2], x[3], x[4], x[5], x[6]);
    let (thrust, alpha, beta) = (c[0], c[1], c[2]);
    let (sp, cp) = phi.sin_cos();
    let tp = sp / cp;
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let om = k.omega;
    let acc = thrust / m;

    let w_dot = acc * sb - k.gravity_at(r) + (u * u + v * v) / r
        + 2.0 * u * om * cp
        + r * om * om * cp * cp;
    let u_dot = acc * ca * cb + (-u * w + u * v * tp) / r - 2.0 * w * om * cp + 2.0 * v * om * sp;
    let v_dot = acc * sa * cb + (-v * w - u * u * tp) / r - 2.0 * u * om * sp - r * om * om * sp * cp;

    StateVector::from([
        w,
        u / (r * cp),
        v / r,
        w_dot,
        u_dot,
        v_dot,
        -thrust / (isp * k.g0),
    ])
}

pub(crate) fn jacobian_unchecked(
    x: &StateVector,
    c: &ControlVector,
    isp: f64,
    k: &MoonConstants,
) -> (StateJacobian, ControlJacobian) {
    let (r, phi, w, u, v, m) = (x[0], x[2], x[3], x[4], x[5], x[6]);
    let (thrust, alpha, beta) = (c[0], c[1], c[2]);
    let (sp, cp) = phi.sin_cos();
    let tp = sp / cp;
    let sec2 = 1.0 / (cp * cp);
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let om = k.omega;
    let om2 = om * om;
    let r2 = r * r;

    let mut a = StateJacobian::zeros();
    let mut b = ControlJacobian::zeros();

    // r_dot = w
    a[(0, 3)] = 1.0;

    // theta_dot = u / (r cos phi)
    a[(1, 0)] = -u / (r2 * cp);
    a[(1, 2)] = u * sp / (r * cp * cp);
    a[(1, 4)] = 1.0 / (r * cp);

    // phi_dot = v / r
    a[(2, 0)] = -v / r2;
    a[(2, 5)] = 1.0 / r;

    // w_dot
    let dg_dr = match k.gravity {
        Gravity::InverseSquare => -2.0 * k.mu / (r2 * r),
        Gravity::Uniform(_) => 0.0,
    };
    a[(3, 0)] = -dg_dr - (u * u + v * v) / r2 + om2 * cp * cp;
    a[(3, 2)] = -2.0 * u * om * sp - 2.0 * r * om2 * cp * sp;
    a[(3, 4)] = 2.0 * u / r + 2.0 * om * cp;
    a[(3, 5)] = 2.0 * v / r;
    a[(3, 6)] = -thrust * sb / (m * m);
    b[(3, 0)] = sb / m;
    b[(3, 2)] = thrust * cb / m;

    // u_dot
    a[(4, 0)] = -(-u * w + u * v * tp) / r2;
    a[(4, 2)] = u * v * sec2 / r + 2.0 * w * om * sp + 2.0 * v * om * cp;
    a[(4, 3)] = -u / r - 2.0 * om * cp;
    a[(4, 4)] = (-w + v * tp) / r;
    a[(4, 5)] = u * tp / r + 2.0 * om * sp;
    a[(4, 6)] = -thrust * ca * cb / (m * m);
    b[(4, 0)] = ca * cb / m;
    b[(4, 1)] = -thrust * sa * cb / m;
    b[(4, 2)] = -thrust * ca * sb / m;

    // v_dot
    a[(5, 0)] = -(-v * w - u * u * tp) / r2 - om2 * sp * cp;
    a[(5, 2)] = -u * u * sec2 / r - 2.0 * u * om * cp - r * om2 * (cp * cp - sp * sp);
    a[(5, 3)] = -v / r;
    a[(5, 4)] = -2.0 * u * tp / r - 2.0 * om * sp;
    a[(5, 5)] = -w / r;
    a[(5, 6)] = -thrust * sa * cb / (m * m);
    b[(5, 0)] = sa * cb / m;
    b[(5, 1)] = thrust * ca * cb / m;
    b[(5, 2)] = -thrust * sa * sb / m;

    // m_dot
    b[(6, 0)] = -1.0 / (isp * k.g0);

    (a, b)
}

/// Specific mechanical energy in the rotating frame (Jacobi integral per unit
/// mass). Conserved along unpowered inverse-square motion.
pub fn jacobi_energy(state: &LanderState, consts: &MoonConstants) -> f64 {
    let potential = match consts.gravity {
        Gravity::InverseSquare => -consts.mu / state.r,
        Gravity::Uniform(g) => g * state.r,
    };
    let centrifugal = 0.5 * (consts.omega * state.r * state.phi.cos()).powi(2);
    0.5 * (state.w * state.w + state.u * state.u + state.v * state.v) + potential - centrifugal
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn still() -> MoonConstants {
        MoonConstants::default().non_rotating()
    }

    fn fd_jacobian(x: &StateVector, c: &ControlVector, isp: f64, k: &MoonConstants) -> SMatrix<f64, 7, 10> {
        let mut out = SMatrix::<f64, 7, 10>::zeros();
        for j in 0..10 {
            let mut xp = *x;
            let mut xm = *x;
            let mut cp = *c;
            let mut cm = *c;
            let scale = if j < 7 { x[j].abs().max(1.0) } else { c[j - 7].abs().max(1.0) };
            let h = 1e-4 * scale;
            if j < 7 {
                xp[j] += h;
                xm[j] -= h;
            } else {
                cp[j - 7] += h;
                cm[j - 7] -= h;
            }
            let d = (derivative_unchecked(&xp, &cp, isp, k) - derivative_unchecked(&xm, &cm, isp, k)) / (2.0 * h);
            out.set_column(j, &d);
        }
        out
    }

    #[test]
    fn default_constants_match_surface_gravity() {
        let g = MoonConstants::default().surface_gravity();
        assert!((1.60..=1.65).contains(&g), "{g}");
    }

    #[test]
    fn resting_on_surface_feels_only_gravity() {
        let k = still();
        let s = LanderState { r: k.radius, m: 4000.0, ..Default::default() };
        let d = state_derivative(&s, &ThrustCommand::coast(), 310.0, &k).unwrap();
        assert_relative_eq!(d.w_dot, -k.mu / (k.radius * k.radius), max_relative = 1e-15);
        assert_relative_eq!(d.w_dot, -1.6242, epsilon = 1e-3);
        for other in [d.r_dot, d.theta_dot, d.phi_dot, d.u_dot, d.v_dot, d.m_dot] {
            assert_eq!(other, 0.0);
        }
    }

    #[test]
    fn circular_orbit_is_balanced() {
        let k = still();
        let r = k.radius + 30_000.0;
        let s = LanderState { r, u: (k.mu / r).sqrt(), m: 4000.0, ..Default::default() };
        let d = state_derivative(&s, &ThrustCommand::coast(), 310.0, &k).unwrap();
        assert!(d.w_dot.abs() < 1e-12);
        assert_eq!(d.u_dot, 0.0);
        assert_eq!(d.v_dot, 0.0);
    }

    #[test]
    fn mass_flow_of_table_engine() {
        let k = MoonConstants::default();
        let s = LanderState { r: k.radius + 1000.0, u: 100.0, m: 3000.0, ..Default::default() };
        let d = state_derivative(&s, &ThrustCommand::new(900.0, 0.3, 0.2), 310.0, &k).unwrap();
        assert_relative_eq!(d.m_dot, -900.0 / (310.0 * 9.81), max_relative = 1e-15);
        assert_relative_eq!(d.m_dot, -0.29595, epsilon = 1e-5);
    }

    #[test]
    fn singularity_guards() {
        let k = MoonConstants::default();
        let cmd = ThrustCommand::coast();
        let polar = LanderState { r: k.radius, phi: std::f64::consts::FRAC_PI_2, m: 1.0, ..Default::default() };
        assert!(matches!(state_derivative(&polar, &cmd, 300.0, &k), Err(Error::Domain(_))));
        let centre = LanderState { r: 0.0, m: 1.0, ..Default::default() };
        assert!(state_derivative(&centre, &cmd, 300.0, &k).is_err());
        assert!(dynamics_jacobian(&centre, &cmd, 300.0, &k).is_err());
        let fine = LanderState { r: k.radius, m: 1.0, ..Default::default() };
        assert!(state_derivative(&fine, &cmd, 0.0, &k).is_err());
    }

    #[test]
    fn jacobian_known_entries() {
        let k = MoonConstants::default();
        let s = LanderState { r: k.radius + 5000.0, theta: 0.1, phi: 0.2, w: -10.0, u: 900.0, v: 15.0, m: 3500.0 };
        let (a, b) = dynamics_jacobian(&s, &ThrustCommand::new(8000.0, 3.0, 0.4), 310.0, &k).unwrap();
        assert_eq!(a[(0, 3)], 1.0);
        assert_relative_eq!(b[(6, 0)], -3.2883e-4, epsilon = 1e-8);
    }

    #[test]
    fn coriolis_does_no_work() {
        let k = MoonConstants { omega: 1e-3, ..MoonConstants::default() };
        let x = StateVector::from([k.radius + 1e4, 0.0, 0.4, 30.0, 1200.0, -200.0, 1000.0]);
        let coast = ControlVector::zeros();
        let with = derivative_unchecked(&x, &coast, 300.0, &k);
        let without = derivative_unchecked(&x, &coast, 300.0, &MoonConstants { omega: 0.0, ..k });
        // Remove the centrifugal part, which is position dependent only.
        let (sp, cp) = x[2].sin_cos();
        let r = x[0];
        let coriolis = [
            with[3] - without[3] - r * 1e-6 * cp * cp,
            with[4] - without[4],
            with[5] - without[5] + r * 1e-6 * sp * cp,
        ];
        let power = coriolis[0] * x[3] + coriolis[1] * x[4] + coriolis[2] * x[5];
        assert!(power.abs() < 1e-9, "{power}");
    }

    proptest! {
        #[test]
        fn derivative_is_pure(r in 1.74e6..1.80e6f64, phi in -1.2..1.2f64, w in -50.0..50.0f64,
                              u in -1700.0..1700.0f64, t in 0.0..20000.0f64, beta in -1.5..1.5f64) {
            let k = MoonConstants::default();
            let x = StateVector::from([r, 0.3, phi, w, u, 12.0, 3000.0]);
            let c = ControlVector::from([t, 2.0, beta]);
            let a = derivative_unchecked(&x, &c, 305.0, &k);
            let b = derivative_unchecked(&x, &c, 305.0, &k);
            for i in 0..7 {
                prop_assert_eq!(a[i].to_bits(), b[i].to_bits());
            }
            prop_assert!(a[6] <= 0.0);
        }

        #[test]
        fn mass_flow_is_linear_in_thrust(t in 0.0..40000.0f64, scale in 0.0..4.0f64) {
            let k = MoonConstants::default();
            let x = StateVector::from([k.radius + 100.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2000.0]);
            let one = derivative_unchecked(&x, &ControlVector::from([t, 0.0, 0.0]), 310.0, &k)[6];
            let many = derivative_unchecked(&x, &ControlVector::from([t * scale, 0.0, 0.0]), 310.0, &k)[6];
            prop_assert!((many - scale * one).abs() <= 1e-14 * many.abs().max(1e-300));
        }

        #[test]
        fn jacobian_matches_finite_differences(
            r in 1.7380e6..1.78e6f64, theta in -1.0..1.0f64, phi in -1.0..1.0f64,
            w in -100.0..100.0f64, u in -1800.0..1800.0f64, v in -300.0..300.0f64, m in 1500.0..4000.0f64,
            t in 0.0..30000.0f64, alpha in -3.1..3.1f64, beta in -1.5..1.5f64,
        ) {
            let k = MoonConstants::default();
            let x = StateVector::from([r, theta, phi, w, u, v, m]);
            let c = ControlVector::from([t, alpha, beta]);
            let (a, b) = jacobian_unchecked(&x, &c, 310.0, &k);
            let fd = fd_jacobian(&x, &c, 310.0, &k);
            for i in 0..7 {
                for j in 0..10 {
                    let an = if j < 7 { a[(i, j)] } else { b[(i, j - 7)] };
                    let scale = an.abs().max(fd[(i, j)].abs()).max(1e-9);
                    prop_assert!((an - fd[(i, j)]).abs() / scale < 1e-6 || (an - fd[(i, j)]).abs() < 1e-10,
                        "entry ({}, {}): analytic {} fd {}", i, j, an, fd[(i, j)]);
                }
            }
        }
    }
}
