//! Engine sizing models: clusters of identical engines, and a single engine
//! whose dry mass and specific impulse are quadratic in its rated thrust.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The resolved engine description fed to the trajectory problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineCharacterization {
    /// N.
    pub max_thrust: f64,
    /// s.
    pub isp: f64,
    /// kg.
    pub dry_mass: f64,
}

impl EngineCharacterization {
    pub fn new(max_thrust: f64, isp: f64, dry_mass: f64) -> Result<Self> {
        for (key, value) in [("max_thrust", max_thrust), ("isp", isp), ("dry_mass", dry_mass)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::validation(format!("engine.{key}"), format!("{value} must be positive")));
            }
        }
        Ok(Self { max_thrust, isp, dry_mass })
    }
}

/// `n` identical engines throttled together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterEngineModel {
    pub count: u32,
    pub per_engine_max_thrust: f64,
    pub per_engine_isp: f64,
    pub per_engine_dry_mass: f64,
}

impl Default for ClusterEngineModel {
    fn default() -> Self {
        Self {
            count: 1,
            per_engine_max_thrust: 900.0,
            per_engine_isp: 310.0,
            per_engine_dry_mass: 8.0,
        }
    }
}

impl ClusterEngineModel {
    pub fn with_count(self, count: u32) -> Self {
        Self { count, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::validation("engine.cluster.count", "need at least one engine"));
        }
        EngineCharacterization::new(self.per_engine_max_thrust, self.per_engine_isp, self.per_engine_dry_mass)
            .map_err(|_| Error::validation("engine.cluster", "per-engine thrust, isp and dry mass must be positive"))?;
        Ok(())
    }

    pub fn total_max_thrust(&self) -> f64 {
        f64::from(self.count) * self.per_engine_max_thrust
    }

    pub fn total_dry_mass(&self) -> f64 {
        f64::from(self.count) * self.per_engine_dry_mass
    }
}

/// Collapse a cluster to a single equivalent engine. With identical engines
/// the summed mass flow is the total thrust over the common exhaust velocity.
pub fn resolve_cluster(model: &ClusterEngineModel) -> Result<EngineCharacterization> {
    model.validate()?;
    EngineCharacterization::new(model.total_max_thrust(), model.per_engine_isp, model.total_dry_mass())
}

/// Dry mass `base_mass + c1*T + c2*T^2` and specific impulse
/// `isp0 + d1*T + d2*T^2` as functions of rated thrust `T` in N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticEngineModel {
    /// kg.
    pub base_mass: f64,
    /// kg/N.
    pub c1: f64,
    /// kg/N².
    pub c2: f64,
    /// s.
    pub isp0: f64,
    /// s/N.
    pub d1: f64,
    /// s/N².
    pub d2: f64,
    /// Inclusive thrust range, N, over which the fit is trusted.
    pub valid_thrust_range: (f64, f64),
}

impl Default for QuadraticEngineModel {
    fn default() -> Self {
        Self {
            base_mass: 2.229,
            c1: 0.006288,
            c2: -7.109e-8,
            isp0: 311.3,
            d1: -0.0005976,
            d2: 4.755e-9,
            // (0, 40 kN]: the mass fit peaks near 44 kN.
            valid_thrust_range: (f64::MIN_POSITIVE, 40_000.0),
        }
    }
}

fn quadratic(a0: f64, a1: f64, a2: f64, t: f64) -> f64 {
    a0 + t * (a1 + a2 * t)
}

/// Smallest value of `a0 + a1 t + a2 t^2` over `[lo, hi]`.
fn quadratic_min(a0: f64, a1: f64, a2: f64, lo: f64, hi: f64) -> f64 {
    let mut best = quadratic(a0, a1, a2, lo).min(quadratic(a0, a1, a2, hi));
    if a2 > 0.0 {
        let vertex = -a1 / (2.0 * a2);
        if vertex > lo && vertex < hi {
            best = best.min(quadratic(a0, a1, a2, vertex));
        }
    }
    best
}

impl QuadraticEngineModel {
    pub fn with_range(self, low: f64, high: f64) -> Self {
        Self { valid_thrust_range: (low, high), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.valid_thrust_range;
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::validation(
                "engine.quadratic.valid_thrust_range",
                format!("[{lo}, {hi}] must satisfy 0 <= low < high"),
            ));
        }
        if !(quadratic_min(self.base_mass, self.c1, self.c2, lo, hi) > 0.0) {
            return Err(Error::validation("engine.quadratic", "engine mass is not positive over the valid range"));
        }
        if !(quadratic_min(self.isp0, self.d1, self.d2, lo, hi) > 0.0) {
            return Err(Error::validation("engine.quadratic", "isp is not positive over the valid range"));
        }
        // The mass slope is linear in thrust, so checking both ends suffices.
        let slope = |t: f64| self.c1 + 2.0 * self.c2 * t;
        if slope(lo) < 0.0 || slope(hi) < 0.0 {
            return Err(Error::validation(
                "engine.quadratic.valid_thrust_range",
                format!("engine mass decreases inside [{lo}, {hi}]; shrink the range below the fit's vertex"),
            ));
        }
        Ok(())
    }

    fn check_range(&self, t_max: f64, quantity: &'static str) -> Result<()> {
        let (lo, hi) = self.valid_thrust_range;
        if t_max >= lo && t_max <= hi {
            Ok(())
        } else {
            Err(Error::Range { quantity, value: t_max, low: lo, high: hi })
        }
    }

    pub fn engine_mass(&self, t_max: f64) -> Result<f64> {
        self.check_range(t_max, "engine max thrust")?;
        Ok(quadratic(self.base_mass, self.c1, self.c2, t_max))
    }

    pub fn engine_isp(&self, t_max: f64) -> Result<f64> {
        self.check_range(t_max, "engine max thrust")?;
        Ok(quadratic(self.isp0, self.d1, self.d2, t_max))
    }

    pub fn characterize(&self, t_max: f64) -> Result<EngineCharacterization> {
        EngineCharacterization::new(t_max, self.engine_isp(t_max)?, self.engine_mass(t_max)?)
    }
}

/// Final mass less engine dry mass. May be negative.
pub fn effective_payload(final_mass: f64, engine_dry_mass: f64) -> f64 {
    final_mass - engine_dry_mass
}
