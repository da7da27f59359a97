//! Run configuration: a TOML document with the sections `constants`,
//! `scenario`, `engine`, `solver`, `sweep` and `output`. Every key is
//! optional; absent keys take the defaults below, and unknown keys are
//! rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use lunar_descent::dynamics::{Gravity, MoonConstants};
use lunar_descent::engine::{resolve_cluster, ClusterEngineModel, EngineCharacterization, QuadraticEngineModel};
use lunar_descent::nlp::SolverConfig;
use lunar_descent::pareto::{SweepGrid, SweepSpec};
use lunar_descent::transcription::{trajectory_solver_config, ScenarioSpec};
use lunar_descent::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub constants: ConstantsConfig,
    pub scenario: ScenarioSpec,
    pub engine: EngineConfig,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            constants: ConstantsConfig::default(),
            scenario: ScenarioSpec::default(),
            engine: EngineConfig::default(),
            solver: trajectory_solver_config(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    /// m³/s².
    pub mu: f64,
    /// m.
    pub radius: f64,
    /// rad/s.
    pub omega: f64,
    /// m/s².
    pub g0: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        let k = MoonConstants::default();
        Self { mu: k.mu, radius: k.radius, omega: k.omega, g0: k.g0 }
    }
}

impl ConstantsConfig {
    pub fn moon(&self) -> MoonConstants {
        MoonConstants { mu: self.mu, radius: self.radius, omega: self.omega, g0: self.g0, gravity: Gravity::InverseSquare }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineCase {
    /// `n` identical engines.
    Cluster,
    /// One engine with thrust-dependent mass and isp.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub case: EngineCase,
    pub cluster: ClusterEngineModel,
    pub quadratic: QuadraticConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { case: EngineCase::Quadratic, cluster: ClusterEngineModel::default(), quadratic: QuadraticConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticConfig {
    /// Rated thrust for single solves, N.
    pub max_thrust: f64,
    pub base_mass: f64,
    pub c1: f64,
    pub c2: f64,
    pub isp0: f64,
    pub d1: f64,
    pub d2: f64,
    pub valid_thrust_range: (f64, f64),
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        let m = QuadraticEngineModel::default();
        Self {
            max_thrust: 12_000.0,
            base_mass: m.base_mass,
            c1: m.c1,
            c2: m.c2,
            isp0: m.isp0,
            d1: m.d1,
            d2: m.d2,
            valid_thrust_range: m.valid_thrust_range,
        }
    }
}

impl QuadraticConfig {
    pub fn model(&self) -> QuadraticEngineModel {
        QuadraticEngineModel {
            base_mass: self.base_mass,
            c1: self.c1,
            c2: self.c2,
            isp0: self.isp0,
            d1: self.d1,
            d2: self.d2,
            valid_thrust_range: self.valid_thrust_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// N.
    pub thrust_low: f64,
    pub thrust_high: f64,
    pub thrust_step: f64,
    pub count_low: u32,
    pub count_high: u32,
    /// Golden-section evaluations after a thrust sweep; 0 disables.
    pub refine_iterations: usize,
    pub warm_start: bool,
    /// Concurrent inner solves.
    pub parallel: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            thrust_low: 4000.0,
            thrust_high: 32_000.0,
            thrust_step: 2000.0,
            count_low: 5,
            count_high: 30,
            refine_iterations: 14,
            warm_start: false,
            parallel: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), plots: true }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.constants.moon().validate()?;
        self.scenario.validate()?;
        self.solver.validate()?;
        match self.engine.case {
            EngineCase::Cluster => self.engine.cluster.validate()?,
            EngineCase::Quadratic => {
                self.engine.quadratic.model().validate()?;
                self.engine.quadratic.model().characterize(self.engine.quadratic.max_thrust)?;
            }
        }
        let s = &self.sweep;
        if !(s.thrust_low > 0.0 && s.thrust_step > 0.0 && s.thrust_high >= s.thrust_low && s.thrust_high.is_finite()) {
            return Err(Error::validation("sweep.thrust_low", "need 0 < thrust_low <= thrust_high and thrust_step > 0"));
        }
        if s.count_low == 0 || s.count_high < s.count_low {
            return Err(Error::validation("sweep.count_low", "need 1 <= count_low <= count_high"));
        }
        if s.parallel == 0 {
            return Err(Error::validation("sweep.parallel", "must be at least 1"));
        }
        if self.output.directory.as_os_str().is_empty() {
            return Err(Error::validation("output.directory", "must not be empty"));
        }
        Ok(())
    }

    /// The engine named by `engine.case`.
    pub fn engine(&self) -> Result<EngineCharacterization> {
        match self.engine.case {
            EngineCase::Cluster => resolve_cluster(&self.engine.cluster),
            EngineCase::Quadratic => self.engine.quadratic.model().characterize(self.engine.quadratic.max_thrust),
        }
    }

    pub fn thrust_sweep(&self) -> Result<SweepSpec> {
        let s = &self.sweep;
        Ok(SweepSpec {
            grid: SweepGrid::thrust_range(s.thrust_low, s.thrust_high, s.thrust_step, self.engine.quadratic.model())?,
            scenario: self.scenario.clone(),
            warm_start: s.warm_start,
        })
    }

    pub fn count_sweep(&self) -> SweepSpec {
        let s = &self.sweep;
        SweepSpec {
            grid: SweepGrid::EngineCount { counts: (s.count_low..=s.count_high).collect(), engine: self.engine.cluster },
            scenario: self.scenario.clone(),
            warm_start: s.warm_start,
        }
    }
}

/// Parse and validate a configuration document.
pub fn load_config(text: &str) -> Result<RunConfig> {
    let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string().trim_end().to_string()))?;
    let defaults = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
    check_keys(&user, &defaults, "")?;
    let case = engine_case(&user)?;

    let mut merged = defaults;
    merge(&mut merged, user);
    if let Some(toml::Value::Table(engine)) = merged.get_mut("engine") {
        engine.insert("case".into(), toml::Value::String(case.into()));
    }
    let config: RunConfig = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

fn check_keys(user: &toml::Table, defaults: &toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in user {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (defaults.get(key), value) {
            (None, _) => return Err(Error::validation(path, "unknown key")),
            (Some(toml::Value::Table(d)), toml::Value::Table(u)) => check_keys(u, d, &path)?,
            (Some(toml::Value::Table(_)), _) => return Err(Error::validation(path, "expected a table")),
            _ => {}
        }
    }
    Ok(())
}

/// Exactly one of `engine.cluster` and `engine.quadratic` may be given, and
/// it must agree with `engine.case` when both are present.
fn engine_case(user: &toml::Table) -> Result<&'static str> {
    let Some(toml::Value::Table(engine)) = user.get("engine") else {
        return Ok("quadratic");
    };
    let stated = match engine.get("case") {
        None => None,
        Some(toml::Value::String(s)) if s == "cluster" => Some("cluster"),
        Some(toml::Value::String(s)) if s == "quadratic" => Some("quadratic"),
        Some(other) => return Err(Error::validation("engine.case", format!("expected \"cluster\" or \"quadratic\", got {other}"))),
    };
    let given: Vec<&'static str> = ["cluster", "quadratic"].into_iter().filter(|k| engine.contains_key(*k)).collect();
    match (stated, given.as_slice()) {
        (_, [_, _]) => Err(Error::validation("engine", "engine.cluster and engine.quadratic are both set; keep only the active case")),
        (Some(s), [g]) if s != *g => Err(Error::validation(format!("engine.{g}"), format!("conflicts with engine.case = \"{s}\""))),
        (Some(s), _) => Ok(s),
        (None, [g]) => Ok(g),
        (None, _) => Ok("quadratic"),
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// The documented defaults as a TOML document, with only the active engine
/// case written out.
pub fn default_document() -> String {
    let mut doc = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
    if let Some(toml::Value::Table(engine)) = doc.get_mut("engine") {
        engine.remove("cluster");
    }
    toml::to_string(&doc).expect("defaults serialize")
}
