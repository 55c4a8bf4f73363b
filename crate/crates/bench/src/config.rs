//! Experiment description read from a TOML document.
//!
//! ```toml
//! algorithms = ["second", "dnd", "gda"]
//! reference = "second"
//! seed = 7
//!
//! [problem]
//! kind = "toy2d"
//! negate = true
//!
//! [init]
//! mode = "uniform_box"
//! lo = -5.0
//! hi = 5.0
//! count = 1000
//!
//! [solver]
//! alpha = 0.001
//!
//! [overrides.gda]
//! alpha = 0.01
//!
//! [output]
//! summary_path = "out/summary.json"
//! ```
//!
//! `[solver]` takes any field of [`SolverConfig`]; omitted fields keep their
//! defaults. `[overrides.<algorithm>]` patches the solver table for one
//! algorithm only. `[constraint]` takes a [`SetSpec`] and is used by
//! `second_constrained`; the other algorithms ignore it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use nashdyn::constrained::{ConvexSet, SetSpec};
use nashdyn::dynamics::{Algorithm, SolverConfig};
use nashdyn::game::make_builtin;
use nashdyn::{Builtin, Game, ProblemSpec};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_CLUSTER_RADIUS: f64 = 1e-4;

/// A solver selectable from the config: one of the unconstrained algorithms
/// or the projected solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Plain(Algorithm),
    SecondConstrained,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Plain(a) => a.as_str(),
            Method::SecondConstrained => "second_constrained",
        }
    }

    /// Methods whose update is the discrete Nash dynamics, which needs `α ≤ 1`.
    fn uses_dnd(self) -> bool {
        matches!(
            self,
            Method::Plain(Algorithm::Dnd | Algorithm::Second) | Method::SecondConstrained
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "second_constrained" | "second-constrained" => Ok(Method::SecondConstrained),
            _ => s.parse::<Algorithm>().map(Method::Plain).map_err(|_| {
                BenchError::Config(format!(
                    "unknown algorithm {s:?}; expected one of gda, dnd, second, lss, lss2, cesp, second_constrained"
                ))
            }),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = BenchError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.as_str().to_string()
    }
}

/// A per-coordinate bound, or one value for every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Bound {
    fn expand(&self, dim: usize, key: &str) -> Result<Vec<f64>> {
        match self {
            Bound::Scalar(v) => Ok(vec![*v; dim]),
            Bound::Vector(v) if v.len() == dim => Ok(v.clone()),
            Bound::Vector(v) => Err(BenchError::Config(format!(
                "init.{key} has {} entries, the problem has {dim} coordinates",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Fixed { z0: Vec<f64> },
    UniformBox { lo: Bound, hi: Bound, count: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// One CSV per run is written here when set.
    pub trace_dir: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub plot_data_path: Option<PathBuf>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_cluster_radius() -> f64 {
    DEFAULT_CLUSTER_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub constraint: Option<SetSpec>,
    pub algorithms: Vec<Method>,
    /// Baseline of the paired iteration differences. Defaults to the first
    /// algorithm.
    #[serde(default)]
    pub reference: Option<Method>,
    pub init: InitSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub overrides: BTreeMap<String, toml::Table>,
    /// Terminal points closer than `radius · max(1, ‖z‖)` share a cluster.
    #[serde(default = "default_cluster_radius")]
    pub cluster_radius: f64,
    /// Criticality tolerance for verdicts on terminal points. Defaults to the
    /// solver's `tol`. The projected solver stops on displacement, which
    /// bounds the normal-cone residual only up to a problem-dependent factor,
    /// so a tight solve is usually judged with a looser verdict tolerance.
    #[serde(default)]
    pub classify_tol: Option<f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            BenchError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }

    pub fn reference(&self) -> Option<Method> {
        self.reference.or_else(|| self.algorithms.first().copied())
    }

    /// Solver settings for `method` after applying its override table.
    pub fn solver_for(&self, method: Method) -> Result<SolverConfig> {
        let Some(patch) = self.overrides.get(method.as_str()) else {
            return Ok(self.solver.clone());
        };
        let mut base = toml::Table::try_from(&self.solver)
            .map_err(|e| BenchError::Config(format!("solver table: {e}")))?;
        merge(&mut base, patch);
        base.try_into()
            .map_err(|e| BenchError::Config(format!("overrides.{method}: {e}")))
    }

    /// Check the config and build the problem, set and solver settings.
    pub fn prepare(self) -> Result<Experiment> {
        let game = make_builtin(&self.problem)?;
        let dim = game.dim();
        if self.algorithms.is_empty() {
            return Err(BenchError::Config(
                "algorithms must list at least one solver".into(),
            ));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(BenchError::Config(format!("algorithm {a} is listed twice")));
            }
        }
        if let Some(r) = self.reference {
            if !self.algorithms.contains(&r) {
                return Err(BenchError::Config(format!(
                    "reference {r} is not in algorithms"
                )));
            }
        }
        for key in self.overrides.keys() {
            let m: Method = key.parse()?;
            if !self.algorithms.contains(&m) {
                return Err(BenchError::Config(format!(
                    "overrides.{key} names an algorithm that is not run"
                )));
            }
        }
        if self.classify_tol.is_some_and(|t| !(t > 0.0)) {
            return Err(BenchError::Config("classify_tol must be positive".into()));
        }
        if !(self.cluster_radius > 0.0) {
            return Err(BenchError::Config("cluster_radius must be positive".into()));
        }
        match &self.init {
            InitSpec::Fixed { z0 } => {
                if z0.len() != dim {
                    return Err(BenchError::Config(format!(
                        "init.z0 has {} entries, the problem has {dim} coordinates",
                        z0.len()
                    )));
                }
            }
            InitSpec::UniformBox { lo, hi, count } => {
                if *count == 0 {
                    return Err(BenchError::Config("init.count must be at least 1".into()));
                }
                let lo = lo.expand(dim, "lo")?;
                let hi = hi.expand(dim, "hi")?;
                if lo
                    .iter()
                    .zip(&hi)
                    .any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite())
                {
                    return Err(BenchError::Config(
                        "init box needs finite lo < hi in every coordinate".into(),
                    ));
                }
            }
        }
        let set = match &self.constraint {
            Some(spec) => {
                let set = ConvexSet::from_spec(spec)?;
                if set.dim() != dim {
                    return Err(BenchError::Config(format!(
                        "constraint lives in R^{}, the problem in R^{dim}",
                        set.dim()
                    )));
                }
                Some(set)
            }
            None => None,
        };
        let mut solvers = Vec::with_capacity(self.algorithms.len());
        for &m in &self.algorithms {
            if m == Method::SecondConstrained && set.is_none() {
                return Err(BenchError::Config(
                    "second_constrained needs a [constraint] table".into(),
                ));
            }
            let cfg = self.solver_for(m)?;
            let checked = if m.uses_dnd() {
                cfg.validate_dnd()
            } else {
                cfg.validate()
            };
            checked.map_err(|e| BenchError::Config(format!("solver settings for {m}: {e}")))?;
            solvers.push((m, cfg));
        }
        Ok(Experiment {
            config: self,
            game,
            set,
            solvers,
        })
    }
}

fn merge(base: &mut toml::Table, patch: &toml::Table) {
    for (k, v) in patch {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// A validated config with its problem oracle and constraint set built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub game: Builtin,
    pub set: Option<ConvexSet>,
    solvers: Vec<(Method, SolverConfig)>,
}

impl Experiment {
    pub fn methods(&self) -> impl Iterator<Item = Method> + '_ {
        self.solvers.iter().map(|(m, _)| *m)
    }

    pub fn solver(&self, method: Method) -> Option<&SolverConfig> {
        self.solvers
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, c)| c)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.game.dims()
    }

    pub fn count(&self) -> usize {
        match &self.config.init {
            InitSpec::Fixed { .. } => 1,
            InitSpec::UniformBox { count, .. } => *count,
        }
    }

    /// Initial point of run `run`; identical for every method.
    pub fn initial_point(&self, run: usize) -> DVector<f64> {
        let dim = self.game.dim();
        match &self.config.init {
            InitSpec::Fixed { z0 } => DVector::from_column_slice(z0),
            InitSpec::UniformBox { lo, hi, .. } => {
                // bounds were checked by prepare
                let lo = lo.expand(dim, "lo").unwrap_or_default();
                let hi = hi.expand(dim, "hi").unwrap_or_default();
                crate::sweep::sample_uniform(self.config.seed, run as u64, &lo, &hi)
            }
        }
    }

    pub fn initial_points(&self) -> Vec<DVector<f64>> {
        (0..self.count()).map(|i| self.initial_point(i)).collect()
    }
}
