//! Strict TOML experiment configuration.
//!
//! ```toml
//! seed = 0
//!
//! [problem]
//! name = "strongly-monotone-projection"   # or an [problem.inline] table
//! u0 = [0.0, 0.0]                          # optional overrides
//!
//! [schedules]
//! lambda = { c0 = 1.0, p = -0.75 }
//! beta = { c0 = 1.0, p = 0.5 }
//! gamma = { kind = "constant", g0 = 1.4142135623730951 }
//!
//! [integrator]
//! mode = "adaptive"
//! dt = 0.01
//! rel_tol = 1e-8
//! abs_tol = 1e-8
//! t_end = 2000.0
//!
//! [outputs]
//! directory = "out"
//! formats = ["csv", "json", "tsv"]
//!
//! [sweep]
//! parameter = "gamma.g0"
//! values = [1.4142135623730951, 2.0, 3.0]
//! metric = "final_distance"
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegratorConfig, SystemSpec};
use crate::error::{Error, Result};
use crate::operators::{CocoerciveMap, Matrix, ProxFn, ResolventOperator, Vector};
use crate::problems::{self, OracleMethod, ProblemInstance};
use crate::schedules::{DampingSchedule, PowerSchedule, ScheduleSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub schedules: Option<SchedulesConfig>,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Gallery name, including the seeded `-n20` variants.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub inline: Option<InlineProblem>,
    #[serde(default)]
    pub u0: Option<Vec<f64>>,
    #[serde(default)]
    pub v0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub dim: usize,
    pub a: OperatorConfig,
    pub d: MapConfig,
    pub b: MapConfig,
    /// Strong monotonicity modulus of `A`, verified against the operator.
    #[serde(default)]
    pub modulus: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorConfig {
    Zero,
    Affine { m: Vec<Vec<f64>>, q: Vec<f64> },
    L1 { weight: f64 },
    QuadraticShift { center: Vec<f64>, modulus: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapConfig {
    Zero,
    GradientAffine { q: Vec<Vec<f64>>, r: Vec<f64> },
    QuadraticPenalty { a: Vec<f64>, b: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub c0: f64,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DampingConfig {
    Constant { g0: f64 },
    DecayToFloor { g0: f64, g_inf: f64, rate: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulesConfig {
    pub lambda: PowerConfig,
    pub beta: PowerConfig,
    pub gamma: DampingConfig,
}

impl Default for SchedulesConfig {
    fn default() -> Self {
        Self {
            lambda: PowerConfig { c0: 1.0, p: -0.75 },
            beta: PowerConfig { c0: 1.0, p: 0.5 },
            gamma: DampingConfig::Constant {
                g0: std::f64::consts::SQRT_2,
            },
        }
    }
}

impl SchedulesConfig {
    pub fn build(&self) -> Result<ScheduleSet> {
        let gamma = match self.gamma {
            DampingConfig::Constant { g0 } => DampingSchedule::constant(g0)?,
            DampingConfig::DecayToFloor { g0, g_inf, rate } => {
                DampingSchedule::decay_to_floor(g0, g_inf, rate)?
            }
        };
        ScheduleSet::new(
            PowerSchedule::new(self.lambda.c0, self.lambda.p)?,
            PowerSchedule::new(self.beta.c0, self.beta.p)?,
            gamma,
            0.0,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Tsv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Tsv]
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

impl OutputsConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FinalDistance,
    FinalVelocity,
    ErgodicDistance,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::FinalDistance => "final_distance",
            Metric::FinalVelocity => "final_velocity",
            Metric::ErgodicDistance => "ergodic_distance",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// One of `lambda.c0`, `lambda.p`, `beta.c0`, `beta.p`, `gamma.g0`, `gamma.floor`.
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default = "default_metric")]
    pub metric: Metric,
}

fn default_metric() -> Metric {
    Metric::FinalDistance
}

pub const SWEEP_PARAMETERS: [&str; 6] = [
    "lambda.c0",
    "lambda.p",
    "beta.c0",
    "beta.p",
    "gamma.g0",
    "gamma.floor",
];

impl SchedulesConfig {
    /// Copy with one sweep parameter replaced.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self> {
        let mut s = *self;
        match name {
            "lambda.c0" => s.lambda.c0 = value,
            "lambda.p" => s.lambda.p = value,
            "beta.c0" => s.beta.c0 = value,
            "beta.p" => s.beta.p = value,
            "gamma.g0" => match &mut s.gamma {
                DampingConfig::Constant { g0 } | DampingConfig::DecayToFloor { g0, .. } => {
                    *g0 = value
                }
            },
            "gamma.floor" => match &mut s.gamma {
                DampingConfig::Constant { g0 } => *g0 = value,
                DampingConfig::DecayToFloor { g_inf, .. } => *g_inf = value,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter '{other}' (known: {})",
                    SWEEP_PARAMETERS.join(", ")
                )))
            }
        }
        Ok(s)
    }
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Matrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what} must be a {n}x{n} matrix")));
    }
    Ok(Matrix::from_row_iterator(
        n,
        n,
        rows.iter().flatten().copied(),
    ))
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<Vector> {
    if v.len() != n {
        return Err(Error::Config(format!(
            "{what} must have {n} entries, got {}",
            v.len()
        )));
    }
    Ok(Vector::from_column_slice(v))
}

impl MapConfig {
    fn build(&self, n: usize, what: &str) -> Result<CocoerciveMap> {
        match self {
            MapConfig::Zero => CocoerciveMap::zero(n),
            MapConfig::GradientAffine { q, r } => {
                CocoerciveMap::gradient_affine(matrix(q, n, what)?, vector(r, n, what)?)
            }
            MapConfig::QuadraticPenalty { a, b } => {
                CocoerciveMap::quadratic_penalty(vector(a, n, what)?, *b)
            }
        }
    }
}

impl InlineProblem {
    fn build(&self, schedules: ScheduleSet) -> Result<ProblemInstance> {
        let n = self.dim;
        if n == 0 {
            return Err(Error::Config("problem.inline.dim must be >= 1".into()));
        }
        let (a, objective_f) = match &self.a {
            OperatorConfig::Zero => (ResolventOperator::zero(n)?, Some(ProxFn::Zero)),
            OperatorConfig::Affine { m, q } => (
                ResolventOperator::affine(matrix(m, n, "a.m")?, vector(q, n, "a.q")?)?,
                None,
            ),
            OperatorConfig::L1 { weight } => {
                let f = ProxFn::l1(*weight)?;
                (ResolventOperator::subdifferential(n, f.clone())?, Some(f))
            }
            OperatorConfig::QuadraticShift { center, modulus } => {
                let f = ProxFn::quadratic_shift(vector(center, n, "a.center")?, *modulus)?;
                (ResolventOperator::subdifferential(n, f.clone())?, Some(f))
            }
        };
        let a = match self.modulus {
            Some(eta) => a.with_modulus(eta)?,
            None => a,
        };
        let d = self.d.build(n, "d")?;
        let b = self.b.build(n, "b")?;
        let oracle = match (&self.a, n, &b) {
            (OperatorConfig::L1 { .. }, 2, CocoerciveMap::QuadraticPenalty { .. }) => {
                OracleMethod::GridRefinement
            }
            _ => OracleMethod::ClosedForm,
        };
        let zero = Vector::zeros(n);
        let spec = SystemSpec::new(a, d.clone(), b, schedules, zero.clone(), zero)?;
        Ok(ProblemInstance {
            name: "inline".into(),
            description: "problem assembled from the config file".into(),
            spec,
            objective: objective_f.map(|f| problems::Objective { f, g: d }),
            oracle,
        })
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Parse-time validation beyond the schema.
    fn check(&self) -> Result<()> {
        match (&self.problem.name, &self.problem.inline) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "problem: give either `name` or `inline`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "problem: one of `name` or `inline` is required".into(),
                ))
            }
            _ => {}
        }
        self.integrator
            .validate()
            .map_err(|e| Error::Config(format!("integrator: {e}")))?;
        self.schedules_config()
            .build()
            .map_err(|e| Error::Config(format!("schedules: {e}")))?;
        if let Some(name) = &self.problem.name {
            if !known_problem(name) {
                return Err(Error::Config(format!(
                    "problem.name: unknown problem '{name}' (known: {})",
                    known_problems().join(", ")
                )));
            }
        }
        if let Some(s) = &self.sweep {
            if !SWEEP_PARAMETERS.contains(&s.parameter.as_str()) {
                return Err(Error::Config(format!(
                    "sweep.parameter: unknown parameter '{}' (known: {})",
                    s.parameter,
                    SWEEP_PARAMETERS.join(", ")
                )));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("sweep.values must be finite".into()));
            }
        }
        if self.outputs.formats.is_empty() {
            return Err(Error::Config("outputs.formats must not be empty".into()));
        }
        Ok(())
    }

    pub fn schedules_config(&self) -> SchedulesConfig {
        self.schedules.unwrap_or_default()
    }

    /// Builds the problem instance with schedules and initial data applied.
    pub fn instance(&self) -> Result<ProblemInstance> {
        self.instance_with(&self.schedules_config())
    }

    pub fn instance_with(&self, sc: &SchedulesConfig) -> Result<ProblemInstance> {
        let schedules = sc.build()?;
        let inst = match (&self.problem.name, &self.problem.inline) {
            (Some(name), _) => named_problem(name, self.seed)?,
            (None, Some(inline)) => inline.build(schedules)?,
            (None, None) => return Err(Error::Config("problem is missing".into())),
        };
        let n = inst.spec.dim();
        let u0 = self
            .problem
            .u0
            .as_deref()
            .map(|v| vector(v, n, "problem.u0"))
            .transpose()?;
        let v0 = self
            .problem
            .v0
            .as_deref()
            .map(|v| vector(v, n, "problem.v0"))
            .transpose()?;
        problems::with_overrides(inst, Some(schedules), u0, v0)
    }
}

fn known_problems() -> Vec<String> {
    let mut names: Vec<String> = problems::GALLERY_NAMES
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(
        problems::GALLERY_NAMES
            .iter()
            .filter(|n| **n != "l1-on-line")
            .map(|n| format!("{n}-n{}", problems::SCALED_DIM)),
    );
    names
}

fn known_problem(name: &str) -> bool {
    known_problems().iter().any(|n| n == name)
}

/// Gallery instance by name; the `-n20` variants are generated from `seed`.
pub fn named_problem(name: &str, seed: u64) -> Result<ProblemInstance> {
    if problems::GALLERY_NAMES.contains(&name) {
        return problems::gallery_instance(name);
    }
    problems::gallery_scaled(seed)?
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Config(format!("unknown problem '{name}'")))
}
