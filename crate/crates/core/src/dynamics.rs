//! The second-order penalized system written as a first-order system on
//! `(x, x')`, a classical RK4 step, and fixed/adaptive integration drivers.
//!
//! The right-hand side is
//!
//! ```text
//! F(t, u, v) = (v, -gamma(t) v - u + J_{lambda(t) A}(u - lambda(t) D(u) - lambda(t) beta(t) B(u)))
//! ```
//!
//! Adaptive integration uses step doubling: one step of size `h` against two of
//! size `h/2`, sharing the first stage. That is 11 right-hand-side evaluations
//! per attempt, accepted or rejected.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{ensure_dim, CocoerciveMap, ResolventOperator, Vector};
use crate::schedules::{verify_hypotheses, HypothesisReport, ScheduleSet};

/// Smallest step the adaptive controller may take before giving up.
pub const MIN_STEP: f64 = 1e-12;
/// Right-hand-side evaluations per fixed RK4 step.
pub const EVALS_PER_FIXED_STEP: u64 = 4;
/// Right-hand-side evaluations per step-doubling attempt (first stage shared).
pub const EVALS_PER_ADAPTIVE_ATTEMPT: u64 = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub x: Vector,
    pub v: Vector,
}

impl SystemState {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }

    /// Norm of the stacked state `(x, v)`.
    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.v.norm_squared()).sqrt()
    }
}

/// Operators, schedules and initial data of one system.
///
/// The hypothesis report is computed at construction; a spec whose report
/// carries failures can still be integrated but is flagged as an unsupported regime.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    a: ResolventOperator,
    d: CocoerciveMap,
    b: CocoerciveMap,
    schedules: ScheduleSet,
    u0: Vector,
    v0: Vector,
    hypotheses: HypothesisReport,
}

impl SystemSpec {
    /// `schedules.l_b` is replaced by the Lipschitz constant of `b`.
    pub fn new(
        a: ResolventOperator,
        d: CocoerciveMap,
        b: CocoerciveMap,
        schedules: ScheduleSet,
        u0: Vector,
        v0: Vector,
    ) -> Result<Self> {
        let n = a.dim();
        for found in [d.dim(), b.dim()] {
            if found != n {
                return Err(Error::DimensionMismatch { expected: n, found });
            }
        }
        ensure_dim(&u0, n)?;
        ensure_dim(&v0, n)?;
        crate::operators::ensure_finite(&u0, "initial position")?;
        crate::operators::ensure_finite(&v0, "initial velocity")?;
        let schedules = ScheduleSet {
            l_b: b.lipschitz(),
            ..schedules
        };
        let hypotheses = verify_hypotheses(&schedules, &b);
        Ok(Self {
            a,
            d,
            b,
            schedules,
            u0,
            v0,
            hypotheses,
        })
    }

    pub fn with_schedules(&self, schedules: ScheduleSet) -> Self {
        let schedules = ScheduleSet {
            l_b: self.b.lipschitz(),
            ..schedules
        };
        Self {
            hypotheses: verify_hypotheses(&schedules, &self.b),
            schedules,
            ..self.clone()
        }
    }

    pub fn with_initial(&self, u0: Vector, v0: Vector) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.d.clone(),
            self.b.clone(),
            self.schedules,
            u0,
            v0,
        )
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }
    pub fn a(&self) -> &ResolventOperator {
        &self.a
    }
    pub fn d(&self) -> &CocoerciveMap {
        &self.d
    }
    pub fn b(&self) -> &CocoerciveMap {
        &self.b
    }
    pub fn schedules(&self) -> &ScheduleSet {
        &self.schedules
    }
    pub fn u0(&self) -> &Vector {
        &self.u0
    }
    pub fn v0(&self) -> &Vector {
        &self.v0
    }
    pub fn hypotheses(&self) -> &HypothesisReport {
        &self.hypotheses
    }

    /// False when any hypothesis check failed.
    pub fn regime_supported(&self) -> bool {
        self.hypotheses.all_passed()
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState {
            t: 0.0,
            x: self.u0.clone(),
            v: self.v0.clone(),
        }
    }

    /// Forward-backward point `J_{lambda A}(x - lambda D x - lambda beta B x)`.
    fn forward_backward(&self, t: f64, x: &Vector) -> Result<Vector> {
        let lam = self.schedules.lambda.value(t);
        let lb = lam * self.schedules.beta.value(t);
        let arg = x - self.d.apply(x)? * lam - self.b.apply(x)? * lb;
        self.a.resolvent(lam, &arg)
    }

    /// First-order right-hand side. Exactly one resolvent evaluation.
    pub fn rhs(&self, t: f64, u: &Vector, v: &Vector) -> Result<(Vector, Vector)> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "time must be nonnegative, got {t}"
            )));
        }
        ensure_dim(u, self.dim())?;
        ensure_dim(v, self.dim())?;
        crate::operators::ensure_finite(u, "position")?;
        crate::operators::ensure_finite(v, "velocity")?;
        let j = self.forward_backward(t, u)?;
        let acc = j - u - v * self.schedules.gamma.value(t);
        if let Some(i) = acc.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "acceleration".into(),
                index: Some(i),
            });
        }
        Ok((v.clone(), acc))
    }

    /// Lipschitz bound of `F(t, ., .)`:
    /// `sqrt 5 + 2 gamma(t) + sqrt 2 (1 + lambda(t) L_D + lambda(t) beta(t) L_B)`.
    pub fn lipschitz_bound(&self, t: f64) -> f64 {
        let s = &self.schedules;
        let lam = s.lambda.value(t);
        5f64.sqrt()
            + 2.0 * s.gamma.value(t)
            + 2f64.sqrt()
                * (1.0 + lam * self.d.lipschitz() + lam * s.beta.value(t) * self.b.lipschitz())
    }

    /// `||x - J_{lambda A}(x - lambda D x - lambda beta B x)||`.
    pub fn stationarity_residual(&self, t: f64, x: &Vector) -> Result<f64> {
        Ok((x - self.forward_backward(t, x)?).norm())
    }
}

fn nonfinite_state(err: Error, last_good: &SystemState) -> Error {
    match err {
        Error::NonFinite { .. } => Error::NonFiniteState {
            t: last_good.t,
            detail: err.to_string(),
            last_good: Box::new(last_good.clone()),
        },
        other => other,
    }
}

fn rk4_with_first_stage(
    spec: &SystemSpec,
    s: &SystemState,
    dt: f64,
    k1: &(Vector, Vector),
) -> Result<SystemState> {
    let half = 0.5 * dt;
    let th = s.t + half;
    let k2 = spec.rhs(th, &(&s.x + &k1.0 * half), &(&s.v + &k1.1 * half))?;
    let k3 = spec.rhs(th, &(&s.x + &k2.0 * half), &(&s.v + &k2.1 * half))?;
    let k4 = spec.rhs(s.t + dt, &(&s.x + &k3.0 * dt), &(&s.v + &k3.1 * dt))?;
    let w = dt / 6.0;
    let x = &s.x + (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * w;
    let v = &s.v + (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * w;
    let next = SystemState { t: s.t + dt, x, v };
    if !next.is_finite() {
        return Err(Error::NonFiniteState {
            t: s.t,
            detail: "RK4 update produced a non-finite state".into(),
            last_good: Box::new(s.clone()),
        });
    }
    Ok(next)
}

/// One classical RK4 step (four right-hand-side evaluations).
pub fn step_rk4(spec: &SystemSpec, s: &SystemState, dt: f64) -> Result<SystemState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {dt}"
        )));
    }
    let k1 = spec
        .rhs(s.t, &s.x, &s.v)
        .map_err(|e| nonfinite_state(e, s))?;
    rk4_with_first_stage(spec, s, dt, &k1).map_err(|e| nonfinite_state(e, s))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Fixed,
    Adaptive,
}

fn default_stride() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-8
}

/// `dt` is the step in fixed mode and the initial trial step in adaptive mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub mode: StepMode,
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    /// Adaptive mode only: clip steps so that samples land on multiples of
    /// this interval (and sample there instead of by stride).
    #[serde(default)]
    pub sample_interval: Option<f64>,
    /// Adaptive mode only: upper bound on the step.
    #[serde(default)]
    pub max_dt: Option<f64>,
}

impl IntegratorConfig {
    pub fn fixed(dt: f64, t_end: f64, sample_stride: usize) -> Self {
        Self {
            mode: StepMode::Fixed,
            dt,
            rel_tol: default_tol(),
            abs_tol: default_tol(),
            t_end,
            sample_stride,
            sample_interval: None,
            max_dt: None,
        }
    }

    pub fn adaptive(
        dt0: f64,
        rel_tol: f64,
        abs_tol: f64,
        t_end: f64,
        sample_stride: usize,
    ) -> Self {
        Self {
            mode: StepMode::Adaptive,
            dt: dt0,
            rel_tol,
            abs_tol,
            t_end,
            sample_stride,
            sample_interval: None,
            max_dt: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be nonnegative and finite");
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be >= 1");
        }
        if self.mode == StepMode::Adaptive {
            if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
                return bad("adaptive tolerances must be positive");
            }
            if let Some(si) = self.sample_interval {
                if !(si > 0.0 && si.is_finite()) {
                    return bad("sample_interval must be positive");
                }
            }
            if let Some(m) = self.max_dt {
                if m.is_nan() || m <= 0.0 {
                    return bad("max_dt must be positive");
                }
            }
        }
        Ok(())
    }
}

/// Receives every accepted step of an integration.
pub trait DiagnosticSink {
    fn start(&mut self, spec: &SystemSpec, state: &SystemState) -> Result<()>;
    fn accept(&mut self, spec: &SystemSpec, prev: &SystemState, next: &SystemState) -> Result<()>;
    /// Names of the values reported by [`DiagnosticSink::snapshot`].
    fn columns(&self) -> Vec<String> {
        Vec::new()
    }
    fn snapshot(&self) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vector,
    pub v: Vector,
    /// Sink values in the order of [`TrajectoryRecord::columns`].
    pub extras: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IntegrationStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    pub min_step: f64,
    pub max_step: f64,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub dim: usize,
    pub columns: Vec<String>,
    pub samples: Vec<Sample>,
    pub stats: IntegrationStats,
    pub warnings: Vec<String>,
    pub unsupported_regime: bool,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("a record always holds the initial state")
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Linear interpolation of a sink column at time `t`.
    pub fn column_at(&self, name: &str, t: f64) -> Option<f64> {
        let k = self.column_index(name)?;
        let s = &self.samples;
        let j = s.partition_point(|p| p.t < t);
        if j == 0 {
            return Some(s[0].extras[k]);
        }
        if j == s.len() {
            return Some(s[j - 1].extras[k]);
        }
        let (a, b) = (&s[j - 1], &s[j]);
        if b.t == a.t {
            return Some(b.extras[k]);
        }
        let w = (t - a.t) / (b.t - a.t);
        Some(a.extras[k] * (1.0 - w) + b.extras[k] * w)
    }

    /// Interpolated position at time `t`.
    pub fn position_at(&self, t: f64) -> Vector {
        let s = &self.samples;
        let j = s.partition_point(|p| p.t < t);
        if j == 0 {
            return s[0].x.clone();
        }
        if j == s.len() {
            return s[j - 1].x.clone();
        }
        let (a, b) = (&s[j - 1], &s[j]);
        if b.t == a.t {
            return b.x.clone();
        }
        let w = (t - a.t) / (b.t - a.t);
        &a.x * (1.0 - w) + &b.x * w
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((0..self.dim).map(|i| format!("x_{i}")));
        h.extend((0..self.dim).map(|i| format!("v_{i}")));
        h.extend(self.columns.iter().cloned());
        h
    }

    /// CSV with columns `t, x_0.., v_0.., <sink columns>`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = crate::io::csv_writer(w);
        out.write_record(self.header())?;
        for s in &self.samples {
            let row = std::iter::once(s.t)
                .chain(s.x.iter().copied())
                .chain(s.v.iter().copied())
                .chain(s.extras.iter().copied());
            out.write_record(crate::io::format_row(row)?)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let samples: Vec<_> = self
            .samples
            .iter()
            .map(|s| {
                serde_json::json!({
                    "t": s.t,
                    "x": s.x.as_slice(),
                    "v": s.v.as_slice(),
                    "extras": s.extras,
                })
            })
            .collect();
        serde_json::json!({
            "dim": self.dim,
            "columns": self.columns,
            "stats": self.stats,
            "warnings": self.warnings,
            "unsupported_regime": self.unsupported_regime,
            "samples": samples,
        })
    }
}

fn snapshot(sinks: &[&mut dyn DiagnosticSink]) -> Vec<f64> {
    sinks.iter().flat_map(|s| s.snapshot()).collect()
}

fn push_sample(samples: &mut Vec<Sample>, s: &SystemState, sinks: &[&mut dyn DiagnosticSink]) {
    samples.push(Sample {
        t: s.t,
        x: s.x.clone(),
        v: s.v.clone(),
        extras: snapshot(sinks),
    });
}

/// Warns when a fixed step exceeds a quarter of the inverse Lipschitz bound.
fn stability_warning(spec: &SystemSpec, cfg: &IntegratorConfig) -> Option<String> {
    let n = 2000;
    let max_l = (0..=n)
        .map(|k| {
            // log-spaced probe times, plus t = 0
            let t = if k == 0 {
                0.0
            } else {
                ((1.0 + cfg.t_end).ln() * k as f64 / n as f64).exp() - 1.0
            };
            spec.lipschitz_bound(t)
        })
        .fold(0.0, f64::max);
    let limit = 0.25 / max_l;
    (cfg.dt > limit).then(|| {
        format!(
            "fixed step {} exceeds 0.25 / max L(t) = {limit:.3e}; results may be inaccurate",
            cfg.dt
        )
    })
}

/// Integrates from `(0, u0, v0)` to `cfg.t_end`, offering each accepted step to `sinks`.
pub fn integrate(
    spec: &SystemSpec,
    cfg: &IntegratorConfig,
    sinks: &mut [&mut dyn DiagnosticSink],
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let mut state = spec.initial_state();
    for s in sinks.iter_mut() {
        s.start(spec, &state)?;
    }
    let columns: Vec<String> = sinks.iter().flat_map(|s| s.columns()).collect();
    let mut samples = Vec::new();
    push_sample(&mut samples, &state, sinks);
    let mut stats = IntegrationStats {
        min_step: f64::INFINITY,
        max_step: 0.0,
        ..Default::default()
    };
    let mut warnings = Vec::new();
    let mut since_sample = 0usize;

    match cfg.mode {
        StepMode::Fixed => {
            if let Some(w) = stability_warning(spec, cfg) {
                warnings.push(w);
            }
            let n_steps = if cfg.t_end == 0.0 {
                0
            } else {
                (cfg.t_end / cfg.dt - 1e-9).ceil().max(1.0) as u64
            };
            for k in 1..=n_steps {
                let t_next = if k == n_steps {
                    cfg.t_end
                } else {
                    k as f64 * cfg.dt
                };
                let h = t_next - state.t;
                let mut next = step_rk4(spec, &state, h)?;
                next.t = t_next;
                stats.rhs_evals += EVALS_PER_FIXED_STEP;
                stats.accepted += 1;
                stats.min_step = stats.min_step.min(h);
                stats.max_step = stats.max_step.max(h);
                for s in sinks.iter_mut() {
                    s.accept(spec, &state, &next)?;
                }
                state = next;
                since_sample += 1;
                if since_sample == cfg.sample_stride {
                    push_sample(&mut samples, &state, sinks);
                    since_sample = 0;
                }
            }
        }
        StepMode::Adaptive => {
            let max_dt = cfg.max_dt.unwrap_or(f64::INFINITY);
            let mut h = cfg.dt.min(max_dt);
            let mut grid_index = 1u64;
            while state.t < cfg.t_end {
                let mut target = cfg.t_end;
                let mut on_grid = false;
                if let Some(si) = cfg.sample_interval {
                    let g = grid_index as f64 * si;
                    if g < cfg.t_end {
                        target = g;
                        on_grid = true;
                    }
                }
                let remaining = target - state.t;
                let clipped = remaining <= h;
                let h_try = if clipped { remaining } else { h };

                let k1 = spec
                    .rhs(state.t, &state.x, &state.v)
                    .map_err(|e| nonfinite_state(e, &state))?;
                let attempt = (|| -> Result<(SystemState, SystemState)> {
                    let full = rk4_with_first_stage(spec, &state, h_try, &k1)?;
                    let mid = rk4_with_first_stage(spec, &state, 0.5 * h_try, &k1)?;
                    let k1_mid = spec.rhs(mid.t, &mid.x, &mid.v)?;
                    let fine = rk4_with_first_stage(spec, &mid, 0.5 * h_try, &k1_mid)?;
                    Ok((full, fine))
                })();
                stats.rhs_evals += EVALS_PER_ADAPTIVE_ATTEMPT;
                let (full, mut fine) = attempt.map_err(|e| nonfinite_state(e, &state))?;

                let err = fine
                    .x
                    .iter()
                    .zip(full.x.iter())
                    .chain(fine.v.iter().zip(full.v.iter()))
                    .map(|(a, b)| (a - b).abs() / (cfg.abs_tol + cfg.rel_tol * a.abs()))
                    .fold(0.0, f64::max);

                if err <= 1.0 {
                    fine.t = if clipped { target } else { state.t + h_try };
                    stats.accepted += 1;
                    stats.min_step = stats.min_step.min(h_try);
                    stats.max_step = stats.max_step.max(h_try);
                    for s in sinks.iter_mut() {
                        s.accept(spec, &state, &fine)?;
                    }
                    state = fine;
                    let grow = if err == 0.0 {
                        2.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(1.0, 2.0)
                    };
                    if !clipped {
                        h = (h_try * grow).min(max_dt);
                    }
                    if clipped && on_grid {
                        grid_index += 1;
                        push_sample(&mut samples, &state, sinks);
                        since_sample = 0;
                    } else if cfg.sample_interval.is_none() {
                        since_sample += 1;
                        if since_sample == cfg.sample_stride {
                            push_sample(&mut samples, &state, sinks);
                            since_sample = 0;
                        }
                    } else {
                        since_sample += 1;
                    }
                } else {
                    stats.rejected += 1;
                    h = 0.5 * h_try;
                    if h < MIN_STEP {
                        return Err(Error::StepUnderflow {
                            t: state.t,
                            dt: h,
                            last_good: Box::new(state),
                        });
                    }
                }
            }
        }
    }
    if since_sample != 0 {
        push_sample(&mut samples, &state, sinks);
    }
    if stats.accepted == 0 {
        stats.min_step = 0.0;
    }
    Ok(TrajectoryRecord {
        dim: spec.dim(),
        columns,
        samples,
        stats,
        warnings,
        unsupported_regime: !spec.regime_supported(),
    })
}
