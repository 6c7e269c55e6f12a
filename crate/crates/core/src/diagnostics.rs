//! Lyapunov quantities along trajectories, inequality monitors, running
//! integrals with the ergodic average, and the convergence report.
//!
//! Every quantity is measured against an [`AnchorPoint`] `x*` with the
//! decomposition `w = v + D x* + p`, `v in A x*`, `p in N_C(x*)`, and the
//! anchor function `h(t) = |x(t) - x*|^2 / 2`.

use std::io::Write;

use serde::Serialize;

use crate::dynamics::{DiagnosticSink, Sample, SystemSpec, SystemState, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::operators::{ensure_dim, CocoerciveMap, Vector};
use crate::schedules::fitz_gap_quadratic;

/// Tolerance for anchor membership checks.
pub const ANCHOR_TOL: f64 = 1e-8;
/// Relative spacing mismatch under which three samples count as uniformly spaced.
const UNIFORM_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct AnchorPoint {
    pub x_star: Vector,
    pub w: Vector,
    pub v: Vector,
    pub p: Vector,
}

impl AnchorPoint {
    /// Verifies `v in A x*` through the resolvent identity and `p in N_C(x*)`
    /// with `C = zer B`; `w` is recomputed as `v + D x* + p`.
    pub fn new(spec: &SystemSpec, x_star: Vector, v: Vector, p: Vector) -> Result<Self> {
        let n = spec.dim();
        for z in [&x_star, &v, &p] {
            ensure_dim(z, n)?;
        }
        let j = spec.a().resolvent(1.0, &(&x_star + &v))?;
        let gap = (j - &x_star).norm();
        if gap > ANCHOR_TOL {
            return Err(Error::OracleFailure(format!(
                "v is not in A(x*): resolvent identity off by {gap:e}"
            )));
        }
        let c = spec.b().zero_set()?;
        let member = c
            .normal_cone_member(&x_star, &p)
            .map_err(|e| Error::OracleFailure(format!("p is not in N_C(x*): {e}")))?;
        if !member {
            return Err(Error::OracleFailure("p is not in N_C(x*)".into()));
        }
        let w = &v + spec.d().apply(&x_star)? + &p;
        Ok(Self { x_star, w, v, p })
    }

    /// As [`AnchorPoint::new`], additionally requiring `|v + D x* + p| <= 1e-8`.
    pub fn zero(spec: &SystemSpec, x_star: Vector, v: Vector, p: Vector) -> Result<Self> {
        let mut anchor = Self::new(spec, x_star, v, p)?;
        let r = anchor.w.norm();
        if r > ANCHOR_TOL {
            return Err(Error::OracleFailure(format!(
                "certificate does not vanish: |v + D x* + p| = {r:e}"
            )));
        }
        anchor.w.fill(0.0);
        Ok(anchor)
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|c| *c == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LemmaConstants {
    pub eps0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// `eps0 = sqrt((1 + L_B)^2 + 1) - (1 + L_B)` and the derived `a, b, c`.
pub fn lemma_constants(l_b: f64) -> Result<LemmaConstants> {
    if !(l_b > 0.0 && l_b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "L_B must be positive, got {l_b}"
        )));
    }
    let s = 1.0 + l_b;
    // s * (sqrt(1 + 1/s^2) - 1), written to avoid cancellation for large L_B
    let eps0 = 1.0 / ((s * s + 1.0).sqrt() + s);
    Ok(LemmaConstants {
        eps0,
        a: eps0 / (1.0 + eps0),
        b: 2.0 * (1.0 + eps0) / eps0,
        c: (2.0 + 3.0 * eps0) / (4.0 * (1.0 + eps0)),
    })
}

/// Constants for `B`, falling back to `L_B = 1` when `B = 0`
/// (every term that involves `B` then vanishes anyway).
pub fn constants_for(b: &CocoerciveMap) -> LemmaConstants {
    let l = b.lipschitz();
    lemma_constants(if l > 0.0 { l } else { 1.0 }).expect("positive Lipschitz constant")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovSample {
    pub t: f64,
    pub h: f64,
    pub h_dot: f64,
    pub h_ddot_fd: Option<f64>,
    pub energy: f64,
    pub residual: f64,
    pub bx_norm2: f64,
    pub pairing: f64,
}

fn uniform_triple(s: &[Sample], k: usize) -> Option<f64> {
    if k == 0 || k + 1 >= s.len() {
        return None;
    }
    let d0 = s[k].t - s[k - 1].t;
    let d1 = s[k + 1].t - s[k].t;
    (d0 > 0.0 && (d0 - d1).abs() <= UNIFORM_REL_TOL * d0).then_some(0.5 * (d0 + d1))
}

fn h_of(x: &Vector, x_star: &Vector) -> f64 {
    0.5 * (x - x_star).norm_squared()
}

/// Lyapunov quantities at every sample; `h_ddot_fd` is present where the
/// neighbouring samples are uniformly spaced.
pub fn lyapunov_samples(
    spec: &SystemSpec,
    anchor: &AnchorPoint,
    c: f64,
    record: &TrajectoryRecord,
) -> Result<Vec<LyapunovSample>> {
    let s = &record.samples;
    let hs: Vec<f64> = s.iter().map(|p| h_of(&p.x, &anchor.x_star)).collect();
    s.iter()
        .enumerate()
        .map(|(k, p)| {
            let e = &p.x - &anchor.x_star;
            let gamma = spec.schedules().gamma.value(p.t);
            let h_dot = p.v.dot(&e);
            let bx = spec.b().apply(&p.x)?;
            Ok(LyapunovSample {
                t: p.t,
                h: hs[k],
                h_dot,
                h_ddot_fd: uniform_triple(s, k)
                    .map(|d| (hs[k + 1] - 2.0 * hs[k] + hs[k - 1]) / (d * d)),
                energy: h_dot + gamma * hs[k] + c * gamma * p.v.norm_squared(),
                residual: spec.stationarity_residual(p.t, &p.x)?,
                bx_norm2: bx.norm_squared(),
                pairing: bx.dot(&e),
            })
        })
        .collect()
}

/// Which inequality a monitor evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inequality {
    /// Anchor inequality with the penalty gap term; holds for all `t`.
    AnchorGap,
    /// Split-penalty inequality with `eps = eps0`; holds for all `t`.
    SplitPenalty,
    /// Descent inequality with constants `a, b, c`; holds once `lambda beta < 1/L_B`.
    Descent,
    /// Descent inequality with the penalty gap term; holds once additionally `lambda <= 1/(b L_D)`.
    DescentGap,
}

impl Inequality {
    pub const ALL: [Inequality; 4] = [
        Inequality::AnchorGap,
        Inequality::SplitPenalty,
        Inequality::Descent,
        Inequality::DescentGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Inequality::AnchorGap => "anchor-gap",
            Inequality::SplitPenalty => "split-penalty",
            Inequality::Descent => "descent",
            Inequality::DescentGap => "descent-gap",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorPoint {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub violation: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViolationReport {
    pub inequality: Inequality,
    pub points: Vec<MonitorPoint>,
    /// `max(0, max(lhs - rhs))` over evaluated points.
    pub max_violation: f64,
    /// Fraction of evaluated points with `lhs - rhs > tol`.
    pub violation_fraction: f64,
    pub violations: usize,
    /// First time from which the inequality's side conditions hold at every later sample.
    pub window_start: Option<f64>,
    pub pre_asymptotic: bool,
    pub detection_rule: String,
    pub tolerance_rule: &'static str,
}

impl ViolationReport {
    pub fn passes(&self, max_fraction: f64) -> bool {
        !self.pre_asymptotic && self.violation_fraction <= max_fraction
    }

    /// CSV with columns `t, lhs, rhs, violation`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = crate::io::csv_writer(w);
        out.write_record(["t", "lhs", "rhs", "violation"])?;
        for p in &self.points {
            out.write_record(crate::io::format_row([p.t, p.lhs, p.rhs, p.violation])?)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `lambda beta < 1/L_B`, vacuous when `B = 0`.
fn penalty_condition(spec: &SystemSpec, t: f64) -> bool {
    let l_b = spec.b().lipschitz();
    l_b == 0.0 || spec.schedules().lambda_beta(t) * l_b < 1.0
}

/// `lambda <= 1/(b L_D)`, vacuous when `D = 0`.
fn smoothing_condition(spec: &SystemSpec, k: &LemmaConstants, t: f64) -> bool {
    let l_d = spec.d().lipschitz();
    l_d == 0.0 || spec.schedules().lambda.value(t) * k.b * l_d <= 1.0
}

fn detection_rule(ineq: Inequality) -> &'static str {
    match ineq {
        Inequality::AnchorGap | Inequality::SplitPenalty => "all samples",
        Inequality::Descent => "first sample from which lambda*beta < 1/L_B holds at every later sample",
        Inequality::DescentGap => {
            "first sample from which lambda*beta < 1/L_B and lambda <= 1/(b*L_D) hold at every later sample"
        }
    }
}

/// Penalty gap `sup_u phi_B(u, q) - sigma_C(q)` at `q = p / scale`, finite or an error.
fn gap_term(b: &CocoerciveMap, scale: f64, p: &Vector) -> Result<f64> {
    if p.iter().all(|c| *c == 0.0) {
        return Ok(0.0);
    }
    let g = fitz_gap_quadratic(b, scale, p)?;
    g.finite().ok_or_else(|| {
        Error::Unsupported("penalty gap is infinite: p is not normal to the constraint".into())
    })
}

fn monitor_window(
    spec: &SystemSpec,
    k: &LemmaConstants,
    ineq: Inequality,
    s: &[Sample],
) -> Option<usize> {
    let holds = |t: f64| match ineq {
        Inequality::AnchorGap | Inequality::SplitPenalty => true,
        Inequality::Descent => penalty_condition(spec, t),
        Inequality::DescentGap => penalty_condition(spec, t) && smoothing_condition(spec, k, t),
    };
    let mut start = None;
    for (i, p) in s.iter().enumerate().rev() {
        if holds(p.t) {
            start = Some(i);
        } else {
            break;
        }
    }
    start
}

/// Evaluates one inequality at every interior sample with uniform spacing,
/// using analytic `h'`, centered differences for `h''` and `x''`, and the
/// tolerance `1e-3 (1 + |(x, x')|)`.
pub fn monitor(
    spec: &SystemSpec,
    anchor: &AnchorPoint,
    k: &LemmaConstants,
    record: &TrajectoryRecord,
    ineq: Inequality,
) -> Result<ViolationReport> {
    let s = &record.samples;
    if s.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "monitors need at least 3 samples, got {}",
            s.len()
        )));
    }
    if !(1..s.len() - 1).any(|i| uniform_triple(s, i).is_some()) {
        return Err(Error::InsufficientSamples(
            "no three consecutive uniformly spaced samples".into(),
        ));
    }
    let x_star = &anchor.x_star;
    let d = spec.d();
    let b = spec.b();
    let l_d = d.lipschitz();
    let l_b = b.lipschitz();
    let sch = spec.schedules();
    let dx_star = d.apply(x_star)?;
    let dxs_v = &dx_star + &anchor.v;
    let eps = k.eps0;

    let start = monitor_window(spec, k, ineq, s);
    let mut points = Vec::new();
    if let Some(first) = start {
        for i in first.max(1)..s.len() - 1 {
            let Some(dt) = uniform_triple(s, i) else {
                continue;
            };
            let p = &s[i];
            let t = p.t;
            let (lam, beta, gamma) = (sch.lambda.value(t), sch.beta.value(t), sch.gamma.value(t));
            let lb = lam * beta;
            let e = &p.x - x_star;
            let h = |x: &Vector| h_of(x, x_star);
            let h_ddot = (h(&s[i + 1].x) - 2.0 * h(&p.x) + h(&s[i - 1].x)) / (dt * dt);
            let h_dot = p.v.dot(&e);
            let acc = (&s[i + 1].v - &s[i - 1].v) / (2.0 * dt);
            let forcing = &acc + &p.v * gamma;
            let v2 = p.v.norm_squared();
            let bx = b.apply(&p.x)?;
            let bx2 = bx.norm_squared();
            let pair = bx.dot(&e);
            let dx = d.apply(&p.x)?;
            let dd2 = (&dx - &dx_star).norm_squared();
            let w_term = lam * anchor.w.dot(&(x_star - &p.x));

            let (lhs, rhs) = match ineq {
                Inequality::AnchorGap => {
                    let d_term = if l_d > 0.0 {
                        lam * (1.0 / l_d - lam) * dd2
                    } else {
                        0.0
                    };
                    let lhs = h_ddot + gamma * h_dot + d_term - v2;
                    let rhs = lb * gap_term(b, beta, &anchor.p)?
                        + lam * lam * dxs_v.norm_squared()
                        + w_term
                        + 0.5 * lb * lb * bx2;
                    (lhs, rhs)
                }
                Inequality::SplitPenalty => {
                    let lhs = h_ddot
                        + gamma * h_dot
                        + (1.0 + 2.0 * eps) / (2.0 + 2.0 * eps) * forcing.norm_squared()
                        - v2
                        + eps * lb / (1.0 + eps) * pair;
                    let pen = if l_b > 0.0 {
                        lb * ((1.0 + eps) / 2.0 * lb - 1.0 / ((1.0 + eps) * l_b)) * bx2
                    } else {
                        0.0
                    };
                    let target = x_star - &forcing - &p.x;
                    (lhs, pen + lam * (&dx + &anchor.v).dot(&target))
                }
                Inequality::Descent => {
                    let lhs = h_ddot
                        + gamma * h_dot
                        + k.c * forcing.norm_squared()
                        + k.a * lb * (pair + bx2);
                    let d_term = if l_d > 0.0 {
                        (k.b * lam * lam - lam / l_d) * dd2
                    } else {
                        0.0
                    };
                    let rhs = d_term
                        + lam * dxs_v.dot(&(x_star - &p.x))
                        + k.b * lam * lam * dxs_v.norm_squared()
                        + v2;
                    (lhs, rhs)
                }
                Inequality::DescentGap => {
                    let lhs = h_ddot
                        + gamma * h_dot
                        + k.c * forcing.norm_squared()
                        + k.a * lb * (0.5 * pair + bx2);
                    let rhs = 0.5 * k.a * lb * gap_term(b, 0.5 * k.a * beta, &anchor.p)?
                        + k.b * lam * lam * dxs_v.norm_squared()
                        + w_term
                        + v2;
                    (lhs, rhs)
                }
            };
            let tol = 1e-3 * (1.0 + (p.x.norm_squared() + v2).sqrt());
            points.push(MonitorPoint {
                t,
                lhs,
                rhs,
                violation: lhs - rhs,
                tol,
            });
        }
    }
    let violations = points.iter().filter(|p| p.violation > p.tol).count();
    let max_violation = points.iter().map(|p| p.violation).fold(0.0, f64::max);
    Ok(ViolationReport {
        inequality: ineq,
        violation_fraction: if points.is_empty() {
            0.0
        } else {
            violations as f64 / points.len() as f64
        },
        pre_asymptotic: points.is_empty(),
        window_start: start.map(|i| s[i].t),
        points,
        max_violation,
        violations,
        detection_rule: detection_rule(ineq).to_string(),
        tolerance_rule: "1e-3 * (1 + |(x, x')|)",
    })
}

/// Monitor of the anchor inequality (valid for all `t`).
pub fn anchor_gap_monitor(
    spec: &SystemSpec,
    anchor: &AnchorPoint,
    record: &TrajectoryRecord,
) -> Result<ViolationReport> {
    monitor(
        spec,
        anchor,
        &constants_for(spec.b()),
        record,
        Inequality::AnchorGap,
    )
}

/// Monitor of the descent inequality with the penalty gap term (valid after `t_1`).
pub fn descent_gap_monitor(
    spec: &SystemSpec,
    anchor: &AnchorPoint,
    k: &LemmaConstants,
    record: &TrajectoryRecord,
) -> Result<ViolationReport> {
    monitor(spec, anchor, k, record, Inequality::DescentGap)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyCheck {
    pub passed: bool,
    pub t_start: Option<f64>,
    /// Largest excess of the energy over its running maximum since `t_start`.
    pub max_excess: f64,
    pub worst_t: Option<f64>,
}

/// After the detected `t_1`, the energy `h' + gamma h + c gamma |x'|^2` never
/// exceeds its running historical maximum by more than the monitor tolerance.
pub fn energy_check(
    spec: &SystemSpec,
    k: &LemmaConstants,
    record: &TrajectoryRecord,
    samples: &[LyapunovSample],
) -> EnergyCheck {
    let s = &record.samples;
    let Some(first) = monitor_window(spec, k, Inequality::DescentGap, s) else {
        return EnergyCheck {
            passed: true,
            t_start: None,
            max_excess: 0.0,
            worst_t: None,
        };
    };
    let mut running = samples[first].energy;
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst_t = None;
    let mut passed = true;
    for i in first + 1..s.len() {
        let excess = samples[i].energy - running;
        let tol = 1e-3 * (1.0 + s[i].x.norm_squared().sqrt().hypot(s[i].v.norm()));
        if excess > max_excess {
            max_excess = excess;
            worst_t = Some(s[i].t);
        }
        if excess > tol {
            passed = false;
        }
        running = running.max(samples[i].energy);
    }
    EnergyCheck {
        passed,
        t_start: Some(s[first].t),
        max_excess: max_excess.max(0.0),
        worst_t,
    }
}

/// Trapezoid-accumulated running integrals along accepted steps:
/// `int lambda`, `int lambda x` (for the ergodic average), `int |x'|^2`,
/// `int |x''|^2` (from velocity differences), `int lambda beta |Bx|^2` and
/// `int lambda beta <Bx, x - x*>`.
#[derive(Clone, Debug)]
pub struct RunningIntegrals {
    x_star: Vector,
    pub int_lambda: f64,
    pub int_lambda_x: Vector,
    pub int_v2: f64,
    pub int_a2: f64,
    pub int_pen: f64,
    pub int_pair: f64,
    first_x: Vector,
    last: Option<PointValues>,
}

#[derive(Clone, Debug)]
struct PointValues {
    lambda: f64,
    lambda_x: Vector,
    v2: f64,
    pen: f64,
    pair: f64,
}

pub const INTEGRAL_COLUMNS: [&str; 5] = ["int_v2", "int_a2", "int_pen", "int_pair", "int_lambda"];

impl RunningIntegrals {
    pub fn new(x_star: Vector) -> Self {
        let n = x_star.len();
        Self {
            int_lambda_x: Vector::zeros(n),
            first_x: Vector::zeros(n),
            x_star,
            int_lambda: 0.0,
            int_v2: 0.0,
            int_a2: 0.0,
            int_pen: 0.0,
            int_pair: 0.0,
            last: None,
        }
    }

    fn values(&self, spec: &SystemSpec, s: &SystemState) -> Result<PointValues> {
        let lam = spec.schedules().lambda.value(s.t);
        let lb = lam * spec.schedules().beta.value(s.t);
        let bx = spec.b().apply(&s.x)?;
        Ok(PointValues {
            lambda: lam,
            lambda_x: &s.x * lam,
            v2: s.v.norm_squared(),
            pen: lb * bx.norm_squared(),
            pair: lb * bx.dot(&(&s.x - &self.x_star)),
        })
    }

    /// `int lambda x / int lambda` on the accepted-step grid.
    pub fn ergodic_average(&self) -> Result<Vector> {
        if self.int_lambda > 0.0 {
            Ok(&self.int_lambda_x / self.int_lambda)
        } else {
            Err(Error::EmptyAccumulator)
        }
    }
}

impl DiagnosticSink for RunningIntegrals {
    fn start(&mut self, spec: &SystemSpec, state: &SystemState) -> Result<()> {
        ensure_dim(&self.x_star, spec.dim())?;
        self.first_x = state.x.clone();
        self.last = Some(self.values(spec, state)?);
        Ok(())
    }

    fn accept(&mut self, spec: &SystemSpec, prev: &SystemState, next: &SystemState) -> Result<()> {
        let h = next.t - prev.t;
        let a = match self.last.take() {
            Some(a) => a,
            None => self.values(spec, prev)?,
        };
        let b = self.values(spec, next)?;
        let trap = |fa: f64, fb: f64| 0.5 * h * (fa + fb);
        self.int_lambda += trap(a.lambda, b.lambda);
        self.int_lambda_x += (&a.lambda_x + &b.lambda_x) * (0.5 * h);
        self.int_v2 += trap(a.v2, b.v2);
        self.int_pen += trap(a.pen, b.pen);
        self.int_pair += trap(a.pair, b.pair);
        if h > 0.0 {
            self.int_a2 += (&next.v - &prev.v).norm_squared() / h;
        }
        self.last = Some(b);
        Ok(())
    }

    fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = INTEGRAL_COLUMNS.iter().map(|s| s.to_string()).collect();
        c.extend((0..self.x_star.len()).map(|i| format!("ergodic_{i}")));
        c
    }

    /// Before any weight has accumulated the ergodic columns hold `x(0)`, the limit of the average.
    fn snapshot(&self) -> Vec<f64> {
        let mut out = vec![
            self.int_v2,
            self.int_a2,
            self.int_pen,
            self.int_pair,
            self.int_lambda,
        ];
        match self.ergodic_average() {
            Ok(e) => out.extend(e.iter()),
            Err(_) => out.extend(self.first_x.iter()),
        }
        out
    }
}

/// Ergodic average stored in a record produced with a [`RunningIntegrals`] sink.
pub fn ergodic_from_record(record: &TrajectoryRecord, sample: &Sample) -> Option<Vector> {
    let k = record.column_index("ergodic_0")?;
    Some(Vector::from_column_slice(&sample.extras[k..k + record.dim]))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CauchyCheck {
    pub name: String,
    pub checkpoints: Vec<f64>,
    pub values: Vec<f64>,
    pub increments: Vec<f64>,
    pub passed: bool,
}

/// Checkpoints `T/8, T/4, T/2, T`; each of the last two window increments is
/// at most half the previous one (plus a roundoff allowance).
pub fn dyadic_cauchy(record: &TrajectoryRecord, column: &str) -> Option<CauchyCheck> {
    let t_end = record.last().t;
    let checkpoints: Vec<f64> = [0.125, 0.25, 0.5, 1.0].iter().map(|f| f * t_end).collect();
    let values: Vec<f64> = checkpoints
        .iter()
        .map(|&t| record.column_at(column, t))
        .collect::<Option<_>>()?;
    let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let slack = 1e-12 * (1.0 + values[3].abs());
    let passed = increments
        .windows(2)
        .all(|w| w[1].abs() <= 0.5 * w[0].abs() + slack);
    Some(CauchyCheck {
        name: column.to_string(),
        checkpoints,
        values,
        increments,
        passed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Strong,
    Ergodic,
    None,
    Suppressed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub t_end: f64,
    pub final_velocity_norm: f64,
    pub final_h_dot: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub final_residual: f64,
    pub integrals: Vec<CauchyCheck>,
    pub distance_checkpoints: Vec<(f64, f64)>,
    pub distance_nonincreasing: bool,
    /// Least-squares slope of `log |x - x*|` against `log t` over `[T/2, T]`.
    pub distance_tail_slope: Option<f64>,
    pub ergodic_distance: Option<f64>,
    pub ergodic_checkpoints: Vec<(f64, f64)>,
    pub verdict: Verdict,
    pub supported_regime: bool,
    pub notes: Vec<String>,
}

fn tail_slope(record: &TrajectoryRecord, x_star: &Vector) -> Option<f64> {
    let t_end = record.last().t;
    let pts: Vec<(f64, f64)> = record
        .samples
        .iter()
        .filter(|s| s.t >= 0.5 * t_end && s.t > 0.0)
        .filter_map(|s| {
            let d = (&s.x - x_star).norm();
            (d > 0.0).then(|| (s.t.ln(), d.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn nonincreasing(values: &[f64]) -> bool {
    values
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12)
}

/// Finite-horizon convergence evidence for a completed run. Integral columns
/// are read from a [`RunningIntegrals`] sink when present.
pub fn convergence_report(
    spec: &SystemSpec,
    anchor: &AnchorPoint,
    record: &TrajectoryRecord,
) -> Result<ConvergenceReport> {
    let x_star = &anchor.x_star;
    let last = record.last();
    let first = &record.samples[0];
    let t_end = last.t;
    let integrals: Vec<CauchyCheck> = INTEGRAL_COLUMNS[..4]
        .iter()
        .filter_map(|c| dyadic_cauchy(record, c))
        .collect();
    let checkpoints = [0.25, 0.5, 1.0].map(|f| f * t_end);
    let distance_checkpoints: Vec<(f64, f64)> = checkpoints
        .iter()
        .map(|&t| (t, (record.position_at(t) - x_star).norm()))
        .collect();
    let distance_nonincreasing =
        nonincreasing(&distance_checkpoints.iter().map(|p| p.1).collect::<Vec<_>>());

    let mut ergodic_checkpoints = Vec::new();
    if let Some(k) = record.column_index("ergodic_0") {
        for &t in &checkpoints {
            let e: Vec<f64> = (0..record.dim)
                .map(|i| {
                    record
                        .column_at(&record.columns[k + i], t)
                        .unwrap_or(f64::NAN)
                })
                .collect();
            ergodic_checkpoints.push((t, (Vector::from_vec(e) - x_star).norm()));
        }
    }
    let ergodic_distance = ergodic_from_record(record, last).map(|e| (e - x_star).norm());
    let supported_regime = spec.regime_supported();

    let v2_ok = integrals
        .iter()
        .find(|c| c.name == "int_v2")
        .is_some_and(|c| c.passed);
    let final_distance = (&last.x - x_star).norm();
    let mut notes = vec![
        "checks cover a finite horizon; they are evidence for, not proofs of, limits as t -> infinity".to_string(),
    ];
    let verdict = if !supported_regime {
        notes.push(format!(
            "unsupported regime (failed: {}); verdicts suppressed",
            spec.hypotheses().failures().join(", ")
        ));
        Verdict::Suppressed
    } else if distance_nonincreasing && v2_ok {
        Verdict::Strong
    } else if !ergodic_checkpoints.is_empty()
        && nonincreasing(&ergodic_checkpoints.iter().map(|p| p.1).collect::<Vec<_>>())
    {
        Verdict::Ergodic
    } else {
        Verdict::None
    };
    if t_end == 0.0 {
        notes.push("zero horizon: checkpoints coincide with the initial state".into());
    }
    Ok(ConvergenceReport {
        t_end,
        final_velocity_norm: last.v.norm(),
        final_h_dot: last.v.dot(&(&last.x - x_star)),
        initial_distance: (&first.x - x_star).norm(),
        final_distance,
        final_residual: spec.stationarity_residual(t_end, &last.x)?,
        integrals,
        distance_checkpoints,
        distance_nonincreasing,
        distance_tail_slope: tail_slope(record, x_star),
        ergodic_distance,
        ergodic_checkpoints,
        verdict,
        supported_regime,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegratorConfig};
    use crate::operators::ResolventOperator;
    use crate::schedules::{DampingSchedule, PowerSchedule, ScheduleSet};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::SQRT_2;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    fn unit_schedules(gamma: f64) -> ScheduleSet {
        ScheduleSet::new(
            PowerSchedule::new(1.0, 0.0).unwrap(),
            PowerSchedule::new(1.0, 0.0).unwrap(),
            DampingSchedule::constant(gamma).unwrap(),
            0.0,
        )
        .unwrap()
    }

    fn trivial(u0: &[f64], v0: &[f64], gamma: f64) -> SystemSpec {
        SystemSpec::new(
            ResolventOperator::zero(2).unwrap(),
            CocoerciveMap::zero(2).unwrap(),
            CocoerciveMap::zero(2).unwrap(),
            unit_schedules(gamma),
            v(u0),
            v(v0),
        )
        .unwrap()
    }

    fn zero_anchor(spec: &SystemSpec, x: Vector) -> AnchorPoint {
        AnchorPoint::zero(spec, x, Vector::zeros(2), Vector::zeros(2)).unwrap()
    }

    #[test]
    fn constants_unit_lipschitz() {
        let k = lemma_constants(1.0).unwrap();
        assert_abs_diff_eq!(k.eps0, 5f64.sqrt() - 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.eps0, 0.236068, epsilon = 1e-6);
        assert_abs_diff_eq!(k.a, 0.190983, epsilon = 1e-6);
        assert_abs_diff_eq!(k.b, 10.472136, epsilon = 1e-6);
        assert_abs_diff_eq!(k.c, 0.547746, epsilon = 1e-6);
    }

    #[test]
    fn constants_other_lipschitz() {
        let k = lemma_constants(2.0).unwrap();
        assert_abs_diff_eq!(k.eps0, 10f64.sqrt() - 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.a, 0.139620, epsilon = 1e-6);
        assert_abs_diff_eq!(k.c, 0.534905, epsilon = 1e-6);
        let big = lemma_constants(1e12).unwrap();
        assert!(big.eps0 > 0.0 && big.eps0 < 1e-11);
        assert!(big.a < 1e-11 && big.c > 0.5 && big.c - 0.5 < 1e-11);
        assert!(lemma_constants(0.0).is_err());
        assert!(lemma_constants(-1.0).is_err());
    }

    #[test]
    fn anchor_membership_is_checked() {
        let spec = trivial(&[1.0, 0.0], &[0.0, 1.0], SQRT_2);
        let ok = zero_anchor(&spec, v(&[1.0, 0.0]));
        assert!(ok.is_zero());
        // A = 0 admits only v = 0
        assert!(AnchorPoint::new(&spec, v(&[1.0, 0.0]), v(&[1.0, 0.0]), Vector::zeros(2)).is_err());
        // C = whole space admits only p = 0
        assert!(AnchorPoint::new(&spec, v(&[1.0, 0.0]), Vector::zeros(2), v(&[0.0, 1.0])).is_err());
    }

    fn trivial_record(t_end: f64, dt: f64) -> (SystemSpec, TrajectoryRecord) {
        let spec = trivial(&[1.0, 0.0], &[0.0, 1.0], SQRT_2);
        let rec = integrate(&spec, &IntegratorConfig::fixed(dt, t_end, 1), &mut []).unwrap();
        (spec, rec)
    }

    #[test]
    fn monitors_hold_on_closed_form() {
        let (spec, rec) = trivial_record(5.0, 5e-4);
        let anchor = zero_anchor(&spec, v(&[1.0, 0.0]));
        let k = lemma_constants(1.0).unwrap();
        for ineq in Inequality::ALL {
            let r = monitor(&spec, &anchor, &k, &rec, ineq).unwrap();
            assert!(!r.pre_asymptotic);
            assert!(r.max_violation <= 1e-6, "{:?}: {}", ineq, r.max_violation);
            assert_eq!(r.violations, 0);
            assert_eq!(r.points.len(), rec.samples.len() - 2);
        }
    }

    #[test]
    fn monitor_needs_three_samples() {
        let (spec, rec) = trivial_record(0.0, 1e-3);
        let anchor = zero_anchor(&spec, v(&[1.0, 0.0]));
        assert!(matches!(
            anchor_gap_monitor(&spec, &anchor, &rec),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn monitor_before_threshold_is_pre_asymptotic() {
        let sch = ScheduleSet::new(
            PowerSchedule::new(1.0, 0.0).unwrap(),
            PowerSchedule::new(1.0, 0.5).unwrap(),
            DampingSchedule::constant(SQRT_2).unwrap(),
            0.0,
        )
        .unwrap();
        let spec = SystemSpec::new(
            ResolventOperator::zero(2).unwrap(),
            CocoerciveMap::zero(2).unwrap(),
            CocoerciveMap::quadratic_penalty(v(&[1.0, 1.0]), 1.0).unwrap(),
            sch,
            v(&[0.0, 0.0]),
            v(&[0.0, 0.0]),
        )
        .unwrap();
        let rec = integrate(&spec, &IntegratorConfig::fixed(1e-2, 1.0, 1), &mut []).unwrap();
        let anchor = zero_anchor(&spec, v(&[0.5, 0.5]));
        let k = constants_for(spec.b());
        let r = descent_gap_monitor(&spec, &anchor, &k, &rec).unwrap();
        assert!(r.pre_asymptotic);
        assert!(r.points.is_empty());
        assert!(r.window_start.is_none());
    }

    #[test]
    fn analytic_h_dot_matches_differences() {
        let (spec, rec) = trivial_record(4.0, 1e-2);
        let anchor = zero_anchor(&spec, v(&[0.0, 0.0]));
        let ls = lyapunov_samples(&spec, &anchor, 0.5, &rec).unwrap();
        let max_h = ls.iter().map(|s| s.h).fold(0.0, f64::max);
        for k in 1..ls.len() - 1 {
            let fd = (ls[k + 1].h - ls[k - 1].h) / (ls[k + 1].t - ls[k - 1].t);
            assert!((fd - ls[k].h_dot).abs() <= 1e-4 * (1.0 + max_h));
            assert!(ls[k].h_ddot_fd.is_some());
        }
        assert!(ls[0].h_ddot_fd.is_none());
    }

    #[test]
    fn pairing_bounded_by_cocoercivity() {
        let spec = SystemSpec::new(
            ResolventOperator::zero(2).unwrap(),
            CocoerciveMap::zero(2).unwrap(),
            CocoerciveMap::quadratic_penalty(v(&[1.0, 1.0]), 1.0).unwrap(),
            ScheduleSet::default_with(2.0).unwrap(),
            v(&[3.0, -1.0]),
            v(&[0.0, 2.0]),
        )
        .unwrap();
        let rec = integrate(&spec, &IntegratorConfig::fixed(1e-2, 3.0, 5), &mut []).unwrap();
        let anchor =
            AnchorPoint::new(&spec, v(&[0.5, 0.5]), Vector::zeros(2), Vector::zeros(2)).unwrap();
        for s in lyapunov_samples(&spec, &anchor, 0.5, &rec).unwrap() {
            assert!(s.h >= 0.0);
            assert!(s.pairing >= s.bx_norm2 / 2.0 - 1e-9);
        }
    }

    #[test]
    fn ergodic_average_of_constant_trajectory() {
        let spec = trivial(&[0.3, -0.7], &[0.0, 0.0], SQRT_2);
        let mut sink = RunningIntegrals::new(v(&[0.0, 0.0]));
        assert!(matches!(
            sink.ergodic_average(),
            Err(Error::EmptyAccumulator)
        ));
        let rec = integrate(
            &spec,
            &IntegratorConfig::fixed(0.1, 3.0, 1),
            &mut [&mut sink],
        )
        .unwrap();
        let e = sink.ergodic_average().unwrap();
        assert!((e - v(&[0.3, -0.7])).norm() <= 1e-14);
        assert_eq!(
            ergodic_from_record(&rec, &rec.samples[0]).unwrap(),
            v(&[0.3, -0.7])
        );
    }

    #[test]
    fn ergodic_average_of_two_segments_is_midpoint() {
        let spec = trivial(&[0.0, 0.0], &[0.0, 0.0], SQRT_2);
        let (xa, xb) = (v(&[1.0, 2.0]), v(&[3.0, -2.0]));
        let state = |t: f64, x: &Vector| SystemState {
            t,
            x: x.clone(),
            v: Vector::zeros(2),
        };
        let mut sink = RunningIntegrals::new(Vector::zeros(2));
        sink.start(&spec, &state(0.0, &xa)).unwrap();
        let mut prev = state(0.0, &xa);
        for k in 1..=21 {
            let x = if k <= 10 { &xa } else { &xb };
            let next = state(k as f64 * 0.1, x);
            sink.accept(&spec, &prev, &next).unwrap();
            prev = next;
        }
        // trapezoid: the jump step contributes its two endpoint values equally
        let e = sink.ergodic_average().unwrap();
        assert!((e - v(&[2.0, 0.0])).norm() <= 1e-14);
    }

    #[test]
    fn report_on_trivial_system() {
        let spec = trivial(&[1.0, 0.0], &[0.0, 1.0], SQRT_2)
            .with_schedules(ScheduleSet::default_with(0.0).unwrap());
        let limit = v(&[1.0, 1.0 / SQRT_2]);
        let anchor = zero_anchor(&spec, limit.clone());
        let mut sink = RunningIntegrals::new(limit);
        let rec = integrate(
            &spec,
            &IntegratorConfig::fixed(1e-2, 16.0, 10),
            &mut [&mut sink],
        )
        .unwrap();
        let r = convergence_report(&spec, &anchor, &rec).unwrap();
        assert!(r.final_distance <= 1e-6);
        assert_eq!(r.verdict, Verdict::Strong);
        assert!(r.integrals.iter().all(|c| c.passed), "{:?}", r.integrals);
        assert!(r.final_velocity_norm < 1e-6);
    }

    #[test]
    fn report_suppressed_outside_supported_regime() {
        let spec = trivial(&[1.0, 0.0], &[0.0, 1.0], 1.0);
        assert!(!spec.regime_supported());
        let anchor = zero_anchor(&spec, v(&[1.0, 1.0]));
        let mut sink = RunningIntegrals::new(v(&[1.0, 1.0]));
        let rec = integrate(
            &spec,
            &IntegratorConfig::fixed(1e-2, 20.0, 10),
            &mut [&mut sink],
        )
        .unwrap();
        let r = convergence_report(&spec, &anchor, &rec).unwrap();
        assert_eq!(r.verdict, Verdict::Suppressed);
        assert!(r.final_distance < 1e-6);
    }

    #[test]
    fn energy_never_rises_on_trivial_system() {
        let (spec, rec) = trivial_record(6.0, 1e-2);
        let anchor = zero_anchor(&spec, v(&[1.0, 1.0 / SQRT_2]));
        let k = lemma_constants(1.0).unwrap();
        let ls = lyapunov_samples(&spec, &anchor, k.c, &rec).unwrap();
        let e = energy_check(&spec, &k, &rec, &ls);
        assert!(e.passed);
        assert_eq!(e.t_start, Some(0.0));
    }

    #[test]
    fn violation_csv_has_header() {
        let (spec, rec) = trivial_record(0.05, 1e-2);
        let anchor = zero_anchor(&spec, v(&[1.0, 0.0]));
        let r = anchor_gap_monitor(&spec, &anchor, &rec).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,lhs,rhs,violation\r\n"));
        assert_eq!(text.lines().count(), 1 + r.points.len());
    }
}
