//! Step-size, penalty and damping schedules, and the checks that decide
//! whether a schedule triple falls inside the convergence regime.
//!
//! All integrability and limit questions are decided by exponent arithmetic on
//! the closed-form families, never by finite-horizon quadrature.

use std::f64::consts::SQRT_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{CocoerciveMap, ExtReal, Vector, MEMBERSHIP_TOL};

/// Slack for exact-arithmetic comparisons between exponents and thresholds.
const EXPONENT_EPS: f64 = 1e-12;

/// `c0 * (1 + t)^p`
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerSchedule {
    pub c0: f64,
    pub p: f64,
}

impl PowerSchedule {
    pub fn new(c0: f64, p: f64) -> Result<Self> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "power schedule scale must be positive, got {c0}"
            )));
        }
        if !p.is_finite() {
            return Err(Error::InvalidParameter(
                "power schedule exponent must be finite".into(),
            ));
        }
        Ok(Self { c0, p })
    }

    pub fn value(&self, t: f64) -> f64 {
        self.c0 * (1.0 + t).powf(self.p)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.c0 * self.p * (1.0 + t).powf(self.p - 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DampingSchedule {
    Constant {
        g0: f64,
    },
    /// `g_inf + (g0 - g_inf) exp(-rate t)`
    DecayToFloor {
        g0: f64,
        g_inf: f64,
        rate: f64,
    },
}

impl DampingSchedule {
    pub fn constant(g0: f64) -> Result<Self> {
        if !(g0.is_finite() && g0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must be positive, got {g0}"
            )));
        }
        Ok(DampingSchedule::Constant { g0 })
    }

    pub fn decay_to_floor(g0: f64, g_inf: f64, rate: f64) -> Result<Self> {
        for (name, v) in [("g0", g0), ("g_inf", g_inf), ("rate", rate)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "damping {name} must be positive, got {v}"
                )));
            }
        }
        Ok(DampingSchedule::DecayToFloor { g0, g_inf, rate })
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            DampingSchedule::Constant { g0 } => g0,
            DampingSchedule::DecayToFloor { g0, g_inf, rate } => {
                g_inf + (g0 - g_inf) * (-rate * t).exp()
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            DampingSchedule::Constant { .. } => 0.0,
            DampingSchedule::DecayToFloor { g0, g_inf, rate } => {
                -rate * (g0 - g_inf) * (-rate * t).exp()
            }
        }
    }

    /// Infimum over `t >= 0`.
    pub fn infimum(&self) -> f64 {
        match *self {
            DampingSchedule::Constant { g0 } => g0,
            DampingSchedule::DecayToFloor { g0, g_inf, .. } => g0.min(g_inf),
        }
    }

    pub fn limit(&self) -> f64 {
        match *self {
            DampingSchedule::Constant { g0 } => g0,
            DampingSchedule::DecayToFloor { g_inf, .. } => g_inf,
        }
    }

    pub fn is_nonincreasing(&self) -> bool {
        match *self {
            DampingSchedule::Constant { .. } => true,
            DampingSchedule::DecayToFloor { g0, g_inf, .. } => g0 >= g_inf,
        }
    }
}

/// The step-size, penalty and damping triple plus the Lipschitz constant of the penalty map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleSet {
    pub lambda: PowerSchedule,
    pub beta: PowerSchedule,
    pub gamma: DampingSchedule,
    pub l_b: f64,
}

impl ScheduleSet {
    pub fn new(
        lambda: PowerSchedule,
        beta: PowerSchedule,
        gamma: DampingSchedule,
        l_b: f64,
    ) -> Result<Self> {
        if !(l_b.is_finite() && l_b >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "L_B must be nonnegative, got {l_b}"
            )));
        }
        Ok(Self {
            lambda,
            beta,
            gamma,
            l_b,
        })
    }

    /// Default triple: `lambda = (1+t)^{-3/4}`, `beta = (1+t)^{1/2}`, `gamma = sqrt 2`.
    pub fn default_with(l_b: f64) -> Result<Self> {
        Self::new(
            PowerSchedule::new(1.0, -0.75)?,
            PowerSchedule::new(1.0, 0.5)?,
            DampingSchedule::constant(SQRT_2)?,
            l_b,
        )
    }

    pub fn lambda_beta(&self, t: f64) -> f64 {
        self.lambda.value(t) * self.beta.value(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Integrability {
    pub in_l1: bool,
    pub in_l2: bool,
    pub limit_zero: bool,
}

/// Integrability of `c0 (1+t)^p` on `[0, inf)`.
pub fn classify_integrability(s: &PowerSchedule) -> Integrability {
    Integrability {
        in_l1: s.p < -1.0,
        in_l2: 2.0 * s.p < -1.0,
        limit_zero: s.p < 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    pub reason: String,
}

impl Check {
    fn new(passed: bool, reason: impl Into<String>) -> Self {
        Self {
            passed,
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimsupCheck {
    pub passed: bool,
    pub reason: String,
    /// `lim lambda(t) beta(t)`
    pub limit: ExtReal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitzCheck {
    pub passed: bool,
    pub reason: String,
    /// Exponent of the power law `lambda / beta` bounding the gap integrand, when one exists.
    pub exponent: Option<f64>,
}

/// Outcome of every regime check. Each entry carries the exponent
/// arithmetic that decided it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub h1: Check,
    pub h3_l2_not_l1: Check,
    pub lambda_limit_zero: Check,
    pub limsup_lb: LimsupCheck,
    pub gamma_floor: Check,
    pub gamma_nonincreasing: Check,
    pub fitz_integrable: FitzCheck,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn entries(&self) -> Vec<(&'static str, bool, &str)> {
        vec![
            ("h1", self.h1.passed, self.h1.reason.as_str()),
            (
                "h3_l2_not_l1",
                self.h3_l2_not_l1.passed,
                self.h3_l2_not_l1.reason.as_str(),
            ),
            (
                "lambda_limit_zero",
                self.lambda_limit_zero.passed,
                self.lambda_limit_zero.reason.as_str(),
            ),
            (
                "limsup_lb",
                self.limsup_lb.passed,
                self.limsup_lb.reason.as_str(),
            ),
            (
                "gamma_floor",
                self.gamma_floor.passed,
                self.gamma_floor.reason.as_str(),
            ),
            (
                "gamma_nonincreasing",
                self.gamma_nonincreasing.passed,
                self.gamma_nonincreasing.reason.as_str(),
            ),
            (
                "fitz_integrable",
                self.fitz_integrable.passed,
                self.fitz_integrable.reason.as_str(),
            ),
        ]
    }

    pub fn all_passed(&self) -> bool {
        self.entries().iter().all(|(_, ok, _)| *ok)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.entries()
            .into_iter()
            .filter(|(_, ok, _)| !ok)
            .map(|(name, _, _)| name)
            .collect()
    }

    /// Human-readable pass/fail table.
    pub fn render(&self) -> String {
        let mut out = String::from("hypothesis checks\n");
        for (name, ok, reason) in self.entries() {
            let tag = if ok { "pass" } else { "FAIL" };
            out.push_str(&format!("  {name:<20} {tag:<4}  {reason}\n"));
        }
        for note in &self.notes {
            out.push_str(&format!("  note: {note}\n"));
        }
        out
    }
}

/// Runs every schedule-level check against the penalty map `b`.
pub fn verify_hypotheses(s: &ScheduleSet, b: &CocoerciveMap) -> HypothesisReport {
    let lam = s.lambda;
    let class = classify_integrability(&lam);

    let h1 = Check::new(
        true,
        "lambda, beta, gamma are closed-form continuous families with positive values",
    );

    let l2_reason = if class.in_l2 {
        format!("2 p_lambda = {} < -1 so lambda is in L2", 2.0 * lam.p)
    } else {
        format!("2 p_lambda = {} >= -1 so lambda is not in L2", 2.0 * lam.p)
    };
    let l1_reason = if class.in_l1 {
        format!("p_lambda = {} < -1 so lambda is in L1", lam.p)
    } else {
        format!("p_lambda = {} >= -1 so lambda is not in L1", lam.p)
    };
    let h3 = Check::new(
        class.in_l2 && !class.in_l1,
        format!("{l2_reason}; {l1_reason}"),
    );

    let lambda_limit_zero = Check::new(
        class.limit_zero,
        if class.limit_zero {
            format!("p_lambda = {} < 0 so lambda -> 0", lam.p)
        } else {
            format!("p_lambda = {} >= 0 so lambda does not vanish", lam.p)
        },
    );

    let limsup_lb = limsup_check(s);

    let g_inf = s.gamma.infimum();
    let gamma_floor = Check::new(
        g_inf >= SQRT_2 - EXPONENT_EPS,
        format!(
            "inf gamma = {g_inf} {} sqrt(2) = {SQRT_2}",
            if g_inf >= SQRT_2 - EXPONENT_EPS {
                ">="
            } else {
                "<"
            }
        ),
    );
    let gamma_nonincreasing = Check::new(
        s.gamma.is_nonincreasing(),
        match s.gamma {
            DampingSchedule::Constant { .. } => "constant damping".to_string(),
            DampingSchedule::DecayToFloor { g0, g_inf, .. } => {
                format!("g0 = {g0}, g_inf = {g_inf}: derivative sign is sign(g_inf - g0)")
            }
        },
    );

    let mut notes = Vec::new();
    let fitz_integrable = match b {
        CocoerciveMap::Zero { .. } => Check::new(
            true,
            "B = 0 so C is the whole space, ran N_C = {0} and the gap integrand vanishes",
        )
        .into_fitz(None),
        CocoerciveMap::QuadraticPenalty { .. } => {
            let e = fitz_gap_exponent(s, b).expect("quadratic penalty is supported");
            notes.push(
                "gap integrability is independent of the multiplier s != 0 for a hyperplane, \
                 so one exponent covers every p in ran N_C"
                    .into(),
            );
            Check::new(
                e.integrable,
                format!(
                    "integrand (s^2/2) lambda/beta has exponent p_lambda - p_beta = {} - {} = {} {} -1",
                    lam.p,
                    s.beta.p,
                    e.exponent,
                    if e.integrable { "<" } else { ">=" }
                ),
            )
            .into_fitz(Some(e.exponent))
        }
        CocoerciveMap::GradientAffine { .. } => Check::new(
            false,
            "gap integrability is only decided for quadratic penalties and B = 0",
        )
        .into_fitz(None),
    };

    HypothesisReport {
        h1,
        h3_l2_not_l1: h3,
        lambda_limit_zero,
        limsup_lb,
        gamma_floor,
        gamma_nonincreasing,
        fitz_integrable,
        notes,
    }
}

impl Check {
    fn into_fitz(self, exponent: Option<f64>) -> FitzCheck {
        FitzCheck {
            passed: self.passed,
            reason: self.reason,
            exponent,
        }
    }
}

fn limsup_check(s: &ScheduleSet) -> LimsupCheck {
    let e = s.lambda.p + s.beta.p;
    let prod = s.lambda.c0 * s.beta.c0;
    let bound = if s.l_b > 0.0 {
        1.0 / s.l_b
    } else {
        f64::INFINITY
    };
    let bound_txt = if s.l_b > 0.0 {
        format!("1/L_B = {bound}")
    } else {
        "1/L_B = +inf (B = 0)".to_string()
    };
    let (limit, passed, how) = if e < -EXPONENT_EPS {
        (
            ExtReal::Finite(0.0),
            true,
            format!("p_lambda + p_beta = {e} < 0 so lambda beta -> 0"),
        )
    } else if e <= EXPONENT_EPS {
        (
            ExtReal::Finite(prod),
            prod < bound,
            format!("p_lambda + p_beta = 0 so lambda beta -> c0_lambda c0_beta = {prod}"),
        )
    } else {
        (
            ExtReal::PosInf,
            bound.is_infinite(),
            format!("p_lambda + p_beta = {e} > 0 so lambda beta -> +inf"),
        )
    };
    let cmp = if passed { "<" } else { ">=" };
    LimsupCheck {
        passed,
        reason: format!("{how}; limit {cmp} {bound_txt}"),
        limit,
    }
}

/// Gap `psi*(p/beta) - sigma_C(p/beta)` for `psi(x) = (<a,x> - b)^2 / 2`.
///
/// For `p = s a` the gap is `(s/beta)^2 / 2`; off `span(a)` it is `+inf`.
pub fn fitz_gap_quadratic(b: &CocoerciveMap, beta_val: f64, p: &Vector) -> Result<ExtReal> {
    let CocoerciveMap::QuadraticPenalty { a, .. } = b else {
        return Err(Error::Unsupported(
            "closed-form gap needs a quadratic penalty map".into(),
        ));
    };
    if !(beta_val.is_finite() && beta_val > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta_val}"
        )));
    }
    if p.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: p.len(),
        });
    }
    let s = a.dot(p) / a.norm_squared();
    if (p - a * s).norm() > MEMBERSHIP_TOL * (1.0 + p.norm()) {
        return Ok(ExtReal::PosInf);
    }
    Ok(ExtReal::Finite(0.5 * (s / beta_val).powi(2)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitzExponent {
    pub integrable: bool,
    pub exponent: f64,
}

/// Exponent of `lambda beta * gap(p / beta)`, a multiple of `lambda / beta`.
pub fn fitz_gap_exponent(s: &ScheduleSet, b: &CocoerciveMap) -> Result<FitzExponent> {
    if !matches!(b, CocoerciveMap::QuadraticPenalty { .. }) {
        return Err(Error::Unsupported(
            "gap exponent is only defined for quadratic penalties".into(),
        ));
    }
    let exponent = s.lambda.p - s.beta.p;
    Ok(FitzExponent {
        integrable: exponent < -1.0,
        exponent,
    })
}

/// Same as [`fitz_gap_exponent`] for a specific `p`; a zero multiplier makes
/// the integrand vanish identically.
pub fn fitz_gap_exponent_at(
    s: &ScheduleSet,
    b: &CocoerciveMap,
    p: &Vector,
) -> Result<FitzExponent> {
    let e = fitz_gap_exponent(s, b)?;
    if p.norm() == 0.0 {
        return Ok(FitzExponent {
            integrable: true,
            exponent: e.exponent,
        });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn penalty() -> CocoerciveMap {
        CocoerciveMap::quadratic_penalty(Vector::from_column_slice(&[1.0, 1.0]), 1.0).unwrap()
    }

    fn set(pl: f64, pb: f64, gamma: DampingSchedule) -> ScheduleSet {
        ScheduleSet::new(
            PowerSchedule::new(1.0, pl).unwrap(),
            PowerSchedule::new(1.0, pb).unwrap(),
            gamma,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn classification_examples() {
        let c = |p| classify_integrability(&PowerSchedule::new(1.0, p).unwrap());
        assert_eq!(
            c(-0.75),
            Integrability {
                in_l1: false,
                in_l2: true,
                limit_zero: true
            }
        );
        assert_eq!(
            c(-1.0),
            Integrability {
                in_l1: false,
                in_l2: true,
                limit_zero: true
            }
        );
        assert_eq!(
            c(0.0),
            Integrability {
                in_l1: false,
                in_l2: false,
                limit_zero: false
            }
        );
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        let scheds = [
            PowerSchedule::new(1.0, -0.75).unwrap(),
            PowerSchedule::new(2.5, 0.5).unwrap(),
            PowerSchedule::new(0.3, -1.7).unwrap(),
        ];
        let damp = [
            DampingSchedule::constant(2.0).unwrap(),
            DampingSchedule::decay_to_floor(3.0, SQRT_2, 0.1).unwrap(),
        ];
        for t in [0.0, 0.5, 1.0, 10.0, 100.0, 1000.0] {
            for s in &scheds {
                let fd = (s.value(t + h) - s.value(t - h)) / (2.0 * h);
                let d = s.derivative(t);
                assert!(
                    (fd - d).abs() <= 1e-6 * d.abs().max(1e-12) + 1e-12,
                    "t={t} {s:?}"
                );
            }
            for g in &damp {
                let fd = (g.value(t + h) - g.value(t - h)) / (2.0 * h);
                let d = g.derivative(t);
                assert!((fd - d).abs() <= 1e-6 * d.abs() + 1e-10, "t={t} {g:?}");
                assert!(d <= 0.0);
                assert!(g.value(t) >= SQRT_2);
            }
        }
    }

    #[test]
    fn default_triple_passes_everything() {
        let s = set(-0.75, 0.5, DampingSchedule::constant(SQRT_2).unwrap());
        let r = verify_hypotheses(&s, &penalty());
        assert!(r.all_passed(), "{}", r.render());
        assert_eq!(r.limsup_lb.limit, ExtReal::Finite(0.0));
        assert_eq!(r.fitz_integrable.exponent, Some(-1.25));
    }

    #[test]
    fn slow_step_size_fails_square_integrability() {
        let s = set(-0.25, 0.1, DampingSchedule::constant(SQRT_2).unwrap());
        let r = verify_hypotheses(&s, &penalty());
        assert!(!r.h3_l2_not_l1.passed);
        assert!(r.h3_l2_not_l1.reason.contains("not in L2"));
    }

    #[test]
    fn low_damping_fails_floor() {
        let s = set(-0.75, 0.5, DampingSchedule::constant(1.0).unwrap());
        let r = verify_hypotheses(&s, &penalty());
        assert_eq!(r.failures(), vec!["gamma_floor"]);
    }

    #[test]
    fn increasing_damping_fails_monotonicity() {
        let s = set(
            -0.75,
            0.5,
            DampingSchedule::decay_to_floor(1.5, 2.0, 1.0).unwrap(),
        );
        let r = verify_hypotheses(&s, &penalty());
        assert_eq!(r.failures(), vec!["gamma_nonincreasing"]);
    }

    #[test]
    fn limsup_cases() {
        let mut s = set(-0.5, 0.5, DampingSchedule::constant(2.0).unwrap());
        s.lambda.c0 = 0.4;
        let r = limsup_check(&s);
        assert!(r.passed);
        assert_eq!(r.limit, ExtReal::Finite(0.4));
        s.lambda.c0 = 0.5;
        assert!(!limsup_check(&s).passed);
        let s = set(-0.5, 0.75, DampingSchedule::constant(2.0).unwrap());
        let r = limsup_check(&s);
        assert!(!r.passed);
        assert_eq!(r.limit, ExtReal::PosInf);
    }

    #[test]
    fn gap_examples() {
        let b = penalty();
        let gap = fitz_gap_quadratic(&b, 4.0, &Vector::from_column_slice(&[2.0, 2.0])).unwrap();
        assert_abs_diff_eq!(gap.finite().unwrap(), 0.125, epsilon = 1e-15);
        let zero = fitz_gap_quadratic(&b, 4.0, &Vector::zeros(2)).unwrap();
        assert_eq!(zero, ExtReal::Finite(0.0));
        let off = fitz_gap_quadratic(&b, 4.0, &Vector::from_column_slice(&[1.0, -1.0])).unwrap();
        assert_eq!(off, ExtReal::PosInf);
        let z = CocoerciveMap::zero(2).unwrap();
        assert!(fitz_gap_quadratic(&z, 1.0, &Vector::zeros(2)).is_err());
    }

    #[test]
    fn gap_exponent_examples() {
        let b = penalty();
        let e = fitz_gap_exponent(
            &set(-0.75, 0.5, DampingSchedule::constant(2.0).unwrap()),
            &b,
        )
        .unwrap();
        assert_abs_diff_eq!(e.exponent, -1.25);
        assert!(e.integrable);
        let s = set(-0.6, 0.3, DampingSchedule::constant(2.0).unwrap());
        let e = fitz_gap_exponent(&s, &b).unwrap();
        assert_abs_diff_eq!(e.exponent, -0.9, epsilon = 1e-15);
        assert!(!e.integrable);
        assert!(
            fitz_gap_exponent_at(&s, &b, &Vector::zeros(2))
                .unwrap()
                .integrable
        );
        assert!(fitz_gap_exponent(&s, &CocoerciveMap::zero(2).unwrap()).is_err());
    }

    #[test]
    fn zero_penalty_passes_gap_and_limsup() {
        let s = ScheduleSet::default_with(0.0).unwrap();
        let r = verify_hypotheses(&s, &CocoerciveMap::zero(2).unwrap());
        assert!(r.all_passed(), "{}", r.render());
    }

    #[test]
    fn report_is_deterministic() {
        let s = set(-0.6, 0.3, DampingSchedule::constant(1.2).unwrap());
        let a = serde_json::to_string(&verify_hypotheses(&s, &penalty())).unwrap();
        let b = serde_json::to_string(&verify_hypotheses(&s, &penalty())).unwrap();
        assert_eq!(a, b);
    }
}
