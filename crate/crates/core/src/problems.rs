//! Problem gallery with independently computed reference solutions.
//!
//! Bilevel instances minimize `f + g` over `C = argmin psi = zer grad psi` and
//! are assembled as `A = df`, `D = grad g`, `B = grad psi`. Reference
//! solutions come from the affine KKT system when every operator is affine,
//! and from a nested grid search along the constraint line otherwise.

use nalgebra::SVD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::diagnostics::AnchorPoint;
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::operators::{
    ensure_dim, CocoerciveMap, ConstraintSet, Matrix, OperatorKind, ProxFn, ResolventOperator,
    Vector,
};
use crate::schedules::ScheduleSet;

/// Objective gap between refinement levels at which the grid search stops.
pub const GRID_GAP_TOL: f64 = 1e-10;
/// Minimizer sets wider than this are reported as non-unique.
pub const NON_UNIQUE_WIDTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    ClosedForm,
    GridRefinement,
}

/// Upper-level objective `f + g` of a bilevel instance.
#[derive(Clone, Debug)]
pub struct Objective {
    pub f: ProxFn,
    pub g: CocoerciveMap,
}

impl Objective {
    pub fn value(&self, x: &Vector) -> Result<f64> {
        Ok(self.f.value(x)?.to_f64() + self.g.potential(x)?)
    }
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub name: String,
    pub description: String,
    pub spec: SystemSpec,
    pub objective: Option<Objective>,
    /// Oracle used by [`kkt_oracle`] for this instance.
    pub oracle: OracleMethod,
}

impl ProblemInstance {
    /// Strong monotonicity modulus `eta` of `A` (zero when not strongly monotone).
    pub fn modulus(&self) -> f64 {
        self.spec.a().modulus()
    }

    pub fn strongly_monotone(&self) -> bool {
        self.modulus() > 0.0
    }

    pub fn constraint(&self) -> Result<ConstraintSet> {
        self.spec.b().zero_set()
    }
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub anchor: AnchorPoint,
    pub unique: bool,
    pub method: OracleMethod,
    /// Refinement levels used by the grid search.
    pub levels: usize,
}

/// Two closed affine sets are equal iff their projections agree on an affinely spanning point set.
fn same_affine_set(c1: &ConstraintSet, c2: &ConstraintSet) -> Result<bool> {
    let n = c1.dim();
    if c2.dim() != n {
        return Ok(false);
    }
    let probes = std::iter::once(Vector::zeros(n)).chain((0..n).map(|i| {
        let mut e = Vector::zeros(n);
        e[i] = 1.0;
        e
    }));
    for x in probes {
        let d = (c1.project(&x)? - c2.project(&x)?).norm();
        if d > 1e-9 * (1.0 + x.norm()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Assembles `A = df`, `D = grad g`, `B = grad psi`; `constraint` must equal `zer grad psi`.
#[allow(clippy::too_many_arguments)]
pub fn build_bilevel_quadratic(
    name: &str,
    description: &str,
    f: ProxFn,
    g: CocoerciveMap,
    psi: CocoerciveMap,
    constraint: &ConstraintSet,
    schedules: ScheduleSet,
    u0: Vector,
    v0: Vector,
) -> Result<ProblemInstance> {
    let n = psi.dim();
    if !matches!(psi, CocoerciveMap::QuadraticPenalty { .. }) {
        return Err(Error::Unsupported("psi must be a quadratic penalty".into()));
    }
    if !matches!(
        g,
        CocoerciveMap::GradientAffine { .. } | CocoerciveMap::Zero { .. }
    ) {
        return Err(Error::Unsupported(
            "g must be gradient-affine or zero".into(),
        ));
    }
    if !same_affine_set(constraint, &psi.zero_set()?)? {
        return Err(Error::Pairing(format!(
            "{name}: C differs from zer grad psi"
        )));
    }
    let mu = f.strong_convexity();
    let mut a = ResolventOperator::subdifferential(n, f.clone())?;
    if mu > 0.0 {
        a = a.with_modulus(mu)?;
    }
    let oracle = if affine_parts_of(&a).is_some() {
        OracleMethod::ClosedForm
    } else {
        OracleMethod::GridRefinement
    };
    let spec = SystemSpec::new(a, g.clone(), psi, schedules, u0, v0)?;
    Ok(ProblemInstance {
        name: name.into(),
        description: description.into(),
        spec,
        objective: Some(Objective { f, g }),
        oracle,
    })
}

/// `(M, q)` with `A x = M x + q` when `A` is single-valued affine.
fn affine_parts_of(a: &ResolventOperator) -> Option<(Matrix, Vector)> {
    let n = a.dim();
    match a.kind() {
        OperatorKind::Zero | OperatorKind::Subdifferential(ProxFn::Zero) => {
            Some((Matrix::zeros(n, n), Vector::zeros(n)))
        }
        OperatorKind::Affine { m, q } => Some((m.clone(), q.clone())),
        OperatorKind::Subdifferential(ProxFn::QuadraticShift { center, modulus }) => {
            Some((Matrix::identity(n, n) * *modulus, -center * *modulus))
        }
        OperatorKind::Subdifferential(_) => None,
    }
}

fn constraint_rows(c: &ConstraintSet) -> Result<(Matrix, Vector)> {
    match c {
        ConstraintSet::Hyperplane { a, b } => Ok((
            Matrix::from_row_slice(1, a.len(), a.as_slice()),
            Vector::from_element(1, *b),
        )),
        ConstraintSet::AffineSubspace { matrix, rhs } => Ok((matrix.clone(), rhs.clone())),
        ConstraintSet::WholeSpace { dim } => Ok((Matrix::zeros(0, *dim), Vector::zeros(0))),
        ConstraintSet::Box { .. } => Err(Error::Unsupported(
            "box constraints have no affine KKT system".into(),
        )),
    }
}

fn certify(spec: &SystemSpec, x: Vector, v: Vector) -> Result<AnchorPoint> {
    let p = -(&v + spec.d().apply(&x)?);
    AnchorPoint::zero(spec, x, v, p)
}

/// Solves the affine KKT system `H x + c + E^T y = 0`, `E x = e` jointly,
/// with `H = M_A + M_D` and `E x = e` describing `C`. On a non-unique
/// solution set, returns the point closest to `u0`.
pub fn closed_form_oracle(inst: &ProblemInstance) -> Result<OracleSolution> {
    let spec = &inst.spec;
    let n = spec.dim();
    let (ma, qa) = affine_parts_of(spec.a())
        .ok_or_else(|| Error::Unsupported(format!("{}: A is not affine", inst.name)))?;
    let (md, qd) = spec.d().affine_parts();
    let (e, rhs_e) = constraint_rows(&spec.b().zero_set()?)?;
    let m = e.nrows();
    let mut k = Matrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&(ma + md));
    k.view_mut((0, n), (n, m)).copy_from(&e.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(&e);
    let mut rhs = Vector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&-(qa + qd));
    rhs.rows_mut(n, m).copy_from(&rhs_e);

    let svd = SVD::new(k.clone(), true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-10 * smax.max(1.0);
    let sol = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::OracleFailure(format!("{}: {e}", inst.name)))?;
    let residual = (&k * &sol - &rhs).norm();
    if residual > 1e-9 * (1.0 + rhs.norm()) {
        return Err(Error::OracleFailure(format!(
            "{}: KKT system is inconsistent (residual {residual:e})",
            inst.name
        )));
    }
    let v_t = svd.v_t.as_ref().expect("requested");
    let null_x: Vec<Vector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= eps)
        .map(|(i, _)| v_t.row(i).transpose().rows(0, n).into_owned())
        .filter(|x| x.norm() > 1e-8)
        .collect();
    let x_ls = sol.rows(0, n).into_owned();
    let unique = null_x.is_empty();
    let x = if unique {
        x_ls
    } else {
        let basis = Matrix::from_columns(&null_x);
        let s = SVD::new(basis, true, false);
        let u = s.u.expect("requested");
        let tol = 1e-10 * s.singular_values.max().max(1.0);
        let mut x = x_ls.clone();
        let d = spec.u0() - &x_ls;
        for (i, sv) in s.singular_values.iter().enumerate() {
            if *sv > tol {
                let col = u.column(i);
                x += col * col.dot(&d);
            }
        }
        x
    };
    let v = spec
        .a()
        .apply(&x)
        .ok_or_else(|| Error::OracleFailure("A is not single-valued".into()))?;
    let anchor = certify(spec, x, v)?;
    Ok(OracleSolution {
        anchor,
        unique,
        method: OracleMethod::ClosedForm,
        levels: 0,
    })
}

#[derive(Clone, Copy, Debug)]
struct LineMin {
    lo: f64,
    hi: f64,
    levels: usize,
}

impl LineMin {
    fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Nested grid minimization of `phi` starting from `[center - radius, center + radius]`:
/// each level shrinks the spacing tenfold around the current minimizer set.
fn refine_line(phi: &dyn Fn(f64) -> Result<f64>, center: f64, radius: f64) -> Result<LineMin> {
    const POINTS: usize = 2001;
    const MAX_POINTS: usize = 20001;
    let tie = |m: f64| 1e-14 * (1.0 + m.abs());
    let mut radius = radius;
    // Widen until the minimizer set sits strictly inside the bracket.
    let (mut lo, mut hi) = loop {
        let (lo, hi) = (center - radius, center + radius);
        let h = (hi - lo) / (POINTS - 1) as f64;
        let vals = (0..POINTS)
            .map(|i| phi(lo + i as f64 * h))
            .collect::<Result<Vec<_>>>()?;
        let m = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let first = vals.iter().position(|v| *v <= m + tie(m)).unwrap_or(0);
        let last = vals.iter().rposition(|v| *v <= m + tie(m)).unwrap_or(0);
        if (first > 0 && last < POINTS - 1) || radius > 1e12 {
            break (lo, hi);
        }
        radius *= 4.0;
    };
    let mut spacing = (hi - lo) / (POINTS - 1) as f64;
    let mut prev: Option<f64> = None;
    let mut levels = 0;
    loop {
        let count = (((hi - lo) / spacing).ceil() as usize + 1).clamp(3, MAX_POINTS);
        let h = (hi - lo) / (count - 1) as f64;
        let grid: Vec<f64> = (0..count).map(|i| lo + i as f64 * h).collect();
        let vals = grid.iter().map(|&t| phi(t)).collect::<Result<Vec<_>>>()?;
        let m = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if !m.is_finite() {
            return Err(Error::OracleFailure(
                "objective is infinite on the whole grid".into(),
            ));
        }
        let first = vals
            .iter()
            .position(|v| *v <= m + tie(m))
            .expect("minimum exists");
        let last = vals
            .iter()
            .rposition(|v| *v <= m + tie(m))
            .expect("minimum exists");
        levels += 1;
        let converged = prev.is_some_and(|p: f64| (p - m).abs() <= GRID_GAP_TOL);
        let fine = h <= 1e-10 * (1.0 + lo.abs().max(hi.abs()));
        let saturated = count == MAX_POINTS && h > 0.5 * spacing;
        if (converged && (fine || saturated)) || levels >= 40 {
            let (mut a, mut b) = (grid[first], grid[last]);
            if b - a > NON_UNIQUE_WIDTH {
                // flat minimizer set: locate its edges by bisection
                let inside = |t: f64| phi(t).map(|v| v <= m + tie(m));
                let edge = |mut inn: f64, mut out: f64| -> Result<f64> {
                    for _ in 0..80 {
                        let mid = 0.5 * (inn + out);
                        if inside(mid)? {
                            inn = mid;
                        } else {
                            out = mid;
                        }
                    }
                    Ok(inn)
                };
                a = edge(a, grid[first.saturating_sub(1)])?;
                b = edge(b, grid[(last + 1).min(count - 1)])?;
            }
            return Ok(LineMin {
                lo: a,
                hi: b,
                levels,
            });
        }
        prev = Some(m);
        lo = grid[first.saturating_sub(1)];
        hi = grid[(last + 1).min(count - 1)];
        spacing = h / 10.0;
    }
}

/// Grid search along a constraint line in `R^2`, then a one-dimensional
/// search for the multiplier `p = s a` that certifies the point.
pub fn grid_oracle(inst: &ProblemInstance) -> Result<OracleSolution> {
    let spec = &inst.spec;
    let obj = inst.objective.as_ref().ok_or_else(|| {
        Error::Unsupported(format!("{}: grid search needs an objective", inst.name))
    })?;
    let ConstraintSet::Hyperplane { a, b } = spec.b().zero_set()? else {
        return Err(Error::Unsupported(format!(
            "{}: grid search needs a constraint line",
            inst.name
        )));
    };
    if spec.dim() != 2 {
        return Err(Error::Unsupported(format!(
            "{}: grid search needs dimension 2",
            inst.name
        )));
    }
    let an = a.norm();
    let base = &a * (b / (an * an));
    let dir = Vector::from_column_slice(&[-a[1] / an, a[0] / an]);
    let point = |tau: f64| &base + &dir * tau;
    let phi = |tau: f64| obj.value(&point(tau));
    let center = dir.dot(spec.u0());
    let radius = 10.0 * (1.0 + spec.u0().norm() + base.norm());
    let line = refine_line(&phi, center, radius)?;
    let unique = line.hi - line.lo <= NON_UNIQUE_WIDTH;
    let x = point(line.mid());

    let dx = spec.d().apply(&x)?;
    let v_of = |s: f64| -(&dx) - &a * s;
    let mismatch =
        |s: f64| -> Result<f64> { Ok((spec.a().resolvent(1.0, &(&x + v_of(s)))? - &x).norm()) };
    let s_scale = 10.0 * (1.0 + x.norm() + dx.norm()) / an;
    let mult = refine_line(&mismatch, 0.0, s_scale)?;
    let anchor = certify(spec, x, v_of(mult.mid()))?;
    Ok(OracleSolution {
        anchor,
        unique,
        method: OracleMethod::GridRefinement,
        levels: line.levels,
    })
}

/// Zero anchor for a gallery instance using its preferred oracle.
pub fn kkt_oracle(inst: &ProblemInstance) -> Result<OracleSolution> {
    match inst.oracle {
        OracleMethod::ClosedForm => closed_form_oracle(inst),
        OracleMethod::GridRefinement => grid_oracle(inst),
    }
}

fn v(c: &[f64]) -> Vector {
    Vector::from_column_slice(c)
}

fn line_penalty() -> (CocoerciveMap, ConstraintSet) {
    (
        CocoerciveMap::quadratic_penalty(v(&[1.0, 1.0]), 1.0).expect("valid penalty"),
        ConstraintSet::hyperplane(v(&[1.0, 1.0]), 1.0).expect("valid hyperplane"),
    )
}

fn default_schedules() -> ScheduleSet {
    ScheduleSet::default_with(0.0).expect("default schedules are valid")
}

pub const GALLERY_NAMES: [&str; 5] = [
    "min-norm-on-line",
    "strongly-monotone-projection",
    "l1-on-line",
    "affine-inclusion",
    "unconstrained-forward-backward",
];

/// Named instance in `R^2` with `u0 = v0 = 0` and the default schedules.
pub fn gallery_instance(name: &str) -> Result<ProblemInstance> {
    let zero2 = || Vector::zeros(2);
    let (psi, line) = line_penalty();
    match name {
        "min-norm-on-line" => build_bilevel_quadratic(
            name,
            "minimize |x|^2/2 over the line x1 + x2 = 1",
            ProxFn::Zero,
            CocoerciveMap::gradient_affine(Matrix::identity(2, 2), zero2())?,
            psi,
            &line,
            default_schedules(),
            zero2(),
            zero2(),
        ),
        "strongly-monotone-projection" => build_bilevel_quadratic(
            name,
            "minimize |x - (2, 0)|^2/2 over the line x1 + x2 = 1",
            ProxFn::quadratic_shift(v(&[2.0, 0.0]), 1.0)?,
            CocoerciveMap::zero(2)?,
            psi,
            &line,
            default_schedules(),
            zero2(),
            zero2(),
        ),
        "l1-on-line" => build_bilevel_quadratic(
            name,
            "minimize |x|_1 over the line x1 + x2 = 1 (a segment of minimizers)",
            ProxFn::l1(1.0)?,
            CocoerciveMap::zero(2)?,
            psi,
            &line,
            default_schedules(),
            zero2(),
            zero2(),
        ),
        "affine-inclusion" => {
            let m = Matrix::from_row_slice(2, 2, &[0.1, 1.0, -1.0, 0.1]);
            let a = ResolventOperator::affine(m, v(&[-1.0, 0.5]))?.with_modulus(0.1)?;
            let spec = SystemSpec::new(
                a,
                CocoerciveMap::zero(2)?,
                psi,
                default_schedules(),
                zero2(),
                zero2(),
            )?;
            Ok(ProblemInstance {
                name: name.into(),
                description:
                    "0 in M x + q + N_C(x), M = [[0.1, 1], [-1, 0.1]], C the line x1 + x2 = 1"
                        .into(),
                spec,
                objective: None,
                oracle: OracleMethod::ClosedForm,
            })
        }
        "unconstrained-forward-backward" => {
            let f = ProxFn::quadratic_shift(v(&[1.0, -1.0]), 1.0)?;
            let a = ResolventOperator::subdifferential(2, f.clone())?.with_modulus(1.0)?;
            let g = CocoerciveMap::gradient_affine(
                Matrix::from_diagonal(&v(&[2.0, 1.0])),
                v(&[-1.0, 0.0]),
            )?;
            let spec = SystemSpec::new(
                a,
                g.clone(),
                CocoerciveMap::zero(2)?,
                default_schedules(),
                zero2(),
                zero2(),
            )?;
            Ok(ProblemInstance {
                name: name.into(),
                description:
                    "B = 0: second-order forward-backward dynamics for |x - (1, -1)|^2/2 + g".into(),
                spec,
                objective: Some(Objective { f, g }),
                oracle: OracleMethod::ClosedForm,
            })
        }
        other => Err(Error::Config(format!(
            "unknown problem '{other}' (known: {})",
            GALLERY_NAMES.join(", ")
        ))),
    }
}

pub fn gallery() -> Vec<ProblemInstance> {
    GALLERY_NAMES
        .iter()
        .map(|n| gallery_instance(n).expect("gallery instances are valid"))
        .collect()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    Matrix::from_fn(n, n, |_, _| StandardNormal.sample(rng))
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = random_matrix(rng, n);
    let q = g.transpose() * &g / n as f64 + Matrix::identity(n, n) * 0.5;
    (&q + q.transpose()) * 0.5
}

/// Dimension of the scaled gallery.
pub const SCALED_DIM: usize = 20;

/// Seeded `n = 20` variants of the affine gallery instances (closed-form oracle only).
pub fn gallery_scaled(seed: u64) -> Result<Vec<ProblemInstance>> {
    let n = SCALED_DIM;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_vector(&mut rng, n);
    let psi = CocoerciveMap::quadratic_penalty(a.clone(), 1.0)?;
    let c = ConstraintSet::hyperplane(a, 1.0)?;
    let zero = || Vector::zeros(n);
    let mut out = Vec::new();

    let q = random_psd(&mut rng, n);
    out.push(build_bilevel_quadratic(
        "min-norm-on-line-n20",
        "random PSD quadratic over a random hyperplane",
        ProxFn::Zero,
        CocoerciveMap::gradient_affine(q, random_vector(&mut rng, n))?,
        psi.clone(),
        &c,
        default_schedules(),
        zero(),
        zero(),
    )?);

    out.push(build_bilevel_quadratic(
        "strongly-monotone-projection-n20",
        "projection of a random point onto a random hyperplane",
        ProxFn::quadratic_shift(random_vector(&mut rng, n), 1.0)?,
        CocoerciveMap::zero(n)?,
        psi.clone(),
        &c,
        default_schedules(),
        zero(),
        zero(),
    )?);

    let s = random_matrix(&mut rng, n);
    let m = (&s - s.transpose()) * 0.5 + Matrix::identity(n, n) * 0.1;
    let op = ResolventOperator::affine(m, random_vector(&mut rng, n))?.with_modulus(0.1)?;
    out.push(ProblemInstance {
        name: "affine-inclusion-n20".into(),
        description: "random monotone nonsymmetric affine operator over a random hyperplane".into(),
        spec: SystemSpec::new(
            op,
            CocoerciveMap::zero(n)?,
            psi,
            default_schedules(),
            zero(),
            zero(),
        )?,
        objective: None,
        oracle: OracleMethod::ClosedForm,
    });

    let f = ProxFn::quadratic_shift(random_vector(&mut rng, n), 1.0)?;
    let g = CocoerciveMap::gradient_affine(random_psd(&mut rng, n), random_vector(&mut rng, n))?;
    out.push(ProblemInstance {
        name: "unconstrained-forward-backward-n20".into(),
        description: "random strongly convex quadratic plus random PSD gradient, B = 0".into(),
        spec: SystemSpec::new(
            ResolventOperator::subdifferential(n, f.clone())?.with_modulus(1.0)?,
            g.clone(),
            CocoerciveMap::zero(n)?,
            default_schedules(),
            zero(),
            zero(),
        )?,
        objective: Some(Objective { f, g }),
        oracle: OracleMethod::ClosedForm,
    });
    Ok(out)
}

/// Replaces the schedules and initial data of an instance.
pub fn with_overrides(
    mut inst: ProblemInstance,
    schedules: Option<ScheduleSet>,
    u0: Option<Vector>,
    v0: Option<Vector>,
) -> Result<ProblemInstance> {
    if let Some(s) = schedules {
        inst.spec = inst.spec.with_schedules(s);
    }
    if u0.is_some() || v0.is_some() {
        let n = inst.spec.dim();
        let u = u0.unwrap_or_else(|| inst.spec.u0().clone());
        let w = v0.unwrap_or_else(|| inst.spec.v0().clone());
        ensure_dim(&u, n)?;
        ensure_dim(&w, n)?;
        inst.spec = inst.spec.with_initial(u, w)?;
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Vector, b: &[f64], tol: f64) -> bool {
        (a - v(b)).norm() <= tol
    }

    #[test]
    fn min_norm_on_line() {
        let s = kkt_oracle(&gallery_instance("min-norm-on-line").unwrap()).unwrap();
        assert!(close(&s.anchor.x_star, &[0.5, 0.5], 1e-12));
        assert!(close(&s.anchor.v, &[0.0, 0.0], 1e-12));
        assert!(close(&s.anchor.p, &[-0.5, -0.5], 1e-12));
        assert!(s.unique);
    }

    #[test]
    fn strongly_monotone_projection() {
        let inst = gallery_instance("strongly-monotone-projection").unwrap();
        assert!(inst.strongly_monotone());
        let s = kkt_oracle(&inst).unwrap();
        assert!(close(&s.anchor.x_star, &[1.5, -0.5], 1e-12));
        assert!(close(&s.anchor.v, &[-0.5, -0.5], 1e-12));
        assert!(close(&s.anchor.p, &[0.5, 0.5], 1e-12));
        assert!(s.unique);
    }

    #[test]
    fn l1_uses_grid_and_is_non_unique() {
        let inst = gallery_instance("l1-on-line").unwrap();
        assert_eq!(inst.oracle, OracleMethod::GridRefinement);
        let s = kkt_oracle(&inst).unwrap();
        assert!(!s.unique);
        assert!(close(&s.anchor.x_star, &[0.5, 0.5], 1e-8));
        assert!(close(&s.anchor.v, &[1.0, 1.0], 1e-8));
    }

    #[test]
    fn affine_inclusion_certificate() {
        let s = kkt_oracle(&gallery_instance("affine-inclusion").unwrap()).unwrap();
        let m = Matrix::from_row_slice(2, 2, &[0.1, 1.0, -1.0, 0.1]);
        let x = &s.anchor.x_star;
        // hand elimination: p = s (1, 1), x1 + x2 = 1, M x + q + p = 0
        let r = &m * x + v(&[-1.0, 0.5]) + &s.anchor.p;
        assert!(r.norm() < 1e-12);
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((s.anchor.p[0] - s.anchor.p[1]).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_has_zero_residual() {
        let inst = gallery_instance("unconstrained-forward-backward").unwrap();
        let s = kkt_oracle(&inst).unwrap();
        assert!(close(&s.anchor.x_star, &[2.0 / 3.0, -0.5], 1e-12));
        for t in [0.0, 1.0, 100.0] {
            assert!(
                inst.spec
                    .stationarity_residual(t, &s.anchor.x_star)
                    .unwrap()
                    < 1e-14
            );
        }
    }

    #[test]
    fn zero_objective_returns_projection_of_start() {
        let (psi, line) = line_penalty();
        let inst = build_bilevel_quadratic(
            "flat",
            "",
            ProxFn::Zero,
            CocoerciveMap::zero(2).unwrap(),
            psi,
            &line,
            default_schedules(),
            v(&[2.0, 1.0]),
            v(&[0.0, 0.0]),
        )
        .unwrap();
        let s = kkt_oracle(&inst).unwrap();
        assert!(!s.unique);
        assert!(close(&s.anchor.x_star, &[1.0, 0.0], 1e-12));
    }

    #[test]
    fn pairing_is_checked() {
        let (psi, _) = line_penalty();
        let other = ConstraintSet::hyperplane(v(&[1.0, -1.0]), 0.0).unwrap();
        let r = build_bilevel_quadratic(
            "bad",
            "",
            ProxFn::Zero,
            CocoerciveMap::zero(2).unwrap(),
            psi.clone(),
            &other,
            default_schedules(),
            Vector::zeros(2),
            Vector::zeros(2),
        );
        assert!(matches!(r, Err(Error::Pairing(_))));
        let scaled = ConstraintSet::hyperplane(v(&[2.0, 2.0]), 2.0).unwrap();
        assert!(build_bilevel_quadratic(
            "scaled",
            "",
            ProxFn::Zero,
            CocoerciveMap::zero(2).unwrap(),
            psi,
            &scaled,
            default_schedules(),
            Vector::zeros(2),
            Vector::zeros(2),
        )
        .is_ok());
    }

    #[test]
    fn gallery_passes_hypotheses() {
        let g = gallery();
        assert!(g.len() >= 5);
        for inst in &g {
            assert!(
                inst.spec.regime_supported(),
                "{}: {:?}",
                inst.name,
                inst.spec.hypotheses().failures()
            );
        }
        assert!(gallery_instance("nope").is_err());
    }

    #[test]
    fn grid_matches_closed_form() {
        for name in ["min-norm-on-line", "strongly-monotone-projection"] {
            let inst = gallery_instance(name).unwrap();
            let a = closed_form_oracle(&inst).unwrap();
            let b = grid_oracle(&inst).unwrap();
            assert!(
                (&a.anchor.x_star - &b.anchor.x_star).norm() <= 1e-7,
                "{name}"
            );
            assert!(b.unique);
        }
    }

    #[test]
    fn scaled_gallery_is_seeded_and_certified() {
        let a = gallery_scaled(7).unwrap();
        let b = gallery_scaled(7).unwrap();
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.spec.dim(), SCALED_DIM);
            let sx = kkt_oracle(x).unwrap();
            let sy = kkt_oracle(y).unwrap();
            assert_eq!(sx.anchor.x_star, sy.anchor.x_star);
            assert!(sx.unique, "{}", x.name);
        }
    }
}
