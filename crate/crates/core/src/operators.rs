//! Monotone operators given through closed-form resolvents, cocoercive maps,
//! constraint sets with their support functions, and sampled property checks.
//!
//! Everything here lives in `R^n`. Vectors are `nalgebra::DVector<f64>` and
//! every public operation rejects mismatched dimensions and non-finite data.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Eigenvalue tolerance for positive-semidefiniteness tests.
pub const PSD_TOL: f64 = 1e-10;
/// Maximum residual accepted from the affine resolvent solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;
/// Threshold below which a vector component counts as zero in support-function tests.
pub const ORTHOGONAL_TOL: f64 = 1e-10;
/// Membership tolerance for normal-cone and feasibility tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Pass threshold for sampled firm nonexpansiveness and cocoercivity.
pub const PROPERTY_TOL: f64 = 1e-9;

pub(crate) fn ensure_dim(v: &Vector, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

pub(crate) fn ensure_finite(v: &Vector, what: &str) -> Result<()> {
    match v.iter().position(|c| !c.is_finite()) {
        Some(i) => Err(Error::NonFinite {
            what: what.to_string(),
            index: Some(i),
        }),
        None => Ok(()),
    }
}

fn check_input(v: &Vector, expected: usize, what: &str) -> Result<()> {
    ensure_dim(v, expected)?;
    ensure_finite(v, what)
}

fn ensure_positive(value: f64, name: &str) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    let sym = m + m.transpose();
    SymmetricEigen::new(sym * 0.5).eigenvalues.min()
}

/// A real number or `+inf`.
///
/// Serializes as a JSON number when finite and as the string `"+inf"` otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl std::fmt::Display for ExtReal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("+inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("+inf"),
        }
    }
}

/// A nonempty closed convex set.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSet {
    /// `{x : <a, x> = b}`
    Hyperplane {
        a: Vector,
        b: f64,
    },
    /// `{x : M x = rhs}`
    AffineSubspace {
        matrix: Matrix,
        rhs: Vector,
    },
    Box {
        lo: Vector,
        hi: Vector,
    },
    WholeSpace {
        dim: usize,
    },
}

impl ConstraintSet {
    pub fn hyperplane(a: Vector, b: f64) -> Result<Self> {
        ensure_finite(&a, "hyperplane normal")?;
        if a.is_empty() || a.norm() == 0.0 {
            return Err(Error::EmptySet(
                "hyperplane normal must be a nonzero vector".into(),
            ));
        }
        if !b.is_finite() {
            return Err(Error::InvalidParameter(
                "hyperplane offset must be finite".into(),
            ));
        }
        Ok(ConstraintSet::Hyperplane { a, b })
    }

    pub fn affine_subspace(matrix: Matrix, rhs: Vector) -> Result<Self> {
        if matrix.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: rhs.len(),
            });
        }
        if matrix.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "affine subspace needs n >= 1".into(),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "affine subspace matrix".into(),
                index: None,
            });
        }
        ensure_finite(&rhs, "affine subspace right-hand side")?;
        let x0 = pseudo_inverse(&matrix) * &rhs;
        let residual = (&matrix * &x0 - &rhs).norm();
        if residual > PSD_TOL {
            return Err(Error::EmptySet(format!(
                "least-squares feasibility residual {residual:e}"
            )));
        }
        Ok(ConstraintSet::AffineSubspace { matrix, rhs })
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        ensure_dim(&hi, lo.len())?;
        ensure_finite(&lo, "box lower bound")?;
        ensure_finite(&hi, "box upper bound")?;
        if lo.is_empty() {
            return Err(Error::InvalidParameter("box needs n >= 1".into()));
        }
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(Error::EmptySet(format!("box has lo > hi in component {i}")));
        }
        Ok(ConstraintSet::Box { lo, hi })
    }

    pub fn whole_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(ConstraintSet::WholeSpace { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Hyperplane { a, .. } => a.len(),
            ConstraintSet::AffineSubspace { matrix, .. } => matrix.ncols(),
            ConstraintSet::Box { lo, .. } => lo.len(),
            ConstraintSet::WholeSpace { dim } => *dim,
        }
    }

    /// Euclidean projection.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        check_input(x, self.dim(), "projection input")?;
        Ok(match self {
            ConstraintSet::Hyperplane { a, b } => x - a * ((a.dot(x) - b) / a.norm_squared()),
            ConstraintSet::AffineSubspace { matrix, rhs } => {
                x - pseudo_inverse(matrix) * (matrix * x - rhs)
            }
            ConstraintSet::Box { lo, hi } => {
                Vector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))
            }
            ConstraintSet::WholeSpace { .. } => x.clone(),
        })
    }

    pub fn distance(&self, x: &Vector) -> Result<f64> {
        Ok((x - self.project(x)?).norm())
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> Result<bool> {
        Ok(self.distance(x)? <= tol)
    }

    /// `sup_{y in C} <y, u>`, possibly `+inf`.
    pub fn support_function(&self, u: &Vector) -> Result<ExtReal> {
        check_input(u, self.dim(), "support function argument")?;
        Ok(match self {
            ConstraintSet::Hyperplane { a, b } => {
                let s = a.dot(u) / a.norm_squared();
                if (u - a * s).norm() > ORTHOGONAL_TOL {
                    ExtReal::PosInf
                } else {
                    ExtReal::Finite(s * b)
                }
            }
            ConstraintSet::AffineSubspace { matrix, rhs } => {
                let mt = matrix.transpose();
                let y = pseudo_inverse(&mt) * u;
                if (&mt * &y - u).norm() > ORTHOGONAL_TOL {
                    ExtReal::PosInf
                } else {
                    ExtReal::Finite(y.dot(rhs))
                }
            }
            ConstraintSet::Box { lo, hi } => {
                ExtReal::Finite((0..u.len()).map(|i| (u[i] * lo[i]).max(u[i] * hi[i])).sum())
            }
            ConstraintSet::WholeSpace { .. } => {
                if u.norm() > ORTHOGONAL_TOL {
                    ExtReal::PosInf
                } else {
                    ExtReal::Finite(0.0)
                }
            }
        })
    }

    /// Tests `u in N_C(x)` through `sigma_C(u) = <x, u>`.
    ///
    /// Fails with [`Error::Infeasible`] when `x` is farther than
    /// [`MEMBERSHIP_TOL`] from the set.
    pub fn normal_cone_member(&self, x: &Vector, u: &Vector) -> Result<bool> {
        check_input(x, self.dim(), "normal cone base point")?;
        let distance = self.distance(x)?;
        if distance > MEMBERSHIP_TOL {
            return Err(Error::Infeasible { distance });
        }
        Ok(match self.support_function(u)? {
            ExtReal::PosInf => false,
            ExtReal::Finite(sigma) => sigma - x.dot(u) <= MEMBERSHIP_TOL,
        })
    }
}

fn pseudo_inverse(m: &Matrix) -> Matrix {
    // Rank decisions at 1e-12 relative to the largest singular value.
    let svd = m.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    svd.pseudo_inverse(eps)
        .expect("SVD computed with both factors")
}

/// A proper convex lower semicontinuous function given through its proximal map.
#[derive(Clone, Debug, PartialEq)]
pub enum ProxFn {
    Zero,
    /// `w * ||y||_1`
    L1 {
        weight: f64,
    },
    /// `(mu / 2) ||y - center||^2`
    QuadraticShift {
        center: Vector,
        modulus: f64,
    },
    Indicator(ConstraintSet),
}

impl ProxFn {
    pub fn l1(weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "l1 weight must be nonnegative, got {weight}"
            )));
        }
        Ok(ProxFn::L1 { weight })
    }

    pub fn quadratic_shift(center: Vector, modulus: f64) -> Result<Self> {
        ensure_finite(&center, "quadratic center")?;
        ensure_positive(modulus, "quadratic modulus")?;
        Ok(ProxFn::QuadraticShift { center, modulus })
    }

    /// Dimension the descriptor is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ProxFn::QuadraticShift { center, .. } => Some(center.len()),
            ProxFn::Indicator(c) => Some(c.dim()),
            ProxFn::Zero | ProxFn::L1 { .. } => None,
        }
    }

    /// `argmin_y f(y) + ||y - x||^2 / (2 lambda)`.
    pub fn prox(&self, lambda: f64, x: &Vector) -> Result<Vector> {
        ensure_positive(lambda, "prox step")?;
        if let Some(n) = self.dim() {
            ensure_dim(x, n)?;
        }
        ensure_finite(x, "prox input")?;
        Ok(match self {
            ProxFn::Zero => x.clone(),
            ProxFn::L1 { weight } => {
                let thr = lambda * weight;
                x.map(|c| c.signum() * (c.abs() - thr).max(0.0))
            }
            ProxFn::QuadraticShift { center, modulus } => {
                (x + center * (lambda * modulus)) / (1.0 + lambda * modulus)
            }
            ProxFn::Indicator(c) => c.project(x)?,
        })
    }

    pub fn value(&self, x: &Vector) -> Result<ExtReal> {
        if let Some(n) = self.dim() {
            ensure_dim(x, n)?;
        }
        Ok(match self {
            ProxFn::Zero => ExtReal::Finite(0.0),
            ProxFn::L1 { weight } => ExtReal::Finite(weight * x.lp_norm(1)),
            ProxFn::QuadraticShift { center, modulus } => {
                ExtReal::Finite(0.5 * modulus * (x - center).norm_squared())
            }
            ProxFn::Indicator(c) => {
                if c.contains(x, MEMBERSHIP_TOL)? {
                    ExtReal::Finite(0.0)
                } else {
                    ExtReal::PosInf
                }
            }
        })
    }

    /// Gradient for the differentiable members of the gallery.
    pub fn gradient(&self, x: &Vector) -> Option<Vector> {
        match self {
            ProxFn::Zero => Some(Vector::zeros(x.len())),
            ProxFn::QuadraticShift { center, modulus } => Some((x - center) * *modulus),
            ProxFn::L1 { .. } | ProxFn::Indicator(_) => None,
        }
    }

    pub fn strong_convexity(&self) -> f64 {
        match self {
            ProxFn::QuadraticShift { modulus, .. } => *modulus,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind {
    Zero,
    /// `x -> M x + q`
    Affine {
        m: Matrix,
        q: Vector,
    },
    /// Subdifferential of a convex function; the resolvent is its prox.
    Subdifferential(ProxFn),
}

/// A maximally monotone operator `A` on `R^n`, represented by its resolvent.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolventOperator {
    dim: usize,
    kind: OperatorKind,
    eta: f64,
}

impl ResolventOperator {
    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(Self {
            dim,
            kind: OperatorKind::Zero,
            eta: 0.0,
        })
    }

    /// Affine operator; rejects `M` whose symmetric part is not positive semidefinite.
    pub fn affine(m: Matrix, q: Vector) -> Result<Self> {
        if m.is_square() && m.nrows() > 0 && m.iter().all(|v| v.is_finite()) {
            let min_eigenvalue = min_symmetric_eigenvalue(&m);
            if min_eigenvalue < -PSD_TOL {
                return Err(Error::NotMonotone { min_eigenvalue });
            }
        }
        Self::affine_unchecked(m, q)
    }

    /// Affine operator without the monotonicity test. Only useful for
    /// exercising the property checkers on deliberately broken data.
    pub fn affine_unchecked(m: Matrix, q: Vector) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "affine operator needs a nonempty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        ensure_dim(&q, m.nrows())?;
        ensure_finite(&q, "affine offset")?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "affine matrix".into(),
                index: None,
            });
        }
        Ok(Self {
            dim: m.nrows(),
            kind: OperatorKind::Affine { m, q },
            eta: 0.0,
        })
    }

    pub fn subdifferential(dim: usize, f: ProxFn) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if let Some(n) = f.dim() {
            if n != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: n,
                });
            }
        }
        Ok(Self {
            dim,
            kind: OperatorKind::Subdifferential(f),
            eta: 0.0,
        })
    }

    /// Declares a strong-monotonicity modulus, verified against the data.
    pub fn with_modulus(mut self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "strong monotonicity modulus must be nonnegative, got {eta}"
            )));
        }
        let ok = match &self.kind {
            OperatorKind::Zero => eta == 0.0,
            OperatorKind::Affine { m, .. } => min_symmetric_eigenvalue(m) - eta >= -PSD_TOL,
            OperatorKind::Subdifferential(f) => f.strong_convexity() >= eta - PSD_TOL,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "operator is not {eta}-strongly monotone"
            )));
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn modulus(&self) -> f64 {
        self.eta
    }

    /// `J_{lambda A}(x)`: the unique `p` with `x in p + lambda A(p)`.
    pub fn resolvent(&self, lambda: f64, x: &Vector) -> Result<Vector> {
        ensure_positive(lambda, "resolvent step")?;
        check_input(x, self.dim, "resolvent input")?;
        match &self.kind {
            OperatorKind::Zero => Ok(x.clone()),
            OperatorKind::Affine { m, q } => {
                let sys = Matrix::identity(self.dim, self.dim) + m * lambda;
                let rhs = x - q * lambda;
                let p = sys.clone().lu().solve(&rhs).ok_or(Error::SingularSystem {
                    residual: f64::INFINITY,
                })?;
                ensure_finite(&p, "resolvent output")?;
                let residual = (&sys * &p - &rhs).norm();
                if !residual.is_finite() {
                    return Err(Error::NonFinite {
                        what: "resolvent residual".into(),
                        index: None,
                    });
                }
                if residual > SOLVE_RESIDUAL_TOL * (1.0 + rhs.norm()) {
                    return Err(Error::SingularSystem { residual });
                }
                Ok(p)
            }
            OperatorKind::Subdifferential(f) => f.prox(lambda, x),
        }
    }

    /// Yosida approximation `(x - J_{alpha A} x) / alpha`.
    pub fn yosida(&self, alpha: f64, x: &Vector) -> Result<Vector> {
        let p = self.resolvent(alpha, x)?;
        Ok((x - p) / alpha)
    }

    /// Single-valued evaluation `A(x)` where the operator is a function.
    pub fn apply(&self, x: &Vector) -> Option<Vector> {
        match &self.kind {
            OperatorKind::Zero => Some(Vector::zeros(self.dim)),
            OperatorKind::Affine { m, q } => Some(m * x + q),
            OperatorKind::Subdifferential(f) => f.gradient(x),
        }
    }

    /// Tests `v in A(x)` through the resolvent identity `J_A(x + v) = x`.
    pub fn contains_pair(&self, x: &Vector, v: &Vector, tol: f64) -> Result<bool> {
        check_input(v, self.dim, "graph element")?;
        let p = self.resolvent(1.0, &(x + v))?;
        Ok((p - x).norm() <= tol)
    }
}

/// A single-valued `(1/L)`-cocoercive map.
#[derive(Clone, Debug, PartialEq)]
pub enum CocoerciveMap {
    Zero {
        dim: usize,
    },
    /// `x -> Q x + r` with `Q` symmetric positive semidefinite.
    GradientAffine {
        q: Matrix,
        r: Vector,
        lipschitz: f64,
    },
    /// Gradient of `psi(x) = (<a, x> - b)^2 / 2`, i.e. `x -> (<a, x> - b) a`.
    QuadraticPenalty {
        a: Vector,
        b: f64,
    },
}

impl CocoerciveMap {
    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(CocoerciveMap::Zero { dim })
    }

    pub fn gradient_affine(q: Matrix, r: Vector) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "Q must be a nonempty square matrix".into(),
            ));
        }
        ensure_dim(&r, q.nrows())?;
        ensure_finite(&r, "gradient offset")?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient matrix".into(),
                index: None,
            });
        }
        let asym = (&q - q.transpose()).amax();
        if asym > PSD_TOL * (1.0 + q.amax()) {
            return Err(Error::InvalidParameter(format!(
                "Q must be symmetric (asymmetry {asym:e})"
            )));
        }
        let eig = SymmetricEigen::new((&q + q.transpose()) * 0.5).eigenvalues;
        let min_eigenvalue = eig.min();
        if min_eigenvalue < -PSD_TOL {
            return Err(Error::NotMonotone { min_eigenvalue });
        }
        let lipschitz = eig.max().max(0.0);
        Ok(CocoerciveMap::GradientAffine { q, r, lipschitz })
    }

    pub fn quadratic_penalty(a: Vector, b: f64) -> Result<Self> {
        ensure_finite(&a, "penalty normal")?;
        if a.is_empty() || a.norm() == 0.0 || !b.is_finite() {
            return Err(Error::InvalidParameter(
                "penalty needs a nonzero normal and a finite offset".into(),
            ));
        }
        Ok(CocoerciveMap::QuadraticPenalty { a, b })
    }

    pub fn dim(&self) -> usize {
        match self {
            CocoerciveMap::Zero { dim } => *dim,
            CocoerciveMap::GradientAffine { r, .. } => r.len(),
            CocoerciveMap::QuadraticPenalty { a, .. } => a.len(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, CocoerciveMap::Zero { .. })
    }

    /// Lipschitz constant `L`; the map is `1/L`-cocoercive. Zero for the zero map.
    pub fn lipschitz(&self) -> f64 {
        match self {
            CocoerciveMap::Zero { .. } => 0.0,
            CocoerciveMap::GradientAffine { lipschitz, .. } => *lipschitz,
            CocoerciveMap::QuadraticPenalty { a, .. } => a.norm_squared(),
        }
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_input(x, self.dim(), "cocoercive map input")?;
        Ok(match self {
            CocoerciveMap::Zero { dim } => Vector::zeros(*dim),
            CocoerciveMap::GradientAffine { q, r, .. } => q * x + r,
            CocoerciveMap::QuadraticPenalty { a, b } => a * (a.dot(x) - b),
        })
    }

    /// The convex potential whose gradient this map is, normalized so its minimum is zero
    /// for the penalty kind.
    pub fn potential(&self, x: &Vector) -> Result<f64> {
        check_input(x, self.dim(), "potential input")?;
        Ok(match self {
            CocoerciveMap::Zero { .. } => 0.0,
            CocoerciveMap::GradientAffine { q, r, .. } => 0.5 * x.dot(&(q * x)) + r.dot(x),
            CocoerciveMap::QuadraticPenalty { a, b } => 0.5 * (a.dot(x) - b).powi(2),
        })
    }

    /// `(M, c)` with `B x = M x + c`.
    pub fn affine_parts(&self) -> (Matrix, Vector) {
        let n = self.dim();
        match self {
            CocoerciveMap::Zero { .. } => (Matrix::zeros(n, n), Vector::zeros(n)),
            CocoerciveMap::GradientAffine { q, r, .. } => (q.clone(), r.clone()),
            CocoerciveMap::QuadraticPenalty { a, b } => (a * a.transpose(), -a * *b),
        }
    }

    /// `zer B` as a constraint set.
    pub fn zero_set(&self) -> Result<ConstraintSet> {
        match self {
            CocoerciveMap::Zero { dim } => ConstraintSet::whole_space(*dim),
            CocoerciveMap::GradientAffine { q, r, .. } => {
                ConstraintSet::affine_subspace(q.clone(), -r)
            }
            CocoerciveMap::QuadraticPenalty { a, b } => ConstraintSet::hyperplane(a.clone(), *b),
        }
    }
}

/// Outcome of a sampled property check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: &'static str,
    pub samples: usize,
    pub max_violation: f64,
    pub passed: bool,
}

fn sample_pairs(dim: usize, count: usize, seed: u64) -> impl Iterator<Item = (Vector, Vector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |_| {
        let x = Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let y = Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        (x, y)
    })
}

/// Samples `||Jx - Jy||^2 - <x - y, Jx - Jy>` over seeded normal pairs;
/// passes when the largest value is at most [`PROPERTY_TOL`].
pub fn check_firm_nonexpansiveness(
    a: &ResolventOperator,
    lambda: f64,
    sample_count: usize,
    seed: u64,
) -> Result<PropertyReport> {
    if sample_count == 0 {
        return Err(Error::InvalidParameter("sample_count must be >= 1".into()));
    }
    let mut max_violation = f64::NEG_INFINITY;
    for (x, y) in sample_pairs(a.dim(), sample_count, seed) {
        let dj = a.resolvent(lambda, &x)? - a.resolvent(lambda, &y)?;
        let violation = dj.norm_squared() - (x - y).dot(&dj);
        max_violation = max_violation.max(violation);
    }
    Ok(PropertyReport {
        property: "firm_nonexpansiveness",
        samples: sample_count,
        max_violation,
        passed: max_violation <= PROPERTY_TOL,
    })
}

/// Samples `(1/L) ||Bx - By||^2 - <x - y, Bx - By>`.
pub fn check_cocoercivity(
    b: &CocoerciveMap,
    sample_count: usize,
    seed: u64,
) -> Result<PropertyReport> {
    if sample_count == 0 {
        return Err(Error::InvalidParameter("sample_count must be >= 1".into()));
    }
    let lip = b.lipschitz();
    let mut max_violation = f64::NEG_INFINITY;
    for (x, y) in sample_pairs(b.dim(), sample_count, seed) {
        let db = b.apply(&x)? - b.apply(&y)?;
        let scaled = if lip > 0.0 {
            db.norm_squared() / lip
        } else {
            0.0
        };
        max_violation = max_violation.max(scaled - (x - y).dot(&db));
    }
    Ok(PropertyReport {
        property: "cocoercivity",
        samples: sample_count,
        max_violation,
        passed: max_violation <= PROPERTY_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    fn m2(r: [[f64; 2]; 2]) -> Matrix {
        Matrix::from_row_slice(2, 2, &[r[0][0], r[0][1], r[1][0], r[1][1]])
    }

    /// Direct 2x2 solve by Cramer's rule.
    fn cramer(m: [[f64; 2]; 2], rhs: [f64; 2]) -> [f64; 2] {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [
            (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
            (m[0][0] * rhs[1] - rhs[0] * m[1][0]) / det,
        ]
    }

    #[test]
    fn zero_resolvent_is_identity() {
        let a = ResolventOperator::zero(2).unwrap();
        assert_eq!(a.resolvent(1.0, &v(&[3.0, -2.0])).unwrap(), v(&[3.0, -2.0]));
    }

    #[test]
    fn identity_affine_resolvent_halves() {
        let a = ResolventOperator::affine(Matrix::identity(2, 2), v(&[0.0, 0.0])).unwrap();
        assert_eq!(a.resolvent(1.0, &v(&[4.0, 0.0])).unwrap(), v(&[2.0, 0.0]));
    }

    #[test]
    fn affine_resolvent_matches_cramer() {
        let a = ResolventOperator::affine(m2([[2.0, 0.0], [0.0, 1.0]]), v(&[1.0, 0.0])).unwrap();
        let p = a.resolvent(0.5, &v(&[1.0, 1.0])).unwrap();
        let oracle = cramer([[2.0, 0.0], [0.0, 1.5]], [0.5, 1.0]);
        assert_abs_diff_eq!(oracle[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(oracle[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], oracle[0], epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], oracle[1], epsilon = 1e-14);
    }

    #[test]
    fn affine_rejects_non_monotone_matrix() {
        let err = ResolventOperator::affine(m2([[0.0, 2.0], [0.0, 0.0]]), v(&[0.0, 0.0]));
        assert!(matches!(err, Err(Error::NotMonotone { .. })));
    }

    #[test]
    fn resolvent_rejects_bad_inputs() {
        let a = ResolventOperator::zero(2).unwrap();
        assert!(matches!(
            a.resolvent(1.0, &v(&[1.0])),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(a.resolvent(0.0, &v(&[1.0, 1.0])).is_err());
        assert!(matches!(
            a.resolvent(1.0, &v(&[f64::NAN, 1.0])),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn singular_affine_system_is_reported() {
        // M = -I slips past the check and makes I + M singular.
        let a =
            ResolventOperator::affine_unchecked(-Matrix::identity(2, 2), v(&[0.0, 0.0])).unwrap();
        assert!(matches!(
            a.resolvent(1.0, &v(&[1.0, 1.0])),
            Err(Error::SingularSystem { .. })
        ));
    }

    /// Brute-force minimization of `|y| + (y - x)^2 / 2` on a fine grid.
    fn grid_soft_threshold(x: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let n = 400_001;
        for k in 0..n {
            let y = -4.0 + 8.0 * k as f64 / (n - 1) as f64;
            let val = y.abs() + 0.5 * (y - x).powi(2);
            if val < best.0 {
                best = (val, y);
            }
        }
        best.1
    }

    #[test]
    fn l1_prox_is_soft_threshold() {
        let p = ProxFn::l1(1.0)
            .unwrap()
            .prox(1.0, &v(&[1.5, -0.3]))
            .unwrap();
        assert_abs_diff_eq!(grid_soft_threshold(1.5), 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(grid_soft_threshold(-0.3), 0.0, epsilon = 1e-4);
        assert_eq!(p, v(&[0.5, 0.0]));
    }

    #[test]
    fn hyperplane_projection() {
        let c = ConstraintSet::hyperplane(v(&[1.0, 1.0]), 1.0).unwrap();
        let p = ProxFn::Indicator(c).prox(3.0, &v(&[1.0, 1.0])).unwrap();
        // grid search along the line (t, 1 - t)
        let t_best = (0..=100_000)
            .map(|k| -2.0 + 4.0 * k as f64 / 100_000.0)
            .min_by(|s, t| {
                let ds = (s - 1.0).powi(2) + (1.0 - s - 1.0).powi(2);
                let dt = (t - 1.0).powi(2) + (1.0 - t - 1.0).powi(2);
                ds.total_cmp(&dt)
            })
            .unwrap();
        assert_abs_diff_eq!(t_best, 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_prox_is_identity() {
        assert_eq!(
            ProxFn::Zero.prox(7.0, &v(&[2.0, 2.0])).unwrap(),
            v(&[2.0, 2.0])
        );
    }

    #[test]
    fn quadratic_shift_prox() {
        let f = ProxFn::quadratic_shift(v(&[2.0, 0.0]), 3.0).unwrap();
        let p = f.prox(0.5, &v(&[0.0, 1.0])).unwrap();
        // optimality: mu (p - z) + (p - x) / lambda = 0
        let g = f.gradient(&p).unwrap() + (&p - v(&[0.0, 1.0])) / 0.5;
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn yosida_examples() {
        let zero = ResolventOperator::zero(2).unwrap();
        assert_eq!(zero.yosida(2.0, &v(&[1.0, 1.0])).unwrap(), v(&[0.0, 0.0]));

        let id = ResolventOperator::affine(Matrix::identity(2, 2), v(&[0.0, 0.0])).unwrap();
        let y = id.yosida(1.0, &v(&[4.0, 0.0])).unwrap();
        assert_eq!(y, v(&[2.0, 0.0]));
        // M (I + alpha M)^{-1} x
        let direct = Matrix::identity(2, 2)
            * (Matrix::identity(2, 2) * 2.0).try_inverse().unwrap()
            * v(&[4.0, 0.0]);
        assert_abs_diff_eq!((y - direct).norm(), 0.0, epsilon = 1e-15);

        let m = m2([[2.0, 0.0], [0.0, 1.0]]);
        let q = v(&[1.0, 0.0]);
        let a = ResolventOperator::affine(m.clone(), q.clone()).unwrap();
        let x = v(&[1.0, 1.0]);
        let y = a.yosida(0.5, &x).unwrap();
        let closed = (Matrix::identity(2, 2) + &m * 0.5).try_inverse().unwrap() * (&m * &x + q);
        assert_abs_diff_eq!((y - closed).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn support_function_examples() {
        let h = ConstraintSet::hyperplane(v(&[1.0, 1.0]), 1.0).unwrap();
        assert_eq!(
            h.support_function(&v(&[2.0, 2.0])).unwrap(),
            ExtReal::Finite(2.0)
        );
        // <y, u> is constant (=2) along the line y = (t, 1 - t)
        for k in -5..=5 {
            let t = k as f64;
            assert_abs_diff_eq!(2.0 * t + 2.0 * (1.0 - t), 2.0, epsilon = 1e-12);
        }
        assert_eq!(
            h.support_function(&v(&[1.0, -1.0])).unwrap(),
            ExtReal::PosInf
        );

        let bx = ConstraintSet::boxed(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let corners = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let brute = corners
            .iter()
            .map(|c| c[0] - c[1])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(brute, 1.0);
        assert_eq!(
            bx.support_function(&v(&[1.0, -1.0])).unwrap(),
            ExtReal::Finite(1.0)
        );

        for c in [h, bx, ConstraintSet::whole_space(2).unwrap()] {
            assert_eq!(
                c.support_function(&v(&[0.0, 0.0])).unwrap(),
                ExtReal::Finite(0.0)
            );
        }
        let w = ConstraintSet::whole_space(2).unwrap();
        assert_eq!(
            w.support_function(&v(&[0.0, 1.0])).unwrap(),
            ExtReal::PosInf
        );
    }

    #[test]
    fn affine_subspace_support_and_projection() {
        let c =
            ConstraintSet::affine_subspace(Matrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[1.0]))
                .unwrap();
        assert!((c.project(&v(&[1.0, 1.0])).unwrap() - v(&[0.5, 0.5])).norm() < 1e-15);
        let s = c
            .support_function(&v(&[3.0, 3.0]))
            .unwrap()
            .finite()
            .unwrap();
        assert_abs_diff_eq!(s, 3.0, epsilon = 1e-12);
        assert_eq!(
            c.support_function(&v(&[1.0, 0.0])).unwrap(),
            ExtReal::PosInf
        );

        let empty = ConstraintSet::affine_subspace(
            Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            v(&[0.0, 1.0]),
        );
        assert!(matches!(empty, Err(Error::EmptySet(_))));
    }

    #[test]
    fn normal_cone_examples() {
        let h = ConstraintSet::hyperplane(v(&[1.0, 1.0]), 1.0).unwrap();
        let x = v(&[0.5, 0.5]);
        assert!(h.normal_cone_member(&x, &v(&[3.0, 3.0])).unwrap());
        assert!(!h.normal_cone_member(&x, &v(&[1.0, -1.0])).unwrap());
        assert!(h.normal_cone_member(&x, &v(&[0.0, 0.0])).unwrap());
        assert!(matches!(
            h.normal_cone_member(&v(&[1.0, 1.0]), &v(&[0.0, 0.0])),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn box_and_hyperplane_construction_errors() {
        assert!(ConstraintSet::boxed(v(&[1.0]), v(&[0.0])).is_err());
        assert!(ConstraintSet::hyperplane(v(&[0.0, 0.0]), 1.0).is_err());
    }

    #[test]
    fn firm_nonexpansiveness_examples() {
        let zero = ResolventOperator::zero(2).unwrap();
        let r = check_firm_nonexpansiveness(&zero, 3.0, 50, 1).unwrap();
        assert!(r.passed);
        assert!(r.max_violation.abs() < 1e-12);

        let id = ResolventOperator::affine(Matrix::identity(2, 2), v(&[0.0, 0.0])).unwrap();
        assert!(
            check_firm_nonexpansiveness(&id, 1.0, 100, 2)
                .unwrap()
                .passed
        );

        let m = (m2([[0.0, 2.0], [0.0, 0.0]]) - Matrix::identity(2, 2)) * 0.5;
        let bad = ResolventOperator::affine_unchecked(m, v(&[0.0, 0.0])).unwrap();
        let r = check_firm_nonexpansiveness(&bad, 1.0, 100, 3).unwrap();
        assert!(!r.passed);
        assert!(r.max_violation > 0.0);
    }

    #[test]
    fn cocoercive_constants() {
        let g =
            CocoerciveMap::gradient_affine(m2([[3.0, 1.0], [1.0, 3.0]]), v(&[0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(g.lipschitz(), 4.0, epsilon = 1e-10);
        let p = CocoerciveMap::quadratic_penalty(v(&[1.0, 2.0]), 1.0).unwrap();
        assert_eq!(p.lipschitz(), 5.0);
        assert_eq!(p.apply(&v(&[1.0, 1.0])).unwrap(), v(&[2.0, 4.0]));
        assert!(check_cocoercivity(&g, 200, 4).unwrap().passed);
        assert!(check_cocoercivity(&p, 200, 5).unwrap().passed);
        assert!(
            CocoerciveMap::gradient_affine(m2([[1.0, 0.0], [0.0, -1.0]]), v(&[0.0, 0.0])).is_err()
        );
    }

    #[test]
    fn strong_modulus_is_verified() {
        let a = ResolventOperator::affine(m2([[0.1, 1.0], [-1.0, 0.1]]), v(&[0.0, 0.0])).unwrap();
        assert!(a.clone().with_modulus(0.1).is_ok());
        assert!(a.with_modulus(0.2).is_err());
        let f = ProxFn::quadratic_shift(v(&[2.0, 0.0]), 1.0).unwrap();
        let s = ResolventOperator::subdifferential(2, f).unwrap();
        assert!(s.clone().with_modulus(1.0).is_ok());
        assert!(s.with_modulus(1.5).is_err());
    }

    #[test]
    fn graph_membership_via_resolvent() {
        let f = ProxFn::l1(1.0).unwrap();
        let a = ResolventOperator::subdifferential(2, f).unwrap();
        assert!(a
            .contains_pair(&v(&[0.5, 0.5]), &v(&[1.0, 1.0]), 1e-12)
            .unwrap());
        assert!(a
            .contains_pair(&v(&[0.0, 0.5]), &v(&[-0.3, 1.0]), 1e-12)
            .unwrap());
        assert!(!a
            .contains_pair(&v(&[0.5, 0.5]), &v(&[0.5, 1.0]), 1e-12)
            .unwrap());
    }
}
