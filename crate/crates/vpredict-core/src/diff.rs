//! Scalar forward-mode automatic differentiation with support for nesting.
//!
//! The trainable objects in this crate have at most eight parameters, so
//! forward mode (one evaluation per input component) is both cheaper and
//! far simpler than a tape. A [`DiffScalar`] carries a value together with
//! one tangent (directional derivative). Crucially the carrier type is
//! generic: a `DiffScalar<DiffScalar<f64>>` propagates a tangent whose
//! components are themselves dual numbers, which is exactly what is needed
//! to differentiate *through* an inner gradient — the outer training
//! gradient of an objective that contains a gradient-descent step inside
//! it. Nesting depth is a property of the scalar type, so deeper nesting
//! can never be silently truncated: an inner [`gradient`] call at the
//! wrong carrier type simply does not compile.
//!
//! All differentiable code in the crate is written against the [`Real`]
//! trait, which both `f64` and `DiffScalar<T>` implement. Generic functions
//! written once against `Real` can then be evaluated (plain `f64`),
//! differentiated (`DiffScalar<f64>`), or twice-differentiated
//! (`DiffScalar<DiffScalar<f64>>`) without change.
//!
//! Supported primitives: `+`, `-`, `*`, `/`, `exp`, `ln`, `sin`, `cos`,
//! `sqrt`, `tanh`, `softplus` (plus `ln_1p` as a numerically stable
//! composition of `ln`). Anything else must be composed from these.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

/// Default step for central finite differences.
pub const FD_STEP: f64 = 1e-5;
/// Default relative tolerance for finite-difference gradient checks.
pub const FD_RTOL: f64 = 1e-5;
/// Absolute floor guarding the denominator of relative errors.
pub const FD_ABS_FLOOR: f64 = 1e-8;

/// Scalar type that all differentiable code in this crate is written
/// against.
///
/// Implemented by `f64` (plain evaluation) and by [`DiffScalar<T>`] for any
/// `T: Real` (forward-mode differentiation, nestable). Comparisons on dual
/// implementations look through to the underlying value so that branching
/// code takes the same path as the plain-`f64` computation.
pub trait Real:
    Copy
    + fmt::Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Lifts a plain constant into this scalar type (zero derivative).
    fn from_f64(c: f64) -> Self;
    /// The underlying primal value, discarding all derivative payload.
    fn value(self) -> f64;
    /// True iff the value and every derivative component are finite.
    fn is_all_finite(self) -> bool;

    /// `e^x`.
    fn exp(self) -> Self;
    /// Natural logarithm.
    fn ln(self) -> Self;
    /// `ln(1 + x)`, accurate near zero.
    fn ln_1p(self) -> Self;
    /// Sine.
    fn sin(self) -> Self;
    /// Cosine.
    fn cos(self) -> Self;
    /// Square root.
    fn sqrt(self) -> Self;
    /// Hyperbolic tangent.
    fn tanh(self) -> Self;

    /// Additive identity.
    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    /// Multiplicative identity.
    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// `ln(1 + e^x)`, computed in the overflow-free form
    /// `max(x, 0) + ln_1p(e^{-|x|})`. The branch point has matching value
    /// and derivative on both sides, so branching on the primal is safe.
    fn softplus(self) -> Self {
        if self.value() > 0.0 {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }

    /// Absolute value via a branch on the primal. The derivative at exactly
    /// zero is the left/right subgradient, not a true derivative; callers
    /// differentiating near kinks get what they deserve.
    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }
}

impl Real for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn is_all_finite(self) -> bool {
        self.is_finite()
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn ln_1p(self) -> Self {
        libm::log1p(self)
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
    fn abs(self) -> Self {
        libm::fabs(self)
    }
}

/// Forward-mode dual number: a value plus one tangent (directional
/// derivative) of the same carrier type.
///
/// With `T = f64` this is an ordinary first-order dual. With
/// `T = DiffScalar<f64>` both fields carry their own tangents, giving
/// second-order (nested) derivative flow.
#[derive(Clone, Copy, Debug)]
pub struct DiffScalar<T> {
    /// Primal value; arithmetic on it matches plain real arithmetic exactly.
    pub value: T,
    /// Derivative payload carried alongside the value.
    pub tangent: T,
}

impl<T: Real> DiffScalar<T> {
    /// A scalar with zero tangent (a constant with respect to the
    /// differentiation this dual level performs).
    pub fn constant(value: T) -> Self {
        Self { value, tangent: T::zero() }
    }

    /// A scalar with the given tangent seed.
    pub fn seeded(value: T, tangent: T) -> Self {
        Self { value, tangent }
    }
}

/// Equality looks only at the primal value: two duals with equal values and
/// different derivatives compare equal. This keeps branches (`max`,
/// `softplus`, argmax scans) on the same path the plain-`f64` computation
/// would take, which is what makes branch-based primitives differentiable.
impl<T: Real> PartialEq for DiffScalar<T> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

/// Ordering compares primal values only; see the `PartialEq` note.
impl<T: Real> PartialOrd for DiffScalar<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl<T: Real> Add for DiffScalar<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self { value: self.value + rhs.value, tangent: self.tangent + rhs.tangent }
    }
}

impl<T: Real> Sub for DiffScalar<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self { value: self.value - rhs.value, tangent: self.tangent - rhs.tangent }
    }
}

impl<T: Real> Mul for DiffScalar<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self {
            value: self.value * rhs.value,
            tangent: self.tangent * rhs.value + self.value * rhs.tangent,
        }
    }
}

impl<T: Real> Div for DiffScalar<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        Self { value: q, tangent: (self.tangent - q * rhs.tangent) / rhs.value }
    }
}

impl<T: Real> Neg for DiffScalar<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { value: -self.value, tangent: -self.tangent }
    }
}

impl<T: Real> Real for DiffScalar<T> {
    fn from_f64(c: f64) -> Self {
        Self::constant(T::from_f64(c))
    }
    fn value(self) -> f64 {
        self.value.value()
    }
    fn is_all_finite(self) -> bool {
        self.value.is_all_finite() && self.tangent.is_all_finite()
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        Self { value: e, tangent: self.tangent * e }
    }
    fn ln(self) -> Self {
        Self { value: self.value.ln(), tangent: self.tangent / self.value }
    }
    fn ln_1p(self) -> Self {
        Self { value: self.value.ln_1p(), tangent: self.tangent / (T::one() + self.value) }
    }
    fn sin(self) -> Self {
        Self { value: self.value.sin(), tangent: self.tangent * self.value.cos() }
    }
    fn cos(self) -> Self {
        Self { value: self.value.cos(), tangent: -(self.tangent * self.value.sin()) }
    }
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        Self { value: s, tangent: self.tangent / (T::from_f64(2.0) * s) }
    }
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        Self { value: t, tangent: self.tangent * (T::one() - t * t) }
    }
}

/// Errors from differentiation entry points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiffError {
    /// `gradient` was called with an empty input vector.
    EmptyInput,
    /// The function value became non-finite while seeding the named input
    /// component (innermost differentiation level).
    NonFiniteValue {
        /// Index of the seeded input component.
        component: usize,
    },
    /// The function value was finite but its derivative with respect to the
    /// named input component was not.
    NonFiniteDerivative {
        /// Index of the seeded input component.
        component: usize,
    },
}

impl fmt::Display for DiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffError::EmptyInput => write!(f, "gradient requires at least one input component"),
            DiffError::NonFiniteValue { component } => {
                write!(f, "non-finite function value while differentiating component {component}")
            }
            DiffError::NonFiniteDerivative { component } => {
                write!(f, "non-finite derivative for component {component}")
            }
        }
    }
}

impl core::error::Error for DiffError {}

/// Result alias for differentiation.
pub type DiffResult<T> = Result<T, DiffError>;

/// Gradient of `f` at `at` by forward-mode seeding, one pass per component.
///
/// `f` receives the inputs lifted to [`DiffScalar`] and may itself call
/// [`gradient`] at the next-deeper carrier type (see [`nested_gradient`]).
/// The closure is fallible so that inner differentiation errors propagate
/// instead of poisoning results with NaNs.
///
/// Deterministic; does not mutate `at`. Errors if any pass produces a
/// non-finite value or derivative, naming the seeded component.
pub fn gradient<T, F>(f: F, at: &[T]) -> DiffResult<Vec<T>>
where
    T: Real,
    F: Fn(&[DiffScalar<T>]) -> DiffResult<DiffScalar<T>>,
{
    value_and_gradient(f, at).map(|(_, g)| g)
}

/// Like [`gradient`] but also returns the function value (from the first
/// seeding pass; the value is identical across passes).
pub fn value_and_gradient<T, F>(f: F, at: &[T]) -> DiffResult<(T, Vec<T>)>
where
    T: Real,
    F: Fn(&[DiffScalar<T>]) -> DiffResult<DiffScalar<T>>,
{
    if at.is_empty() {
        return Err(DiffError::EmptyInput);
    }
    let mut args: Vec<DiffScalar<T>> = at.iter().map(|&v| DiffScalar::constant(v)).collect();
    let mut grad = Vec::with_capacity(at.len());
    let mut value = T::zero();
    for i in 0..at.len() {
        args[i].tangent = T::one();
        let out = f(&args)?;
        args[i].tangent = T::zero();
        if !out.value.is_all_finite() {
            return Err(DiffError::NonFiniteValue { component: i });
        }
        if !out.tangent.is_all_finite() {
            return Err(DiffError::NonFiniteDerivative { component: i });
        }
        if i == 0 {
            value = out.value;
        }
        grad.push(out.tangent);
    }
    Ok((value, grad))
}

/// Gradient of a function whose body itself calls [`gradient`].
///
/// With nested duals the inner call simply runs at carrier type
/// `DiffScalar<T>`, so its result still carries the outer tangent and the
/// returned gradient is the total derivative, second-order term included.
/// This is [`gradient`] under a name that documents the contract: nesting
/// depth is encoded in the scalar *type*, so exceeding the supported depth
/// is a compile-time type mismatch — silent truncation to first order
/// cannot happen at runtime.
///
/// Captured outer variables must be lifted into the inner carrier with
/// [`DiffScalar::constant`] so their outer tangents flow through the inner
/// computation.
pub fn nested_gradient<T, F>(f: F, at: &[T]) -> DiffResult<Vec<T>>
where
    T: Real,
    F: Fn(&[DiffScalar<T>]) -> DiffResult<DiffScalar<T>>,
{
    gradient(f, at)
}

/// Dense Hessian of `f` at `at` via nested forward passes: entry `(i, j)`
/// is `∂²f/∂at_i ∂at_j`. The closure runs at doubly-dual carrier type.
/// Cost is `n(n+1)` function evaluations — intended for the tiny (n ≤ 8)
/// parameter vectors this crate optimizes with Newton steps.
pub fn hessian<T, F>(f: F, at: &[T]) -> DiffResult<Vec<Vec<T>>>
where
    T: Real,
    F: Fn(&[DiffScalar<DiffScalar<T>>]) -> DiffResult<DiffScalar<DiffScalar<T>>>,
{
    let n = at.len();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        // Row i is the (outer) gradient of the inner derivative ∂f/∂at_i.
        let row = gradient(
            |outer: &[DiffScalar<T>]| {
                let lifted: Vec<DiffScalar<DiffScalar<T>>> = outer
                    .iter()
                    .enumerate()
                    .map(|(k, &o)| DiffScalar {
                        value: o,
                        tangent: if k == i { DiffScalar::one() } else { DiffScalar::zero() },
                    })
                    .collect();
                f(&lifted).map(|out| out.tangent)
            },
            at,
        )?;
        rows.push(row);
    }
    Ok(rows)
}

/// A scalar function evaluable at any [`Real`] carrier.
///
/// This is the bridge [`check_gradient`] needs: the same definition is
/// evaluated on plain `f64` for finite differences and on duals for the
/// analytic gradient. Closures cannot implement it (it has a generic
/// method), so checkable functions are small named structs.
pub trait ScalarFn {
    /// Evaluates the function at `v`.
    fn eval<R: Real>(&self, v: &[R]) -> R;
}

/// One row of a [`GradientCheck`] report.
#[derive(Clone, Copy, Debug)]
pub struct GradientCheckRow {
    /// Input component index.
    pub component: usize,
    /// Forward-mode derivative.
    pub analytic: f64,
    /// Central finite-difference estimate.
    pub numeric: f64,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub rel_error: f64,
}

/// Report from [`check_gradient`]. Failures are reported here, never
/// thrown: a non-finite analytic gradient shows up as NaN analytic entries
/// and an infinite `max_rel_error`.
#[derive(Clone, Debug)]
pub struct GradientCheck {
    /// Per-component comparison table.
    pub rows: Vec<GradientCheckRow>,
    /// Largest relative error across components (infinite if any entry is
    /// non-finite).
    pub max_rel_error: f64,
    /// True iff every component's relative error is finite and within
    /// tolerance.
    pub pass: bool,
    /// Tolerance the check was run with.
    pub rel_tolerance: f64,
    /// Finite-difference step the check was run with.
    pub fd_step: f64,
}

/// Compares the forward-mode gradient of `f` against central finite
/// differences `(f(x + h·eᵢ) - f(x - h·eᵢ)) / 2h`.
///
/// Passes iff the maximum relative error (denominator guarded by the
/// absolute floor [`FD_ABS_FLOOR`]) is at most `rel_tolerance`.
pub fn check_gradient<S>(f: &S, at: &[f64], rel_tolerance: f64, fd_step: f64) -> GradientCheck
where
    S: ScalarFn + ?Sized,
{
    let analytic: Vec<f64> = match gradient(|v| Ok(f.eval(v)), at) {
        Ok(g) => g,
        Err(_) => alloc::vec![f64::NAN; at.len()],
    };
    let mut probe: Vec<f64> = at.to_vec();
    let mut rows = Vec::with_capacity(at.len());
    let mut max_rel_error: f64 = 0.0;
    for i in 0..at.len() {
        let x = at[i];
        probe[i] = x + fd_step;
        let hi = f.eval(&probe);
        probe[i] = x - fd_step;
        let lo = f.eval(&probe);
        probe[i] = x;
        let numeric = (hi - lo) / (2.0 * fd_step);
        let a = analytic[i];
        let rel_error = if a.is_finite() && numeric.is_finite() {
            let denom = Real::abs(a).max(Real::abs(numeric)).max(FD_ABS_FLOOR);
            Real::abs(a - numeric) / denom
        } else {
            f64::INFINITY
        };
        max_rel_error = if rel_error > max_rel_error { rel_error } else { max_rel_error };
        rows.push(GradientCheckRow { component: i, analytic: a, numeric, rel_error });
    }
    let pass = !rows.is_empty() && max_rel_error.is_finite() && max_rel_error <= rel_tolerance;
    GradientCheck { rows, max_rel_error, pass, rel_tolerance, fd_step }
}

/// [`check_gradient`] with the crate defaults ([`FD_RTOL`], [`FD_STEP`]).
pub fn check_gradient_default<S>(f: &S, at: &[f64]) -> GradientCheck
where
    S: ScalarFn + ?Sized,
{
    check_gradient(f, at, FD_RTOL, FD_STEP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    type D = DiffScalar<f64>;
    type DD = DiffScalar<DiffScalar<f64>>;

    #[test]
    fn gradient_of_square_at_three() {
        let g = gradient(|v: &[D]| Ok(v[0] * v[0]), &[3.0]).unwrap();
        assert_eq!(g, alloc::vec![6.0]);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = gradient(|_v: &[D]| Ok(D::from_f64(2.5)), &[1.7]).unwrap();
        assert_eq!(g, alloc::vec![0.0]);
    }

    #[test]
    fn gradient_of_sin_at_zero() {
        let g = gradient(|v: &[D]| Ok(v[0].sin()), &[0.0]).unwrap();
        assert_eq!(g, alloc::vec![1.0]);
    }

    #[test]
    fn gradient_does_not_mutate_input() {
        let at = [1.0, 2.0];
        let _ = gradient(|v: &[D]| Ok(v[0] * v[1]), &at).unwrap();
        assert_eq!(at, [1.0, 2.0]);
    }

    #[test]
    fn gradient_rejects_empty_input() {
        let err = gradient(|_v: &[D]| Ok(D::from_f64(0.0)), &[]).unwrap_err();
        assert_eq!(err, DiffError::EmptyInput);
    }

    #[test]
    fn gradient_reports_nonfinite_value_with_component() {
        // ln of a negative argument: NaN value while seeding component 1.
        let err = gradient(|v: &[D]| Ok(v[0] + v[1].ln()), &[1.0, -2.0]).unwrap_err();
        assert_eq!(err, DiffError::NonFiniteValue { component: 0 });
    }

    #[test]
    fn gradient_reports_nonfinite_derivative_with_component() {
        // sqrt at 0 has a finite value but an infinite derivative.
        let err = gradient(|v: &[D]| Ok(v[0].sqrt()), &[0.0]).unwrap_err();
        assert_eq!(err, DiffError::NonFiniteDerivative { component: 0 });
        // In a joint expression the chain rule touches every term on every
        // pass (0/0 tangents), so detection happens on the first pass.
        let err = gradient(|v: &[D]| Ok(v[0] + v[1].sqrt()), &[1.0, 0.0]).unwrap_err();
        assert_eq!(err, DiffError::NonFiniteDerivative { component: 0 });
    }

    #[test]
    fn value_and_gradient_agree_with_gradient() {
        let f = |v: &[D]| Ok(v[0] * v[0] * v[1] + v[1].exp());
        let at = [1.5, -0.25];
        let (val, grad) = value_and_gradient(f, &at).unwrap();
        assert_relative_eq!(val, 1.5 * 1.5 * -0.25 + (-0.25f64).exp(), epsilon = 1e-15);
        assert_eq!(grad, gradient(f, &at).unwrap());
    }

    // The three nesting contract cases: an inner d/dy inside an outer d/dx.

    #[test]
    fn nested_inner_gradient_of_product() {
        // f(x) = d/dy[x*y] at y=1, which is x; so df/dx at x=5 is 1.
        let g = nested_gradient(
            |xs: &[D]| {
                let x = xs[0];
                let inner = gradient(
                    |ys: &[DD]| Ok(DiffScalar::constant(x) * ys[0]),
                    &[D::from_f64(1.0)],
                )?;
                Ok(inner[0])
            },
            &[5.0],
        )
        .unwrap();
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nested_scaling_by_inner_gradient_value() {
        // f(x) = x * d/dy[y^2] at y=3 = 6x; df/dx at x=2 is 6.
        let g = nested_gradient(
            |xs: &[D]| {
                let inner = gradient(|ys: &[DD]| Ok(ys[0] * ys[0]), &[D::from_f64(3.0)])?;
                Ok(xs[0] * inner[0])
            },
            &[2.0],
        )
        .unwrap();
        assert_relative_eq!(g[0], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn nested_gradient_through_trig() {
        // f(x) = d/dy[sin(x*y)] at y=0 = x*cos(0) = x; df/dx at 0.4 is 1.
        let g = nested_gradient(
            |xs: &[D]| {
                let x = xs[0];
                let inner = gradient(
                    |ys: &[DD]| Ok((DiffScalar::constant(x) * ys[0]).sin()),
                    &[D::from_f64(0.0)],
                )?;
                Ok(inner[0])
            },
            &[0.4],
        )
        .unwrap();
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixed_partial_of_x2_y3() {
        // d/dx[d/dy x^2 y^3] = 6 x y^2 = 12 at (2, 1).
        let g = nested_gradient(
            |xs: &[D]| {
                let x = xs[0];
                let inner = gradient(
                    |ys: &[DD]| {
                        let xl = DiffScalar::constant(x);
                        Ok(xl * xl * ys[0] * ys[0] * ys[0])
                    },
                    &[D::from_f64(1.0)],
                )?;
                Ok(inner[0])
            },
            &[2.0],
        )
        .unwrap();
        assert_relative_eq!(g[0], 12.0, epsilon = 1e-10);
    }

    #[test]
    fn hessian_of_quadratic_is_exact() {
        // f = x^2 y^3: H = [[2y^3, 6xy^2], [6xy^2, 6x^2 y]] at (2, 1).
        let h = hessian(
            |v: &[DD]| Ok(v[0] * v[0] * v[1] * v[1] * v[1]),
            &[2.0, 1.0],
        )
        .unwrap();
        assert_relative_eq!(h[0][0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(h[0][1], 12.0, epsilon = 1e-10);
        assert_relative_eq!(h[1][0], 12.0, epsilon = 1e-10);
        assert_relative_eq!(h[1][1], 24.0, epsilon = 1e-10);
    }

    #[test]
    fn comparisons_ignore_tangents() {
        let a = D::seeded(1.0, 5.0);
        let b = D::seeded(1.0, -3.0);
        assert_eq!(a, b);
        assert!(D::seeded(0.0, 9.0) < D::seeded(1.0, 0.0));
    }

    struct ExpFn;
    impl ScalarFn for ExpFn {
        fn eval<R: Real>(&self, v: &[R]) -> R {
            v[0].exp()
        }
    }

    #[test]
    fn check_gradient_passes_for_exp() {
        let report = check_gradient(&ExpFn, &[1.0], 1e-5, 1e-5);
        assert!(report.pass, "max rel error {}", report.max_rel_error);
        assert_eq!(report.rows.len(), 1);
    }

    struct AbsViaSqrt;
    impl ScalarFn for AbsViaSqrt {
        fn eval<R: Real>(&self, v: &[R]) -> R {
            (v[0] * v[0]).sqrt()
        }
    }

    #[test]
    fn check_gradient_reports_kink_at_zero() {
        // |x| composed as sqrt(x^2): the analytic derivative at 0 is 0/0.
        let report = check_gradient(&AbsViaSqrt, &[0.0], 1e-5, 1e-5);
        assert!(!report.pass);
        assert!(!report.max_rel_error.is_finite() || report.max_rel_error > 1e-5);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_relative_eq!(Real::softplus(800.0), 800.0, epsilon = 1e-12);
        assert_eq!(Real::softplus(-800.0), 0.0);
        // Derivative is the logistic sigmoid.
        let g = gradient(|v: &[D]| Ok(v[0].softplus()), &[0.5]).unwrap();
        assert_relative_eq!(g[0], 1.0 / (1.0 + (-0.5f64).exp()), epsilon = 1e-12);
    }

    #[test]
    fn tanh_derivative_at_zero_is_one() {
        let g = gradient(|v: &[D]| Ok(v[0].tanh()), &[0.0]).unwrap();
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn division_quotient_rule() {
        // d/dx [x / (1 + x^2)] = (1 - x^2) / (1 + x^2)^2.
        let x = 0.7;
        let g = gradient(
            |v: &[D]| Ok(v[0] / (D::one() + v[0] * v[0])),
            &[x],
        )
        .unwrap();
        let expected = (1.0 - x * x) / (1.0 + x * x).powi(2);
        assert_relative_eq!(g[0], expected, epsilon = 1e-14);
    }
}
