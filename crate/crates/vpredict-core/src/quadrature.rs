//! Gaussian quadrature rules built without a linear-algebra dependency.
//!
//! Both rules here come from the Golub–Welsch construction: the nodes of an
//! `n`-point rule are the eigenvalues of the symmetric tridiagonal Jacobi
//! matrix of the orthogonal-polynomial recurrence (zero diagonal for the
//! symmetric measures used here, off-diagonals `b_k`), found by
//! Sturm-sequence bisection; the weights come from the Christoffel
//! function, `w_i = mu0 / sum_k p̃_k(z_i)²`, where `p̃_k` are the
//! orthonormal polynomials and `mu0` is the measure's total mass. Rules
//! are symmetrized so `z_i = -z_{n-1-i}` holds exactly.
//!
//! * [`GaussHermite`] — probabilists' convention: `sum_i w_i f(z_i) ≈
//!   E[f(Z)]` for `Z ~ N(0,1)`; weights sum to 1; `b_k = sqrt(k)`. Used for
//!   the variational expected log-likelihood.
//! * [`GaussLegendre`] — `sum_i w_i f(z_i) ≈ ∫_{-1}^{1} f`; weights sum to
//!   2; `b_k = k / sqrt(4k² - 1)`. Used as an *independent* rule when
//!   cross-checking the midpoint-rule oracle.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::diff::Real;

/// Errors from quadrature-rule construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureError {
    /// A rule must have at least one node.
    ZeroOrder,
}

impl fmt::Display for QuadratureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadratureError::ZeroOrder => write!(f, "quadrature order must be at least 1"),
        }
    }
}

impl core::error::Error for QuadratureError {}

/// Nodes and weights of an `n`-point rule for a symmetric measure with
/// recurrence off-diagonals `b(k)`, squared: `b_sq(k) = b_k²`, total
/// measure mass `mu0`, and spectrum radius bound `radius`.
fn gauss_rule(n: usize, b_sq: &dyn Fn(usize) -> f64, mu0: f64, radius: f64) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.0], vec![mu0]);
    }
    let mut nodes: Vec<f64> = (0..n).map(|j| bisect_eigenvalue(n, b_sq, j, radius)).collect();
    // The spectrum is exactly antisymmetric; average mirrored estimates to
    // remove the last ulp of bisection asymmetry.
    for i in 0..n / 2 {
        let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -m;
        nodes[n - 1 - i] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let mut weights: Vec<f64> = nodes.iter().map(|&z| christoffel_weight(n, b_sq, mu0, z)).collect();
    for i in 0..n / 2 {
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    // Normalize away the residual O(ulp) defect in the total mass.
    let total: f64 = crate::numerics::kahan_sum(&weights);
    for w in &mut weights {
        *w *= mu0 / total;
    }
    (nodes, weights)
}

/// Number of eigenvalues of the Jacobi matrix strictly below `lambda`, via
/// the Sturm sequence of leading-principal-minor pivots.
fn sturm_count(n: usize, b_sq: &dyn Fn(usize) -> f64, lambda: f64) -> usize {
    let mut count = 0;
    let mut d = -lambda; // diagonal is zero for symmetric measures
    if d < 0.0 {
        count += 1;
    }
    for k in 1..n {
        let mut denom = d;
        if denom == 0.0 {
            denom = 1e-300; // standard guard against exact-zero pivots
        }
        d = -lambda - b_sq(k) / denom;
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `j`-th smallest eigenvalue by bisection on the Sturm count.
fn bisect_eigenvalue(n: usize, b_sq: &dyn Fn(usize) -> f64, j: usize, radius: f64) -> f64 {
    let (mut lo, mut hi) = (-radius, radius);
    // 100 halvings land far below one ulp of the root.
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if sturm_count(n, b_sq, mid) <= j {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gauss weight at node `z` via the Christoffel function. Uses the
/// orthonormal three-term recurrence `b_{k+1} p̃_{k+1} = z p̃_k - b_k p̃_{k-1}`
/// started from `p̃_0 = 1/sqrt(mu0)`.
fn christoffel_weight(n: usize, b_sq: &dyn Fn(usize) -> f64, mu0: f64, z: f64) -> f64 {
    let mut p_prev = 0.0f64;
    let mut p = 1.0 / libm::sqrt(mu0);
    let mut sum_sq = p * p;
    for k in 1..n {
        let p_next = (z * p - libm::sqrt(b_sq(k - 1).max(0.0)) * p_prev) / libm::sqrt(b_sq(k));
        p_prev = p;
        p = p_next;
        sum_sq += p * p;
    }
    1.0 / sum_sq
}

/// A Gauss–Hermite rule: nodes and weights for `E[f(Z)]`, `Z ~ N(0,1)`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds the `order`-point rule. Weights sum to 1 (the measure is the
    /// normalized Gaussian); nodes ascend and are antisymmetric about zero.
    /// Exact for polynomials of degree `2·order - 1`.
    pub fn new(order: usize) -> Result<Self, QuadratureError> {
        if order == 0 {
            return Err(QuadratureError::ZeroOrder);
        }
        let radius = 2.0 * libm::sqrt(order as f64) + 1.0;
        let (nodes, weights) = gauss_rule(order, &|k| k as f64, 1.0, radius);
        Ok(Self { nodes, weights })
    }

    /// Number of nodes.
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes in ascending order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights matching [`GaussHermite::nodes`]; they sum to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(Z)]` under the rule, at any [`Real`] carrier (nodes and weights
    /// enter as constants, so the result is differentiable through `f`).
    pub fn expect<R: Real, F: FnMut(R) -> R>(&self, mut f: F) -> R {
        let mut acc = R::zero();
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + R::from_f64(w) * f(R::from_f64(z));
        }
        acc
    }
}

/// A Gauss–Legendre rule on `[-1, 1]`: `sum_i w_i f(z_i) ≈ ∫_{-1}^{1} f`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `order`-point rule; exact for polynomials of degree
    /// `2·order - 1`; weights sum to 2.
    pub fn new(order: usize) -> Result<Self, QuadratureError> {
        if order == 0 {
            return Err(QuadratureError::ZeroOrder);
        }
        let b_sq = |k: usize| {
            let k = k as f64;
            k * k / (4.0 * k * k - 1.0)
        };
        let (nodes, weights) = gauss_rule(order, &b_sq, 2.0, 1.0 + 1e-12);
        Ok(Self { nodes, weights })
    }

    /// Nodes in ascending order on `[-1, 1]`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights matching [`GaussLegendre::nodes`]; they sum to 2.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_a^b f` by affine transplantation of the rule onto `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = crate::numerics::KahanSum::new();
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * z));
        }
        half * acc.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_order_is_rejected() {
        assert_eq!(GaussHermite::new(0).unwrap_err(), QuadratureError::ZeroOrder);
        assert_eq!(GaussLegendre::new(0).unwrap_err(), QuadratureError::ZeroOrder);
    }

    #[test]
    fn hermite_order_one_is_the_mean() {
        let gh = GaussHermite::new(1).unwrap();
        assert_eq!(gh.nodes(), &[0.0]);
        assert_eq!(gh.weights(), &[1.0]);
    }

    #[test]
    fn hermite_order_two_matches_known_rule() {
        let gh = GaussHermite::new(2).unwrap();
        assert_relative_eq!(gh.nodes()[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(gh.nodes()[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(gh.weights()[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn hermite_order_three_matches_known_rule() {
        let gh = GaussHermite::new(3).unwrap();
        let s3 = 3.0f64.sqrt();
        assert_relative_eq!(gh.nodes()[0], -s3, epsilon = 1e-13);
        assert_relative_eq!(gh.nodes()[1], 0.0, epsilon = 1e-13);
        assert_relative_eq!(gh.nodes()[2], s3, epsilon = 1e-13);
        assert_relative_eq!(gh.weights()[1], 2.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(gh.weights()[0], 1.0 / 6.0, epsilon = 1e-13);
    }

    #[test]
    fn hermite_weights_sum_to_one_and_nodes_are_antisymmetric() {
        for order in [1, 2, 3, 5, 7, 8, 16, 31, 32, 64] {
            let gh = GaussHermite::new(order).unwrap();
            let total: f64 = gh.weights().iter().sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-13);
            for i in 0..order {
                assert_eq!(gh.nodes()[i], -gh.nodes()[order - 1 - i], "order {order} node {i}");
            }
        }
    }

    #[test]
    fn hermite_gaussian_moments_are_exact() {
        // E[Z^2] = 1, E[Z^4] = 3, E[Z^6] = 15, E[odd] = 0.
        let gh = GaussHermite::new(7).unwrap();
        let moment = |p: i32| -> f64 {
            gh.nodes().iter().zip(gh.weights()).map(|(&z, &w)| w * z.powi(p)).sum()
        };
        assert_relative_eq!(moment(2), 1.0, epsilon = 1e-12);
        assert_relative_eq!(moment(4), 3.0, epsilon = 1e-12);
        assert_relative_eq!(moment(6), 15.0, epsilon = 1e-12);
        assert!(moment(1).abs() < 1e-14);
        assert!(moment(3).abs() < 1e-13);
    }

    #[test]
    fn hermite_expectation_of_sin_matches_closed_form() {
        // E[sin(aZ + b)] = sin(b) * exp(-a^2 / 2).
        let (a, b) = (1.3, 0.4);
        let gh = GaussHermite::new(24).unwrap();
        let got: f64 = gh.expect(|z: f64| (a * z + b).sin());
        assert_relative_eq!(got, b.sin() * (-0.5 * a * a).exp(), epsilon = 1e-12);
    }

    #[test]
    fn hermite_expectation_of_exp_converges_with_order() {
        // E[exp(Z)] = exp(1/2); order 7 is close, order 16 at machine level.
        let exact = 0.5f64.exp();
        let at7: f64 = GaussHermite::new(7).unwrap().expect(|z: f64| z.exp());
        let at16: f64 = GaussHermite::new(16).unwrap().expect(|z: f64| z.exp());
        assert_relative_eq!(at7, exact, epsilon = 1e-6);
        assert_relative_eq!(at16, exact, epsilon = 1e-13);
    }

    #[test]
    fn hermite_large_order_stays_stable() {
        let gh = GaussHermite::new(64).unwrap();
        let total: f64 = gh.weights().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        let m2: f64 = gh.nodes().iter().zip(gh.weights()).map(|(&z, &w)| w * z * z).sum();
        assert_relative_eq!(m2, 1.0, epsilon = 1e-11);
        assert!(gh.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn hermite_expect_is_differentiable_through_the_integrand() {
        use crate::diff::{gradient, DiffScalar};
        // E[sin(aZ + b)] = sin(b) e^{-a²/2}; d/da = -a sin(b) e^{-a²/2}.
        let (a, b) = (0.9, 0.4);
        let gh = GaussHermite::new(24).unwrap();
        let g = gradient(
            |v: &[DiffScalar<f64>]| Ok(gh.expect(|z| (v[0] * z + DiffScalar::from_f64(b)).sin())),
            &[a],
        )
        .unwrap();
        let expected = -a * b.sin() * (-0.5 * a * a).exp();
        assert_relative_eq!(g[0], expected, epsilon = 1e-10);
    }

    #[test]
    fn legendre_low_orders_match_known_rules() {
        let g1 = GaussLegendre::new(1).unwrap();
        assert_eq!(g1.nodes(), &[0.0]);
        assert_eq!(g1.weights(), &[2.0]);
        let g2 = GaussLegendre::new(2).unwrap();
        let r = 1.0 / 3.0f64.sqrt();
        assert_relative_eq!(g2.nodes()[1], r, epsilon = 1e-14);
        assert_relative_eq!(g2.weights()[0], 1.0, epsilon = 1e-14);
        let g3 = GaussLegendre::new(3).unwrap();
        assert_relative_eq!(g3.nodes()[2], (3.0f64 / 5.0).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(g3.weights()[1], 8.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(g3.weights()[0], 5.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        // ∫_{-1}^{1} x^4 dx = 2/5 needs order ≥ 3.
        let g = GaussLegendre::new(3).unwrap();
        let got = g.integrate(-1.0, 1.0, |x| x.powi(4));
        assert_relative_eq!(got, 0.4, epsilon = 1e-14);
    }

    #[test]
    fn legendre_integrates_gaussian_density() {
        // ∫_{-6σ}^{6σ} N(x; 1, 4) dx ≈ 1 to ~1e-9 truncation.
        let g = GaussLegendre::new(48).unwrap();
        let (mean, var) = (1.0, 4.0);
        let got = g.integrate(mean - 6.0 * var.sqrt(), mean + 6.0 * var.sqrt(), |x| {
            (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * core::f64::consts::PI * var).sqrt()
        });
        assert_relative_eq!(got, 1.0, epsilon = 1e-8);
    }
}
