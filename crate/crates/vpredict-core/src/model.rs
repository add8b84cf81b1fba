//! The sinusoidal generative model: prior, likelihood, and seeded dataset
//! synthesis.
//!
//! The benchmark's data-generating process is
//!
//! ```text
//! x ~ U(0, 1),    y | x, θ ~ N(μ(x; θ), 1),    μ(x; θ) = sin(2π·f·x + φ),
//! ```
//!
//! with parameters `θ = (log f, φ)` under independent Gaussian priors
//! (default `N(0, 16)`, i.e. standard deviation 4, on each coordinate).
//! Only two parameters and unit observation noise — deliberately small, so
//! the exact oracle in [`crate::exact`] can integrate everything by dense
//! quadrature.
//!
//! All density functions here are generic over [`Real`], so the same
//! definitions serve plain evaluation, training gradients, and nested
//! second-order derivatives.

use alloc::vec::Vec;
use core::fmt;

use crate::diff::Real;
use crate::numerics::gaussian_log_density;
use crate::rng;

/// Sinusoid parameters `θ = (log f, φ)`.
///
/// The frequency is carried in log space so that the prior is Gaussian in
/// the coordinates the methods actually optimize, and `f = exp(log_f) > 0`
/// by construction. Generic over the scalar carrier for differentiability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinusoidParams<R = f64> {
    /// Natural log of the frequency `f`.
    pub log_f: R,
    /// Phase `φ` in radians.
    pub phi: R,
}

impl<R: Real> SinusoidParams<R> {
    /// Bundles the two coordinates.
    pub fn new(log_f: R, phi: R) -> Self {
        Self { log_f, phi }
    }

    /// The frequency `f = exp(log_f)`.
    pub fn frequency(&self) -> R {
        self.log_f.exp()
    }
}

impl SinusoidParams<f64> {
    /// Lifts plain parameters into any [`Real`] carrier as constants.
    pub fn lift<R: Real>(&self) -> SinusoidParams<R> {
        SinusoidParams { log_f: R::from_f64(self.log_f), phi: R::from_f64(self.phi) }
    }
}

/// Independent Gaussian priors on `log f` and `φ` (mean and *variance* per
/// dimension). `N(0, 16)` means variance 16, standard deviation 4.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorSpec {
    /// Prior means for `(log f, φ)`.
    pub mean: [f64; 2],
    /// Prior variances for `(log f, φ)`; strictly positive.
    pub variance: [f64; 2],
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { mean: [0.0, 0.0], variance: [16.0, 16.0] }
    }
}

impl PriorSpec {
    /// Validated constructor: variances must be finite and positive, means
    /// finite.
    pub fn new(mean: [f64; 2], variance: [f64; 2]) -> Result<Self, ModelError> {
        if !mean.iter().all(|m| m.is_finite()) || !variance.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(ModelError::InvalidPrior { mean, variance });
        }
        Ok(Self { mean, variance })
    }

    /// Per-dimension standard deviations.
    pub fn sigma(&self) -> [f64; 2] {
        [libm::sqrt(self.variance[0]), libm::sqrt(self.variance[1])]
    }
}

/// An immutable observed dataset `D = {(x_i, y_i)}`.
///
/// Datasets made by [`generate_dataset`] carry their generating triple
/// `(seed, n, true_params)` so they can be regenerated bit-exactly;
/// hand-assembled datasets (including the empty dataset the oracle uses
/// for prior checks) have no such provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    points: Vec<(f64, f64)>,
    seed: u64,
    true_params: Option<SinusoidParams>,
}

impl Dataset {
    /// Wraps existing points. Enforces `x ∈ [0, 1]` and finite values.
    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        for (index, &(x, y)) in points.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) || !x.is_finite() || !y.is_finite() {
                return Err(ModelError::InvalidPoint { index, x, y });
            }
        }
        Ok(Self { points, seed: 0, true_params: None })
    }

    /// Reassembles a generated dataset from its parts (e.g. when loading a
    /// stored file). Point validation as in [`Dataset::from_points`].
    pub fn from_parts(
        seed: u64,
        true_params: SinusoidParams,
        points: Vec<(f64, f64)>,
    ) -> Result<Self, ModelError> {
        let mut d = Self::from_points(points)?;
        d.seed = seed;
        d.true_params = Some(true_params);
        Ok(d)
    }

    /// The empty dataset (used by the oracle: `p(∅) = 1`, posterior =
    /// prior).
    pub fn empty() -> Self {
        Self { points: Vec::new(), seed: 0, true_params: None }
    }

    /// Observed points in order.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Number of points.
    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// True iff the dataset has no points.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Seed the dataset was generated from (0 for hand-assembled data).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generating parameters, if this dataset was synthesized.
    pub fn true_params(&self) -> Option<SinusoidParams> {
        self.true_params
    }

    /// Internal: append a point without the `x ∈ [0,1]` check. Used by the
    /// oracle when augmenting with hypothetical query points, which are
    /// allowed anywhere `mean_function` is defined.
    pub(crate) fn with_extra_point(&self, x: f64, y: f64) -> Self {
        let mut points = self.points.clone();
        points.push((x, y));
        Self { points, seed: self.seed, true_params: self.true_params }
    }
}

/// Errors from model construction and dataset synthesis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelError {
    /// Generation with `n = 0` is disallowed (the oracle handles empty
    /// data via [`Dataset::empty`], not via synthesis).
    EmptyGeneration,
    /// A point violated `x ∈ [0, 1]` or finiteness.
    InvalidPoint {
        /// Index of the offending point.
        index: usize,
        /// Offending abscissa.
        x: f64,
        /// Offending ordinate.
        y: f64,
    },
    /// Prior hyperparameters were non-finite or non-positive.
    InvalidPrior {
        /// Offered means.
        mean: [f64; 2],
        /// Offered variances.
        variance: [f64; 2],
    },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::EmptyGeneration => {
                write!(f, "dataset generation requires n >= 1 (use Dataset::empty for no data)")
            }
            ModelError::InvalidPoint { index, x, y } => {
                write!(f, "point {index} = ({x}, {y}) is outside the model domain (x in [0,1], finite y)")
            }
            ModelError::InvalidPrior { mean, variance } => {
                write!(f, "invalid prior: mean {mean:?}, variance {variance:?} (variances must be finite and > 0)")
            }
        }
    }
}

impl core::error::Error for ModelError {}

/// The regression mean `μ(x; θ) = sin(2π·exp(log_f)·x + φ)`; always in
/// `[-1, 1]`.
pub fn mean_function<R: Real>(x: R, params: &SinusoidParams<R>) -> R {
    let two_pi = R::from_f64(core::f64::consts::TAU);
    (two_pi * params.frequency() * x + params.phi).sin()
}

/// Log-likelihood of one observation under unit observation noise:
/// `-½(y - μ(x;θ))² - ½·log(2π)` nats. Maximized (at `-½·log(2π)`) when
/// the residual is zero.
pub fn log_likelihood_point<R: Real>(y: R, x: R, params: &SinusoidParams<R>) -> R {
    gaussian_log_density(y, mean_function(x, params), R::one())
}

/// Log-likelihood of a whole dataset: the sum of per-point terms (zero for
/// the empty dataset).
pub fn log_likelihood_dataset<R: Real>(dataset: &Dataset, params: &SinusoidParams<R>) -> R {
    let mut total = R::zero();
    for &(x, y) in dataset.points() {
        total = total + log_likelihood_point(R::from_f64(y), R::from_f64(x), params);
    }
    total
}

/// Log prior density: the sum of two independent Gaussian log-densities.
pub fn log_prior<R: Real>(params: &SinusoidParams<R>, prior: &PriorSpec) -> R {
    gaussian_log_density(params.log_f, R::from_f64(prior.mean[0]), R::from_f64(prior.variance[0]))
        + gaussian_log_density(params.phi, R::from_f64(prior.mean[1]), R::from_f64(prior.variance[1]))
}

/// Unnormalized log posterior `log p(D|θ) + log p(θ)` — the objective the
/// oracle integrates and the point methods climb.
pub fn log_joint_density<R: Real>(dataset: &Dataset, prior: &PriorSpec, params: &SinusoidParams<R>) -> R {
    log_likelihood_dataset(dataset, params) + log_prior(params, prior)
}

/// Draws `n ≥ 1` points from the generative process: `x_i ~ U(0,1)`,
/// `y_i = μ(x_i; true_params) + ε_i`, `ε_i ~ N(0,1)`, consuming one
/// `(x, ε)` pair per point from the dataset stream for `seed`. Same inputs
/// produce bit-identical datasets.
pub fn generate_dataset(seed: u64, n: usize, true_params: SinusoidParams) -> Result<Dataset, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptyGeneration);
    }
    let mut stream = rng::stream(seed, rng::purpose::DATASET);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng::uniform_f64(&mut stream);
        let eps = rng::standard_normal(&mut stream);
        let y = mean_function(x, &true_params) + eps;
        points.push((x, y));
    }
    Ok(Dataset { points, seed, true_params: Some(true_params) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

    #[test]
    fn mean_function_closed_forms() {
        let p = SinusoidParams::new(0.0, 0.0);
        assert_eq!(mean_function(0.0, &p), 0.0);
        assert_relative_eq!(mean_function(0.25, &p), 1.0, epsilon = 1e-15);
        let p1 = SinusoidParams::new(0.0, 1.0);
        assert_relative_eq!(mean_function(0.0, &p1), 1.0f64.sin(), epsilon = 1e-15);
    }

    #[test]
    fn mean_function_is_periodic_in_phi() {
        let tau = core::f64::consts::TAU;
        for i in 0..20 {
            let x = i as f64 / 19.0;
            let a = mean_function(x, &SinusoidParams::new(0.3, 0.7));
            let b = mean_function(x, &SinusoidParams::new(0.3, 0.7 + tau));
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_likelihood_point_residual_ladder() {
        let p = SinusoidParams::new(0.0, 0.0);
        let mu = mean_function(0.1, &p);
        assert_relative_eq!(log_likelihood_point(mu, 0.1, &p), -HALF_LN_2PI, epsilon = 1e-12);
        assert_relative_eq!(log_likelihood_point(mu + 1.0, 0.1, &p), -0.5 - HALF_LN_2PI, epsilon = 1e-12);
        assert_relative_eq!(log_likelihood_point(mu - 2.0, 0.1, &p), -2.0 - HALF_LN_2PI, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_is_bounded_by_zero_residual() {
        let p = SinusoidParams::new(0.4, -1.2);
        for i in 0..50 {
            let x = i as f64 / 49.0;
            let y = -3.0 + 6.0 * ((i * 7) % 50) as f64 / 49.0;
            assert!(log_likelihood_point(y, x, &p) <= -HALF_LN_2PI + 1e-15);
        }
    }

    #[test]
    fn log_prior_closed_forms() {
        let prior = PriorSpec::default();
        // At the mean: -log(2π·16) for the two dimensions combined.
        let at_mean = log_prior(&SinusoidParams::new(0.0, 0.0), &prior);
        assert_relative_eq!(at_mean, -(2.0 * core::f64::consts::PI * 16.0).ln(), epsilon = 1e-12);
        assert_relative_eq!(at_mean, -4.610_466, epsilon = 1e-6);
        // One-sigma displacement in one coordinate costs exactly 1/2.
        let at_sigma = log_prior(&SinusoidParams::new(4.0, 0.0), &prior);
        assert_relative_eq!(at_sigma, at_mean - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn log_prior_is_even_for_zero_mean() {
        let prior = PriorSpec::default();
        let a = log_prior(&SinusoidParams::new(1.3, -2.1), &prior);
        let b = log_prior(&SinusoidParams::new(-1.3, 2.1), &prior);
        assert_relative_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn dataset_sum_matches_batched_likelihood() {
        let d = generate_dataset(11, 16, SinusoidParams::new(0.0, 1.0)).unwrap();
        let p = SinusoidParams::new(0.2, 0.5);
        let sum: f64 = d.points().iter().map(|&(x, y)| log_likelihood_point(y, x, &p)).sum();
        assert_eq!(log_likelihood_dataset(&d, &p), sum);
    }

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let a = generate_dataset(7, 8, SinusoidParams::new(0.0, 1.0)).unwrap();
        let b = generate_dataset(7, 8, SinusoidParams::new(0.0, 1.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 8);
        assert!(a.points().iter().all(|&(x, _)| (0.0..=1.0).contains(&x)));
        assert_eq!(a.seed(), 7);
        assert_eq!(a.true_params(), Some(SinusoidParams::new(0.0, 1.0)));
    }

    #[test]
    fn generation_rejects_zero_points() {
        assert_eq!(
            generate_dataset(7, 0, SinusoidParams::new(0.0, 1.0)).unwrap_err(),
            ModelError::EmptyGeneration
        );
    }

    #[test]
    fn noise_has_zero_empirical_mean_at_scale() {
        // n = 100000: the residual mean is a standard normal mean with
        // standard error 1/sqrt(n) ≈ 0.0032; ±0.01 is a 3σ band.
        let truth = SinusoidParams::new(0.0, 1.0);
        let d = generate_dataset(123, 100_000, truth).unwrap();
        let mean_resid: f64 = d
            .points()
            .iter()
            .map(|&(x, y)| y - mean_function(x, &truth))
            .sum::<f64>()
            / d.n() as f64;
        assert!(mean_resid.abs() < 0.01, "mean residual {mean_resid}");
    }

    #[test]
    fn from_points_validates_domain() {
        assert!(Dataset::from_points(vec![(0.5, 1.0)]).is_ok());
        assert!(matches!(
            Dataset::from_points(vec![(1.5, 0.0)]),
            Err(ModelError::InvalidPoint { index: 0, .. })
        ));
        assert!(matches!(
            Dataset::from_points(vec![(0.5, f64::NAN)]),
            Err(ModelError::InvalidPoint { .. })
        ));
    }

    #[test]
    fn empty_dataset_has_zero_likelihood_sum() {
        let d = Dataset::empty();
        assert!(d.is_empty());
        assert_eq!(log_likelihood_dataset(&d, &SinusoidParams::new(0.3, 0.3)), 0.0);
    }

    #[test]
    fn prior_spec_rejects_bad_variances() {
        assert!(PriorSpec::new([0.0, 0.0], [16.0, 16.0]).is_ok());
        assert!(PriorSpec::new([0.0, 0.0], [0.0, 16.0]).is_err());
        assert!(PriorSpec::new([0.0, 0.0], [-1.0, 16.0]).is_err());
        assert!(PriorSpec::new([f64::NAN, 0.0], [16.0, 16.0]).is_err());
    }

    #[test]
    fn gradients_flow_through_model_functions() {
        use crate::diff::{gradient, DiffScalar};
        // d/dφ log p(y|x,θ) = (y - μ)·cos(2πfx + φ) at f = 1.
        let (x, y) = (0.3, 0.7);
        let g = gradient(
            |v: &[DiffScalar<f64>]| {
                let p = SinusoidParams::new(v[0], v[1]);
                Ok(log_likelihood_point(DiffScalar::from_f64(y), DiffScalar::from_f64(x), &p))
            },
            &[0.0, 0.5],
        )
        .unwrap();
        let tau = core::f64::consts::TAU;
        let mu = (tau * x + 0.5).sin();
        let dmu_dphi = (tau * x + 0.5).cos();
        let dmu_dlogf = (tau * x + 0.5).cos() * tau * x; // chain through f = e^{log f}
        assert_relative_eq!(g[1], (y - mu) * dmu_dphi, epsilon = 1e-12);
        assert_relative_eq!(g[0], (y - mu) * dmu_dlogf, epsilon = 1e-12);
    }
}
