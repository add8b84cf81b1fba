//! The mean-field Gaussian family and the implicit augmented posterior.
//!
//! Two objects live here. The first is the factorized Gaussian
//! `q_η(θ) = N(θ₀; μ₀, σ₀²) · N(θ₁; μ₁, σ₁²)` with `η = (μ, log σ)` —
//! the variational family used both for ordinary mean-field inference
//! over the sinusoid parameters and as the base posterior inside the
//! variational-prediction objective.
//!
//! The second is the *augmented posterior*: an approximation to
//! `p(θ | y, x, D)` — the posterior one would hold after additionally
//! observing the query pair — produced implicitly by a single gradient
//! step on the base posterior's parameters:
//!
//! ```text
//! η′ = η − λ · ∇_η [ −β · E_{q_η}[log p(y|x,θ)] + KL(q_η ‖ p) ]
//! ```
//!
//! with a learnable step size `λ` and inverse temperature `β` (both kept
//! in log space for positivity). The inner expectation is deterministic
//! tensor-product Gauss–Hermite quadrature rather than a sampled
//! estimate, so the only randomness in a training step is the outer
//! noise. Everything is generic over [`Real`], and the inner `∇_η` is an
//! ordinary [`gradient`] call at the ambient carrier type — which is what
//! lets outer training gradients flow *through* the update
//! (second-order terms included) when the carrier is itself a dual.

use core::fmt;

use crate::diff::{gradient, DiffResult, DiffScalar, Real};
use crate::model::{log_likelihood_point, PriorSpec, SinusoidParams};
use crate::numerics::LN_2PI;
use crate::quadrature::{GaussHermite, QuadratureError};

/// `log λ` at or below this value is treated as `λ = 0` exactly:
/// [`maml_update`] returns its input unchanged (and skips the inner
/// gradient entirely). This makes the unconditional ablation a true
/// special case instead of an approximate one.
pub const LOG_LAMBDA_CAP: f64 = -20.0;

/// Factorized Gaussian over `θ = (log f, φ)` with location `mu` and log
/// standard deviations `log_sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanFieldGaussian<R = f64> {
    /// Per-dimension means `(μ₀, μ₁)`.
    pub mu: [R; 2],
    /// Per-dimension log standard deviations; `σ = exp(log_sigma) > 0` by
    /// construction.
    pub log_sigma: [R; 2],
}

impl<R: Real> MeanFieldGaussian<R> {
    /// Bundles the four parameters.
    pub fn new(mu: [R; 2], log_sigma: [R; 2]) -> Self {
        Self { mu, log_sigma }
    }

    /// Parameters as a flat vector `[μ₀, μ₁, log σ₀, log σ₁]` (the order
    /// every optimizer and gradient in this crate uses).
    pub fn to_vec(&self) -> [R; 4] {
        [self.mu[0], self.mu[1], self.log_sigma[0], self.log_sigma[1]]
    }

    /// Inverse of [`MeanFieldGaussian::to_vec`].
    pub fn from_slice(v: &[R]) -> Self {
        Self { mu: [v[0], v[1]], log_sigma: [v[2], v[3]] }
    }

    /// Per-dimension standard deviations.
    pub fn sigma(&self) -> [R; 2] {
        [self.log_sigma[0].exp(), self.log_sigma[1].exp()]
    }
}

impl MeanFieldGaussian<f64> {
    /// The member of the family equal to `prior` (KL to prior is zero).
    pub fn from_prior(prior: &PriorSpec) -> Self {
        let s = prior.sigma();
        Self { mu: prior.mean, log_sigma: [libm::log(s[0]), libm::log(s[1])] }
    }

    /// Lifts into any [`Real`] carrier as constants.
    pub fn lift<R: Real>(&self) -> MeanFieldGaussian<R> {
        MeanFieldGaussian {
            mu: [R::from_f64(self.mu[0]), R::from_f64(self.mu[1])],
            log_sigma: [R::from_f64(self.log_sigma[0]), R::from_f64(self.log_sigma[1])],
        }
    }
}

/// The two scalars of the implicit augmented posterior: `log λ` (inner
/// step size) and `log β` (inverse temperature on the query likelihood).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentedPosteriorConfig<R = f64> {
    /// Log inner learning rate; `λ = exp(log_lambda) > 0`, with values at
    /// or below [`LOG_LAMBDA_CAP`] treated as exactly zero.
    pub log_lambda: R,
    /// Log inverse temperature; `β = exp(log_beta) > 0`.
    pub log_beta: R,
}

impl<R: Real> AugmentedPosteriorConfig<R> {
    /// Bundles the two scalars.
    pub fn new(log_lambda: R, log_beta: R) -> Self {
        Self { log_lambda, log_beta }
    }
}

impl AugmentedPosteriorConfig<f64> {
    /// Lifts into any [`Real`] carrier as constants.
    pub fn lift<R: Real>(&self) -> AugmentedPosteriorConfig<R> {
        AugmentedPosteriorConfig {
            log_lambda: R::from_f64(self.log_lambda),
            log_beta: R::from_f64(self.log_beta),
        }
    }
}

/// Errors from the variational operations.
#[derive(Clone, Debug, PartialEq)]
pub enum VariationalError {
    /// Building the Gauss–Hermite rule failed.
    Quadrature(QuadratureError),
    /// The inner gradient was non-finite.
    InnerGradient(crate::diff::DiffError),
}

impl fmt::Display for VariationalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariationalError::Quadrature(e) => write!(f, "quadrature rule: {e}"),
            VariationalError::InnerGradient(e) => write!(f, "inner gradient: {e}"),
        }
    }
}

impl core::error::Error for VariationalError {}

impl From<QuadratureError> for VariationalError {
    fn from(e: QuadratureError) -> Self {
        VariationalError::Quadrature(e)
    }
}

impl From<crate::diff::DiffError> for VariationalError {
    fn from(e: crate::diff::DiffError) -> Self {
        VariationalError::InnerGradient(e)
    }
}

/// Reparameterized sample `θᵢ = μᵢ + σᵢ · εᵢ`: a deterministic,
/// differentiable function of `η` with the randomness supplied by the
/// caller, so pathwise gradients of expectations are plain derivatives.
pub fn reparam_sample<R: Real>(eta: &MeanFieldGaussian<R>, eps: [R; 2]) -> SinusoidParams<R> {
    let s = eta.sigma();
    SinusoidParams::new(eta.mu[0] + s[0] * eps[0], eta.mu[1] + s[1] * eps[1])
}

/// Closed-form `KL(q_η ‖ p)` between the diagonal Gaussian and the
/// diagonal Gaussian prior, summed over dimensions:
/// `Σᵢ [ ½·ln(sᵢ²) − log σᵢ + (σᵢ² + (μᵢ − mᵢ)²)/(2 sᵢ²) − ½ ]` ≥ 0.
pub fn gaussian_kl_to_prior<R: Real>(eta: &MeanFieldGaussian<R>, prior: &PriorSpec) -> R {
    let half = R::from_f64(0.5);
    let mut total = R::zero();
    for i in 0..2 {
        let s2 = R::from_f64(prior.variance[i]);
        let m = R::from_f64(prior.mean[i]);
        let ls = eta.log_sigma[i];
        let var = (ls + ls).exp();
        let diff = eta.mu[i] - m;
        total = total + half * s2.ln() - ls + (var + diff * diff) / (R::from_f64(2.0) * s2) - half;
    }
    total
}

/// Expectation of `f(θ₀, θ₁)` under `q_η` by tensor-product Gauss–Hermite:
/// `Σ_{a,b} w_a w_b · f(μ₀ + σ₀ z_a, μ₁ + σ₁ z_b)`. Deterministic and
/// differentiable in `η` (nodes and weights are constants); exact when
/// `f` is polynomial of degree `< 2·order` per dimension.
pub fn tensor_expect_2d<R: Real, F: FnMut(R, R) -> R>(
    rule: &GaussHermite,
    eta: &MeanFieldGaussian<R>,
    mut f: F,
) -> R {
    let s = eta.sigma();
    let mut acc = R::zero();
    for (&za, &wa) in rule.nodes().iter().zip(rule.weights()) {
        let t0 = eta.mu[0] + s[0] * R::from_f64(za);
        let mut inner = R::zero();
        for (&zb, &wb) in rule.nodes().iter().zip(rule.weights()) {
            let t1 = eta.mu[1] + s[1] * R::from_f64(zb);
            inner = inner + R::from_f64(wb) * f(t0, t1);
        }
        acc = acc + R::from_f64(wa) * inner;
    }
    acc
}

/// `E_{q_η}[log p(y|x,θ)]` with a caller-supplied rule (the hot path:
/// trainers build the rule once per run).
pub fn expected_loglik_with_rule<R: Real>(
    eta: &MeanFieldGaussian<R>,
    x: R,
    y: R,
    rule: &GaussHermite,
) -> R {
    tensor_expect_2d(rule, eta, |log_f, phi| {
        log_likelihood_point(y, x, &SinusoidParams::new(log_f, phi))
    })
}

/// `E_{q_η}[log p(y|x,θ)]` by an `order`-per-dimension tensor rule.
pub fn expected_loglik_gh<R: Real>(
    eta: &MeanFieldGaussian<R>,
    x: R,
    y: R,
    order: usize,
) -> Result<R, QuadratureError> {
    Ok(expected_loglik_with_rule(eta, x, y, &GaussHermite::new(order)?))
}

/// One implicit-augmented-posterior step with a caller-supplied rule:
///
/// ```text
/// η′ = η − λ · ∇_η [ −β · E_{q_η}[log p(y|x,θ)] + KL(q_η ‖ p) ]
/// ```
///
/// `β` tempers only the query-point likelihood; the original dataset does
/// not appear (the base `η` is trained to explain it by the outer loss).
/// The inner `∇_η` runs at the ambient carrier `R`, so when `R` is itself
/// a dual the output is differentiable with respect to `η`, `x`, `y`,
/// `log λ`, and `log β`, second-order flow included. At or below
/// [`LOG_LAMBDA_CAP`] the update is skipped exactly (`η′ = η`).
pub fn maml_update_with_rule<R: Real>(
    eta: &MeanFieldGaussian<R>,
    x: R,
    y: R,
    cfg: &AugmentedPosteriorConfig<R>,
    prior: &PriorSpec,
    rule: &GaussHermite,
) -> DiffResult<MeanFieldGaussian<R>> {
    if cfg.log_lambda.value() <= LOG_LAMBDA_CAP {
        return Ok(*eta);
    }
    let lambda = cfg.log_lambda.exp();
    let beta = cfg.log_beta.exp();
    let inner_grad = gradient(
        |v: &[DiffScalar<R>]| {
            let q = MeanFieldGaussian::from_slice(v);
            let ell = expected_loglik_with_rule(
                &q,
                DiffScalar::constant(x),
                DiffScalar::constant(y),
                rule,
            );
            Ok(-(DiffScalar::constant(beta)) * ell + gaussian_kl_to_prior(&q, prior))
        },
        &eta.to_vec(),
    )?;
    let stepped: alloc::vec::Vec<R> =
        eta.to_vec().iter().zip(&inner_grad).map(|(&p, &g)| p - lambda * g).collect();
    Ok(MeanFieldGaussian::from_slice(&stepped))
}

/// [`maml_update_with_rule`] with the rule built from `order`.
pub fn maml_update<R: Real>(
    eta: &MeanFieldGaussian<R>,
    x: R,
    y: R,
    cfg: &AugmentedPosteriorConfig<R>,
    prior: &PriorSpec,
    order: usize,
) -> Result<MeanFieldGaussian<R>, VariationalError> {
    Ok(maml_update_with_rule(eta, x, y, cfg, prior, &GaussHermite::new(order)?)?)
}

/// Log density of the diagonal Gaussian `q_η` at `θ`:
/// `Σᵢ [ −log σᵢ − ½ e^{−2 log σᵢ} (θᵢ − μᵢ)² ] − log 2π`.
pub fn log_q_density<R: Real>(eta: &MeanFieldGaussian<R>, theta: &SinusoidParams<R>) -> R {
    let half = R::from_f64(0.5);
    let t = [theta.log_f, theta.phi];
    let mut total = -R::from_f64(LN_2PI);
    for i in 0..2 {
        let ls = eta.log_sigma[i];
        let d = t[i] - eta.mu[i];
        total = total - ls - half * (-(ls + ls)).exp() * d * d;
    }
    total
}
