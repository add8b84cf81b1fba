//! Verification suites behind `vpredict verify`: the shared-quadrature
//! evidence identity, the finite-difference gradient checks, and the
//! bound decomposition on a trained state. Every check reports both
//! numeric sides and its slack; the command exits nonzero iff any row
//! fails.

use vpredict_core::diff::{check_gradient, Real, ScalarFn};
use vpredict_core::eval::bound_decomposition_check;
use vpredict_core::exact::{candidates_residual_sweep, PosteriorGrid};
use vpredict_core::methods::{vp_loss_with_rule, NoiseDraw, VpFit, VpState};
use vpredict_core::model::{log_joint_density, Dataset, PriorSpec, SinusoidParams};
use vpredict_core::quadrature::GaussHermite;
use vpredict_core::rng;
use vpredict_core::variational::{
    expected_loglik_with_rule, gaussian_kl_to_prior, log_q_density, maml_update_with_rule,
    AugmentedPosteriorConfig, MeanFieldGaussian,
};

use crate::CliError;

/// One verification row: a named relation with both sides and the margin
/// it passed (or failed) by.
#[derive(Clone, Debug)]
pub struct CheckRow {
    /// What is being checked.
    pub name: String,
    /// Left-hand side (the measured quantity).
    pub lhs: f64,
    /// Right-hand side (the required bound or target).
    pub rhs: f64,
    /// Margin in the passing direction.
    pub slack: f64,
    /// Whether the relation holds.
    pub pass: bool,
}

/// Residual tolerance of the shared-quadrature evidence identity.
pub const CANDIDATES_TOLERANCE: f64 = 1e-9;

/// Relative tolerance of the finite-difference gradient checks.
pub const GRADIENT_RTOL: f64 = 1e-4;

/// Central-difference step of the gradient checks.
pub const GRADIENT_FD_STEP: f64 = 1e-5;

/// Number of random `(x, y, θ-node)` triples in the identity sweep.
pub const CANDIDATES_TRIPLES: usize = 64;

/// Sweeps the two evaluation routes of the conditional evidence over
/// random query points and grid nodes: both reduce to the same
/// quadrature sums, so the residual must vanish to round-off.
pub fn candidates_suite(grid: &PosteriorGrid, seed: u64) -> Result<Vec<CheckRow>, CliError> {
    let (n_lf, n_phi) = grid.spec().resolution;
    let mut stream = rng::stream(seed, 0xCA4D1DA7E5);
    let mut rows = Vec::with_capacity(CANDIDATES_TRIPLES);
    for k in 0..CANDIDATES_TRIPLES {
        let x = rng::uniform_f64(&mut stream);
        let y = 2.0 * rng::standard_normal(&mut stream);
        let i = (rng::uniform_f64(&mut stream) * n_lf as f64) as usize % n_lf;
        let j = (rng::uniform_f64(&mut stream) * n_phi as f64) as usize % n_phi;
        let residual = candidates_residual_sweep(grid, x, y, &[(i, j)])
            .map_err(|e| CliError::data(format!("identity sweep failed: {e:?}")))?[0];
        let lhs = residual.abs();
        rows.push(CheckRow {
            name: format!(
                "evidence-identity[{k:02}] x={x:.3} y={y:+.3} node=({i},{j})"
            ),
            lhs,
            rhs: CANDIDATES_TOLERANCE,
            slack: CANDIDATES_TOLERANCE - lhs,
            pass: lhs < CANDIDATES_TOLERANCE,
        });
    }
    Ok(rows)
}

// --- gradient-check targets ------------------------------------------

/// Composite elementary chain: exercises the dual-number rules alone.
struct CompositeChain;

impl ScalarFn for CompositeChain {
    fn eval<R: Real>(&self, v: &[R]) -> R {
        let (a, b) = (v[0], v[1]);
        a.sin() * (b / R::from_f64(3.0)).exp() + (R::from_f64(1.0) + a * a).ln() - b.cos()
    }
}

/// Log joint density as a function of the two model parameters.
struct LogJointAt<'a> {
    dataset: &'a Dataset,
    prior: &'a PriorSpec,
}

impl ScalarFn for LogJointAt<'_> {
    fn eval<R: Real>(&self, v: &[R]) -> R {
        log_joint_density(self.dataset, self.prior, &SinusoidParams::new(v[0], v[1]))
    }
}

/// Gaussian KL to the prior as a function of the four posterior scalars.
struct KlToPrior<'a> {
    prior: &'a PriorSpec,
}

impl ScalarFn for KlToPrior<'_> {
    fn eval<R: Real>(&self, v: &[R]) -> R {
        gaussian_kl_to_prior(&MeanFieldGaussian::from_slice(v), self.prior)
    }
}

/// Quadrature expected log-likelihood as a function of the posterior
/// scalars.
struct ExpectedLoglikAt {
    x: f64,
    y: f64,
    rule: GaussHermite,
}

impl ScalarFn for ExpectedLoglikAt {
    fn eval<R: Real>(&self, v: &[R]) -> R {
        expected_loglik_with_rule(
            &MeanFieldGaussian::from_slice(v),
            R::from_f64(self.x),
            R::from_f64(self.y),
            &self.rule,
        )
    }
}

/// Negative evidence bound (the mean-field training objective) as a
/// function of the posterior scalars.
struct NegElboAt<'a> {
    dataset: &'a Dataset,
    prior: &'a PriorSpec,
    rule: GaussHermite,
}

impl ScalarFn for NegElboAt<'_> {
    fn eval<R: Real>(&self, v: &[R]) -> R {
        let eta = MeanFieldGaussian::from_slice(v);
        let mut expected = R::zero();
        for &(x, y) in self.dataset.points() {
            expected = expected
                + expected_loglik_with_rule(&eta, R::from_f64(x), R::from_f64(y), &self.rule);
        }
        gaussian_kl_to_prior(&eta, self.prior) - expected
    }
}

/// Density of the adapted posterior at a probe point, as a function of
/// the six augmentation inputs `(μ, log σ, log λ, log β)`. The adapted
/// parameters are one inner gradient step away, so differentiating this
/// chain exercises second-order flow.
struct AdaptedDensityAt<'a> {
    x: f64,
    y: f64,
    prior: &'a PriorSpec,
    rule: GaussHermite,
    probe: SinusoidParams,
}

impl ScalarFn for AdaptedDensityAt<'_> {
    fn eval<R: Real>(&self, v: &[R]) -> R {
        let eta = MeanFieldGaussian::from_slice(&v[..4]);
        let cfg = AugmentedPosteriorConfig::new(v[4], v[5]);
        match maml_update_with_rule(
            &eta,
            R::from_f64(self.x),
            R::from_f64(self.y),
            &cfg,
            self.prior,
            &self.rule,
        ) {
            Ok(adapted) => log_q_density(&adapted, &self.probe.lift()),
            Err(_) => R::from_f64(f64::NAN),
        }
    }
}

/// One training-loss draw as a function of all eight state scalars.
struct VpLossAt<'a> {
    dataset: &'a Dataset,
    prior: &'a PriorSpec,
    noise: NoiseDraw,
    rule: GaussHermite,
}

impl ScalarFn for VpLossAt<'_> {
    fn eval<R: Real>(&self, v: &[R]) -> R {
        let state = VpState::from_slice(v);
        match vp_loss_with_rule(&state, self.dataset, self.prior, &self.noise, &self.rule) {
            Ok(loss) => loss,
            Err(_) => R::from_f64(f64::NAN),
        }
    }
}

fn gradient_row<S: ScalarFn>(name: &str, f: &S, at: &[f64]) -> CheckRow {
    let report = check_gradient(f, at, GRADIENT_RTOL, GRADIENT_FD_STEP);
    CheckRow {
        name: format!("gradient: {name}"),
        lhs: report.max_rel_error,
        rhs: GRADIENT_RTOL,
        slack: GRADIENT_RTOL - report.max_rel_error,
        pass: report.pass,
    }
}

/// Finite-difference checks of every analytic gradient path, including
/// the second-order chain through the inner adaptation step.
pub fn gradients_suite(dataset: &Dataset, prior: &PriorSpec) -> Result<Vec<CheckRow>, CliError> {
    let rule = GaussHermite::new(7)
        .map_err(|e| CliError::data(format!("invalid Gauss–Hermite order: {e:?}")))?;
    let mut rows = Vec::new();

    rows.push(gradient_row("elementary composite chain", &CompositeChain, &[0.7, -0.4]));

    let log_joint = LogJointAt { dataset, prior };
    rows.push(gradient_row("log joint wrt (log_f, phi) near origin", &log_joint, &[0.1, 0.8]));
    rows.push(gradient_row("log joint wrt (log_f, phi) off-mode", &log_joint, &[1.3, -2.1]));

    rows.push(gradient_row(
        "gaussian KL to prior wrt (mu, log_sigma)",
        &KlToPrior { prior },
        &[0.4, -0.9, -1.2, -0.6],
    ));

    rows.push(gradient_row(
        "expected log-likelihood wrt (mu, log_sigma)",
        &ExpectedLoglikAt { x: 0.37, y: 0.45, rule: rule.clone() },
        &[0.2, 0.8, -1.5, -1.1],
    ));

    rows.push(gradient_row(
        "evidence-bound objective wrt (mu, log_sigma)",
        &NegElboAt { dataset, prior, rule: rule.clone() },
        &[0.15, 0.9, -1.8, -1.4],
    ));

    rows.push(gradient_row(
        "adapted-posterior density wrt (mu, log_sigma, log_lambda, log_beta)",
        &AdaptedDensityAt {
            x: 0.42,
            y: 0.3,
            prior,
            rule: rule.clone(),
            probe: SinusoidParams::new(0.25, 0.75),
        },
        &[0.2, 0.8, -1.5, -1.1, (0.02f64).ln(), (1.5f64).ln()],
    ));

    let noise = NoiseDraw { x: 0.37, eps_y: 0.21, eps_theta: [0.5, -0.3] };
    rows.push(gradient_row(
        "training loss wrt all eight state scalars",
        &VpLossAt { dataset, prior, noise, rule },
        &[0.1, 0.9, 0.2, 0.8, -1.5, -1.0, (0.02f64).ln(), (1.5f64).ln()],
    ));

    Ok(rows)
}

/// Bound checks on a trained state: the decomposition identity, the
/// predictive-bound inequality, and the nonnegativity chain.
pub fn bounds_suite(
    dataset: &Dataset,
    grid: &PosteriorGrid,
    vp: &VpFit,
    n_mc: usize,
    seed: u64,
    gh_order: usize,
) -> Result<Vec<CheckRow>, CliError> {
    let checks = bound_decomposition_check(&vp.state, dataset, grid, n_mc, seed, gh_order)
        .map_err(|e| CliError::data(format!("bound decomposition failed: {e:?}")))?;
    Ok(checks
        .into_iter()
        .map(|c| CheckRow { name: c.name.to_owned(), lhs: c.lhs, rhs: c.rhs, slack: c.slack, pass: c.pass })
        .collect())
}

/// Renders rows as an aligned human-readable table.
pub fn format_rows(rows: &[CheckRow]) -> String {
    let name_width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<name_width$}  {:>14}  {:>14}  {:>11}  result\n",
        "check", "lhs", "rhs", "slack"
    );
    for row in rows {
        out.push_str(&format!(
            "{:<name_width$}  {:>14.6e}  {:>14.6e}  {:>11.3e}  {}\n",
            row.name,
            row.lhs,
            row.rhs,
            row.slack,
            if row.pass { "pass" } else { "FAIL" }
        ));
    }
    out
}
