//! Crate-internal damped Newton ascent for smooth two-parameter
//! objectives.
//!
//! Several operations need a high-accuracy maximizer of a deterministic,
//! twice-differentiable objective over two scalars: posterior-mode
//! refinement, maximum-a-posteriori training, and the distillation
//! trainer's teacher fit. They all share this routine. The objective is
//! supplied as a [`ScalarFn`], so its value, gradient, and Hessian all
//! come from the same generic code path via forward-mode duals — there
//! is no hand-written derivative to drift out of sync.
//!
//! The ascent solves `(−H + µI) d = g` with Levenberg-style damping: `µ`
//! grows until the shifted matrix is positive definite *and* the step
//! improves the objective, and shrinks again after accepted steps. The
//! iteration stops when the gradient norm falls below `1e-9`, when no
//! damping level yields an uphill step, or after `max_iters` rounds.
//! Objective values are recorded per accepted step so trainers can
//! expose a convergence curve.

use alloc::vec::Vec;

use crate::diff::{gradient, hessian, DiffScalar, ScalarFn};

/// Gradient-norm threshold below which the ascent declares convergence.
pub(crate) const GRAD_NORM_STOP: f64 = 1e-9;

/// Outcome of one damped-Newton ascent.
pub(crate) struct NewtonOutcome {
    /// The final iterate.
    pub theta: [f64; 2],
    /// Objective value at the final iterate.
    pub objective: f64,
    /// Gradient norm at the final iterate (`f64::INFINITY` when the
    /// gradient itself was non-finite at the start).
    pub gradient_norm: f64,
    /// Objective value at the start and after each accepted step.
    pub curve: Vec<f64>,
}

/// Maximizes `f` from `start` by damped Newton ascent. Never panics and
/// never returns a point with a lower objective than `start` (barring a
/// non-finite objective at `start` itself, which ends the ascent
/// immediately with `gradient_norm = ∞`).
pub(crate) fn newton_ascend_2d<F: ScalarFn>(f: &F, start: [f64; 2], max_iters: usize) -> NewtonOutcome {
    let value_of = |v: &[f64]| -> f64 { f.eval(v) };
    let grad_of = |v: &[f64]| {
        gradient(|d: &[DiffScalar<f64>]| Ok(f.eval(d)), v)
    };
    let hess_of = |v: &[f64]| {
        hessian(|d: &[DiffScalar<DiffScalar<f64>>]| Ok(f.eval(d)), v)
    };

    let mut theta = start;
    let mut value = value_of(&theta);
    let mut curve = Vec::with_capacity(max_iters + 1);
    curve.push(value);
    let mut grad_norm = f64::INFINITY;
    if !value.is_finite() {
        return NewtonOutcome { theta, objective: value, gradient_norm: grad_norm, curve };
    }

    let mut damping = 1e-6f64;
    for _ in 0..max_iters {
        let g = match grad_of(&theta) {
            Ok(g) => g,
            Err(_) => break,
        };
        grad_norm = libm::sqrt(g[0] * g[0] + g[1] * g[1]);
        if grad_norm < GRAD_NORM_STOP {
            break;
        }
        let h = match hess_of(&theta) {
            Ok(h) => h,
            Err(_) => break,
        };
        let mut stepped = false;
        for _ in 0..60 {
            let a00 = -h[0][0] + damping;
            let a11 = -h[1][1] + damping;
            let a01 = -h[0][1];
            let det = a00 * a11 - a01 * a01;
            if a00 > 0.0 && det > 0.0 {
                let d0 = (a11 * g[0] - a01 * g[1]) / det;
                let d1 = (a00 * g[1] - a01 * g[0]) / det;
                let trial = [theta[0] + d0, theta[1] + d1];
                let trial_value = value_of(&trial);
                if trial_value.is_finite() && trial_value >= value {
                    theta = trial;
                    value = trial_value;
                    curve.push(value);
                    damping = (damping * 0.25).max(1e-12);
                    stepped = true;
                    break;
                }
            }
            damping *= 8.0;
        }
        if !stepped {
            break;
        }
    }
    // Report the gradient norm at the final iterate (the loop above may
    // have exited right after accepting a step).
    if let Ok(g) = grad_of(&theta) {
        grad_norm = libm::sqrt(g[0] * g[0] + g[1] * g[1]);
    }
    NewtonOutcome { theta, objective: value, gradient_norm: grad_norm, curve }
}
