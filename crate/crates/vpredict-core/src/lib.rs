//! Core numerics for a two-parameter sinusoidal regression benchmark.
//!
//! The crate studies one model end to end: inputs `x ~ U(0, 1)`, outputs
//! `y ~ N(sin(2*pi*f*x + phi), 1)` with parameters `theta = (log f, phi)`
//! under an independent Gaussian prior. Because `theta` is two-dimensional,
//! every Bayesian quantity — evidence, posterior, posterior predictive —
//! can be computed to near machine precision by dense grid quadrature.
//! That exact oracle ([`exact`]) is the yardstick against which a family of
//! approximate prediction methods ([`methods`]) is trained and scored
//! ([`eval`]): maximum a-posteriori, mean-field variational inference,
//! predictive distillation from posterior samples, and a variational
//! predictive objective that bounds the negative log evidence from above
//! while simultaneously bounding the gap between the learned predictive
//! and the true posterior predictive.
//!
//! Everything differentiable is written against the [`diff::Real`] trait so
//! the same code runs on plain `f64`, on first-order dual numbers, and on
//! nested duals for second-order derivative flow (needed by the inner
//! gradient step of the variational predictive objective).
//!
//! The crate is `no_std` (with `alloc`); all float math goes through
//! `libm` so results are bit-stable across platforms. IO, file formats and
//! the command-line interface live in the companion `vpredict` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
#![warn(missing_docs)]

extern crate alloc;

pub mod diff;
pub mod eval;
pub mod exact;
pub mod methods;
pub mod model;
pub mod numerics;
pub(crate) mod optimize;
pub mod quadrature;
pub mod rng;
pub mod variational;
