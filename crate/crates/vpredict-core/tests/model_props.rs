//! Property tests for the sinusoid model layer: phase periodicity of the
//! mean function, the unit-variance likelihood ceiling, and agreement of
//! pointwise and batched log-likelihood evaluation.

use proptest::prelude::*;
use vpredict_core::model::{
    generate_dataset, log_likelihood_dataset, log_likelihood_point, mean_function, SinusoidParams,
};
use vpredict_core::numerics::LN_2PI;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// The mean is exactly 2π-periodic in phase; floating evaluation at
    /// the benchmark window's scales stays within 1e-12.
    #[test]
    fn mean_function_is_periodic_in_phase(
        x in 0.0f64..=1.0,
        log_f in -3.0f64..4.0,
        phi in -12.0f64..12.0,
    ) {
        let tau = 2.0 * std::f64::consts::PI;
        let base = mean_function(x, &SinusoidParams::new(log_f, phi));
        let shifted = mean_function(x, &SinusoidParams::new(log_f, phi + tau));
        prop_assert!((base - shifted).abs() < 1e-12, "base {base} shifted {shifted}");
    }

    /// A unit-variance Gaussian log density never exceeds −½·log(2π).
    #[test]
    fn log_likelihood_never_exceeds_the_unit_variance_ceiling(
        x in 0.0f64..=1.0,
        y in -50.0f64..50.0,
        log_f in -3.0f64..4.0,
        phi in -12.0f64..12.0,
    ) {
        let ll = log_likelihood_point(y, x, &SinusoidParams::new(log_f, phi));
        prop_assert!(ll <= -0.5 * LN_2PI + 1e-15, "log-likelihood {ll}");
    }

    /// Batched dataset log-likelihood is exactly the in-order sum of the
    /// pointwise terms (same fold, bit-identical).
    #[test]
    fn dataset_log_likelihood_matches_the_pointwise_sum(
        seed in 0u64..1000,
        n in 1usize..12,
        log_f in -3.0f64..4.0,
        phi in -12.0f64..12.0,
    ) {
        let dataset = generate_dataset(seed, n, SinusoidParams::new(0.0, 1.0)).unwrap();
        let params = SinusoidParams::new(log_f, phi);
        let batched = log_likelihood_dataset(&dataset, &params);
        let mut pointwise = 0.0;
        for &(x, y) in dataset.points() {
            pointwise += log_likelihood_point(y, x, &params);
        }
        prop_assert_eq!(batched, pointwise);
    }
}
