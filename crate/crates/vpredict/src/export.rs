//! Figure-data exports: predictive mean/std band curves per method,
//! posterior density grids, and point-estimate marker coordinates. CSV
//! only; rendering is out of scope.

use vpredict_core::exact::{GridSpec, PosteriorGrid};
use vpredict_core::methods::PredictiveParams;
use vpredict_core::model::{mean_function, SinusoidParams};
use vpredict_core::quadrature::GaussHermite;
use vpredict_core::variational::{log_q_density, tensor_expect_2d, MeanFieldGaussian};

use crate::jsonfmt::f64_cell;
use crate::runtime::par_map_indexed;
use crate::CliError;

/// Data rows in every exported predictive curve (x = 0, 1/200, …, 1).
pub const CURVE_POINTS: usize = 201;

/// Exact header of a curve CSV.
pub const CURVE_CSV_HEADER: &str = "x,mean,std";

/// Exact header of a markers CSV.
pub const MARKERS_CSV_HEADER: &str = "method,log_f,phi";

/// One predictive band point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    /// Input location.
    pub x: f64,
    /// Predictive mean at `x`.
    pub mean: f64,
    /// Predictive standard deviation at `x`.
    pub std: f64,
}

/// The equispaced export inputs.
fn curve_x(i: usize) -> f64 {
    i as f64 / (CURVE_POINTS - 1) as f64
}

/// Band of a unit-variance parametric predictive: the fitted sinusoid
/// with standard deviation exactly 1.
pub fn parametric_curve(params: &PredictiveParams) -> Vec<CurveRow> {
    let s = params.as_sinusoid();
    (0..CURVE_POINTS)
        .map(|i| {
            let x = curve_x(i);
            CurveRow { x, mean: mean_function(x, &s), std: 1.0 }
        })
        .collect()
}

/// Band of the exact posterior predictive: first two moments of the
/// cell-mixture `Σ_c w_c · N(μ(x;θ_c), 1)` per x, so
/// `var = 1 + E[μ²] − (E[μ])²`.
pub fn bayes_curve(grid: &PosteriorGrid, threads: usize) -> Vec<CurveRow> {
    let spec = grid.spec();
    let (n_lf, n_phi) = spec.resolution;
    par_map_indexed(CURVE_POINTS, threads, |idx| {
        let x = curve_x(idx);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..n_lf {
            for j in 0..n_phi {
                let w = grid.mass(i, j);
                if w == 0.0 {
                    continue;
                }
                let mu = mean_function(x, &spec.center(i, j));
                m1 += w * mu;
                m2 += w * mu * mu;
            }
        }
        CurveRow { x, mean: m1, std: (1.0 + m2 - m1 * m1).max(0.0).sqrt() }
    })
}

/// Band of the mean-field marginalized predictive: Gauss–Hermite moments
/// of `μ(x;θ)` under `q_η`, again `var = 1 + Var_q[μ]`.
pub fn mfvi_curve(
    eta: &MeanFieldGaussian,
    gh_order: usize,
) -> Result<Vec<CurveRow>, CliError> {
    let rule = GaussHermite::new(gh_order)
        .map_err(|e| CliError::data(format!("invalid Gauss–Hermite order: {e:?}")))?;
    Ok((0..CURVE_POINTS)
        .map(|i| {
            let x = curve_x(i);
            let m1 = tensor_expect_2d(&rule, eta, |log_f, phi| {
                mean_function(x, &SinusoidParams::new(log_f, phi))
            });
            let m2 = tensor_expect_2d(&rule, eta, |log_f, phi| {
                let m = mean_function(x, &SinusoidParams::new(log_f, phi));
                m * m
            });
            CurveRow { x, mean: m1, std: (1.0 + m2 - m1 * m1).max(0.0).sqrt() }
        })
        .collect())
}

/// Renders a curve CSV (`x,mean,std`, 201 data rows).
pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 72 + 16);
    out.push_str(CURVE_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&f64_cell(row.x));
        out.push(',');
        out.push_str(&f64_cell(row.mean));
        out.push(',');
        out.push_str(&f64_cell(row.std));
        out.push('\n');
    }
    out
}

/// Renders a Gaussian posterior on the oracle grid's lattice in the grid
/// CSV format (`log_f,phi,log_density`), for overlaying variational
/// posteriors on the exact one.
pub fn gaussian_posterior_csv(eta: &MeanFieldGaussian, spec: &GridSpec) -> String {
    let (n_lf, n_phi) = spec.resolution;
    let mut out = String::with_capacity(24 * 3 * n_lf * n_phi + 32);
    out.push_str(crate::gridio::GRID_CSV_HEADER);
    out.push('\n');
    for i in 0..n_lf {
        for j in 0..n_phi {
            let center = spec.center(i, j);
            out.push_str(&f64_cell(center.log_f));
            out.push(',');
            out.push_str(&f64_cell(center.phi));
            out.push(',');
            out.push_str(&f64_cell(log_q_density(eta, &center)));
            out.push('\n');
        }
    }
    out
}

/// Renders the marker CSV (`method,log_f,phi`) for point-estimate
/// parameters.
pub fn markers_csv(markers: &[(&str, PredictiveParams)]) -> String {
    let mut out = String::from(MARKERS_CSV_HEADER);
    out.push('\n');
    for (name, params) in markers {
        out.push_str(name);
        out.push(',');
        out.push_str(&f64_cell(params.log_f_hat));
        out.push(',');
        out.push_str(&f64_cell(params.phi_hat));
        out.push('\n');
    }
    out
}
