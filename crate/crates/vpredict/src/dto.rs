//! On-disk JSON schemas and their conversions to and from the in-memory
//! library types.
//!
//! Every file carries `schema_version` and is parsed strictly: unknown
//! fields, wrong versions, and internally inconsistent values are all
//! rejected. Floats are written with 17 significant digits (see
//! [`crate::jsonfmt`]), so every file round-trips its doubles exactly.

use serde::{Deserialize, Serialize};

use vpredict_core::eval::{EvalReport, ModeMassReport};
use vpredict_core::methods::{
    BayesDarkFit, CurvePoint, MapFit, MfviFit, PredictiveParams, TrainConfig, VpFit, VpState,
};
use vpredict_core::model::{Dataset, SinusoidParams};
use vpredict_core::variational::{AugmentedPosteriorConfig, MeanFieldGaussian};

use crate::CliError;

/// Schema version stamped on (and required from) every JSON file this
/// crate reads or writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Reference augmentation scalars for this benchmark family, recorded in
/// variational-prediction fit files next to the learned values so runs
/// can be compared against the known-good configuration at a glance.
pub const REFERENCE_LAMBDA: f64 = 0.004;
/// See [`REFERENCE_LAMBDA`].
pub const REFERENCE_BETA: f64 = 12.8;

/// Rejects any schema version other than [`SCHEMA_VERSION`].
pub fn check_schema(version: u32, what: &str) -> Result<(), CliError> {
    if version != SCHEMA_VERSION {
        return Err(CliError::data(format!(
            "{what}: unsupported schema_version {version} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

/// Parses a strict JSON document, labeling errors with the file kind.
pub fn parse_json<'a, T: Deserialize<'a>>(text: &'a str, what: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::data(format!("{what}: {e}")))
}

// ---------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------

/// Stored benchmark dataset: the generating triple and the realized
/// points.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    /// Always [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Seed the points were drawn with.
    pub seed: u64,
    /// Number of points; must equal `xs.len()` and `ys.len()`.
    pub n: usize,
    /// Generating log-frequency.
    pub true_log_f: f64,
    /// Generating phase.
    pub true_phi: f64,
    /// Input locations, in draw order.
    pub xs: Vec<f64>,
    /// Observations, in draw order.
    pub ys: Vec<f64>,
}

impl DatasetFile {
    /// Snapshot of an in-memory dataset (must carry its generating
    /// parameters, i.e. come from the generator or a stored file).
    pub fn from_dataset(dataset: &Dataset) -> Result<Self, CliError> {
        let truth = dataset.true_params().ok_or_else(|| {
            CliError::data("dataset has no generating parameters; cannot serialize")
        })?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            seed: dataset.seed(),
            n: dataset.n(),
            true_log_f: truth.log_f,
            true_phi: truth.phi,
            xs: dataset.points().iter().map(|p| p.0).collect(),
            ys: dataset.points().iter().map(|p| p.1).collect(),
        })
    }

    /// Validates and rebuilds the in-memory dataset.
    pub fn into_dataset(self) -> Result<Dataset, CliError> {
        check_schema(self.schema_version, "dataset file")?;
        if self.xs.len() != self.n || self.ys.len() != self.n {
            return Err(CliError::data(format!(
                "dataset file: n = {} but xs has {} entries and ys has {}",
                self.n,
                self.xs.len(),
                self.ys.len()
            )));
        }
        let points: Vec<(f64, f64)> = self.xs.into_iter().zip(self.ys).collect();
        Dataset::from_parts(self.seed, SinusoidParams::new(self.true_log_f, self.true_phi), points)
            .map_err(|e| CliError::data(format!("dataset file: invalid points: {e:?}")))
    }
}

// ---------------------------------------------------------------------
// Training configuration files
// ---------------------------------------------------------------------

/// Optional training-configuration overrides loaded from `--config`.
/// Field semantics match [`TrainConfig`]; absent fields keep their
/// defaults, and explicit command-line flags override file values.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfigFile {
    /// Always [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Optimizer steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Adam learning rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// Monte Carlo loss draws per step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_draws_per_step: Option<usize>,
    /// Training seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Gauss–Hermite order for inner expectations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gh_order: Option<usize>,
    /// Adam first-moment decay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    /// Adam second-moment decay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    /// Adam denominator floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl TrainConfigFile {
    /// Applies the file's overrides on top of `base`.
    pub fn apply(&self, base: TrainConfig) -> Result<TrainConfig, CliError> {
        check_schema(self.schema_version, "config file")?;
        Ok(TrainConfig {
            steps: self.steps.unwrap_or(base.steps),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            mc_draws_per_step: self.mc_draws_per_step.unwrap_or(base.mc_draws_per_step),
            seed: self.seed.unwrap_or(base.seed),
            gh_order: self.gh_order.unwrap_or(base.gh_order),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
        })
    }
}

/// Exact configuration a fit ran with, echoed into the fit file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainConfigEcho {
    /// Optimizer steps.
    pub steps: usize,
    /// Adam learning rate.
    pub learning_rate: f64,
    /// Monte Carlo loss draws per step.
    pub mc_draws_per_step: usize,
    /// Training seed.
    pub seed: u64,
    /// Gauss–Hermite order for inner expectations.
    pub gh_order: usize,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay.
    pub beta2: f64,
    /// Adam denominator floor.
    pub epsilon: f64,
}

impl TrainConfigEcho {
    /// Snapshot of a runtime configuration.
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            steps: cfg.steps,
            learning_rate: cfg.learning_rate,
            mc_draws_per_step: cfg.mc_draws_per_step,
            seed: cfg.seed,
            gh_order: cfg.gh_order,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    /// The runtime configuration this echo records.
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            learning_rate: self.learning_rate,
            mc_draws_per_step: self.mc_draws_per_step,
            seed: self.seed,
            gh_order: self.gh_order,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

// ---------------------------------------------------------------------
// Fit files
// ---------------------------------------------------------------------

/// The five trainable methods, as they appear on the command line and in
/// fit files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Maximum a posteriori point estimate.
    Map,
    /// Mean-field variational inference.
    Mfvi,
    /// Distillation of the exact predictive into the parametric family.
    BayesDark,
    /// Variational prediction.
    Vp,
    /// Variational prediction without query conditioning.
    UncondVp,
}

impl Method {
    /// All methods, in canonical presentation order.
    pub const ALL: [Method; 5] =
        [Method::Map, Method::Mfvi, Method::BayesDark, Method::Vp, Method::UncondVp];

    /// Canonical lowercase name.
    pub fn name(self) -> &'static str {
        match self {
            Method::Map => "map",
            Method::Mfvi => "mfvi",
            Method::BayesDark => "bayesdark",
            Method::Vp => "vp",
            Method::UncondVp => "uncondvp",
        }
    }

    /// Parses a canonical name.
    pub fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// One logged optimization step. `loss` is the quantity the trainer
/// minimizes: the training loss itself for the variational-prediction
/// methods, and the negated ascent objective (negative log joint,
/// negative evidence bound, negative mean teacher log density) for the
/// maximizing methods, so every stored curve descends as training
/// improves.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CurvePointFile {
    /// Optimizer step index.
    pub step: u64,
    /// Minimized quantity at that step.
    pub loss: f64,
}

/// `params` payload for a point-estimate fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapParamsFile {
    /// Fitted log-frequency.
    pub log_f_hat: f64,
    /// Fitted phase.
    pub phi_hat: f64,
    /// Log joint density at the fit (ascent sense).
    pub objective: f64,
    /// Gradient norm at the fit.
    pub gradient_norm: f64,
}

/// `params` payload for a mean-field variational fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfviParamsFile {
    /// Posterior means `(log f, φ)`.
    pub mu: [f64; 2],
    /// Log posterior standard deviations.
    pub log_sigma: [f64; 2],
    /// Final evidence lower bound (ascent sense).
    pub elbo: f64,
}

/// `params` payload for a distillation fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesDarkParamsFile {
    /// Fitted log-frequency.
    pub log_f_hat: f64,
    /// Fitted phase.
    pub phi_hat: f64,
    /// Mean teacher log density at the fit (ascent sense).
    pub objective: f64,
}

/// Predictive location parameters inside a variational-prediction fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictiveParamsFile {
    /// Predictive log-frequency.
    pub log_f_hat: f64,
    /// Predictive phase.
    pub phi_hat: f64,
}

/// Base-posterior parameters inside a variational-prediction fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaParamsFile {
    /// Means `(log f, φ)`.
    pub mu: [f64; 2],
    /// Log standard deviations.
    pub log_sigma: [f64; 2],
}

/// Augmentation scalars (log space) inside a variational-prediction fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugParamsFile {
    /// Log inner step size.
    pub log_lambda: f64,
    /// Log effective inverse temperature.
    pub log_beta: f64,
}

/// Learned augmentation scalars in natural units, next to the reference
/// configuration for this benchmark family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateTemperatureFile {
    /// Learned inner step size `λ = exp(log_lambda)`.
    pub lambda: f64,
    /// Learned effective inverse temperature `β = exp(log_beta)`.
    pub beta: f64,
    /// [`REFERENCE_LAMBDA`].
    pub reference_lambda: f64,
    /// [`REFERENCE_BETA`].
    pub reference_beta: f64,
}

/// `params` payload for the two variational-prediction fits.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VpParamsFile {
    /// Parametric predictive location.
    pub predictive: PredictiveParamsFile,
    /// Base variational posterior.
    pub eta: EtaParamsFile,
    /// Augmentation scalars (log space).
    pub aug: AugParamsFile,
    /// Augmentation scalars in natural units plus the reference values.
    pub rate_temperature: RateTemperatureFile,
    /// Final step-averaged training loss.
    pub final_loss: f64,
}

/// A stored fit: raw shell with the `params` payload left as JSON until
/// the `method` field selects its schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFile {
    /// Always [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Canonical method name.
    pub method: String,
    /// Method-specific parameters (see the `*ParamsFile` types).
    pub params: serde_json::Value,
    /// Logged optimization curve (see [`CurvePointFile`]).
    pub train_curve: Vec<CurvePointFile>,
    /// Exact configuration the fit ran with.
    pub config_echo: TrainConfigEcho,
    /// Training seed (duplicate of `config_echo.seed` for quick access).
    pub seed: u64,
}

/// A fit file parsed down to the in-memory fit type.
#[derive(Clone, Debug)]
pub enum LoadedFit {
    /// Point-estimate fit.
    Map(MapFit),
    /// Mean-field variational fit.
    Mfvi(MfviFit),
    /// Distillation fit.
    BayesDark(BayesDarkFit),
    /// Variational-prediction fit.
    Vp(VpFit),
    /// Unconditional-ablation fit.
    UncondVp(VpFit),
}

impl LoadedFit {
    /// The method this fit belongs to.
    pub fn method(&self) -> Method {
        match self {
            LoadedFit::Map(_) => Method::Map,
            LoadedFit::Mfvi(_) => Method::Mfvi,
            LoadedFit::BayesDark(_) => Method::BayesDark,
            LoadedFit::Vp(_) => Method::Vp,
            LoadedFit::UncondVp(_) => Method::UncondVp,
        }
    }
}

/// Negates an ascent curve into stored loss points.
fn descending_curve(curve: &[CurvePoint]) -> Vec<CurvePointFile> {
    curve.iter().map(|p| CurvePointFile { step: p.step, loss: -p.value }).collect()
}

/// Stores a loss curve as-is.
fn loss_curve(curve: &[CurvePoint]) -> Vec<CurvePointFile> {
    curve.iter().map(|p| CurvePointFile { step: p.step, loss: p.value }).collect()
}

/// Restores an in-memory curve from stored points, negating when the
/// trainer's tracked scalar is an ascent objective.
fn restore_curve(curve: &[CurvePointFile], ascent: bool) -> Vec<CurvePoint> {
    curve
        .iter()
        .map(|p| CurvePoint { step: p.step, value: if ascent { -p.loss } else { p.loss } })
        .collect()
}

fn to_value<T: Serialize>(params: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(params)
        .map_err(|e| CliError::data(format!("cannot serialize fit parameters: {e}")))
}

/// Builds the stored form of a fit.
pub fn fit_to_file(fit: &LoadedFit, cfg: &TrainConfig) -> Result<FitFile, CliError> {
    let (params, train_curve) = match fit {
        LoadedFit::Map(f) => (
            to_value(&MapParamsFile {
                log_f_hat: f.params.log_f_hat,
                phi_hat: f.params.phi_hat,
                objective: f.objective,
                gradient_norm: f.gradient_norm,
            })?,
            descending_curve(&f.curve),
        ),
        LoadedFit::Mfvi(f) => (
            to_value(&MfviParamsFile {
                mu: [f.eta.mu[0], f.eta.mu[1]],
                log_sigma: [f.eta.log_sigma[0], f.eta.log_sigma[1]],
                elbo: f.elbo,
            })?,
            descending_curve(&f.curve),
        ),
        LoadedFit::BayesDark(f) => (
            to_value(&BayesDarkParamsFile {
                log_f_hat: f.params.log_f_hat,
                phi_hat: f.params.phi_hat,
                objective: f.objective,
            })?,
            descending_curve(&f.curve),
        ),
        LoadedFit::Vp(f) | LoadedFit::UncondVp(f) => (
            to_value(&vp_params_file(f))?,
            loss_curve(&f.curve),
        ),
    };
    Ok(FitFile {
        schema_version: SCHEMA_VERSION,
        method: fit.method().name().to_owned(),
        params,
        train_curve,
        config_echo: TrainConfigEcho::from_config(cfg),
        seed: cfg.seed,
    })
}

fn vp_params_file(f: &VpFit) -> VpParamsFile {
    let s = &f.state;
    VpParamsFile {
        predictive: PredictiveParamsFile {
            log_f_hat: s.predictive.log_f_hat,
            phi_hat: s.predictive.phi_hat,
        },
        eta: EtaParamsFile {
            mu: [s.eta.mu[0], s.eta.mu[1]],
            log_sigma: [s.eta.log_sigma[0], s.eta.log_sigma[1]],
        },
        aug: AugParamsFile { log_lambda: s.aug_cfg.log_lambda, log_beta: s.aug_cfg.log_beta },
        rate_temperature: RateTemperatureFile {
            lambda: s.aug_cfg.log_lambda.exp(),
            beta: s.aug_cfg.log_beta.exp(),
            reference_lambda: REFERENCE_LAMBDA,
            reference_beta: REFERENCE_BETA,
        },
        final_loss: f.final_loss,
    }
}

fn parse_params<T: serde::de::DeserializeOwned>(
    value: serde_json::Value,
    method: &str,
) -> Result<T, CliError> {
    serde_json::from_value(value)
        .map_err(|e| CliError::data(format!("fit file: bad params for method {method:?}: {e}")))
}

impl FitFile {
    /// Validates and rebuilds the in-memory fit.
    pub fn into_fit(self) -> Result<LoadedFit, CliError> {
        check_schema(self.schema_version, "fit file")?;
        if self.seed != self.config_echo.seed {
            return Err(CliError::data(format!(
                "fit file: seed {} disagrees with config_echo.seed {}",
                self.seed, self.config_echo.seed
            )));
        }
        let method = Method::parse(&self.method).ok_or_else(|| {
            CliError::data(format!(
                "fit file: unknown method {:?} (valid: map, mfvi, bayesdark, vp, uncondvp)",
                self.method
            ))
        })?;
        Ok(match method {
            Method::Map => {
                let p: MapParamsFile = parse_params(self.params, &self.method)?;
                LoadedFit::Map(MapFit {
                    params: PredictiveParams::new(p.log_f_hat, p.phi_hat),
                    objective: p.objective,
                    gradient_norm: p.gradient_norm,
                    curve: restore_curve(&self.train_curve, true),
                })
            }
            Method::Mfvi => {
                let p: MfviParamsFile = parse_params(self.params, &self.method)?;
                LoadedFit::Mfvi(MfviFit {
                    eta: MeanFieldGaussian::new(p.mu, p.log_sigma),
                    elbo: p.elbo,
                    curve: restore_curve(&self.train_curve, true),
                })
            }
            Method::BayesDark => {
                let p: BayesDarkParamsFile = parse_params(self.params, &self.method)?;
                LoadedFit::BayesDark(BayesDarkFit {
                    params: PredictiveParams::new(p.log_f_hat, p.phi_hat),
                    objective: p.objective,
                    curve: restore_curve(&self.train_curve, true),
                })
            }
            Method::Vp | Method::UncondVp => {
                let p: VpParamsFile = parse_params(self.params, &self.method)?;
                let state = VpState {
                    predictive: PredictiveParams::new(p.predictive.log_f_hat, p.predictive.phi_hat),
                    eta: MeanFieldGaussian::new(p.eta.mu, p.eta.log_sigma),
                    aug_cfg: AugmentedPosteriorConfig::new(p.aug.log_lambda, p.aug.log_beta),
                };
                let fit = VpFit {
                    state,
                    final_loss: p.final_loss,
                    curve: restore_curve(&self.train_curve, false),
                };
                if method == Method::Vp {
                    LoadedFit::Vp(fit)
                } else {
                    LoadedFit::UncondVp(fit)
                }
            }
        })
    }
}

// ---------------------------------------------------------------------
// Grid sidecar files
// ---------------------------------------------------------------------

/// Quadrature window and resolution, as stored in the grid sidecar.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpecFile {
    /// `(lo, hi)` window on log-frequency.
    pub log_f_range: [f64; 2],
    /// `(lo, hi)` window on phase.
    pub phi_range: [f64; 2],
    /// Cells per axis `(n_log_f, n_phi)`.
    pub resolution: [usize; 2],
}

impl GridSpecFile {
    /// Snapshot of an in-memory grid spec.
    pub fn from_spec(spec: &vpredict_core::exact::GridSpec) -> Self {
        Self {
            log_f_range: [spec.log_f_range.0, spec.log_f_range.1],
            phi_range: [spec.phi_range.0, spec.phi_range.1],
            resolution: [spec.resolution.0, spec.resolution.1],
        }
    }

    /// The in-memory grid spec this file records.
    pub fn to_spec(&self) -> vpredict_core::exact::GridSpec {
        vpredict_core::exact::GridSpec {
            log_f_range: (self.log_f_range[0], self.log_f_range[1]),
            phi_range: (self.phi_range[0], self.phi_range[1]),
            resolution: (self.resolution[0], self.resolution[1]),
        }
    }
}

/// JSON sidecar stored next to a grid CSV: the spec the cells were laid
/// out with, the log evidence the densities were normalized by, and the
/// convergence record.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSidecarFile {
    /// Always [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Final (accepted) grid layout.
    pub spec: GridSpecFile,
    /// Log evidence of the dataset under the grid quadrature.
    pub log_evidence: f64,
    /// Resolution doublings taken before the evidence stabilized.
    pub doublings: u32,
    /// Evidence change at the accepted convergence check (nats).
    pub evidence_delta: f64,
}

// ---------------------------------------------------------------------
// Evaluation report files
// ---------------------------------------------------------------------

/// Per-method expected predictive divergence (nats).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KlByMethodFile {
    /// Exact predictive against itself (~0).
    pub bayes: f64,
    /// Point-estimate predictive.
    pub map: f64,
    /// Mean-field marginalized predictive.
    pub mfvi: f64,
    /// Distilled parametric predictive.
    pub bayesdark: f64,
    /// Variational-prediction predictive.
    pub vp: f64,
    /// Unconditional-ablation predictive.
    pub uncondvp: f64,
}

/// One two-sided bound check.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundCheckFile {
    /// Which inequality or identity.
    pub name: String,
    /// Left-hand side.
    pub lhs: f64,
    /// Right-hand side.
    pub rhs: f64,
    /// Margin in the passing direction.
    pub slack: f64,
    /// Whether the check passed.
    pub pass: bool,
}

/// Mode-concentration report for the mean-field fit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModeMassFile {
    /// Fraction of the fit's own probability mass inside the connected
    /// super-level component of its steepest mode.
    pub mass_fraction: f64,
    /// Log-density cut defining the component.
    pub cut_log_density: f64,
    /// Cells in the component.
    pub cell_count: usize,
}

/// Evaluation provenance.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvalMetadataFile {
    /// Seed of the evaluated dataset.
    pub dataset_seed: u64,
    /// Oracle grid resolution.
    pub grid_resolution: [usize; 2],
    /// Seed of the evaluation streams.
    pub eval_seed: u64,
    /// Monte Carlo draws per bound estimator.
    pub n_mc: usize,
    /// Gauss–Hermite order for inner expectations.
    pub gh_order: usize,
}

/// Stored evaluation report.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReportFile {
    /// Always [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Per-method expected predictive divergence.
    pub kl_by_method: KlByMethodFile,
    /// Bound checks, both sides always present.
    pub bound_checks: Vec<BoundCheckFile>,
    /// Mean-field mode concentration.
    pub mode_mass: ModeMassFile,
    /// Run provenance.
    pub metadata: EvalMetadataFile,
}

impl EvalReportFile {
    /// Snapshot of an in-memory report.
    pub fn from_report(report: &EvalReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kl_by_method: KlByMethodFile {
                bayes: report.kl_by_method.bayes,
                map: report.kl_by_method.map,
                mfvi: report.kl_by_method.mfvi,
                bayesdark: report.kl_by_method.bayesdark,
                vp: report.kl_by_method.vp,
                uncondvp: report.kl_by_method.uncond_vp,
            },
            bound_checks: report
                .bound_checks
                .iter()
                .map(|c| BoundCheckFile {
                    name: c.name.to_owned(),
                    lhs: c.lhs,
                    rhs: c.rhs,
                    slack: c.slack,
                    pass: c.pass,
                })
                .collect(),
            mode_mass: ModeMassFile {
                mass_fraction: report.mode_mass.mass_fraction,
                cut_log_density: report.mode_mass.cut_log_density,
                cell_count: report.mode_mass.cell_count,
            },
            metadata: EvalMetadataFile {
                dataset_seed: report.metadata.dataset_seed,
                grid_resolution: [
                    report.metadata.grid_resolution.0,
                    report.metadata.grid_resolution.1,
                ],
                eval_seed: report.metadata.eval_seed,
                n_mc: report.metadata.n_mc,
                gh_order: report.metadata.gh_order,
            },
        }
    }

    /// Flat CSV companion (`method,expected_kl_nats`), methods in
    /// canonical order.
    pub fn to_csv(&self) -> String {
        use crate::jsonfmt::f64_cell;
        let k = &self.kl_by_method;
        let mut out = String::from("method,expected_kl_nats\n");
        for (name, value) in [
            ("bayes", k.bayes),
            ("map", k.map),
            ("mfvi", k.mfvi),
            ("bayesdark", k.bayesdark),
            ("vp", k.vp),
            ("uncondvp", k.uncondvp),
        ] {
            out.push_str(name);
            out.push(',');
            out.push_str(&f64_cell(value));
            out.push('\n');
        }
        out
    }
}

/// A mode-mass report reconstructed from its file form (for tooling that
/// post-processes reports).
impl ModeMassFile {
    /// The in-memory report this file records.
    pub fn to_report(self) -> ModeMassReport {
        ModeMassReport {
            mass_fraction: self.mass_fraction,
            cut_log_density: self.cut_log_density,
            cell_count: self.cell_count,
        }
    }
}
