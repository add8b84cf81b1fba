//! Command-line driver for the sinusoid prediction benchmark: dataset
//! generation, exact-posterior grids, method training, evaluation
//! against the exact predictive, plot exports, and numerical
//! verification suites.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 data/schema error. Every command is deterministic: rerunning with
//! the same inputs rewrites byte-identical outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vpredict::dto::{
    fit_to_file, parse_json, DatasetFile, FitFile, LoadedFit, Method, TrainConfigFile,
};
use vpredict::jsonfmt::to_json_string;
use vpredict::suites::{self, CheckRow};
use vpredict::{export, gridio, read_file, runtime, write_file, CliError};

use vpredict_core::eval::{
    compare_methods_with_table, predictive_table_row, EvalConfig, EvalQuadrature, MethodFits,
    PredictiveTable,
};
use vpredict_core::exact::{GridSpec, PosteriorGrid};
use vpredict_core::methods::{
    train_bayesdark, train_map, train_mfvi, train_uncond_vp, train_vp, TrainConfig, VpFit,
};
use vpredict_core::model::{generate_dataset, Dataset, PriorSpec, SinusoidParams};

/// Default convergence tolerance (nats) for the grid evidence under
/// resolution doubling.
const GRID_TOLERANCE: f64 = 1e-3;

#[derive(Parser)]
#[command(
    name = "vpredict",
    version,
    about = "Exact and variational prediction on the two-parameter sinusoid benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a benchmark dataset and store it as JSON.
    GenData(GenDataArgs),
    /// Build the exact-posterior grid for a dataset (CSV + JSON sidecar).
    Grid(GridArgs),
    /// Train one method on a dataset and store the fit as JSON.
    Fit(FitArgs),
    /// Score stored fits against the exact predictive (JSON + CSV report).
    Eval(EvalArgs),
    /// Write plot-ready predictive curves, posterior grids, and markers.
    Export(ExportArgs),
    /// Run a numerical verification suite and report each check.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Seed for the data-generating streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of observations.
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Generating log-frequency.
    #[arg(long, default_value_t = 0.0)]
    true_log_f: f64,
    /// Generating phase.
    #[arg(long, default_value_t = 1.0)]
    true_phi: f64,
    /// Output dataset path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Input dataset path (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Output grid path (CSV; a `.meta.json` sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
    /// Evidence tolerance (nats) under resolution doubling.
    #[arg(long, default_value_t = GRID_TOLERANCE)]
    tolerance: f64,
}

#[derive(Args)]
struct FitArgs {
    /// Method to train: map, mfvi, bayesdark, vp, or uncondvp.
    #[arg(long)]
    method: String,
    /// Input dataset path (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Exact-posterior grid (required for bayesdark, unused otherwise).
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output fit path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional training-configuration file (JSON); explicit flags below
    /// override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optimizer steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Monte Carlo loss draws per step.
    #[arg(long)]
    mc_draws_per_step: Option<usize>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Gauss–Hermite order for inner expectations.
    #[arg(long)]
    gh_order: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Input dataset path (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Exact-posterior grid path (CSV with sidecar).
    #[arg(long)]
    grid: PathBuf,
    /// Fit files to score; all five methods must be present exactly once.
    #[arg(long = "fit", required = true)]
    fits: Vec<PathBuf>,
    /// Output report path (JSON; a flat CSV is written at the same path
    /// with extension `csv`).
    #[arg(long)]
    out: PathBuf,
    /// Monte Carlo draws per bound estimator.
    #[arg(long)]
    n_mc: Option<usize>,
    /// Seed of the evaluation streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Gauss–Hermite order for inner expectations.
    #[arg(long)]
    gh_order: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    /// Input dataset path (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Exact-posterior grid path (CSV with sidecar).
    #[arg(long)]
    grid: PathBuf,
    /// Fit files to export (each method at most once).
    #[arg(long = "fit")]
    fits: Vec<PathBuf>,
    /// Output directory for the CSV files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Gauss–Hermite order for the marginalized predictive curve.
    #[arg(long, default_value_t = 7)]
    gh_order: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite to run: candidates, gradients, bounds, or all.
    #[arg(long)]
    suite: String,
    /// Dataset to verify on (JSON); a default benchmark draw is used when
    /// absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Prebuilt exact-posterior grid (CSV with sidecar); built in memory
    /// when absent.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Variational-prediction fit (JSON); required by the bounds suite.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Seed of the verification streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo draws per bound estimator.
    #[arg(long, default_value_t = 2000)]
    n_mc: usize,
    /// Gauss–Hermite order for inner expectations.
    #[arg(long, default_value_t = 7)]
    gh_order: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Export(args) => cmd_export(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

// ---------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let file: DatasetFile = parse_json(&read_file(path)?, "dataset file")?;
    file.into_dataset()
}

fn load_fit(path: &Path) -> Result<LoadedFit, CliError> {
    let file: FitFile = parse_json(&read_file(path)?, "fit file")?;
    file.into_fit()
}

fn report_written(path: &Path, digest: &str) {
    println!("wrote {} sha256={digest}", path.display());
}

fn write_reported(path: &Path, content: &str) -> Result<(), CliError> {
    let digest = write_file(path, content)?;
    report_written(path, &digest);
    Ok(())
}

/// Builds the dense predictive table with rows evaluated in parallel
/// under the configured thread cap.
fn build_table_parallel(
    grid: &PosteriorGrid,
    quad: &EvalQuadrature,
    threads: usize,
) -> Result<PredictiveTable, CliError> {
    let rows = runtime::par_map_indexed(quad.x_nodes, threads, |i| {
        predictive_table_row(grid, quad, i)
    });
    let rows: Result<Vec<Vec<f64>>, _> = rows.into_iter().collect();
    let rows = rows.map_err(|e| CliError::data(format!("predictive table: {e}")))?;
    PredictiveTable::from_rows(quad, rows)
        .map_err(|e| CliError::data(format!("predictive table: {e}")))
}

/// Loads `--fit` files into per-method slots, rejecting duplicates.
fn load_fit_slots(paths: &[PathBuf]) -> Result<MethodFits, CliError> {
    let mut fits = MethodFits::default();
    for path in paths {
        let loaded = load_fit(path)?;
        let method = loaded.method();
        let occupied = match loaded {
            LoadedFit::Map(f) => fits.map.replace(f).is_some(),
            LoadedFit::Mfvi(f) => fits.mfvi.replace(f).is_some(),
            LoadedFit::BayesDark(f) => fits.bayesdark.replace(f).is_some(),
            LoadedFit::Vp(f) => fits.vp.replace(f).is_some(),
            LoadedFit::UncondVp(f) => fits.uncond_vp.replace(f).is_some(),
        };
        if occupied {
            return Err(CliError::usage(format!(
                "duplicate fit for method {} ({})",
                method.name(),
                path.display()
            )));
        }
    }
    Ok(fits)
}

// ---------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------

fn cmd_gen_data(args: GenDataArgs) -> Result<ExitCode, CliError> {
    if args.n == 0 {
        return Err(CliError::usage("n must be ≥ 1"));
    }
    let truth = SinusoidParams::new(args.true_log_f, args.true_phi);
    let dataset = generate_dataset(args.seed, args.n, truth)
        .map_err(|e| CliError::usage(format!("cannot generate dataset: {e}")))?;
    let file = DatasetFile::from_dataset(&dataset)?;
    let json = to_json_string(&file)
        .map_err(|e| CliError::data(format!("cannot serialize dataset: {e}")))?;
    write_reported(&args.out, &json)?;
    println!(
        "dataset: seed={} n={} true_log_f={} true_phi={}",
        args.seed, args.n, args.true_log_f, args.true_phi
    );
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------

fn cmd_grid(args: GridArgs) -> Result<ExitCode, CliError> {
    let dataset = load_dataset(&args.data)?;
    let prior = PriorSpec::default();
    let threads = runtime::thread_cap()?;
    let built = gridio::build_grid_converged_parallel(
        &dataset,
        &prior,
        &GridSpec::default(),
        args.tolerance,
        threads,
    )?;
    write_reported(&args.out, &gridio::grid_to_csv(&built.grid))?;
    let sidecar = gridio::sidecar_for(&built);
    let sidecar_json = to_json_string(&sidecar)
        .map_err(|e| CliError::data(format!("cannot serialize grid sidecar: {e}")))?;
    write_reported(&gridio::sidecar_path(&args.out), &sidecar_json)?;
    let (n_lf, n_phi) = built.grid.spec().resolution;
    println!(
        "grid: {n_lf}x{n_phi} cells, log_evidence={:.12}, doublings={}, evidence_delta={:.3e}",
        built.grid.log_evidence(),
        built.doublings,
        built.evidence_delta
    );
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------

fn cmd_fit(args: FitArgs) -> Result<ExitCode, CliError> {
    let method = Method::parse(&args.method).ok_or_else(|| {
        CliError::usage(format!(
            "invalid method {:?} (valid options: map, mfvi, bayesdark, vp, uncondvp)",
            args.method
        ))
    })?;
    let dataset = load_dataset(&args.data)?;
    let prior = PriorSpec::default();

    let mut cfg = TrainConfig::default();
    if let Some(config_path) = &args.config {
        let file: TrainConfigFile = parse_json(&read_file(config_path)?, "config file")?;
        cfg = file.apply(cfg)?;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(learning_rate) = args.learning_rate {
        cfg.learning_rate = learning_rate;
    }
    if let Some(mc) = args.mc_draws_per_step {
        cfg.mc_draws_per_step = mc;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(gh_order) = args.gh_order {
        cfg.gh_order = gh_order;
    }

    let train_err = |e: vpredict_core::methods::MethodsError| {
        CliError::data(format!("training failed: {e}"))
    };
    let fit = match method {
        Method::Map => LoadedFit::Map(train_map(&dataset, &prior, &cfg).map_err(train_err)?),
        Method::Mfvi => LoadedFit::Mfvi(train_mfvi(&dataset, &prior, &cfg).map_err(train_err)?),
        Method::BayesDark => {
            let grid_path = args.grid.as_ref().ok_or_else(|| {
                CliError::usage("method bayesdark requires --grid (its teacher is the exact posterior)")
            })?;
            let grid = gridio::read_grid(grid_path, &dataset, &prior)?;
            LoadedFit::BayesDark(train_bayesdark(&grid, &cfg).map_err(train_err)?)
        }
        Method::Vp => LoadedFit::Vp(train_vp(&dataset, &prior, &cfg).map_err(train_err)?),
        Method::UncondVp => {
            LoadedFit::UncondVp(train_uncond_vp(&dataset, &prior, &cfg).map_err(train_err)?)
        }
    };

    let file = fit_to_file(&fit, &cfg)?;
    let json =
        to_json_string(&file).map_err(|e| CliError::data(format!("cannot serialize fit: {e}")))?;
    write_reported(&args.out, &json)?;

    match &fit {
        LoadedFit::Map(f) => println!(
            "map: log_f_hat={:.6} phi_hat={:.6} objective={:.6} gradient_norm={:.3e}",
            f.params.log_f_hat, f.params.phi_hat, f.objective, f.gradient_norm
        ),
        LoadedFit::Mfvi(f) => println!(
            "mfvi: mu=({:.6}, {:.6}) sigma=({:.6}, {:.6}) elbo={:.6}",
            f.eta.mu[0],
            f.eta.mu[1],
            f.eta.sigma()[0],
            f.eta.sigma()[1],
            f.elbo
        ),
        LoadedFit::BayesDark(f) => println!(
            "bayesdark: log_f_hat={:.6} phi_hat={:.6} objective={:.6}",
            f.params.log_f_hat, f.params.phi_hat, f.objective
        ),
        LoadedFit::Vp(f) | LoadedFit::UncondVp(f) => {
            let s = &f.state;
            println!(
                "{}: log_f_hat={:.6} phi_hat={:.6} final_loss={:.6}",
                method.name(),
                s.predictive.log_f_hat,
                s.predictive.phi_hat,
                f.final_loss
            );
            println!(
                "  rate/temperature: lambda={:.6e} beta={:.6} (reference: lambda={} beta={})",
                s.aug_cfg.log_lambda.exp(),
                s.aug_cfg.log_beta.exp(),
                vpredict::dto::REFERENCE_LAMBDA,
                vpredict::dto::REFERENCE_BETA
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, CliError> {
    let dataset = load_dataset(&args.data)?;
    let prior = PriorSpec::default();
    let grid = gridio::read_grid(&args.grid, &dataset, &prior)?;
    let fits = load_fit_slots(&args.fits)?;

    let mut missing = Vec::new();
    if fits.map.is_none() {
        missing.push("map");
    }
    if fits.mfvi.is_none() {
        missing.push("mfvi");
    }
    if fits.bayesdark.is_none() {
        missing.push("bayesdark");
    }
    if fits.vp.is_none() {
        missing.push("vp");
    }
    if fits.uncond_vp.is_none() {
        missing.push("uncondvp");
    }
    if !missing.is_empty() {
        return Err(CliError::usage(format!(
            "evaluation needs one fit per method; missing: {}",
            missing.join(", ")
        )));
    }

    let defaults = EvalConfig::default();
    let cfg = EvalConfig {
        quadrature: EvalQuadrature::default(),
        n_mc: args.n_mc.unwrap_or(defaults.n_mc),
        seed: args.seed.unwrap_or(defaults.seed),
        gh_order: args.gh_order.unwrap_or(defaults.gh_order),
    };

    let threads = runtime::thread_cap()?;
    let table = build_table_parallel(&grid, &cfg.quadrature, threads)?;
    let report = compare_methods_with_table(&dataset, &grid, &fits, &cfg, &table)
        .map_err(|e| CliError::data(format!("evaluation failed: {e}")))?;

    let file = vpredict::dto::EvalReportFile::from_report(&report);
    let json = to_json_string(&file)
        .map_err(|e| CliError::data(format!("cannot serialize report: {e}")))?;
    write_reported(&args.out, &json)?;
    write_reported(&args.out.with_extension("csv"), &file.to_csv())?;

    println!("expected predictive KL (nats):");
    let k = &report.kl_by_method;
    for (name, value) in [
        ("bayes", k.bayes),
        ("map", k.map),
        ("mfvi", k.mfvi),
        ("bayesdark", k.bayesdark),
        ("vp", k.vp),
        ("uncondvp", k.uncond_vp),
    ] {
        println!("  {name:<9} {value:.6}");
    }
    println!(
        "mode mass: {:.4} of the mean-field fit's own mass in one super-level component ({} cells)",
        report.mode_mass.mass_fraction, report.mode_mass.cell_count
    );
    let rows: Vec<CheckRow> = report
        .bound_checks
        .iter()
        .map(|c| CheckRow {
            name: c.name.to_owned(),
            lhs: c.lhs,
            rhs: c.rhs,
            slack: c.slack,
            pass: c.pass,
        })
        .collect();
    print!("{}", suites::format_rows(&rows));
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------
// export
// ---------------------------------------------------------------------

fn cmd_export(args: ExportArgs) -> Result<ExitCode, CliError> {
    let dataset = load_dataset(&args.data)?;
    let prior = PriorSpec::default();
    let grid = gridio::read_grid(&args.grid, &dataset, &prior)?;
    let fits = load_fit_slots(&args.fits)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let threads = runtime::thread_cap()?;
    let dir = &args.out_dir;

    let bayes = export::bayes_curve(&grid, threads);
    write_reported(&dir.join("curve_bayes.csv"), &export::curve_to_csv(&bayes))?;
    write_reported(&dir.join("posterior_exact.csv"), &gridio::grid_to_csv(&grid))?;

    let mut markers: Vec<(&str, vpredict_core::methods::PredictiveParams)> = Vec::new();
    if let Some(f) = &fits.map {
        let curve = export::parametric_curve(&f.params);
        write_reported(&dir.join("curve_map.csv"), &export::curve_to_csv(&curve))?;
        markers.push(("map", f.params));
    }
    if let Some(f) = &fits.mfvi {
        let curve = export::mfvi_curve(&f.eta, args.gh_order)?;
        write_reported(&dir.join("curve_mfvi.csv"), &export::curve_to_csv(&curve))?;
        write_reported(
            &dir.join("posterior_mfvi.csv"),
            &export::gaussian_posterior_csv(&f.eta, grid.spec()),
        )?;
    }
    if let Some(f) = &fits.bayesdark {
        let curve = export::parametric_curve(&f.params);
        write_reported(&dir.join("curve_bayesdark.csv"), &export::curve_to_csv(&curve))?;
        markers.push(("bayesdark", f.params));
    }
    if let Some(f) = &fits.vp {
        let curve = export::parametric_curve(&f.state.predictive);
        write_reported(&dir.join("curve_vp.csv"), &export::curve_to_csv(&curve))?;
        write_reported(
            &dir.join("posterior_vp.csv"),
            &export::gaussian_posterior_csv(&f.state.eta, grid.spec()),
        )?;
        markers.push(("vp", f.state.predictive));
    }
    if let Some(f) = &fits.uncond_vp {
        let curve = export::parametric_curve(&f.state.predictive);
        write_reported(&dir.join("curve_uncondvp.csv"), &export::curve_to_csv(&curve))?;
        write_reported(
            &dir.join("posterior_uncondvp.csv"),
            &export::gaussian_posterior_csv(&f.state.eta, grid.spec()),
        )?;
        markers.push(("uncondvp", f.state.predictive));
    }
    write_reported(&dir.join("markers.csv"), &export::markers_csv(&markers))?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, CliError> {
    let known = ["candidates", "gradients", "bounds", "all"];
    if !known.contains(&args.suite.as_str()) {
        return Err(CliError::usage(format!(
            "invalid suite {:?} (valid options: candidates, bounds, gradients, all)",
            args.suite
        )));
    }
    let run_candidates = args.suite == "candidates" || args.suite == "all";
    let run_gradients = args.suite == "gradients" || args.suite == "all";
    let run_bounds = args.suite == "bounds" || args.suite == "all";

    let prior = PriorSpec::default();
    let dataset = match &args.data {
        Some(path) => load_dataset(path)?,
        None => generate_dataset(0, 8, SinusoidParams::new(0.0, 1.0))
            .map_err(|e| CliError::data(format!("cannot generate default dataset: {e}")))?,
    };

    let needs_grid = run_candidates || run_bounds;
    let grid = if needs_grid {
        Some(match &args.grid {
            Some(path) => gridio::read_grid(path, &dataset, &prior)?,
            None => {
                let threads = runtime::thread_cap()?;
                gridio::build_grid_converged_parallel(
                    &dataset,
                    &prior,
                    &GridSpec::default(),
                    GRID_TOLERANCE,
                    threads,
                )?
                .grid
            }
        })
    } else {
        None
    };

    let mut rows: Vec<CheckRow> = Vec::new();
    if run_candidates {
        rows.extend(suites::candidates_suite(grid.as_ref().expect("grid built"), args.seed)?);
    }
    if run_gradients {
        rows.extend(suites::gradients_suite(&dataset, &prior)?);
    }
    if run_bounds {
        let fit_path = args.fit.as_ref().ok_or_else(|| {
            CliError::usage("the bounds suite requires --fit with a variational-prediction fit")
        })?;
        let vp: VpFit = match load_fit(fit_path)? {
            LoadedFit::Vp(f) | LoadedFit::UncondVp(f) => f,
            other => {
                return Err(CliError::usage(format!(
                    "the bounds suite requires a variational-prediction fit (vp or uncondvp), got {}",
                    other.method().name()
                )))
            }
        };
        rows.extend(suites::bounds_suite(
            &dataset,
            grid.as_ref().expect("grid built"),
            &vp,
            args.n_mc,
            args.seed,
            args.gh_order,
        )?);
    }

    print!("{}", suites::format_rows(&rows));
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed == 0 {
        println!("all {} checks passed", rows.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{failed} of {} checks FAILED", rows.len());
        Ok(ExitCode::from(1))
    }
}
