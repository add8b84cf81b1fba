//! Oracle-grid construction and its on-disk form: a CSV of normalized
//! log posterior density over the cell lattice plus a JSON sidecar with
//! the layout and the log evidence.

use std::path::{Path, PathBuf};

use vpredict_core::exact::{log_joint_row, GridSpec, PosteriorGrid};
use vpredict_core::model::Dataset;

use crate::dto::{check_schema, parse_json, GridSidecarFile, GridSpecFile, SCHEMA_VERSION};
use crate::jsonfmt::f64_cell;
use crate::runtime::par_map_indexed;
use crate::CliError;

/// Exact CSV header of a grid file.
pub const GRID_CSV_HEADER: &str = "log_f,phi,log_density";

/// A converged grid together with its convergence record.
pub struct BuiltGrid {
    /// The accepted grid.
    pub grid: PosteriorGrid,
    /// Resolution doublings taken before the evidence stabilized.
    pub doublings: u32,
    /// Evidence change at the accepted convergence check (nats).
    pub evidence_delta: f64,
}

/// Builds one grid with rows dispatched across `threads` workers.
/// Row-major assembly by index keeps the result bit-identical to the
/// sequential build for every thread count.
pub fn build_grid_parallel(
    dataset: &Dataset,
    prior: &vpredict_core::model::PriorSpec,
    spec: &GridSpec,
    threads: usize,
) -> Result<PosteriorGrid, CliError> {
    let rows = par_map_indexed(spec.resolution.0, threads, |i| log_joint_row(dataset, prior, spec, i));
    let mut log_joint = Vec::with_capacity(spec.n_cells());
    for row in rows {
        log_joint.extend_from_slice(&row);
    }
    PosteriorGrid::from_log_joint(dataset.clone(), *prior, *spec, log_joint)
        .map_err(|e| CliError::data(format!("grid construction failed: {e:?}")))
}

/// Parallel version of the evidence-convergence loop: accepts a spec
/// once doubling both resolutions moves the log evidence by less than
/// `tolerance` nats, doubling up to twice before rejecting the window.
pub fn build_grid_converged_parallel(
    dataset: &Dataset,
    prior: &vpredict_core::model::PriorSpec,
    spec: &GridSpec,
    tolerance: f64,
    threads: usize,
) -> Result<BuiltGrid, CliError> {
    let mut candidate_spec = *spec;
    let mut candidate = build_grid_parallel(dataset, prior, &candidate_spec, threads)?;
    let mut delta = f64::INFINITY;
    for doublings in 0..=2u32 {
        let finer = build_grid_parallel(dataset, prior, &candidate_spec.doubled(), threads)?;
        delta = finer.log_evidence() - candidate.log_evidence();
        if delta.abs() < tolerance {
            return Ok(BuiltGrid { grid: candidate, doublings, evidence_delta: delta });
        }
        candidate_spec = candidate_spec.doubled();
        candidate = finer;
    }
    Err(CliError::data(format!(
        "grid evidence did not converge: last doubling moved it by {delta:.6} nats (tolerance {tolerance})"
    )))
}

/// Sidecar path convention: the CSV path with its extension replaced by
/// `meta.json` (`grid.csv` → `grid.meta.json`).
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Renders the grid CSV: header plus one `log_f,phi,log_density` row per
/// cell, row-major in log-frequency then phase, densities normalized by
/// the log evidence.
pub fn grid_to_csv(grid: &PosteriorGrid) -> String {
    let spec = grid.spec();
    let (n_lf, n_phi) = spec.resolution;
    let mut out = String::with_capacity(24 * 3 * n_lf * n_phi + 32);
    out.push_str(GRID_CSV_HEADER);
    out.push('\n');
    for i in 0..n_lf {
        for j in 0..n_phi {
            let center = spec.center(i, j);
            out.push_str(&f64_cell(center.log_f));
            out.push(',');
            out.push_str(&f64_cell(center.phi));
            out.push(',');
            out.push_str(&f64_cell(grid.log_posterior_density(i, j)));
            out.push('\n');
        }
    }
    out
}

/// Renders the sidecar for a built grid.
pub fn sidecar_for(built: &BuiltGrid) -> GridSidecarFile {
    GridSidecarFile {
        schema_version: SCHEMA_VERSION,
        spec: GridSpecFile::from_spec(built.grid.spec()),
        log_evidence: built.grid.log_evidence(),
        doublings: built.doublings,
        evidence_delta: built.evidence_delta,
    }
}

/// Reads a stored grid (CSV plus sidecar) back into a [`PosteriorGrid`],
/// recovering the unnormalized log joint as `log_density + log_evidence`.
/// The dataset must be the one the grid was built from; cell coordinates
/// are spot-checked against the sidecar's layout.
pub fn read_grid(
    csv_path: &Path,
    dataset: &Dataset,
    prior: &vpredict_core::model::PriorSpec,
) -> Result<PosteriorGrid, CliError> {
    let sidecar_text = crate::read_file(&sidecar_path(csv_path))?;
    let sidecar: GridSidecarFile = parse_json(&sidecar_text, "grid sidecar")?;
    check_schema(sidecar.schema_version, "grid sidecar")?;
    let spec = sidecar.spec.to_spec();

    let text = crate::read_file(csv_path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == GRID_CSV_HEADER => {}
        other => {
            return Err(CliError::data(format!(
                "grid CSV: expected header {GRID_CSV_HEADER:?}, found {other:?}"
            )))
        }
    }
    let n_cells = spec.resolution.0 * spec.resolution.1;
    let mut log_joint = Vec::with_capacity(n_cells);
    let mut coords_first: Option<(f64, f64)> = None;
    let mut coords_last: Option<(f64, f64)> = None;
    for (idx, line) in lines.enumerate() {
        let mut cells = line.split(',');
        let (Some(a), Some(b), Some(c), None) = (cells.next(), cells.next(), cells.next(), cells.next())
        else {
            return Err(CliError::data(format!("grid CSV: row {} is not three cells", idx + 2)));
        };
        let parse = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse::<f64>()
                .map_err(|e| CliError::data(format!("grid CSV: row {}: bad {what}: {e}", idx + 2)))
        };
        let log_f = parse(a, "log_f")?;
        let phi = parse(b, "phi")?;
        let log_density = parse(c, "log_density")?;
        if coords_first.is_none() {
            coords_first = Some((log_f, phi));
        }
        coords_last = Some((log_f, phi));
        log_joint.push(log_density + sidecar.log_evidence);
    }
    if log_joint.len() != n_cells {
        return Err(CliError::data(format!(
            "grid CSV: {} data rows but sidecar layout has {} cells",
            log_joint.len(),
            n_cells
        )));
    }
    // Spot-check the corner coordinates against the sidecar layout.
    let first = spec.center(0, 0);
    let last = spec.center(spec.resolution.0 - 1, spec.resolution.1 - 1);
    let agree = |got: Option<(f64, f64)>, want_lf: f64, want_phi: f64| {
        got.map(|(lf, phi)| (lf - want_lf).abs() < 1e-9 && (phi - want_phi).abs() < 1e-9)
            .unwrap_or(false)
    };
    if !agree(coords_first, first.log_f, first.phi) || !agree(coords_last, last.log_f, last.phi) {
        return Err(CliError::data(
            "grid CSV: cell coordinates disagree with the sidecar layout".to_owned(),
        ));
    }
    let grid = PosteriorGrid::from_log_joint(dataset.clone(), *prior, spec, log_joint)
        .map_err(|e| CliError::data(format!("grid CSV: invalid grid content: {e:?}")))?;
    // The densities were normalized by the sidecar evidence; recomputing
    // the evidence from the recovered joint must land on the same value.
    if (grid.log_evidence() - sidecar.log_evidence).abs() > 1e-9 {
        return Err(CliError::data(format!(
            "grid CSV: recovered evidence {:.12} disagrees with sidecar {:.12}",
            grid.log_evidence(),
            sidecar.log_evidence
        )));
    }
    Ok(grid)
}
