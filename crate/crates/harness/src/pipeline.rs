//! The simulate / density / compare steps.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wf_core::densities::{model_density, DensityModel, GridDensity};
use wf_core::io;
use wf_core::kde::{lepski_select, BetaKernelEstimate};
use wf_core::metrics::{hellinger, DistanceRecord};
use wf_core::seed::derive_seed;
use wf_core::wfsim::{simulate_ensemble, SimulationParams, TrajectoryEnsemble};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RESOLVED_CONFIG: &str = "resolved_config.json";

const ENSEMBLE_LABEL: u64 = 0x656e_7365_6d62;
const BRIDGE_LABEL: u64 = 0x6272_6964_6765;

/// Where a run came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            code_version: VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: String,
    /// Relative to the output directory.
    pub path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub provenance: Provenance,
    pub outputs: Vec<ManifestEntry>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir.display().to_string(), e))
}

fn relative(root: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(root).unwrap_or(path).to_path_buf()
}

/// Validates the configuration and writes the resolved copy. Every command
/// calls this before doing any work.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_json() + "\n")
        .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
    Ok(path)
}

pub fn ensemble_seed(master: u64, x0: f64) -> u64 {
    derive_seed(derive_seed(master, ENSEMBLE_LABEL), x0.to_bits())
}

pub fn bridge_seed(master: u64) -> u64 {
    derive_seed(master, BRIDGE_LABEL)
}

pub fn ensemble_path(cfg: &ExperimentConfig, x0: f64) -> PathBuf {
    cfg.output_dir
        .join("ensembles")
        .join(format!("x0_{x0:.4}.bin"))
}

fn simulation_params(cfg: &ExperimentConfig, x0: f64) -> SimulationParams {
    SimulationParams {
        two_n: cfg.protocol.two_n,
        n_gen: cfg.protocol.n_gen,
        x0,
        n_traj: cfg.protocol.n_traj,
        seed: ensemble_seed(cfg.seed, x0),
    }
}

fn write_manifest(cfg: &ExperimentConfig, manifest: &Manifest) -> Result<()> {
    let path = cfg
        .output_dir
        .join(format!("manifest_{}.json", manifest.command));
    io::write_json(&path, manifest)?;
    Ok(())
}

/// Simulates one ensemble per starting frequency.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Manifest> {
    prepare(cfg)?;
    let mut outputs = Vec::new();
    for &x0 in &cfg.protocol.x0 {
        let ens = simulate_ensemble(simulation_params(cfg, x0))?;
        let path = ensemble_path(cfg, x0);
        io::write_ensemble(&path, &ens)?;
        outputs.push(ManifestEntry {
            kind: "ensemble".into(),
            path: relative(&cfg.output_dir, &path),
            x0: Some(x0),
        });
        if cfg.protocol.export_csv {
            let csv = path.with_extension("csv");
            io::write_ensemble_csv(&csv, &ens)?;
            outputs.push(ManifestEntry {
                kind: "ensemble-csv".into(),
                path: relative(&cfg.output_dir, &csv),
                x0: Some(x0),
            });
        }
        log::info!("simulated x0 = {x0}: {} trajectories", ens.n_traj);
    }
    let manifest = Manifest {
        command: "simulate".into(),
        provenance: Provenance::of(cfg),
        outputs,
    };
    write_manifest(cfg, &manifest)?;
    Ok(manifest)
}

/// Reads the stored ensemble for `x0` when it matches the configuration,
/// otherwise simulates (and stores) it.
pub fn load_or_simulate(cfg: &ExperimentConfig, x0: f64) -> Result<TrajectoryEnsemble> {
    let params = simulation_params(cfg, x0);
    let path = ensemble_path(cfg, x0);
    if let Ok(ens) = io::read_ensemble(&path) {
        if ens.two_n == params.two_n
            && ens.n_gen == params.n_gen
            && ens.x0 == x0
            && ens.n_traj == params.n_traj
            && ens.seed == params.seed
        {
            return Ok(ens);
        }
    }
    let ens = simulate_ensemble(params)?;
    io::write_ensemble(&path, &ens)?;
    Ok(ens)
}

/// Stored ensemble for `x0`; errors when it is absent or stale.
pub fn load_ensemble(cfg: &ExperimentConfig, x0: f64) -> Result<TrajectoryEnsemble> {
    let path = ensemble_path(cfg, x0);
    if !path.exists() {
        return Err(HarnessError::MissingInput(format!(
            "{} (run `simulate` first)",
            path.display()
        )));
    }
    let ens = io::read_ensemble(&path)?;
    if ens.seed != ensemble_seed(cfg.seed, x0) || ens.n_traj != cfg.protocol.n_traj {
        return Err(HarnessError::MissingInput(format!(
            "{} was produced by a different configuration",
            path.display()
        )));
    }
    Ok(ens)
}

/// `ExactMC` requested by name takes its Monte Carlo settings from `mc`;
/// a zero seed in any `ExactMC` entry is replaced by one derived from the
/// master seed.
pub fn resolve_model(model: &DensityModel, cfg: &ExperimentConfig, by_name: bool) -> DensityModel {
    match *model {
        DensityModel::ExactMc {
            n_paths,
            k_steps,
            seed,
        } => {
            let (n_paths, k_steps) = if by_name {
                (cfg.mc.n_paths, cfg.mc.k_steps)
            } else {
                (n_paths, k_steps)
            };
            DensityModel::ExactMc {
                n_paths,
                k_steps,
                seed: if seed == 0 {
                    bridge_seed(cfg.seed)
                } else {
                    seed
                },
            }
        }
        other => other,
    }
}

fn fmt_key(v: f64) -> String {
    format!("{v:.6}")
}

pub fn density_path(cfg: &ExperimentConfig, model: &DensityModel, x0: f64, t: f64) -> PathBuf {
    cfg.output_dir.join("densities").join(format!(
        "{}_x0_{}_t_{}.csv",
        model.name(),
        fmt_key(x0),
        fmt_key(t)
    ))
}

/// Evaluates and normalizes one model and writes it as CSV + sidecar.
pub fn cmd_density(
    cfg: &ExperimentConfig,
    model: &DensityModel,
    x0: f64,
    t: f64,
    out: Option<&Path>,
) -> Result<(PathBuf, GridDensity)> {
    prepare(cfg)?;
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(HarnessError::Config(format!("x0: {x0} is outside (0, 1)")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(HarnessError::Config(format!("t: {t} must be positive")));
    }
    let model = resolve_model(model, cfg, true);
    let density = model_density(&model, &cfg.spec, x0, t, &cfg.quadrature)?;
    let path = out.map_or_else(|| density_path(cfg, &model, x0, t), Path::to_path_buf);
    io::write_grid_density(&path, &density)?;
    Ok((path, density))
}

/// A model that could not be evaluated for one `(x0, t)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub x0: f64,
    pub t: f64,
    pub model: String,
    pub error: String,
}

/// Reference-estimate diagnostics for one `(x0, t)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub x0: f64,
    pub t: f64,
    pub generation: usize,
    pub fraction_lost: f64,
    pub fraction_fixed: f64,
    pub b: f64,
    pub b_fallback: bool,
    pub ade_mass: f64,
    /// `H(ADE, ADE)`, a control that must be zero.
    pub control_hellinger: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub models: Vec<String>,
    pub records: Vec<DistanceRecord>,
    pub failures: Vec<CellFailure>,
    pub cells: Vec<CellSummary>,
}

impl ComparisonReport {
    pub fn expected_cells(&self) -> usize {
        self.cells.len() * self.models.len()
    }
}

/// Everything computed for one `(x0, t)` cell.
pub struct CellResult {
    pub summary: CellSummary,
    pub estimate: BetaKernelEstimate,
    pub records: Vec<DistanceRecord>,
    pub failures: Vec<CellFailure>,
}

/// Fits the reference estimate to the time-`t` sample and measures every
/// configured model against it.
pub fn compare_cell(
    cfg: &ExperimentConfig,
    ens: &TrajectoryEnsemble,
    t: f64,
) -> Result<CellResult> {
    let x0 = ens.x0;
    let generation = ens.generation_at(t)?;
    let sample = ens.frequencies_at_generation(generation)?;
    let (lost, fixed) = ens.fixation_stats(t)?;
    let estimate = lepski_select(&sample, &cfg.kde)?;
    let ade = estimate.to_grid_density()?;
    let control = hellinger(&ade, &ade)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for m in &cfg.models {
        let model = resolve_model(m, cfg, false);
        let outcome = model_density(&model, &cfg.spec, x0, t, &cfg.quadrature)
            .and_then(|d| DistanceRecord::compute(x0, t, model.name(), &ade, &d));
        match outcome {
            Ok(r) if r.hellinger.is_finite() && r.l2.is_finite() => records.push(r),
            Ok(r) => failures.push(CellFailure {
                x0,
                t,
                model: model.name().into(),
                error: format!("non-finite distance (H = {}, L2 = {})", r.hellinger, r.l2),
            }),
            Err(e) => failures.push(CellFailure {
                x0,
                t,
                model: model.name().into(),
                error: e.to_string(),
            }),
        }
    }
    Ok(CellResult {
        summary: CellSummary {
            x0,
            t,
            generation,
            fraction_lost: lost,
            fraction_fixed: fixed,
            b: estimate.b,
            b_fallback: estimate.fallback,
            ade_mass: estimate.integral(),
            control_hellinger: control,
        },
        estimate,
        records,
        failures,
    })
}

pub fn compare_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("compare")
}

/// Runs every `(x0, t)` cell and writes the distance table, both heatmap
/// tables and the JSON report. Cell failures are recorded, not fatal.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    prepare(cfg)?;
    let ensembles = cfg
        .protocol
        .x0
        .iter()
        .map(|&x0| load_or_simulate(cfg, x0))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, f64)> = (0..ensembles.len())
        .flat_map(|i| cfg.t.iter().map(move |&t| (i, t)))
        .collect();
    let results: Vec<std::result::Result<CellResult, CellFailure>> = cells
        .par_iter()
        .map(|&(i, t)| {
            compare_cell(cfg, &ensembles[i], t).map_err(|e| CellFailure {
                x0: ensembles[i].x0,
                t,
                model: "*".into(),
                error: e.to_string(),
            })
        })
        .collect();

    let mut report = ComparisonReport {
        schema_version: io::SCHEMA_VERSION,
        provenance: Provenance::of(cfg),
        models: cfg.models.iter().map(|m| m.name().to_string()).collect(),
        records: Vec::new(),
        failures: Vec::new(),
        cells: Vec::new(),
    };
    for r in results {
        match r {
            Ok(cell) => {
                report.records.extend(cell.records);
                report.failures.extend(cell.failures);
                report.cells.push(cell.summary);
            }
            Err(f) => {
                for m in &report.models {
                    report.failures.push(CellFailure {
                        model: m.clone(),
                        ..f.clone()
                    });
                }
            }
        }
    }
    write_report(cfg, &report)?;
    Ok(report)
}

pub fn write_report(cfg: &ExperimentConfig, report: &ComparisonReport) -> Result<()> {
    let dir = compare_dir(cfg);
    create_dir(&dir)?;
    io::write_distance_records(&dir.join("distances.csv"), &report.records)?;
    write_heatmap(
        &dir.join("heatmap_hellinger.csv"),
        "neg_log10_hellinger",
        &report.records,
        |r| -r.hellinger.log10(),
    )?;
    write_heatmap(
        &dir.join("heatmap_l2.csv"),
        "log10_l2",
        &report.records,
        |r| r.l2.log10(),
    )?;
    io::write_json(&dir.join("report.json"), report)?;
    Ok(())
}

fn write_heatmap(
    path: &Path,
    column: &str,
    records: &[DistanceRecord],
    value: impl Fn(&DistanceRecord) -> f64,
) -> Result<()> {
    let mut text = format!("{}\nx0,t,model,{column}\n", io::SCHEMA_LINE);
    for r in records {
        text.push_str(&format!("{},{},{},{:e}\n", r.x0, r.t, r.model, value(r)));
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path.display().to_string(), e))
}

/// Turns a report into the command's result: partial failure when some
/// cells failed, numeric failure when all did.
pub fn report_status(report: &ComparisonReport) -> Result<()> {
    let total = report
        .expected_cells()
        .max(report.records.len() + report.failures.len());
    match report.failures.len() {
        0 => Ok(()),
        n if report.records.is_empty() => Err(HarnessError::Core(wf_core::Error::McDegenerate(
            format!("all {n} comparison cells failed"),
        ))),
        n => Err(HarnessError::Partial { failed: n, total }),
    }
}
