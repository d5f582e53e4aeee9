//! File formats: CSV tables headed by a schema line, JSON sidecars, and a
//! compact binary container for trajectory ensembles.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::densities::{DensityModel, DensityParams, GridDensity};
use crate::error::{Error, Result};
use crate::kde::{BetaKernelEstimate, LepskiRow};
use crate::metrics::DistanceRecord;
use crate::wfsim::TrajectoryEnsemble;

pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA_LINE: &str = "# schema-version: 1";
/// Half-width multiplier of the reported Monte Carlo band.
pub const CI_Z: f64 = 1.96;

const ENSEMBLE_MAGIC: &[u8; 8] = b"WFENSMBL";
const ENSEMBLE_VERSION: u32 = 1;

/// The JSON file written next to a CSV, `name.csv` -> `name.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(
        path,
    )?))?)
}

/// Reads a schema-headed CSV into its header and numeric-or-text rows.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != SCHEMA_LINE {
        return Err(Error::Format(format!(
            "{}: expected '{SCHEMA_LINE}', found '{first}'",
            path.display()
        )));
    }
    let header: Vec<String> = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format(format!("{}: missing header", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "{}: row has {} fields, header has {}",
                path.display(),
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Format(format!("'{s}' is not a number")))
}

/// Metadata stored next to a grid density CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensityMeta {
    pub schema_version: u32,
    pub label: String,
    pub model: Option<DensityModel>,
    pub params: Option<DensityParams>,
    pub norm_constant: f64,
    pub normalized: bool,
    pub n_points: usize,
    pub ci_z: Option<f64>,
}

/// Writes `x,density` (plus `std_error,lower,upper` when standard errors
/// exist) and a JSON sidecar.
pub fn write_grid_density(path: &Path, d: &GridDensity) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{SCHEMA_LINE}")?;
    match &d.std_error {
        Some(se) => {
            writeln!(w, "x,density,std_error,lower,upper")?;
            for ((x, v), s) in d.grid.iter().zip(&d.values).zip(se) {
                let lo = (v - CI_Z * s).max(0.0);
                writeln!(w, "{x:e},{v:e},{s:e},{lo:e},{:e}", v + CI_Z * s)?;
            }
        }
        None => {
            writeln!(w, "x,density")?;
            for (x, v) in d.grid.iter().zip(&d.values) {
                writeln!(w, "{x:e},{v:e}")?;
            }
        }
    }
    w.flush()?;
    let meta = GridDensityMeta {
        schema_version: SCHEMA_VERSION,
        label: d.label(),
        model: d.model,
        params: d.params,
        norm_constant: d.norm_constant,
        normalized: d.normalized,
        n_points: d.grid.len(),
        ci_z: d.std_error.as_ref().map(|_| CI_Z),
    };
    write_json(&sidecar_path(path), &meta)
}

/// Reads a grid density CSV; the sidecar is used when present.
pub fn read_grid_density(path: &Path) -> Result<GridDensity> {
    let (header, rows) = read_csv(path)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let (ix, iv) = match (col("x"), col("density")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Format(format!(
                "{}: needs x and density columns",
                path.display()
            )))
        }
    };
    let mut grid = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    let mut se = col("std_error").map(|_| Vec::with_capacity(rows.len()));
    for row in &rows {
        grid.push(parse_f64(&row[ix])?);
        values.push(parse_f64(&row[iv])?);
        if let (Some(v), Some(i)) = (se.as_mut(), col("std_error")) {
            v.push(parse_f64(&row[i])?);
        }
    }
    let mut d = GridDensity::from_values(grid, values)?;
    d.std_error = se;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: GridDensityMeta = read_json(&side)?;
        d.model = meta.model;
        d.params = meta.params;
        d.norm_constant = meta.norm_constant;
        d.normalized = meta.normalized;
    }
    Ok(d)
}

/// Selection diagnostics stored next to a KDE CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeMeta {
    pub schema_version: u32,
    pub label: String,
    pub sample_size: usize,
    pub b: f64,
    pub b_grid: Vec<f64>,
    pub selected_index: usize,
    pub fallback: bool,
    pub table: Vec<LepskiRow>,
    pub integral: f64,
}

pub fn write_kde_estimate(path: &Path, e: &BetaKernelEstimate) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{SCHEMA_LINE}")?;
    writeln!(w, "x,density")?;
    for (x, v) in e.grid.iter().zip(&e.values) {
        writeln!(w, "{x:e},{v:e}")?;
    }
    w.flush()?;
    let meta = KdeMeta {
        schema_version: SCHEMA_VERSION,
        label: "ADE".into(),
        sample_size: e.sample_size,
        b: e.b,
        b_grid: e.b_grid.clone(),
        selected_index: e.selected_index,
        fallback: e.fallback,
        table: e.table.clone(),
        integral: e.integral(),
    };
    write_json(&sidecar_path(path), &meta)
}

/// Writes `x0,t,model,hellinger,l2`.
pub fn write_distance_records(path: &Path, records: &[DistanceRecord]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{SCHEMA_LINE}")?;
    writeln!(w, "x0,t,model,hellinger,l2")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{:e},{:e}",
            r.x0, r.t, r.model, r.hellinger, r.l2
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a distance CSV as `(x0, t, model, hellinger, l2)`.
pub fn read_distance_rows(path: &Path) -> Result<Vec<(f64, f64, String, f64, f64)>> {
    let (header, rows) = read_csv(path)?;
    if header != ["x0", "t", "model", "hellinger", "l2"] {
        return Err(Error::Format(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    rows.iter()
        .map(|r| {
            Ok((
                parse_f64(&r[0])?,
                parse_f64(&r[1])?,
                r[2].clone(),
                parse_f64(&r[3])?,
                parse_f64(&r[4])?,
            ))
        })
        .collect()
}

/// Metadata block of the binary ensemble format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleHeader {
    two_n: u32,
    n_gen: u32,
    x0: f64,
    start_count: u32,
    n_traj: usize,
    seed: u64,
}

/// Layout: magic, u32 version, u32 metadata length, JSON metadata, then
/// `n_traj * (n_gen + 1)` little-endian u16 counts, row-major.
pub fn write_ensemble(path: &Path, e: &TrajectoryEnsemble) -> Result<()> {
    let header = serde_json::to_vec(&EnsembleHeader {
        two_n: e.two_n,
        n_gen: e.n_gen,
        x0: e.x0,
        start_count: e.start_count,
        n_traj: e.n_traj,
        seed: e.seed,
    })?;
    let mut w = create(path)?;
    w.write_all(ENSEMBLE_MAGIC)?;
    w.write_all(&ENSEMBLE_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for c in &e.data {
        w.write_all(&c.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ensemble(path: &Path) -> Result<TrajectoryEnsemble> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != ENSEMBLE_MAGIC {
        return Err(bad("not an ensemble file"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let version = word(8);
    if version != ENSEMBLE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let meta_len = word(12) as usize;
    let body = 16 + meta_len;
    if bytes.len() < body {
        return Err(bad("truncated metadata"));
    }
    let h: EnsembleHeader = serde_json::from_slice(&bytes[16..body])?;
    let expected = h.n_traj * (h.n_gen as usize + 1);
    if bytes.len() != body + 2 * expected {
        return Err(bad("count block has the wrong length"));
    }
    let data: Vec<u16> = bytes[body..]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    if data.iter().any(|&c| c as u32 > h.two_n) {
        return Err(bad("count exceeds 2N"));
    }
    Ok(TrajectoryEnsemble {
        two_n: h.two_n,
        n_gen: h.n_gen,
        x0: h.x0,
        start_count: h.start_count,
        n_traj: h.n_traj,
        seed: h.seed,
        data,
    })
}

/// Long-format export `trajectory,generation,count`.
pub fn write_ensemble_csv(path: &Path, e: &TrajectoryEnsemble) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{SCHEMA_LINE}")?;
    writeln!(w, "trajectory,generation,count")?;
    for i in 0..e.n_traj {
        for (n, c) in e.trajectory(i).iter().enumerate() {
            writeln!(w, "{i},{n},{c}")?;
        }
    }
    w.flush()?;
    Ok(())
}
