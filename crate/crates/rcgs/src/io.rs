//! On-disk formats: CSV for plot-ready tables, little-endian float64 binary
//! bundles for bit-exact round-trips, JSON for reports, and the output-
//! directory manifest with checksums.

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::reservoir::{Reservoir, ReservoirParams};
use crate::search::CellResult;
use crate::systems::Trajectory;
use crate::training::{FeatureSpec, Readout, TrainingDiagnostics};
use ndarray::Array2;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const FORMAT_VERSION: u32 = 1;
pub const SWEEP_SCHEMA: &str = "rcgs.sweep.v1";
pub const GS_SCAN_SCHEMA: &str = "rcgs.gs-scan.v1";

fn write_f64s<W: Write>(w: &mut W, vals: impl Iterator<Item = f64>) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_i64s<W: Write>(w: &mut W, vals: impl Iterator<Item = i64>) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn read_i64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<i64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(fs::File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

// ---------------------------------------------------------------------------
// Trajectory: CSV and binary bundle.
// ---------------------------------------------------------------------------

/// CSV with header t,u0,u1,...; floats in shortest round-trip form.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "t")?;
    for j in 0..traj.dim() {
        write!(w, ",u{j}")?;
    }
    writeln!(w)?;
    for k in 0..traj.len() {
        write!(w, "{}", traj.time_at(k))?;
        for j in 0..traj.dim() {
            write!(w, ",{}", traj.states[[k, j]])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryMeta {
    format_version: u32,
    endianness: String,
    dim: usize,
    rows: usize,
    dt: f64,
    t0: f64,
}

/// Directory bundle: meta.json + states.bin (row-major float64 LE).
pub fn write_trajectory_bundle(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = TrajectoryMeta {
        format_version: FORMAT_VERSION,
        endianness: "little".into(),
        dim: traj.dim(),
        rows: traj.len(),
        dt: traj.dt,
        t0: traj.t0,
    };
    write_json(&dir.join("meta.json"), &meta)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("states.bin"))?);
    write_f64s(&mut w, traj.states.iter().cloned())?;
    Ok(())
}

pub fn read_trajectory_bundle(dir: &Path) -> Result<Trajectory> {
    let meta: TrajectoryMeta = read_json(&dir.join("meta.json"))?;
    if meta.endianness != "little" {
        return Err(Error::invalid(format!("unsupported endianness {:?}", meta.endianness)));
    }
    let mut r = BufReader::new(fs::File::open(dir.join("states.bin"))?);
    let vals = read_f64s(&mut r, meta.rows * meta.dim)?;
    let states = Array2::from_shape_vec((meta.rows, meta.dim), vals)
        .map_err(|e| Error::invalid(format!("states.bin shape mismatch: {e}")))?;
    Trajectory::new(meta.dt, meta.t0, states)
}

// ---------------------------------------------------------------------------
// Reservoir bundle.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReservoirMeta {
    format_version: u32,
    endianness: String,
    params: ReservoirParams,
    nnz: usize,
}

/// Directory bundle: meta.json + adjacency.bin (row indices, column indices
/// as int64, then values as float64, all little-endian) + input_matrix.bin
/// (row-major float64). Round-trips bit-exactly.
pub fn write_reservoir_bundle(dir: &Path, res: &Reservoir) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = ReservoirMeta {
        format_version: FORMAT_VERSION,
        endianness: "little".into(),
        params: res.params.clone(),
        nnz: res.adjacency.nnz(),
    };
    write_json(&dir.join("meta.json"), &meta)?;

    let mut w = BufWriter::new(fs::File::create(dir.join("adjacency.bin"))?);
    write_i64s(&mut w, res.adjacency.rows.iter().map(|&v| v as i64))?;
    write_i64s(&mut w, res.adjacency.cols.iter().map(|&v| v as i64))?;
    write_f64s(&mut w, res.adjacency.vals.iter().cloned())?;
    drop(w);

    let mut w = BufWriter::new(fs::File::create(dir.join("input_matrix.bin"))?);
    write_f64s(&mut w, res.input_matrix.iter().cloned())?;
    Ok(())
}

pub fn read_reservoir_bundle(dir: &Path) -> Result<Reservoir> {
    let meta: ReservoirMeta = read_json(&dir.join("meta.json"))?;
    if meta.endianness != "little" {
        return Err(Error::invalid(format!("unsupported endianness {:?}", meta.endianness)));
    }
    let n = meta.params.n_nodes;
    let d = meta.params.input_dim;

    let mut r = BufReader::new(fs::File::open(dir.join("adjacency.bin"))?);
    let rows = read_i64s(&mut r, meta.nnz)?;
    let cols = read_i64s(&mut r, meta.nnz)?;
    let vals = read_f64s(&mut r, meta.nnz)?;
    let mut adjacency = SparseMatrix::new(n, n);
    for i in 0..meta.nnz {
        let (row, col) = (rows[i], cols[i]);
        if row < 0 || col < 0 || row as usize >= n || col as usize >= n {
            return Err(Error::invalid(format!("adjacency index ({row}, {col}) out of range")));
        }
        adjacency.push(row as usize, col as usize, vals[i]);
    }

    let mut r = BufReader::new(fs::File::open(dir.join("input_matrix.bin"))?);
    let w_vals = read_f64s(&mut r, n * d)?;
    let input_matrix = Array2::from_shape_vec((n, d), w_vals)
        .map_err(|e| Error::invalid(format!("input_matrix.bin shape mismatch: {e}")))?;

    Ok(Reservoir { params: meta.params, adjacency, input_matrix })
}

// ---------------------------------------------------------------------------
// Readout.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReadoutMeta {
    format_version: u32,
    endianness: String,
    spec: FeatureSpec,
    ridge_beta: f64,
    output_dim: usize,
    feature_dim: usize,
    diagnostics: TrainingDiagnostics,
}

/// readout.json + wout.bin (row-major float64 LE) inside `dir`.
pub fn write_readout(dir: &Path, readout: &Readout) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = ReadoutMeta {
        format_version: FORMAT_VERSION,
        endianness: "little".into(),
        spec: readout.spec,
        ridge_beta: readout.ridge_beta,
        output_dim: readout.output_dim(),
        feature_dim: readout.feature_dim(),
        diagnostics: readout.diagnostics.clone(),
    };
    write_json(&dir.join("readout.json"), &meta)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("wout.bin"))?);
    write_f64s(&mut w, readout.weights.iter().cloned())?;
    Ok(())
}

pub fn read_readout(dir: &Path) -> Result<Readout> {
    let meta: ReadoutMeta = read_json(&dir.join("readout.json"))?;
    if meta.endianness != "little" {
        return Err(Error::invalid(format!("unsupported endianness {:?}", meta.endianness)));
    }
    let mut r = BufReader::new(fs::File::open(dir.join("wout.bin"))?);
    let vals = read_f64s(&mut r, meta.output_dim * meta.feature_dim)?;
    let weights = Array2::from_shape_vec((meta.output_dim, meta.feature_dim), vals)
        .map_err(|e| Error::invalid(format!("wout.bin shape mismatch: {e}")))?;
    let mut readout = Readout::from_weights(meta.spec, weights, meta.ridge_beta);
    readout.diagnostics = meta.diagnostics;
    Ok(readout)
}

// ---------------------------------------------------------------------------
// Plot-ready CSV tables.
// ---------------------------------------------------------------------------

/// GS scan: sr,pnz,gamma,sigma,pass_fraction,mean_cond_le,trials.
pub fn write_gs_scan_csv(path: &Path, cells: &[crate::gs::GsCellSummary]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "sr,pnz,gamma,sigma,pass_fraction,mean_cond_le,trials")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            c.spectral_radius, c.pnz, c.gamma, c.sigma, c.pass_fraction, c.mean_conditional_le, c.trials
        )?;
    }
    Ok(())
}

/// Scatter pairs (chi(r_A), chi(r_B)) from an auxiliary test.
pub fn write_scatter_csv(path: &Path, pairs: &[(f64, f64)]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "chi_a,chi_b")?;
    for (a, b) in pairs {
        writeln!(w, "{a},{b}")?;
    }
    Ok(())
}

/// Per-start forecast metrics: start_index,t_start,valid_time_lyap.
pub fn write_metrics_csv(path: &Path, metrics: &crate::evaluation::ForecastMetrics) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "start_index,t_start,valid_time_lyap")?;
    for (i, (t, v)) in metrics.start_times.iter().zip(&metrics.per_start_valid_time).enumerate() {
        writeln!(w, "{i},{t},{v}")?;
    }
    Ok(())
}

/// Sweep results, one row per (cell, trial); deterministic fields only
/// (measured wall-clock lives in summary.json).
pub fn write_sweep_results_csv(path: &Path, results: &[CellResult]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "sr,pnz,gamma,sigma,trial,seed,gs_converged,gs_diverged,gs_final_distance,\
         gs_cond_le,trained,mean_valid_time,std_valid_time,n_starts,rc_lambda1,\
         leading_match,tail_negative,error"
    )?;
    for r in results {
        let (gs_c, gs_d, gs_f, gs_le) = match &r.gs {
            Some(g) => (
                g.converged.to_string(),
                g.diverged.to_string(),
                g.final_distance.to_string(),
                g.conditional_le.map(|v| v.to_string()).unwrap_or_default(),
            ),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        let (mvt, svt, ns) = match &r.metrics {
            Some(m) => (
                m.mean_valid_time.to_string(),
                m.std_valid_time.to_string(),
                m.n_starts.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        let (rc_l1, lead, tail) = match &r.spectrum {
            Some(s) => (
                s.rc_spectrum.exponents[0].to_string(),
                s.leading_match.to_string(),
                s.tail_negative.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        let error = r.error.as_deref().unwrap_or("").replace(',', ";");
        writeln!(
            w,
            "{},{},{},{},{},{},{gs_c},{gs_d},{gs_f},{gs_le},{},{mvt},{svt},{ns},{rc_l1},{lead},{tail},{error}",
            r.cell.spectral_radius,
            r.cell.pnz,
            r.cell.gamma,
            r.cell.sigma,
            r.trial,
            r.reservoir_seed,
            r.trained,
        )?;
    }
    Ok(())
}

/// SR-sweep panel data: skill, leading exponent, and the smaller exponents.
pub fn write_sr_sweep_csv(path: &Path, points: &[crate::search::SrSweepPoint]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let k = points.iter().map(|p| p.rc_exponents.len()).max().unwrap_or(0);
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "sr,mean_valid_time,std_valid_time,driver_lambda1,trials,failures")?;
    for i in 0..k {
        write!(w, ",rc_lambda{}", i + 1)?;
    }
    writeln!(w)?;
    for p in points {
        write!(
            w,
            "{},{},{},{},{},{}",
            p.spectral_radius, p.mean_valid_time, p.std_valid_time, p.driver_lambda1, p.trials, p.failures
        )?;
        for i in 0..k {
            match p.rc_exponents.get(i) {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Output-directory manifest.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Checksums of every file in the output directory (manifest excluded),
    /// sorted by path: identical configs must produce identical checksums.
    pub files: Vec<ManifestEntry>,
    /// Wall-clock provenance; never feeds back into any computation.
    pub created_unix_seconds: u64,
    pub host: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher)?;
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Rescan `dir` and write manifest.json with a checksum per file.
pub fn write_manifest(dir: &Path) -> Result<Manifest> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().map(|n| n != "manifest.json").unwrap_or(true) {
                let rel = path
                    .strip_prefix(dir)
                    .map_err(|e| Error::invalid(format!("manifest path error: {e}")))?
                    .to_string_lossy()
                    .into_owned();
                files.push(ManifestEntry {
                    sha256: sha256_file(&path)?,
                    bytes: fs::metadata(&path)?.len(),
                    path: rel,
                });
            }
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        files,
        created_unix_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        host: std::env::var("HOSTNAME").unwrap_or_else(|_| "unknown".into()),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// The file list and checksums of a manifest, for comparing two runs.
pub fn manifest_checksums(manifest: &Manifest) -> Vec<(String, String)> {
    manifest.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
}

pub fn require_artifact(path: &Path, needed_command: &str) -> Result<PathBuf> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.display().to_string(),
            needed_command: needed_command.to_string(),
        });
    }
    Ok(path.to_path_buf())
}
