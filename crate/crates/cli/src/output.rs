use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use pansatz::vqe::{SweepOutcome, VqeSettings};
use serde::Serialize;

/// Write through a temporary file in the target directory and rename it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// CSV with a header row; the header is written even with no rows.
pub fn to_csv<R: Serialize + Default>(rows: impl Iterator<Item = R>) -> Result<Vec<u8>> {
    let mut rows = rows.peekable();
    if rows.peek().is_none() {
        // serialize a dummy row to obtain the header, keep only the header line
        let mut probe = csv::Writer::from_writer(Vec::new());
        probe.serialize(R::default())?;
        let bytes = probe.into_inner()?;
        let header_end = bytes.iter().position(|&b| b == b'\n').map(|i| i + 1).unwrap_or(bytes.len());
        return Ok(bytes[..header_end].to_vec());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

#[derive(Debug, Default, Serialize)]
pub struct SweepRow {
    pub file: String,
    pub molecule: String,
    pub distance: Option<f64>,
    pub energy: Option<f64>,
    pub stderr: Option<f64>,
    pub fci: Option<f64>,
    pub abs_error: Option<f64>,
    pub converged: Option<bool>,
    pub within_band: Option<bool>,
    pub iterations: Option<usize>,
    pub evaluations: Option<usize>,
    pub pansatz_duration_dt: Option<u64>,
    pub gansatz_duration_dt: Option<u64>,
    pub pansatz_duration_ns: Option<f64>,
    pub gansatz_duration_ns: Option<f64>,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub error: String,
}

impl SweepRow {
    pub fn from_outcome(o: &SweepOutcome, template: &VqeSettings, hash: &str) -> Self {
        let file = file_name(o);
        match &o.result {
            Ok(r) => SweepRow {
                file,
                molecule: r.molecule.clone(),
                distance: Some(r.distance),
                energy: Some(r.energy),
                stderr: Some(r.stderr),
                fci: Some(r.fci),
                abs_error: Some(r.abs_error),
                converged: Some(r.converged),
                within_band: Some(r.within_band),
                iterations: Some(r.iterations),
                evaluations: Some(r.evaluations),
                pansatz_duration_dt: Some(r.durations.pansatz_dt),
                gansatz_duration_dt: Some(r.durations.gansatz_dt),
                pansatz_duration_ns: Some(r.durations.pansatz_ns),
                gansatz_duration_ns: Some(r.durations.gansatz_ns),
                seed: Some(r.seed),
                config_hash: hash.to_string(),
                error: String::new(),
            },
            Err(e) => SweepRow {
                file,
                seed: Some(template.seed),
                config_hash: hash.to_string(),
                error: e.clone(),
                ..SweepRow::default()
            },
        }
    }
}

#[derive(Debug, Default, Serialize)]
pub struct DurationRow {
    pub file: String,
    pub distance: Option<f64>,
    pub converged: Option<bool>,
    pub pansatz_duration_dt: Option<u64>,
    pub pansatz_duration_ns: Option<f64>,
    pub gansatz_duration_dt: Option<u64>,
    pub gansatz_duration_ns: Option<f64>,
    pub ratio: Option<f64>,
    pub error: String,
}

impl DurationRow {
    pub fn from_outcome(o: &SweepOutcome) -> Self {
        let file = file_name(o);
        match &o.result {
            Ok(r) => {
                let d = &r.durations;
                DurationRow {
                    file,
                    distance: Some(r.distance),
                    converged: Some(r.converged),
                    pansatz_duration_dt: Some(d.pansatz_dt),
                    pansatz_duration_ns: Some(d.pansatz_ns),
                    gansatz_duration_dt: Some(d.gansatz_dt),
                    gansatz_duration_ns: Some(d.gansatz_ns),
                    ratio: Some(d.pansatz_dt as f64 / d.gansatz_dt as f64),
                    error: String::new(),
                }
            }
            Err(e) => DurationRow {
                file,
                error: e.clone(),
                ..DurationRow::default()
            },
        }
    }
}

fn file_name(o: &SweepOutcome) -> String {
    o.file.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
}
