use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::emissions::{emissions_from_evals, DEFAULT_INTENSITY_KG_PER_KWH, DEFAULT_JOULES_PER_EVAL};
use crate::harness::RunTrace;

pub const TRACE_FILE: &str = "trace.json";
pub const ALIGNMENT_FILE: &str = "alignment.csv";
pub const CLASS_HIST_FILE: &str = "class_hist.csv";
pub const EFFICIENCY_FILE: &str = "efficiency.csv";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOptions {
    #[serde(default = "default_joules")]
    pub joules_per_eval: f64,
    #[serde(default = "default_intensity")]
    pub intensity_kg_per_kwh: f64,
    /// Full-data accuracy used to normalize the efficiency curve. Without
    /// it the raw accuracy is written.
    #[serde(default)]
    pub reference_accuracy: Option<f64>,
}

fn default_joules() -> f64 {
    DEFAULT_JOULES_PER_EVAL
}
fn default_intensity() -> f64 {
    DEFAULT_INTENSITY_KG_PER_KWH
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { joules_per_eval: default_joules(), intensity_kg_per_kwh: default_intensity(), reference_accuracy: None }
    }
}

impl MetricOptions {
    pub fn kg_co2(&self, evals: u64) -> f64 {
        emissions_from_evals(evals, self.joules_per_eval, self.intensity_kg_per_kwh).map_or(f64::NAN, |e| e.kg_co2)
    }
}

/// Writes into `dir` (created if missing):
///
/// * `trace.json`: the whole trace
/// * `alignment.csv`: `iteration,batch,cosine`, one row per batch per refresh
/// * `class_hist.csv`: `epoch,class,count`
/// * `efficiency.csv`: `x,y,epoch,grad_evals` with `x` the CO₂ proxy in kg
///   and `y` the accuracy, normalized when a reference is given
///
/// A missing value is an empty field.
pub fn export_trace(trace: &RunTrace, dir: &Path, opts: &MetricOptions) -> Result<(), ExportError> {
    fs::create_dir_all(dir).map_err(|source| ExportError::Io { path: dir.to_owned(), source })?;

    let path = dir.join(TRACE_FILE);
    let json = serde_json::to_vec_pretty(trace).map_err(|source| ExportError::Json { path: path.clone(), source })?;
    fs::write(&path, json).map_err(|source| ExportError::Io { path: path.clone(), source })?;

    write_csv(&dir.join(ALIGNMENT_FILE), "iteration,batch,cosine", |out| {
        for it in &trace.iterations {
            for s in &it.selections {
                writeln!(out, "{},{},{}", it.iteration, s.batch, opt(s.cosine))?;
            }
        }
        Ok(())
    })?;

    write_csv(&dir.join(CLASS_HIST_FILE), "epoch,class,count", |out| {
        for e in &trace.epochs {
            for (c, n) in e.class_histogram.iter().enumerate() {
                writeln!(out, "{},{c},{n}", e.epoch)?;
            }
        }
        Ok(())
    })?;

    write_csv(&dir.join(EFFICIENCY_FILE), "x,y,epoch,grad_evals", |out| {
        for e in &trace.epochs {
            let y = match opts.reference_accuracy {
                Some(r) if r > 0.0 => e.test_accuracy / r,
                _ => e.test_accuracy,
            };
            let evals = e.gradient_evaluations_cumulative;
            writeln!(out, "{},{y},{},{evals}", opts.kg_co2(evals), e.epoch)?;
        }
        Ok(())
    })
}

pub fn read_trace(path: &Path) -> Result<RunTrace, ExportError> {
    let bytes = fs::read(path).map_err(|source| ExportError::Io { path: path.to_owned(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| ExportError::Json { path: path.to_owned(), source })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(
    path: &Path,
    header: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), ExportError> {
    let run = || -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{header}")?;
        body(&mut out)?;
        out.flush()
    };
    run().map_err(|source| ExportError::Io { path: path.to_owned(), source })
}
