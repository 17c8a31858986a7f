//! CSV tables, per-method traces and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::svg;
use super::{RunOutcome, TraceRow};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // shortest round-trip representation: byte-stable across runs
            Cell::Float(v) => format!("{v:?}"),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

pub const TRACE_HEADER: [&str; 5] = ["iter", "train_loss", "subspace_dist", "transfer_loss", "diverged"];

pub fn trace_table(rows: &[TraceRow]) -> Table {
    Table {
        header: TRACE_HEADER.to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Int(r.iter as u64),
                    Cell::Float(r.train_loss),
                    Cell::Float(r.subspace_dist),
                    Cell::Float(r.transfer_loss),
                    Cell::Int(r.diverged as u64),
                ]
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub outcome: RunOutcome,
    /// `(method, trace)` for the trace experiments.
    pub traces: Vec<(String, Table)>,
    pub summary: Table,
    pub wall_clock_secs: f64,
}

/// SHA-256 of the config's canonical JSON.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

fn opt(v: Option<f64>) -> Cell {
    v.map_or(Cell::Float(f64::NAN), Cell::Float)
}

impl RunRecord {
    pub fn new(cfg: &ExperimentConfig, outcome: RunOutcome, wall_clock_secs: f64) -> Self {
        let mut traces = Vec::new();
        let summary = match &outcome {
            RunOutcome::Traces(res) => {
                let mut rows = Vec::new();
                for m in &res.methods {
                    traces.push((m.name.clone(), trace_table(&m.mean)));
                    let last = m.last();
                    rows.push(vec![
                        Cell::Text(m.name.clone()),
                        Cell::Float(m.method.eta_g),
                        Cell::Float(m.method.eta_f),
                        Cell::Int(last.iter as u64),
                        Cell::Float(last.train_loss),
                        Cell::Float(last.subspace_dist),
                        Cell::Float(last.transfer_loss),
                        Cell::Int(last.diverged as u64),
                        Cell::Int(m.trials.len() as u64),
                    ]);
                }
                Table {
                    header: vec!["method", "eta_g", "eta_f", "iter", "train_loss", "subspace_dist", "transfer_loss", "diverged", "trials"],
                    rows,
                }
            }
            RunOutcome::LrSweep(rows) => Table {
                header: vec!["method", "lr", "subspace_dist", "diverged", "trials"],
                rows: rows
                    .iter()
                    .map(|r| {
                        vec![
                            Cell::Text(r.method.clone()),
                            Cell::Float(r.lr),
                            Cell::Float(r.subspace_dist),
                            Cell::Int(r.diverged as u64),
                            Cell::Int(r.trials as u64),
                        ]
                    })
                    .collect(),
            },
            RunOutcome::SingleIndex(rows) => Table {
                header: vec![
                    "epsilon",
                    "lambda",
                    "sim_sgd",
                    "sim_kfac",
                    "sd_sgd",
                    "sd_kfac",
                    "beta_sgd",
                    "beta_kfac",
                    "theory_sgd",
                    "theory_kfac",
                    "theory_error",
                ],
                rows: rows
                    .iter()
                    .map(|r| {
                        vec![
                            Cell::Float(r.epsilon),
                            Cell::Float(r.lambda),
                            Cell::Float(r.sim_sgd),
                            Cell::Float(r.sim_kfac),
                            Cell::Float(r.sd_sgd),
                            Cell::Float(r.sd_kfac),
                            Cell::Float(r.beta_sgd),
                            Cell::Float(r.beta_kfac),
                            Cell::Float(r.theory_sgd),
                            opt(r.theory_kfac),
                            Cell::Text(r.theory_error.clone().unwrap_or_default()),
                        ]
                    })
                    .collect(),
            },
            RunOutcome::LowerBound(rows) => Table {
                header: vec!["lambda", "eta", "t", "dist", "envelope", "holds"],
                rows: rows
                    .iter()
                    .map(|r| {
                        vec![
                            Cell::Float(r.lambda),
                            Cell::Float(r.eta),
                            Cell::Int(r.t as u64),
                            Cell::Float(r.dist),
                            Cell::Float(r.envelope),
                            Cell::Bool(r.holds()),
                        ]
                    })
                    .collect(),
            },
        };
        Self { config: cfg.clone(), config_hash: config_hash(cfg), outcome, traces, summary, wall_clock_secs }
    }
}

#[derive(Serialize)]
struct Versions {
    kronfeat: &'static str,
    output_format: u32,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    config_sha256: &'a str,
    base_seed: u64,
    trials: usize,
    versions: Versions,
    wall_clock_secs: f64,
    files: Vec<String>,
}

/// Writes `<method>/trace.csv` per method (trace experiments), `summary.csv`,
/// optional SVG plots and `manifest.json` under `out`. Returns the files
/// written, manifest last.
pub fn write_outputs(record: &RunRecord, out: &Path, with_svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (name, table) in &record.traces {
        let dir = out.join(name);
        fs::create_dir_all(&dir)?;
        let path = dir.join("trace.csv");
        fs::write(&path, table.to_csv()?)?;
        written.push(path);
    }
    let path = out.join("summary.csv");
    fs::write(&path, record.summary.to_csv()?)?;
    written.push(path);
    if with_svg {
        for (file, body) in svg::render(record) {
            let path = out.join(file);
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    let files = written
        .iter()
        .map(|p| p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/"))
        .collect();
    let manifest = Manifest {
        experiment: record.config.experiment.name(),
        config: &record.config,
        config_sha256: &record.config_hash,
        base_seed: record.config.base_seed,
        trials: record.config.trials,
        versions: Versions { kronfeat: env!("CARGO_PKG_VERSION"), output_format: 1 },
        wall_clock_secs: record.wall_clock_secs,
        files,
    };
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_render_round_trip() {
        let t = Table { header: vec!["a", "b"], rows: vec![vec![Cell::Float(0.1), Cell::Float(f64::NAN)]] };
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "a,b\n0.1,NaN\n");
        let v: f64 = Cell::Float(1.0 / 3.0).render().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }
}
