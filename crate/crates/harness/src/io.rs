//! CSV and JSON files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use gridhit::estimator::TrajectoryRow;
use gridhit::Record;
use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Header `n,grid_point,exit_point,exit_elapsed,next_grid_point`.
pub fn write_stream(path: &Path, stream: &[Record]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in stream {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stream(path: &Path) -> Result<Vec<Record>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row.with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(out)
}

/// Header `n,theta_1,...,theta_s,gamma_n,innovation`.
pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let s = rows.first().map_or(1, |r| r.theta.len());
    let mut header = vec!["n".to_string()];
    header.extend((1..=s).map(|i| format!("theta_{i}")));
    header.push("gamma_n".into());
    header.push("innovation".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.n.to_string()];
        rec.extend(r.theta.iter().map(|t| t.to_string()));
        rec.push(r.gamma.to_string());
        rec.push(r.innovation.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
