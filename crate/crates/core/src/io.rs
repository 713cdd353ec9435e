//! CSV readers and writers for data sets, chains and posterior summaries.
//!
//! Data files carry columns `x1..xd` followed by an optional `y`. Trace files
//! carry `iter, sigma2, tau, f_0..f_{n-1}`, summary files carry
//! `node_index, x1..xd, post_mean, q025, q975`.

use std::path::Path;

use crate::error::{Result, VecchiaError};
use crate::inference::{ChainSummary, Dataset, Trace};
use crate::polymath::PointSet;

fn parse_cell(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| VecchiaError::InvalidInput(format!("row {row}, column {col}: cannot parse {s:?}")))
}

/// Reads coordinates from the `x1..xd` columns and, when present, responses
/// from the `y` column.
pub fn read_points_csv(path: &Path) -> Result<(PointSet, Option<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut x_cols = Vec::new();
    let mut y_col = None;
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h == "y" {
            y_col = Some(i);
        } else if let Some(k) = h.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
            x_cols.push((k, i));
        }
    }
    x_cols.sort();
    if x_cols.is_empty() || x_cols.iter().enumerate().any(|(j, &(k, _))| k != j + 1) {
        return Err(VecchiaError::InvalidInput(format!(
            "{}: expected coordinate columns x1..xd",
            path.display()
        )));
    }
    let d = x_cols.len();
    let mut coords = Vec::new();
    let mut y = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for &(k, i) in &x_cols {
            coords.push(parse_cell(rec.get(i).unwrap_or(""), row + 1, &format!("x{k}"))?);
        }
        if let Some(i) = y_col {
            y.push(parse_cell(rec.get(i).unwrap_or(""), row + 1, "y")?);
        }
    }
    let points = PointSet::new(d, coords)?;
    Ok((points, y_col.map(|_| y)))
}

/// Reads a data file with a mandatory `y` column.
pub fn read_data_csv(path: &Path) -> Result<Dataset> {
    let (points, y) = read_points_csv(path)?;
    let y = y.ok_or_else(|| VecchiaError::InvalidInput(format!("{}: missing y column", path.display())))?;
    Dataset::new(points, y)
}

fn coord_headers(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("x{k}")).collect()
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Writes `x1..xd[, y]`.
pub fn write_points_csv(path: &Path, points: &PointSet, y: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = coord_headers(points.dim());
    if y.is_some() {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        let mut rec: Vec<String> = p.iter().map(|&v| fmt(v)).collect();
        if let Some(y) = y {
            rec.push(fmt(y[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per recorded draw.
pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n = trace.latent.first().map_or(0, Vec::len);
    let mut header = vec!["iter".to_string(), "sigma2".into(), "tau".into()];
    header.extend((0..n).map(|i| format!("f_{i}")));
    w.write_record(&header)?;
    for k in 0..trace.iters.len() {
        let mut rec = vec![trace.iters[k].to_string(), fmt(trace.sigma2[k]), fmt(trace.tau[k])];
        rec.extend(trace.latent[k].iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Trace> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "iter" || &headers[1] != "sigma2" || &headers[2] != "tau" {
        return Err(VecchiaError::InvalidInput(format!(
            "{}: expected columns iter, sigma2, tau, f_*",
            path.display()
        )));
    }
    let mut trace = Trace::default();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let iter = rec[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| VecchiaError::InvalidInput(format!("row {}: bad iter", row + 1)))?;
        trace.iters.push(iter);
        trace.sigma2.push(parse_cell(&rec[1], row + 1, "sigma2")?);
        trace.tau.push(parse_cell(&rec[2], row + 1, "tau")?);
        let f = (3..rec.len())
            .map(|i| parse_cell(&rec[i], row + 1, &headers[i]))
            .collect::<Result<Vec<_>>>()?;
        trace.latent.push(f);
    }
    Ok(trace)
}

/// Writes pointwise posterior mean and 95% band at every DAG node.
pub fn write_summary_csv(path: &Path, points: &PointSet, summary: &ChainSummary) -> Result<()> {
    if summary.mean.len() != points.len() {
        return Err(VecchiaError::InvalidInput("summary and point set sizes disagree".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node_index".to_string()];
    header.extend(coord_headers(points.dim()));
    header.extend(["post_mean".to_string(), "q025".into(), "q975".into()]);
    w.write_record(&header)?;
    for (i, p) in points.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(p.iter().map(|&v| fmt(v)));
        rec.extend([fmt(summary.mean[i]), fmt(summary.q025[i]), fmt(summary.q975[i])]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
