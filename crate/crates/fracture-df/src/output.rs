//! File formats: CSV traces, JSON summaries, mesh and matrix dumps.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Result;
use fracture_df_core::filter::EstimateTrace;
use fracture_df_core::geometry::TriangularMesh;
use fracture_df_core::linsolve::CscMatrix;
use fracture_df_core::observation::ObservationSeries;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiment::{ForwardRow, TwinReport};

/// One row per step: posterior mean of each `theta_k`, its reciprocal, the
/// burn-in running average and its reciprocal, the ensemble spread, the
/// effective sample size and the number of failed forecasts.
pub fn write_trace_csv(path: &Path, trace: &EstimateTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let p = trace.mean.first().map_or(0, Vec::len);
    let mut header = vec!["step".to_string()];
    for prefix in ["theta_mean", "width", "theta_running", "width_running", "theta_std"] {
        header.extend((1..=p).map(|k| format!("{prefix}_{k}")));
    }
    header.extend(["ess".to_string(), "failed".to_string()]);
    w.write_record(&header)?;
    for i in 0..trace.len() {
        let mut row = vec![trace.steps[i].to_string()];
        row.extend(trace.mean[i].iter().map(f64::to_string));
        row.extend(trace.width[i].iter().map(f64::to_string));
        row.extend(trace.running[i].iter().map(f64::to_string));
        row.extend(trace.running[i].iter().map(|v| (1.0 / v).to_string()));
        row.extend(trace.spread[i].iter().map(f64::to_string));
        row.push(trace.effective_size[i].to_string());
        row.push(trace.failed[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `step, y_1, ..., y_k` for the synthetic data.
pub fn write_observations_csv(path: &Path, obs: &ObservationSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string()];
    header.extend((1..=obs.dim()).map(|k| format!("y_{k}")));
    w.write_record(&header)?;
    for (n, y) in &obs.records {
        let mut row = vec![n.to_string()];
        row.extend(y.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    #[serde(flatten)]
    report: &'a TwinReport,
    config: BTreeMap<String, String>,
}

pub fn config_map(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    cfg.echo()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub fn write_summary_json(path: &Path, cfg: &ExperimentConfig, report: &TwinReport) -> Result<()> {
    let summary = Summary { report, config: config_map(cfg) };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_log(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_forward_csv(path: &Path, rows: &[ForwardRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text mesh: vertices, triangles with their subdomain, fracture edges
/// with their segment and fracture.
pub fn write_mesh(w: &mut impl Write, mesh: &TriangularMesh) -> Result<()> {
    writeln!(w, "vertices {}", mesh.vertices.len())?;
    for [x, y] in &mesh.vertices {
        writeln!(w, "{x} {y}")?;
    }
    writeln!(w, "triangles {}", mesh.triangles.len())?;
    for t in &mesh.triangles {
        let [a, b, c] = t.vertices;
        writeln!(w, "{a} {b} {c} {}", t.subdomain)?;
    }
    writeln!(w, "fracture_edges {}", mesh.fracture_edges.len())?;
    for e in &mesh.fracture_edges {
        let [a, b] = e.vertices;
        writeln!(w, "{a} {b} {} {}", e.segment, mesh.geometry.segments[e.segment].fracture)?;
    }
    Ok(())
}

/// Coordinate format: a `rows cols nnz` header, then `row col value` per entry.
pub fn write_coo(w: &mut impl Write, m: &CscMatrix) -> Result<()> {
    writeln!(w, "{} {} {}", m.n_rows, m.n_cols, m.nnz())?;
    for j in 0..m.n_cols {
        for (i, v) in m.column(j) {
            writeln!(w, "{i} {j} {v:e}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fracture_df_core::geometry::{build_geometry, generate_mesh, CaseSpec, Rect};
    use fracture_df_core::linsolve::Triplets;

    #[test]
    fn mesh_dump_lists_every_entity() {
        let g =
            build_geometry(&CaseSpec::Single { domain: Rect::new(0.0, 2.0, 0.0, 1.0), x: 1.0, width: 1e-3 }).unwrap();
        let mesh = generate_mesh(&g, 0.5).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mut buf, &mesh).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // 5 x 3 vertices, 4 x 2 cells of two triangles, 2 fracture edges.
        assert!(text.starts_with("vertices 15\n"));
        assert!(text.contains("triangles 16\n"));
        assert!(text.contains("fracture_edges 2\n"));
        assert_eq!(text.lines().count(), 3 + 15 + 16 + 2);
    }

    #[test]
    fn coo_dump_round_trips() {
        let mut t = Triplets::new(3, 2);
        t.push(0, 0, 1.5);
        t.push(2, 1, -0.25);
        let m = t.to_csc();
        let mut buf = Vec::new();
        write_coo(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("3 2 2"));
        let mut back = Triplets::new(3, 2);
        for l in lines {
            let p: Vec<&str> = l.split(' ').collect();
            back.push(p[0].parse().unwrap(), p[1].parse().unwrap(), p[2].parse().unwrap());
        }
        assert_eq!(back.to_csc(), m);
    }
}
