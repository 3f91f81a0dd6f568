//! On-disk artifact formats: trajectory CSV, final-state snapshot JSON,
//! coordinate-format matrix dumps, and hand-rolled SVG line charts.
//!
//! All numeric text uses the shortest round-trip representation, so a rerun
//! with the same configuration and seed reproduces every artifact
//! byte-for-byte.

use serde::Serialize;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use wentzell::evolution::{Trajectory, TrajectoryStatus};
use wentzell::Grid;

/// Column order of a trajectory CSV (header row included in every file).
pub const TRAJECTORY_COLUMNS: [&str; 5] =
    ["t", "norm_ref", "norm_inst", "graph_norm", "picard_iters"];

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_COLUMNS)?;
    for k in 0..traj.len() {
        w.write_record(&[
            traj.times[k].to_string(),
            traj.norms_ref[k].to_string(),
            traj.norms_inst[k].to_string(),
            traj.graph_norms[k].to_string(),
            traj.picard_iters[k].to_string(),
        ])?;
    }
    w.flush()
}

/// A parsed trajectory CSV: the five required columns.
pub struct TrajectoryTable {
    pub t: Vec<f64>,
    pub norm_ref: Vec<f64>,
    pub norm_inst: Vec<f64>,
    pub graph_norm: Vec<f64>,
}

/// Reads a trajectory CSV, failing with a named missing column when the
/// header (or the whole file) lacks one.
pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryTable, String> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let headers =
        rdr.headers().map_err(|e| format!("cannot read CSV header: {e}"))?.clone();
    let col = |name: &str| -> Result<usize, String> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("missing column '{name}' in {}", path.display()))
    };
    let (it, ir, ii, ig) =
        (col("t")?, col("norm_ref")?, col("norm_inst")?, col("graph_norm")?);
    let mut table = TrajectoryTable {
        t: Vec::new(),
        norm_ref: Vec::new(),
        norm_inst: Vec::new(),
        graph_norm: Vec::new(),
    };
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| format!("bad CSV record {row}: {e}"))?;
        let field = |idx: usize| -> Result<f64, String> {
            record
                .get(idx)
                .ok_or_else(|| format!("row {row} is short"))?
                .parse::<f64>()
                .map_err(|e| format!("row {row}: {e}"))
        };
        table.t.push(field(it)?);
        table.norm_ref.push(field(ir)?);
        table.norm_inst.push(field(ii)?);
        table.graph_norm.push(field(ig)?);
    }
    if table.t.is_empty() {
        return Err(format!("{} has no data rows", path.display()));
    }
    Ok(table)
}

#[derive(Serialize)]
struct Snapshot<'a> {
    t: f64,
    n_x: usize,
    n_theta: usize,
    status: &'a TrajectoryStatus,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Writes the final recorded state (with its sample time and run status) as
/// JSON with separate real/imaginary arrays in node order.
pub fn write_snapshot(path: &Path, traj: &Trajectory, grid: &Grid) -> io::Result<()> {
    let state = traj.last_state().expect("a trajectory always holds its initial sample");
    let snap = Snapshot {
        t: traj.final_time().unwrap(),
        n_x: grid.n_x,
        n_theta: grid.n_theta,
        status: &traj.status,
        re: state.data.iter().map(|z| z.re).collect(),
        im: state.data.iter().map(|z| z.im).collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&snap).expect("snapshot serializes"))
}

/// Dumps the stiffness matrix assembled at `t` in coordinate
/// (row col value) text format.
pub fn write_matrix_dump(
    path: &Path,
    matrix: &wentzell::operators::Csr,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    matrix.write_coordinates(&mut out)?;
    out.flush()
}

/// One named curve of a chart.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: &'a [(f64, f64)],
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        // Degenerate (constant) data: open a symmetric window around it.
        let pad = lo.abs().max(1e-12);
        (lo - 0.1 * pad, hi + 0.1 * pad)
    }
}

/// Renders a minimal SVG line chart (axes, four ticks per axis, legend).
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
) -> io::Result<()> {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const ML: f64 = 80.0; // left margin (y tick labels)
    const MR: f64 = 30.0;
    const MT: f64 = 50.0;
    const MB: f64 = 60.0;
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in s.points {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    let (x_lo, x_hi) = nice_range(x_lo, x_hi);
    let (y_lo, y_hi) = nice_range(y_lo, y_hi);
    let sx = |x: f64| ML + (x - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y_lo) / (y_hi - y_lo) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-size=\"18\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{title}</text>\n",
        W / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        H - MB,
        W - MR,
        H - MB
    ));
    // Ticks.
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let xp = sx(xv);
        let yp = sy(yv);
        svg.push_str(&format!(
            "<line x1=\"{xp}\" y1=\"{}\" x2=\"{xp}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{xp}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{xv:.3}</text>\n",
            H - MB,
            H - MB + 6.0,
            H - MB + 22.0
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yp}\" x2=\"{ML}\" y2=\"{yp}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\" \
             font-family=\"sans-serif\">{yv:.4}</text>\n",
            ML - 6.0,
            ML - 10.0,
            yp + 4.0
        ));
    }
    // Axis labels.
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{x_label}</text>\n",
        (ML + W - MR) / 2.0,
        H - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" transform=\"rotate(-90 20 {})\">{y_label}</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    ));
    // Curves and legend.
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> =
            s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            pts.join(" "),
            s.color
        ));
        let ly = MT + 16.0 * k as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" \
             stroke-width=\"3\"/>\n<text x=\"{}\" y=\"{}\" font-size=\"12\" \
             font-family=\"sans-serif\">{}</text>\n",
            W - MR - 150.0,
            W - MR - 120.0,
            s.color,
            W - MR - 112.0,
            ly + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)
}
