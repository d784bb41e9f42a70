//! Geodesic-error evaluation and pair manifests.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{norm, sub, Correspondence, Mesh};
use crate::util::write_atomic;

/// Thresholds reported in evaluation CSVs.
pub const REPORT_THRESHOLDS: [f64; 3] = [0.01, 0.05, 0.10];

/// All-pairs graph geodesic distances on one mesh.
#[derive(Debug, Clone)]
pub struct GeodesicTable {
    pub dist: DMatrix<f64>,
    pub mesh_name: String,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn adjacency(mesh: &Mesh) -> Vec<Vec<(usize, f64)>> {
    let v = mesh.vertices();
    let mut adj = vec![Vec::new(); mesh.n_vertices()];
    for (a, b) in mesh.edges() {
        let w = norm(sub(v[a], v[b]));
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    adj
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

/// Shortest edge-path distances from every vertex, one Dijkstra per source.
pub fn geodesic_table(mesh: &Mesh) -> Result<GeodesicTable> {
    let adj = adjacency(mesh);
    let n = mesh.n_vertices();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(&adj, s)).collect();
    if let Some(v) = rows[0].iter().position(|d| d.is_infinite()) {
        return Err(Error::Unreachable(v));
    }
    Ok(GeodesicTable {
        dist: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        mesh_name: mesh.name.clone(),
    })
}

fn check_maps(pred: &Correspondence, gt: &Correspondence, table: &GeodesicTable) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            found: pred.len(),
        });
    }
    let n = table.dist.nrows();
    if let Some(&bad) = pred
        .source_to_target
        .iter()
        .chain(&gt.source_to_target)
        .find(|&&t| t >= n)
    {
        return Err(Error::invalid(format!(
            "target index {bad} outside the {n}-vertex geodesic table"
        )));
    }
    Ok(())
}

/// Per-vertex geodesic error normalized by `sqrt(area)`.
pub fn normalized_errors(
    pred: &Correspondence,
    gt: &Correspondence,
    table: &GeodesicTable,
    area: f64,
) -> Result<Vec<f64>> {
    check_maps(pred, gt, table)?;
    if !(area > 0.0) {
        return Err(Error::invalid("target area must be positive"));
    }
    let s = area.sqrt();
    Ok(pred
        .source_to_target
        .iter()
        .zip(&gt.source_to_target)
        .map(|(&p, &g)| table.dist[(p, g)] / s)
        .collect())
}

/// Mean geodesic error times 100.
pub fn mean_geo_error(pred: &Correspondence, gt: &Correspondence, table: &GeodesicTable, area: f64) -> Result<f64> {
    let e = normalized_errors(pred, gt, table, area)?;
    if e.is_empty() {
        return Err(Error::invalid("empty correspondence"));
    }
    Ok(100.0 * e.iter().sum::<f64>() / e.len() as f64)
}

/// Fraction of vertices whose normalized error is at most each threshold.
pub fn pck_curve(
    pred: &Correspondence,
    gt: &Correspondence,
    table: &GeodesicTable,
    area: f64,
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("PCK thresholds must be ascending"));
    }
    let e = normalized_errors(pred, gt, table, area)?;
    let n = e.len().max(1) as f64;
    Ok(thresholds
        .iter()
        .map(|&t| (t, e.iter().filter(|&&x| x <= t).count() as f64 / n))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub source: PathBuf,
    pub target: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
}

/// Shape pairs of one split. Relative paths are resolved against the
/// manifest's directory on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairManifest {
    pub pairs: Vec<PairEntry>,
    pub role: Role,
}

impl PairManifest {
    pub fn load(path: &Path) -> Result<PairManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: PairManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in &mut m.pairs {
            for f in std::iter::once(&mut p.source)
                .chain(std::iter::once(&mut p.target))
                .chain(p.gt.iter_mut())
            {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
                if !f.exists() {
                    return Err(Error::io(
                        f.as_path(),
                        std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest"),
                    ));
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    /// Distinct mesh paths in order of first appearance.
    pub fn mesh_paths(&self) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = Vec::new();
        for p in &self.pairs {
            for f in [&p.source, &p.target] {
                if !out.contains(f) {
                    out.push(f.clone());
                }
            }
        }
        out
    }
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pair: String,
    pub mean_geo_error_x100: f64,
    #[serde(rename = "pck@0.01")]
    pub pck_001: f64,
    #[serde(rename = "pck@0.05")]
    pub pck_005: f64,
    #[serde(rename = "pck@0.10")]
    pub pck_010: f64,
}

impl ReportRow {
    pub fn evaluate(
        pair: impl Into<String>,
        pred: &Correspondence,
        gt: &Correspondence,
        table: &GeodesicTable,
        area: f64,
    ) -> Result<ReportRow> {
        let pck = pck_curve(pred, gt, table, area, &REPORT_THRESHOLDS)?;
        Ok(ReportRow {
            pair: pair.into(),
            mean_geo_error_x100: mean_geo_error(pred, gt, table, area)?,
            pck_001: pck[0].1,
            pck_005: pck[1].1,
            pck_010: pck[2].1,
        })
    }

    /// Column-wise mean, labelled `mean`.
    pub fn aggregate(rows: &[ReportRow]) -> ReportRow {
        let n = rows.len().max(1) as f64;
        let avg = |f: fn(&ReportRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        ReportRow {
            pair: "mean".into(),
            mean_geo_error_x100: avg(|r| r.mean_geo_error_x100),
            pck_001: avg(|r| r.pck_001),
            pck_005: avg(|r| r.pck_005),
            pck_010: avg(|r| r.pck_010),
        }
    }
}

pub const REPORT_HEADER: &str = "pair,mean_geo_error_x100,pck@0.01,pck@0.05,pck@0.10";

/// Per-pair rows followed by the aggregate row.
pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows.iter().chain(std::iter::once(&ReportRow::aggregate(rows))) {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv: {e}")))
}

/// Minimal static SVG of PCK curves (one polyline per pair).
pub fn pck_svg(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let tmax = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.0))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        y0 = h - pad,
        x1 = w - pad
    );
    for (i, (name, c)) in curves.iter().enumerate() {
        let pts: Vec<String> = c
            .iter()
            .map(|(t, f)| {
                format!(
                    "{:.2},{:.2}",
                    pad + t / tmax * (w - 2.0 * pad),
                    h - pad - f * (h - 2.0 * pad)
                )
            })
            .collect();
        let hue = (i * 67) % 360;
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"hsl({hue},70%,40%)\" points=\"{}\"><title>{name}</title></polyline>\n",
            pts.join(" ")
        ));
    }
    s.push_str("</svg>\n");
    s
}
