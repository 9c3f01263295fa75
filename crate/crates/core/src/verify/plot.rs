//! Raster pictures of two-dimensional classification structures.

use std::fmt::Write as _;

use crate::affine::Polytope;
use crate::feasibility::{bounding_box, check_feasible_with, LpConfig};
use crate::tads::{enumerate_paths, Tads, Terminal, Value};

use super::VerifyError;

const PALETTE: [&str; 10] =
    ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    /// Cells per side.
    pub resolution: usize,
    /// Points drawn on top, each with a caption.
    pub marks: Vec<(Vec<f64>, String)>,
    pub lp: LpConfig,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions { resolution: 512, marks: Vec::new(), lp: LpConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPlot {
    pub svg: String,
    /// One line per constraint of every feasible class path inside the region.
    pub csv: String,
    /// Row-major from the top edge; `None` for cells whose center lies outside the region.
    pub cells: Vec<Option<usize>>,
    pub resolution: usize,
    /// `[(x1_min, x1_max), (x2_min, x2_max)]` of the region.
    pub bounds: [(f64, f64); 2],
}

impl RegionPlot {
    /// Center of cell `(row, col)`; row 0 is the top (largest `x2`).
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        let [(x0, x1), (y0, y1)] = self.bounds;
        let n = self.resolution as f64;
        [x0 + (col as f64 + 0.5) * (x1 - x0) / n, y1 - (row as f64 + 0.5) * (y1 - y0) / n]
    }

    pub fn distinct_classes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Rasterizes `t` over the bounded region `s` and lists its class paths.
pub fn render_region_plot(t: &Tads, s: &Polytope, opts: &PlotOptions) -> Result<RegionPlot, VerifyError> {
    if t.input_dim() != 2 || s.dim() != 2 {
        return Err(VerifyError::Query(format!(
            "region plots need two inputs, got structure over {} and region over {}",
            t.input_dim(),
            s.dim()
        )));
    }
    if opts.resolution == 0 {
        return Err(VerifyError::Query("resolution must be positive".into()));
    }
    let bbox = bounding_box(s).map_err(|e| VerifyError::Query(format!("region is not a bounded nonempty polytope: {e}")))?;
    let n = opts.resolution;
    let mut plot = RegionPlot {
        svg: String::new(),
        csv: String::new(),
        cells: Vec::with_capacity(n * n),
        resolution: n,
        bounds: [bbox[0], bbox[1]],
    };
    for row in 0..n {
        for col in 0..n {
            let p = plot.cell_center(row, col);
            let class = if s.contains(&p, 0.0) {
                match t.eval(&p)? {
                    Value::Class(c) => Some(c),
                    Value::Bottom => None,
                    other => return Err(VerifyError::Query(format!("expected class terminals, got {other:?}"))),
                }
            } else {
                None
            };
            plot.cells.push(class);
        }
    }
    plot.svg = svg(&plot, opts);
    plot.csv = path_csv(t, s, &opts.lp)?;
    Ok(plot)
}

fn svg(plot: &RegionPlot, opts: &PlotOptions) -> String {
    let n = plot.resolution;
    let side = n.max(256);
    let scale = side as f64 / n as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{side}\" height=\"{side}\" viewBox=\"0 0 {side} {side}\" shape-rendering=\"crispEdges\">"
    );
    let _ = writeln!(out, "<rect width=\"{side}\" height=\"{side}\" fill=\"#ffffff\"/>");
    for row in 0..n {
        let line = &plot.cells[row * n..(row + 1) * n];
        let mut col = 0;
        while col < n {
            let c = line[col];
            let mut end = col + 1;
            while end < n && line[end] == c {
                end += 1;
            }
            if let Some(class) = c {
                let _ = writeln!(
                    out,
                    "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"{}\"/>",
                    col as f64 * scale,
                    row as f64 * scale,
                    (end - col) as f64 * scale,
                    scale,
                    PALETTE[class % PALETTE.len()]
                );
            }
            col = end;
        }
    }
    let [(x0, x1), (y0, y1)] = plot.bounds;
    for (p, caption) in &opts.marks {
        if p.len() != 2 {
            continue;
        }
        let cx = (p[0] - x0) / (x1 - x0) * side as f64;
        let cy = (y1 - p[1]) / (y1 - y0) * side as f64;
        let _ = writeln!(
            out,
            "<circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"4\" fill=\"#000000\"/><text x=\"{:.3}\" y=\"{:.3}\" font-size=\"12\" font-family=\"Helvetica\">{}</text>",
            cx + 6.0,
            cy - 6.0,
            escape(caption)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn path_csv(t: &Tads, s: &Polytope, lp: &LpConfig) -> Result<String, VerifyError> {
    let mut out = String::from("path,label,constraint,a1,a2,offset,strict\n");
    let mut id = 0;
    for p in enumerate_paths(t, |term| matches!(term, Terminal::Class(_))) {
        let Terminal::Class(label) = p.terminal else { continue };
        let region = p.region.intersect(s)?;
        if matches!(check_feasible_with(&region, lp), Ok(v) if !v.is_feasible()) {
            continue;
        }
        for (j, c) in region.constraints().iter().enumerate() {
            let _ = writeln!(out, "{id},{label},{j},{:e},{:e},{:e},{}", c.normal[0], c.normal[1], c.offset, c.strict);
        }
        id += 1;
    }
    Ok(out)
}
