//! Deterministic text artifacts: CSV tables and small self-contained SVG
//! plots. No plotting stack; the files are written byte-for-byte from the
//! numbers.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::field::Loc;

/// All floats in emitted artifacts carry 9 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{x:.8e}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// A tidy CSV from a header and row-producing closure output.
pub fn csv_table(header: &str, rows: &[Vec<String>]) -> String {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `x,y,value` table over grid points.
pub fn field_csv(points: &[Loc], values: impl Iterator<Item = f64>) -> String {
    let rows: Vec<Vec<String>> = points
        .iter()
        .zip(values)
        .map(|(p, v)| vec![fmt_float(p[0]), fmt_float(p[1]), fmt_float(v)])
        .collect();
    csv_table("x,y,value", &rows)
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 480.0;
const MARGIN: f64 = 60.0;

const SERIES_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal multi-series line plot.
pub fn line_plot_svg(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (_, pts) in series {
        for &(x, y) in pts {
            if x.is_finite() && y.is_finite() {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    let (xmin, xmax) = bounds(&xs);
    let (ymin, ymax) = bounds(&ys);
    let sx = |x: f64| MARGIN + (x - xmin) / (xmax - xmin).max(1e-300) * (PLOT_W - 2.0 * MARGIN);
    let sy = |y: f64| PLOT_H - MARGIN - (y - ymin) / (ymax - ymin).max(1e-300) * (PLOT_H - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        PLOT_W / 2.0,
        xml_escape(title)
    );
    // axes
    let _ = write!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{lb}\" text-anchor=\"middle\" font-size=\"12\">{xl}</text>\n\
         <text x=\"16\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 {cy})\">{yl}</text>\n",
        m = MARGIN,
        b = PLOT_H - MARGIN,
        r = PLOT_W - MARGIN,
        t = MARGIN,
        cx = PLOT_W / 2.0,
        lb = PLOT_H - 16.0,
        xl = xml_escape(xlabel),
        cy = PLOT_H / 2.0,
        yl = xml_escape(ylabel),
    );
    // tick labels at the corners of the data range
    let _ = write!(
        svg,
        "<text x=\"{m}\" y=\"{lb}\" font-size=\"10\" text-anchor=\"middle\">{x0}</text>\n\
         <text x=\"{r}\" y=\"{lb}\" font-size=\"10\" text-anchor=\"middle\">{x1}</text>\n\
         <text x=\"{ml}\" y=\"{b}\" font-size=\"10\" text-anchor=\"end\">{y0}</text>\n\
         <text x=\"{ml}\" y=\"{t}\" font-size=\"10\" text-anchor=\"end\">{y1}</text>\n",
        m = MARGIN,
        r = PLOT_W - MARGIN,
        lb = PLOT_H - MARGIN + 16.0,
        ml = MARGIN - 6.0,
        b = PLOT_H - MARGIN,
        t = MARGIN + 4.0,
        x0 = short(xmin),
        x1 = short(xmax),
        y0 = short(ymin),
        y1 = short(ymax),
    );
    for (idx, (name, pts)) in series.iter().enumerate() {
        let color = SERIES_COLORS[idx % SERIES_COLORS.len()];
        let path: Vec<String> =
            pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = write!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        );
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            PLOT_W - MARGIN + 4.0,
            MARGIN + 14.0 * idx as f64,
            xml_escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap of values over a rectangular grid (points in row-major x-outer
/// order, as produced by the grid config).
pub fn heatmap_svg(title: &str, nx: usize, ny: usize, values: &[f64]) -> String {
    debug_assert_eq!(values.len(), nx * ny);
    let (vmin, vmax) = bounds(values);
    let cell_w = (PLOT_W - 2.0 * MARGIN) / nx as f64;
    let cell_h = (PLOT_H - 2.0 * MARGIN) / ny as f64;
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        PLOT_W / 2.0,
        xml_escape(title)
    );
    for ix in 0..nx {
        for iy in 0..ny {
            let v = values[ix * ny + iy];
            let t = if vmax > vmin { (v - vmin) / (vmax - vmin) } else { 0.5 };
            let r = (255.0 * t) as u8;
            let b = (255.0 * (1.0 - t)) as u8;
            let _ = write!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({r},64,{b})\"/>\n",
                MARGIN + ix as f64 * cell_w,
                PLOT_H - MARGIN - (iy + 1) as f64 * cell_h,
                cell_w + 0.5,
                cell_h + 0.5,
            );
        }
    }
    let _ = write!(
        svg,
        "<text x=\"{m}\" y=\"{lb}\" font-size=\"10\">min {}</text>\n\
         <text x=\"{r}\" y=\"{lb}\" font-size=\"10\" text-anchor=\"end\">max {}</text>\n",
        short(vmin),
        short(vmax),
        m = MARGIN,
        lb = PLOT_H - MARGIN + 16.0,
        r = PLOT_W - MARGIN,
    );
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        if x.is_finite() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn short(x: f64) -> String {
    format!("{x:.4}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
