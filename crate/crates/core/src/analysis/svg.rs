//! Minimal hand-rolled SVG charts: line plots with percentile bands,
//! histograms, and heat maps. No external plotting dependency.

use std::fmt::Write;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

fn fmt(v: f64) -> String {
    format!("{:.2}", v)
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x_min) / (self.x_max - self.x_min).max(1e-12) * (WIDTH - 2.0 * MARGIN)
    }
    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN
            - (v - self.y_min) / (self.y_max - self.y_min).max(1e-12) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"14\">{title}</text>\n",
        WIDTH / 2.0
    )
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let x0 = f.x(f.x_min);
    let x1 = f.x(f.x_max);
    let y0 = f.y(f.y_min);
    let y1 = f.y(f.y_max);
    let _ = write!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{x_label}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" \
         transform=\"rotate(-90 14 {})\">{y_label}</text>\n\
         <text x=\"{x0}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n\
         <text x=\"{x1}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        y0 + 16.0,
        fmt(f.x_min),
        y0 + 16.0,
        fmt(f.x_max),
        x0 - 4.0,
        y0 + 4.0,
        fmt(f.y_min),
        x0 - 4.0,
        y1 + 4.0,
        fmt(f.y_max),
    );
}

/// A polyline through (x, y) points; `None` y-values leave a gap.
pub struct Series<'a> {
    pub points: Vec<(f64, Option<f64>)>,
    pub color: &'a str,
    pub dashed: bool,
}

/// Line chart with an optional filled band between two curves.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
    band: Option<(&[(f64, f64, f64)], &str)>,
) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x);
            if let Some(y) = y {
                ys.push(y);
            }
        }
    }
    if let Some((b, _)) = band {
        for &(x, lo, hi) in b {
            xs.push(x);
            ys.push(lo);
            ys.push(hi);
        }
    }
    let f = Frame {
        x_min: xs.iter().cloned().fold(0.0, f64::min),
        x_max: xs.iter().cloned().fold(1.0, f64::max),
        y_min: ys.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0),
        y_max: ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(1e-9),
    };
    let mut out = header(title);
    if let Some((b, color)) = band {
        if b.len() > 1 {
            let mut d = String::from("M");
            for &(x, lo, _) in b {
                let _ = write!(d, " {} {}", fmt(f.x(x)), fmt(f.y(lo)));
            }
            for &(x, _, hi) in b.iter().rev() {
                let _ = write!(d, " L {} {}", fmt(f.x(x)), fmt(f.y(hi)));
            }
            d.push('Z');
            let _ = write!(out, "<path d=\"{d}\" fill=\"{color}\" fill-opacity=\"0.3\" stroke=\"none\"/>\n");
        }
    }
    for s in series {
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            match y {
                Some(y) => {
                    let cmd = if pen_down { 'L' } else { 'M' };
                    let _ = write!(d, "{cmd} {} {} ", fmt(f.x(x)), fmt(f.y(y)));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let dash = if s.dashed { " stroke-dasharray=\"6 3\"" } else { "" };
        let _ = write!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/>\n",
            d.trim_end(),
            s.color
        );
    }
    axes(&mut out, &f, x_label, y_label);
    out.push_str("</svg>\n");
    out
}

/// Integer-binned histogram.
pub fn histogram(title: &str, x_label: &str, y_label: &str, bins: &[(usize, usize)]) -> String {
    let x_max = bins.iter().map(|&(b, _)| b).max().unwrap_or(1) as f64 + 1.0;
    let y_max = bins.iter().map(|&(_, c)| c).max().unwrap_or(1) as f64;
    let f = Frame { x_min: 0.0, x_max, y_min: 0.0, y_max };
    let mut out = header(title);
    for &(bin, count) in bins {
        let x = f.x(bin as f64);
        let w = (f.x(bin as f64 + 1.0) - x) * 0.9;
        let y = f.y(count as f64);
        let h = f.y(0.0) - y;
        let _ = write!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"steelblue\"/>\n",
            fmt(x),
            fmt(y),
            fmt(w),
            fmt(h)
        );
    }
    axes(&mut out, &f, x_label, y_label);
    out.push_str("</svg>\n");
    out
}

/// Blue-to-red color ramp over [0, 1].
pub fn ramp(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 * v) as u8;
    let b = (255.0 * (1.0 - v)) as u8;
    let g = (110.0 * (1.0 - (2.0 * v - 1.0).abs())) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heat map of an n x n matrix; `None` cells are left blank. Values are
/// normalized to the observed range before applying the color ramp.
pub fn heatmap_chart(title: &str, cells: &[Vec<Option<f64>>]) -> String {
    let n = cells.len().max(1);
    let values: Vec<f64> = cells.iter().flatten().flatten().cloned().collect();
    let v_min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let v_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (v_max - v_min).max(1e-12);
    let f = Frame { x_min: 0.0, x_max: n as f64, y_min: 0.0, y_max: n as f64 };
    let mut out = header(title);
    let cell_w = (f.x(1.0) - f.x(0.0)).abs();
    for (i, row) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                let color = ramp((v - v_min) / span);
                let _ = write!(
                    out,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\"/>\n",
                    fmt(f.x(i as f64)),
                    fmt(f.y(j as f64 + 1.0)),
                    fmt(cell_w),
                    fmt(cell_w)
                );
            }
        }
    }
    axes(&mut out, &f, "months (author a)", "months (author b)");
    let _ = write!(
        out,
        "<text x=\"{}\" y=\"34\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"10\">range {} – {}</text>\n",
        WIDTH / 2.0,
        fmt(v_min),
        fmt(v_max)
    );
    out.push_str("</svg>\n");
    out
}
