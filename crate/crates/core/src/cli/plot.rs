//! Minimal static SVG charts: multi-series line plots and bar charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// One named polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Evenly spaced tick values covering `[lo, hi]` with a 1/2/5 step.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    let units = (step / mag).round();
    let scale = |n: f64| if mag < 1.0 { n / (1.0 / mag).round() } else { n * mag };
    (first..=last).map(|i| scale(i as f64 * units)).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0).max(f64::MIN_POSITIVE) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0).max(f64::MIN_POSITIVE) * (H - TOP - BOTTOM)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(title));
}

fn axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(svg, r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#);
    for v in ticks(f.y0, f.y1, 5) {
        let y = f.py(v);
        let _ = writeln!(svg, r##"<line x1="{l}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#e0e0e0"/>"##);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, l - 6.0, y + 4.0, fmt_tick(v));
    }
    if x_ticks {
        for v in ticks(f.x0, f.x1, 6) {
            let x = f.px(v);
            let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{}" stroke="black"/>"#, b + 4.0);
            let _ = writeln!(svg, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, fmt_tick(v));
        }
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (t + b) / 2.0,
        escape(y_label)
    );
}

/// Line chart of several series sharing axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let f = Frame { x0, x1, y0, y1 };
    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, &f, x_label, y_label, true);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .enumerate()
            .map(|(j, &(x, y))| format!("{}{:.2},{:.2}", if j == 0 { 'M' } else { 'L' }, f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, d.join(" "));
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Bar chart of labeled values, with optional symmetric error bars.
pub fn bar_chart(title: &str, x_label: &str, y_label: &str, bars: &[(String, f64, Option<f64>)]) -> String {
    let top = bars.iter().map(|b| b.1 + b.2.unwrap_or(0.0)).filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let f = Frame { x0: 0.0, x1: bars.len().max(1) as f64, y0: 0.0, y1: if top > 0.0 { top * 1.1 } else { 1.0 } };
    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, &f, x_label, y_label, false);
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    for (i, (label, v, err)) in bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let (x, y, base) = (LEFT + slot * (i as f64 + 0.2), f.py(*v), f.py(0.0));
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            slot * 0.6,
            (base - y).max(0.0)
        );
        let cx = LEFT + slot * (i as f64 + 0.5);
        if let Some(e) = err {
            let (a, b) = (f.py(v - e), f.py(v + e));
            let _ = writeln!(svg, r#"<line x1="{cx:.2}" y1="{a:.2}" x2="{cx:.2}" y2="{b:.2}" stroke="black"/>"#);
        }
        let _ = writeln!(svg, r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#, H - BOTTOM + 18.0, escape(label));
        let _ = writeln!(svg, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y - 4.0, fmt_tick((v * 1000.0).round() / 1000.0));
    }
    svg.push_str("</svg>\n");
    svg
}

/// `(1 - x)^gamma` sampled on `[0, 1]`, one series per gamma.
pub fn shaping_series(gammas: &[f64], samples: usize) -> Vec<Series> {
    gammas
        .iter()
        .map(|&g| Series {
            name: format!("gamma = {}", fmt_tick(g)),
            points: (0..=samples)
                .map(|i| {
                    let x = i as f64 / samples as f64;
                    (x, crate::metrics::shape_reward(x, g))
                })
                .collect(),
        })
        .collect()
}

/// Parses a headed CSV of numbers into columns. Empty cells become NaN.
pub fn read_numeric_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines.next().ok_or("empty CSV")?.split(',').map(|s| s.trim().to_string()).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(format!("row {} has {} fields, expected {}", n + 2, cells.len(), header.len()));
        }
        for (c, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| format!("row {}: `{cell}` is not a number", n + 2))?
            };
            cols[c].push(v);
        }
    }
    Ok((header, cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_steps() {
        assert_eq!(ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(ticks(0.0, 30.0, 6), vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    }

    #[test]
    fn shaping_endpoints() {
        for s in shaping_series(&[1.0, 5.0, 10.0, 20.0], 50) {
            assert_eq!(s.points[0], (0.0, 1.0));
            assert_eq!(s.points[50], (1.0, 0.0));
            assert!(s.points.windows(2).all(|w| w[1].1 <= w[0].1));
        }
    }

    #[test]
    fn charts_are_wellformed() {
        let svg = line_chart("t", "x", "y", &shaping_series(&[1.0, 20.0], 10));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("stroke-width=\"2\"/>").count(), 4);
        let bars = bar_chart("cd", "gamma", "cd", &[("1".into(), 2.0, Some(0.5)), ("20".into(), 1.0, None)]);
        assert_eq!(bars.matches("<rect x=").count(), 2);
    }

    #[test]
    fn csv_parsing() {
        let (h, c) = read_numeric_csv("epoch,loss,val\n0,1.5,\n1,1.0,2\n").unwrap();
        assert_eq!(h, vec!["epoch", "loss", "val"]);
        assert_eq!(c[1], vec![1.5, 1.0]);
        assert!(c[2][0].is_nan());
        assert!(read_numeric_csv("a,b\n1\n").is_err());
    }
}
