//! Plain SVG output: curve overlays with error bands, and heatmaps.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Half-width of a shaded band around `y`.
    pub band: Option<Vec<f64>>,
    pub style: Style,
}

impl PlotSeries {
    pub fn line(name: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        PlotSeries { name: name.into(), x, y, band: None, style: Style::Line }
    }

    pub fn points(name: &str, x: Vec<f64>, y: Vec<f64>, band: Option<Vec<f64>>) -> Self {
        PlotSeries { name: name.into(), x, y, band, style: Style::Points }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// About `n` round tick positions covering [lo, hi].
pub fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / n.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }
    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn bounds(series: &[PlotSeries]) -> Frame {
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (i, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            let b = s.band.as_ref().map_or(0.0, |b| b[i].abs());
            xs = (xs.0.min(x), xs.1.max(x));
            ys = (ys.0.min(y - b), ys.1.max(y + b));
        }
    }
    if !xs.0.is_finite() {
        xs = (0.0, 1.0);
        ys = (0.0, 1.0);
    }
    if xs.1 - xs.0 < 1e-12 {
        xs = (xs.0 - 0.5, xs.1 + 0.5);
    }
    if ys.1 - ys.0 < 1e-12 {
        ys = (ys.0 - 0.5, ys.1 + 0.5);
    }
    let pad = 0.05 * (ys.1 - ys.0);
    Frame { x0: xs.0, x1: xs.1, y0: ys.0 - pad, y1: ys.1 + pad }
}

fn axes(out: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#333"/>"##, r - l, b - t);
    for v in ticks(f.x0, f.x1, 8) {
        let x = f.px(v);
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{}" stroke="#333"/>"##, b + 5.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, b + 19.0, fmt_tick(v));
    }
    for v in ticks(f.y0, f.y1, 6) {
        let y = f.py(v);
        let _ = writeln!(out, r##"<line x1="{}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="#333"/>"##, l - 5.0);
        let _ = writeln!(out, r##"<line x1="{l}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#ddd" stroke-width="0.5"/>"##);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#, l - 8.0, y + 4.0, fmt_tick(v));
    }
    let _ = writeln!(out, r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>"#, (l + r) / 2.0, esc(title));
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 12.0, esc(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (t + b) / 2.0,
        esc(ylabel)
    );
}

/// Curves and measured points on shared axes, with optional error bands.
pub fn overlay_svg(title: &str, xlabel: &str, ylabel: &str, series: &[PlotSeries]) -> String {
    let f = bounds(series);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    axes(&mut out, &f, title, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some(band) = &s.band {
            let upper = s.x.iter().zip(&s.y).zip(band).map(|((&x, &y), &b)| format!("{:.2},{:.2}", f.px(x), f.py(y + b.abs())));
            let lower = s.x.iter().zip(&s.y).zip(band).rev().map(|((&x, &y), &b)| format!("{:.2},{:.2}", f.px(x), f.py(y - b.abs())));
            let pts: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, pts.join(" "));
        }
        match s.style {
            Style::Line => {
                let pts: Vec<String> = s.x.iter().zip(&s.y).map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
                let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#, pts.join(" "));
            }
            Style::Points => {
                for (&x, &y) in s.x.iter().zip(&s.y) {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3.2" fill="{color}"/>"#, f.px(x), f.py(y));
                }
            }
        }
        let ly = TOP + 14.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 12.0;
        match s.style {
            Style::Line => {
                let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
            }
            Style::Points => {
                let _ = writeln!(out, r#"<circle cx="{}" cy="{ly}" r="3.2" fill="{color}"/>"#, lx + 9.0);
            }
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, lx + 24.0, ly + 4.0, esc(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

fn viridis_like(t: f64) -> String {
    // three-stop blend: dark blue, teal, yellow
    let stops = [(68.0, 1.0, 84.0), (33.0, 145.0, 140.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * 2.0;
    let (a, b, u) = if t < 1.0 { (stops[0], stops[1], t) } else { (stops[1], stops[2], t - 1.0) };
    let mix = |p: f64, q: f64| (p + (q - p) * u).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Colour map of `values[i * ys.len() + j]` at `(xs[i], ys[j])`, with an optional marker.
pub fn heatmap_svg(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64], values: &[f64], marker: Option<(f64, f64)>) -> String {
    let (lo, hi) = values.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let step = |v: &[f64]| if v.len() > 1 { (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64 } else { 1.0 };
    let (dx, dy) = (step(xs), step(ys));
    let f = Frame {
        x0: xs.first().copied().unwrap_or(0.0) - dx / 2.0,
        x1: xs.last().copied().unwrap_or(1.0) + dx / 2.0,
        y0: ys.first().copied().unwrap_or(0.0) - dy / 2.0,
        y1: ys.last().copied().unwrap_or(1.0) + dy / 2.0,
    };
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let cw = (f.px(f.x0 + dx) - f.px(f.x0)).abs() + 0.3;
    let ch = (f.py(f.y0 + dy) - f.py(f.y0)).abs() + 0.3;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let v = values[i * ys.len() + j];
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}"/>"#,
                f.px(x - dx / 2.0),
                f.py(y + dy / 2.0),
                viridis_like((v - lo) / span)
            );
        }
    }
    axes(&mut out, &f, title, xlabel, ylabel);
    if let Some((mx, my)) = marker {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="6" fill="none" stroke="red" stroke-width="2"/>"#, f.px(mx), f.py(my));
    }
    // colour bar
    let bx = W - RIGHT + 30.0;
    for k in 0..50 {
        let t = k as f64 / 49.0;
        let y = H - BOTTOM - t * (H - TOP - BOTTOM);
        let _ = writeln!(out, r#"<rect x="{bx}" y="{:.2}" width="18" height="{:.2}" fill="{}"/>"#, y - (H - TOP - BOTTOM) / 49.0, (H - TOP - BOTTOM) / 49.0 + 0.5, viridis_like(t));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, bx + 24.0, H - BOTTOM, fmt_tick(lo));
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, bx + 24.0, TOP + 10.0, fmt_tick(hi));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(0.0, 7.85, 8);
        assert_eq!(t.first(), Some(&0.0));
        assert!(t.iter().all(|&v| (0.0..=7.85).contains(&v)));
        assert!(t.windows(2).all(|w| ((w[1] - w[0]) - 1.0).abs() < 1e-12));
        assert_eq!(ticks(1.0, 1.0, 5), vec![1.0]);
    }

    #[test]
    fn overlay_has_every_layer() {
        let x: Vec<f64> = (0..5).map(|k| k as f64).collect();
        let svg = overlay_svg(
            "a < b",
            "tau",
            "G",
            &[PlotSeries::line("analytic", x.clone(), x.clone()), PlotSeries::points("measured", x.clone(), x.clone(), Some(vec![0.1; 5]))],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("<polygon"));
        assert_eq!(svg.matches("<circle").count(), 6); // five points and a legend dot
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn heatmap_cells_and_marker() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 1.0];
        let svg = heatmap_svg("E", "alpha", "beta", &xs, &ys, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], Some((1.0, 1.0)));
        assert!(svg.contains(r#"stroke="red""#));
        assert_eq!(viridis_like(0.0), "#440154");
        assert_eq!(viridis_like(1.0), "#fde725");
    }
}
