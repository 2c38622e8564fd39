//! Minimal SVG line plots: axes with linear or decade ticks, polylines and a
//! legend.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;

/// Colours for successive members.
pub const PALETTE: [&str; 8] = [
    "#440154", "#3b528b", "#21918c", "#5ec962", "#e3a600", "#d1495b", "#6a4c93", "#1982c4",
];

pub fn color(index: usize) -> &'static str {
    PALETTE[index % PALETTE.len()]
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, color: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            color: color.to_string(),
            dashed: false,
            points,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Axis {
    pub label: String,
    pub log: bool,
    pub range: Option<(f64, f64)>,
}

impl Axis {
    pub fn linear(label: &str) -> Self {
        Self {
            label: label.into(),
            log: false,
            range: None,
        }
    }

    pub fn log(label: &str) -> Self {
        Self {
            label: label.into(),
            log: true,
            range: None,
        }
    }

    fn map(&self, v: f64) -> Option<f64> {
        if self.log {
            (v > 0.0).then(|| v.log10())
        } else {
            v.is_finite().then_some(v)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x: Axis,
    pub y: Axis,
    pub series: Vec<Series>,
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    mag * if r < 1.5 {
        1.0
    } else if r < 3.0 {
        2.0
    } else if r < 7.0 {
        5.0
    } else {
        10.0
    }
}

fn fmt_tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

impl Plot {
    pub fn new(title: impl Into<String>, x: Axis, y: Axis) -> Self {
        Self {
            title: title.into(),
            x,
            y,
            series: Vec::new(),
        }
    }

    pub fn push(&mut self, s: Series) {
        self.series.push(s);
    }

    /// Data range in mapped (possibly log10) coordinates.
    fn extent(&self, axis: &Axis, pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
        if let Some((lo, hi)) = axis.range {
            if let (Some(a), Some(b)) = (axis.map(lo), axis.map(hi)) {
                return (a, b);
            }
        }
        let (mut lo, mut hi) = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter_map(|p| axis.map(pick(p)))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            return (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        if axis.log {
            (lo.floor(), hi.ceil())
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    }

    pub fn render_body(&self, out: &mut String, dy: f64) {
        let (x0, x1) = self.extent(&self.x, |p| p.0);
        let (y0, y1) = self.extent(&self.y, |p| p.1);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * pw;
        let sy = |v: f64| dy + TOP + (1.0 - (v - y0) / (y1 - y0)) * ph;

        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{:.2}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#,
            dy + TOP
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            dy + TOP - 10.0,
            escape(&self.title)
        );
        for (axis, lo, hi, horizontal) in [(&self.x, x0, x1, true), (&self.y, y0, y1, false)] {
            let ticks: Vec<f64> = if axis.log {
                (lo.ceil() as i64..=hi.floor() as i64).map(|k| k as f64).collect()
            } else {
                let step = nice_step(hi - lo);
                let first = (lo / step).ceil() as i64;
                let last = (hi / step).floor() as i64;
                (first..=last).map(|k| k as f64 * step).collect()
            };
            for t in ticks {
                let label = fmt_tick(t, axis.log);
                if horizontal {
                    let x = sx(t);
                    let yb = dy + HEIGHT - BOTTOM;
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{label}</text>"#,
                        yb + 5.0,
                        yb + 18.0
                    );
                } else {
                    let y = sy(t);
                    let _ = writeln!(
                        out,
                        r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{label}</text>"#,
                        LEFT - 5.0,
                        LEFT - 8.0,
                        y + 4.0
                    );
                }
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
            LEFT + pw / 2.0,
            dy + HEIGHT - 10.0,
            escape(&self.x.label)
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle" font-size="12">{}</text>"#,
            dy + TOP + ph / 2.0,
            escape(&self.y.label)
        );

        let _ = writeln!(
            out,
            r#"<clipPath id="clip{dy:.0}"><rect x="{LEFT}" y="{:.2}" width="{pw}" height="{ph}"/></clipPath>"#,
            dy + TOP
        );
        for (k, s) in self.series.iter().enumerate() {
            let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            // non-finite or non-positive (log) points split the line
            let mut segment = String::new();
            let flush = |segment: &mut String, out: &mut String| {
                if !segment.is_empty() {
                    let _ = writeln!(
                        out,
                        r#"<polyline clip-path="url(#clip{dy:.0})" fill="none" stroke="{}" stroke-width="1.2"{dash} points="{}"/>"#,
                        s.color,
                        segment.trim_end()
                    );
                    segment.clear();
                }
            };
            for p in &s.points {
                match (self.x.map(p.0), self.y.map(p.1)) {
                    (Some(x), Some(y)) => {
                        let _ = write!(segment, "{:.2},{:.2} ", sx(x), sy(y));
                    }
                    _ => flush(&mut segment, out),
                }
            }
            flush(&mut segment, out);
            let ly = dy + TOP + 14.0 + 16.0 * k as f64;
            let lx = WIDTH - RIGHT + 10.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
                lx + 20.0,
                s.color,
                lx + 25.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
    }

    pub fn render(&self) -> String {
        render_stack(std::slice::from_ref(self))
    }
}

/// Plots stacked vertically in one document.
pub fn render_stack(plots: &[Plot]) -> String {
    let total = HEIGHT * plots.len().max(1) as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{total}\" viewBox=\"0 0 {WIDTH} {total}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (k, p) in plots.iter().enumerate() {
        p.render_body(&mut out, k as f64 * HEIGHT);
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
