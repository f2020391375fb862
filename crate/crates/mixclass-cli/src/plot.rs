//! Minimal standalone SVG plots: line/scatter series over optional histogram
//! bars, linear or log10 x axis. No external assets; the CSV stays the
//! authoritative output and these renderings are a convenience.

use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Line,
    Scatter,
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub kind: SeriesKind,
}

/// Bin edges (`len = densities.len() + 1`) with bar heights.
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
}

/// Equal-width density histogram over the data range; the bars integrate
/// to one, so they can share axes with a probability density curve.
pub fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let norm = 1.0 / (values.len() as f64 * width);
    let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
    let densities = counts.iter().map(|&c| c as f64 * norm).collect();
    (edges, densities)
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
    pub bars: Option<Histogram>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 58.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            log_x: false,
            series: Vec::new(),
            bars: None,
        }
    }

    pub fn line(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            label: label.to_string(),
            points,
            kind: SeriesKind::Line,
        });
        self
    }

    pub fn scatter(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            label: label.to_string(),
            points,
            kind: SeriesKind::Scatter,
        });
        self
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn bars(mut self, edges: Vec<f64>, densities: Vec<f64>) -> Self {
        self.bars = Some(Histogram { edges, densities });
        self
    }

    fn x_transform(&self, x: f64) -> f64 {
        if self.log_x {
            x.log10()
        } else {
            x
        }
    }

    pub fn render(&self) -> String {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = vec![0.0];
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(self.x_transform(x));
                ys.push(y);
            }
        }
        if let Some(h) = &self.bars {
            for &e in &h.edges {
                xs.push(self.x_transform(e));
            }
            ys.extend_from_slice(&h.densities);
        }
        let (x_lo, x_hi) = padded_bounds(&xs);
        let (y_lo, y_hi) = padded_bounds(&ys);
        let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = |y: f64| {
            HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)
        };

        let mut out = String::with_capacity(16 * 1024);
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
            WIDTH / 2.0,
            escape(&self.title)
        ));

        // Histogram bars under everything else.
        if let Some(h) = &self.bars {
            for (k, &d) in h.densities.iter().enumerate() {
                let x0 = px(self.x_transform(h.edges[k]));
                let x1 = px(self.x_transform(h.edges[k + 1]));
                let top = py(d);
                let base = py(0.0f64.max(y_lo));
                out.push_str(&format!(
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                     fill=\"#9ecae1\" fill-opacity=\"0.7\" stroke=\"#6baed6\" stroke-width=\"0.5\"/>\n",
                    x0,
                    top,
                    (x1 - x0).max(0.0),
                    (base - top).max(0.0)
                ));
            }
        }

        // Axes with ticks.
        let frame_y = HEIGHT - MARGIN_B;
        out.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{frame_y}\" x2=\"{:.1}\" y2=\"{frame_y}\" stroke=\"black\"/>\n\
             <line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{frame_y}\" stroke=\"black\"/>\n",
            WIDTH - MARGIN_R
        ));
        for t in ticks(x_lo, x_hi, self.log_x) {
            let x = px(t);
            let label = if self.log_x {
                format_tick(10f64.powf(t))
            } else {
                format_tick(t)
            };
            out.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{frame_y}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
                 <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{label}</text>\n",
                frame_y + 5.0,
                frame_y + 19.0
            ));
        }
        for t in ticks(y_lo, y_hi, false) {
            let y = py(t);
            out.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{MARGIN_L}\" y2=\"{y:.1}\" stroke=\"black\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
                MARGIN_L - 5.0,
                MARGIN_L - 8.0,
                y + 4.0,
                format_tick(t)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
            (MARGIN_T + frame_y) / 2.0,
            (MARGIN_T + frame_y) / 2.0,
            escape(&self.y_label)
        ));

        // Series.
        for (idx, s) in self.series.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            match s.kind {
                SeriesKind::Line => {
                    let pts: Vec<String> = s
                        .points
                        .iter()
                        .map(|&(x, y)| format!("{:.2},{:.2}", px(self.x_transform(x)), py(y)))
                        .collect();
                    out.push_str(&format!(
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                        pts.join(" ")
                    ));
                }
                SeriesKind::Scatter => {
                    for &(x, y) in &s.points {
                        out.push_str(&format!(
                            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                            px(self.x_transform(x)),
                            py(y)
                        ));
                    }
                }
            }
        }

        // Legend, top right.
        let legend_x = WIDTH - MARGIN_R - 180.0;
        for (idx, s) in self.series.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            let y = MARGIN_T + 14.0 + 18.0 * idx as f64;
            match s.kind {
                SeriesKind::Line => out.push_str(&format!(
                    "<line x1=\"{legend_x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
                     stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                    legend_x + 22.0
                )),
                SeriesKind::Scatter => out.push_str(&format!(
                    "<circle cx=\"{:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                    legend_x + 11.0
                )),
            }
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
                legend_x + 28.0,
                y + 4.0,
                escape(&s.label)
            ));
        }

        out.push_str("</svg>\n");
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.render().as_bytes())
    }
}

fn padded_bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        let pad = lo.abs().max(1.0) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// At most ~6 round-valued ticks; log axes tick at integer powers of ten.
fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let first = lo.ceil() as i64;
        let last = hi.floor() as i64;
        let span = (last - first).max(0) as usize + 1;
        let stride = span.div_ceil(6).max(1) as i64;
        // Anchor the stride at zero so 10^0 is labeled whenever in range.
        return (first..=last)
            .filter(|k| k.rem_euclid(stride) == 0)
            .map(|k| k as f64)
            .collect();
    }
    let range = hi - lo;
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| range / s <= 6.0)
        .unwrap_or(mag * 10.0);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-3 {
        format!("{v:.0e}")
    } else if a >= 10.0 {
        trim_zeros(format!("{v:.1}"))
    } else {
        trim_zeros(format!("{v:.3}"))
    }
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
