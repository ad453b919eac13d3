//! Self-contained SVG line charts with standard-error ribbons.
//!
//! Each series is drawn as one `<polyline>` through the means and one
//! translucent `<polygon>` ribbon whose vertices run along `mean + sem` and
//! back along `mean - sem`. The x axis is logarithmic; the main panel's y axis
//! is logarithmic when every plotted value is positive.

use std::fmt::Write as _;

use crate::harness::{AggregateRow, EstimatorKind};

const WIDTH: f64 = 640.0;
const MAIN_HEIGHT: f64 = 400.0;
const PANEL_HEIGHT: f64 = 160.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 120.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Simulation,
    Prediction,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::Simulation => "simulation RMS",
            Metric::Prediction => "1-step prediction RMS",
        }
    }

    fn pick(&self, r: &AggregateRow) -> (Option<f64>, Option<f64>) {
        match self {
            Metric::Simulation => (r.mean_rms_simulation, r.sem_rms_simulation),
            Metric::Prediction => (r.mean_rms_prediction, r.sem_rms_prediction),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub mean: f64,
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Failure proportion per series, drawn in a second panel when present.
    pub failures: Option<Vec<Series>>,
}

fn estimator_order(rows: &[AggregateRow]) -> Vec<EstimatorKind> {
    let mut order = Vec::new();
    for r in rows {
        if !order.contains(&r.estimator) {
            order.push(r.estimator);
        }
    }
    order
}

/// Chart of one metric from aggregate rows; points with no mean are skipped.
pub fn chart_from_aggregates(rows: &[AggregateRow], metric: Metric, x_label: &str, with_failures: bool) -> Chart {
    let order = estimator_order(rows);
    let collect = |kind: EstimatorKind, f: &dyn Fn(&AggregateRow) -> Option<SeriesPoint>| {
        let mut points: Vec<SeriesPoint> = rows.iter().filter(|r| r.estimator == kind).filter_map(f).collect();
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        Series { name: kind.as_str().to_uppercase(), points }
    };
    let series = order
        .iter()
        .map(|&k| {
            collect(k, &|r| {
                let (mean, sem) = metric.pick(r);
                Some(SeriesPoint { x: r.sweep_value, mean: mean?, sem: sem.unwrap_or(0.0) })
            })
        })
        .collect();
    let failures = with_failures.then(|| {
        order
            .iter()
            .map(|&k| collect(k, &|r| Some(SeriesPoint { x: r.sweep_value, mean: r.failure_proportion, sem: 0.0 })))
            .collect()
    });
    Chart { title: metric.label().to_string(), x_label: x_label.to_string(), y_label: metric.label().to_string(), series, failures }
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    pixel_lo: f64,
    pixel_hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64> + Clone, log: bool, pixel_lo: f64, pixel_hi: f64) -> Self {
        let usable = values.filter(|v| v.is_finite() && (!log || *v > 0.0));
        let (mut lo, mut hi) = usable.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = if log { (1.0, 10.0) } else { (0.0, 1.0) };
        }
        if log {
            (lo, hi) = (lo.log10(), hi.log10());
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi, log, pixel_lo, pixel_hi }
    }

    fn to_pixel(&self, v: f64) -> f64 {
        let v = if self.log { v.max(f64::MIN_POSITIVE).log10() } else { v };
        let t = ((v - self.lo) / (self.hi - self.lo)).clamp(-0.05, 1.05);
        self.pixel_lo + t * (self.pixel_hi - self.pixel_lo)
    }

    /// Tick positions in data units with their labels.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            (a..=b)
                .map(|e| 10f64.powi(e))
                .filter(|v| {
                    let l = v.log10();
                    l >= self.lo - 1e-9 && l <= self.hi + 1e-9
                })
                .map(|v| (v, format!("{v:e}")))
                .collect()
        } else {
            (0..=4)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * f64::from(i) / 4.0;
                    (v, format!("{v:.2}"))
                })
                .collect()
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn points_attr(pts: &[(f64, f64)]) -> String {
    pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
}

/// Draws axes, ticks and every series of one panel.
fn panel(out: &mut String, series: &[Series], y_label: &str, x_label: Option<&str>, log_y: bool, top: f64, height: f64, ribbons: bool) {
    let x_values = series.iter().flat_map(|s| s.points.iter().map(|p| p.x));
    let xa = Axis::new(x_values.collect::<Vec<_>>().into_iter(), true, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let mut y_values: Vec<f64> = Vec::new();
    for s in series {
        for p in &s.points {
            y_values.push(p.mean + p.sem);
            y_values.push(if log_y && p.mean - p.sem <= 0.0 { p.mean } else { p.mean - p.sem });
        }
    }
    let ya = Axis::new(y_values.into_iter(), log_y, top + height, top);
    let (left, right, bottom) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT, top + height);
    let _ = writeln!(out, r#"<g class="axes"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    for (v, label) in xa.ticks() {
        let x = xa.to_pixel(v);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{label}</text>"#, bottom + 5.0, bottom + 18.0);
    }
    for (v, label) in ya.ticks() {
        let y = ya.to_pixel(v);
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{label}</text>"#, left - 5.0, left - 8.0, y + 4.0);
    }
    if let Some(x_label) = x_label {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#, (left + right) / 2.0, bottom + 38.0, escape(x_label));
    }
    let mid = top + height / 2.0;
    let _ = writeln!(out, r#"<text x="16" y="{mid:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {mid:.2})">{}</text></g>"#, escape(y_label));
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let color = COLORS[i % COLORS.len()];
        if ribbons {
            let upper: Vec<(f64, f64)> = s.points.iter().map(|p| (xa.to_pixel(p.x), ya.to_pixel(p.mean + p.sem))).collect();
            let lower: Vec<(f64, f64)> = s
                .points
                .iter()
                .rev()
                .map(|p| {
                    let lo = if log_y && p.mean - p.sem <= 0.0 { p.mean } else { p.mean - p.sem };
                    (xa.to_pixel(p.x), ya.to_pixel(lo))
                })
                .collect();
            let ring: Vec<(f64, f64)> = upper.into_iter().chain(lower).collect();
            let _ = writeln!(out, r#"<polygon class="ribbon" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, points_attr(&ring));
        }
        let line: Vec<(f64, f64)> = s.points.iter().map(|p| (xa.to_pixel(p.x), ya.to_pixel(p.mean))).collect();
        let _ = writeln!(out, r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, points_attr(&line));
    }
}

/// Renders a chart as a standalone SVG document.
pub fn render_svg(chart: &Chart) -> String {
    let height = MARGIN_TOP + MAIN_HEIGHT + MARGIN_BOTTOM + chart.failures.as_ref().map_or(0.0, |_| PANEL_HEIGHT + MARGIN_BOTTOM);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="24" font-size="15" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&chart.title));
    let log_y = chart.series.iter().flat_map(|s| &s.points).all(|p| p.mean > 0.0);
    let x_main = chart.failures.is_none().then_some(chart.x_label.as_str());
    panel(&mut out, &chart.series, &chart.y_label, x_main, log_y, MARGIN_TOP, MAIN_HEIGHT, true);
    if let Some(failures) = &chart.failures {
        let top = MARGIN_TOP + MAIN_HEIGHT + MARGIN_BOTTOM;
        panel(&mut out, failures, "failure proportion", Some(&chart.x_label), false, top, PANEL_HEIGHT, false);
    }
    let _ = writeln!(out, r#"<g class="legend">"#);
    for (i, s) in chart.series.iter().enumerate() {
        let y = MARGIN_TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - MARGIN_RIGHT + 15.0;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(out, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="12">{}</text>"#, x + 20.0, x + 26.0, y + 4.0, escape(&s.name));
    }
    out.push_str("</g>\n</svg>\n");
    out
}
