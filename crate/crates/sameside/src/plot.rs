//! Self-contained SVG charts (line and bar) with axes, tick labels and a
//! legend. Output is a pure function of the input: equal series give
//! byte-identical SVG.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("plot input contains a non-finite value in series `{0}`")]
    NonFinite(String),
    #[error("plot needs at least one non-empty series")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    Bar,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Round `raw` up to a 1/2/5 x 10^k step.
fn nice_step(raw: f64) -> f64 {
    if raw <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(raw.log10().floor());
    for mult in [1.0, 2.0, 5.0, 10.0] {
        if mult * mag >= raw {
            return mult * mag;
        }
    }
    10.0 * mag
}

fn ticks(min: f64, max: f64) -> Vec<f64> {
    let step = nice_step((max - min) / 5.0);
    let first = (min / step).ceil() * step;
    let mut out = Vec::new();
    let mut v = first;
    while v <= max + step * 1e-9 {
        // Snap values like 0.30000000000000004 back onto the grid.
        out.push((v / step).round() * step);
        v += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    let rounded = (v * 1e6).round() / 1e6;
    format!("{rounded}")
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + (v - self.x_min) / (self.x_max - self.x_min) * w
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        HEIGHT - MARGIN_BOTTOM - (v - self.y_min) / (self.y_max - self.y_min) * h
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render the series as a standalone SVG 1.1 document.
pub fn emit_plot(
    series: &[Series],
    kind: PlotKind,
    title: &str,
    x_label: &str,
    y_label: &str,
) -> Result<Vec<u8>, PlotError> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(PlotError::EmptyInput);
    }
    for s in series {
        if s.points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(PlotError::NonFinite(s.name.clone()));
        }
    }

    let all_points = || series.iter().flat_map(|s| s.points.iter().copied());
    let mut x_min = all_points().map(|(x, _)| x).fold(f64::INFINITY, f64::min);
    let mut x_max = all_points().map(|(x, _)| x).fold(f64::NEG_INFINITY, f64::max);
    let mut y_min = all_points().map(|(_, y)| y).fold(f64::INFINITY, f64::min);
    let mut y_max = all_points().map(|(_, y)| y).fold(f64::NEG_INFINITY, f64::max);
    if kind == PlotKind::Bar {
        y_min = y_min.min(0.0);
    }
    if (x_max - x_min).abs() < f64::EPSILON {
        x_min -= 1.0;
        x_max += 1.0;
    }
    if (y_max - y_min).abs() < f64::EPSILON {
        y_min -= 1.0;
        y_max += 1.0;
    }
    // Bar charts need horizontal room for the bars themselves.
    if kind == PlotKind::Bar {
        let n_bars: usize = series.iter().map(|s| s.points.len()).sum();
        let pad = (x_max - x_min) / n_bars.max(1) as f64;
        x_max += pad;
    }
    let frame = Frame { x_min, x_max, y_min, y_max };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"18\" \
         text-anchor=\"middle\">{}</text>\n",
        fmt(WIDTH / 2.0),
        escape(title)
    ));

    // Axes.
    let x0 = fmt(MARGIN_LEFT);
    let y0 = fmt(HEIGHT - MARGIN_BOTTOM);
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        fmt(MARGIN_TOP)
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        fmt(WIDTH - MARGIN_RIGHT)
    ));

    // Y ticks and grid.
    for tick in ticks(frame.y_min, frame.y_max) {
        let y = fmt(frame.y(tick));
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>\n",
            fmt(WIDTH - MARGIN_RIGHT)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
            fmt(MARGIN_LEFT - 8.0),
            tick_label(tick)
        ));
    }

    // X ticks: every bar start for bar charts, nice ticks otherwise.
    let x_ticks: Vec<f64> = match kind {
        PlotKind::Bar => {
            let mut xs: Vec<f64> = all_points().map(|(x, _)| x).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            xs
        }
        PlotKind::Line => ticks(frame.x_min, frame.x_max),
    };
    for &tick in &x_ticks {
        let x = fmt(frame.x(tick));
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(HEIGHT - MARGIN_BOTTOM + 5.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            fmt(HEIGHT - MARGIN_BOTTOM + 20.0),
            tick_label(tick)
        ));
    }

    // Axis labels.
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{}</text>\n",
        fmt((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        fmt(HEIGHT - 15.0),
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{}</text>\n",
        fmt(HEIGHT / 2.0),
        fmt(HEIGHT / 2.0),
        escape(y_label)
    ));

    // Data.
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        match kind {
            PlotKind::Line => {
                let points: Vec<String> = s
                    .points
                    .iter()
                    .map(|&(x, y)| format!("{},{}", fmt(frame.x(x)), fmt(frame.y(y))))
                    .collect();
                svg.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" \
                     points=\"{}\"/>\n",
                    points.join(" ")
                ));
                for &(x, y) in &s.points {
                    svg.push_str(&format!(
                        "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                        fmt(frame.x(x)),
                        fmt(frame.y(y))
                    ));
                }
            }
            PlotKind::Bar => {
                let n_bars: usize = s.points.len().max(1);
                let slot = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / n_bars as f64;
                let bar_w = slot * 0.8;
                for &(x, y) in &s.points {
                    let top = frame.y(y.max(0.0));
                    let bottom = frame.y(y.min(0.0));
                    svg.push_str(&format!(
                        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" \
                         fill=\"{color}\" fill-opacity=\"0.8\"/>\n",
                        fmt(frame.x(x)),
                        fmt(top),
                        fmt(bar_w),
                        fmt(bottom - top),
                    ));
                }
            }
        }
    }

    // Legend, top right.
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let y = MARGIN_TOP + 18.0 * si as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            fmt(WIDTH - MARGIN_RIGHT - 150.0),
            fmt(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            fmt(WIDTH - MARGIN_RIGHT - 132.0),
            fmt(y + 10.0),
            escape(&s.name)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg.into_bytes())
}
