//! Standalone SVG figures: overlaid curves with axes and a legend.
//!
//! The first series is drawn solid, the second dashed, so a pair of
//! trajectories from the two simulators renders in the usual
//! solid-vs-dashed comparison style.

use crate::timeseries::TimeSeries;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 52.0;

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];
/// Dash pattern per series index; the first series is solid.
const DASHES: [&str; 4] = ["", "8,5", "2,3", "8,3,2,3"];

/// One trajectory to draw, with the label used in the legend.
pub struct PlotSeries<'a> {
    pub label: String,
    pub series: &'a TimeSeries,
}

/// Render the selected signals of every series into an SVG document.
pub fn render_svg(series: &[PlotSeries<'_>], signals: &[String]) -> Result<String, PlotError> {
    if series.is_empty() || signals.is_empty() {
        return Err(PlotError::EmptySelection);
    }
    for s in series {
        for name in signals {
            if !s.series.has_signal(name) {
                return Err(PlotError::UnknownSignal { name: name.clone() });
            }
        }
    }
    let times = series[0].series.times();
    for s in &series[1..] {
        if s.series.times() != times {
            return Err(PlotError::GridMismatch {
                detail: format!("series {:?} has a different sample grid", s.label),
            });
        }
    }
    if times.is_empty() {
        return Err(PlotError::EmptySelection);
    }

    // data ranges with padding
    let (mut x_min, mut x_max) = (times[0], times[times.len() - 1]);
    if x_min == x_max {
        x_min -= 0.5;
        x_max += 0.5;
    }
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for name in signals {
            for &v in s.series.column(name).expect("validated above") {
                if v.is_finite() {
                    y_min = y_min.min(v);
                    y_max = y_max.max(v);
                }
            }
        }
    }
    if !y_min.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if y_min == y_max {
        let pad = y_min.abs().max(1.0) * 0.1;
        y_min -= pad;
        y_max += pad;
    } else {
        let pad = (y_max - y_min) * 0.05;
        y_min -= pad;
        y_max += pad;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_px = |t: f64, v: f64| {
        (
            MARGIN_LEFT + (t - x_min) / (x_max - x_min) * plot_w,
            MARGIN_TOP + (y_max - v) / (y_max - y_min) * plot_h,
        )
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();

    // grid and tick labels
    const TICKS: usize = 6;
    for k in 0..TICKS {
        let frac = k as f64 / (TICKS - 1) as f64;
        let tx = x_min + frac * (x_max - x_min);
        let (px, _) = to_px(tx, y_min);
        writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{top:.2}" x2="{px:.2}" y2="{bot:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            top = MARGIN_TOP,
            bot = MARGIN_TOP + plot_h
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{px:.2}" y="{y:.2}" font-size="12" text-anchor="middle" font-family="sans-serif">{label}</text>"#,
            y = MARGIN_TOP + plot_h + 18.0,
            label = tick_label(tx)
        )
        .unwrap();

        let ty = y_min + frac * (y_max - y_min);
        let (_, py) = to_px(x_min, ty);
        writeln!(
            svg,
            r##"<line x1="{left:.2}" y1="{py:.2}" x2="{right:.2}" y2="{py:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            left = MARGIN_LEFT,
            right = MARGIN_LEFT + plot_w
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{x:.2}" y="{py:.2}" font-size="12" text-anchor="end" dominant-baseline="middle" font-family="sans-serif">{label}</text>"#,
            x = MARGIN_LEFT - 8.0,
            label = tick_label(ty)
        )
        .unwrap();
    }

    // axes
    writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black" stroke-width="1"/>"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{x:.2}" y="{y:.2}" font-size="13" text-anchor="middle" font-family="sans-serif">time (s)</text>"#,
        x = MARGIN_LEFT + plot_w / 2.0,
        y = HEIGHT - 12.0
    )
    .unwrap();

    // curves: color per signal, dash per series
    for (series_idx, s) in series.iter().enumerate() {
        let dash = DASHES[series_idx % DASHES.len()];
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        for (signal_idx, name) in signals.iter().enumerate() {
            let color = COLORS[signal_idx % COLORS.len()];
            let column = s.series.column(name).expect("validated above");
            let mut d = String::new();
            let mut pen_down = false;
            for (&t, &v) in times.iter().zip(column) {
                if !v.is_finite() {
                    pen_down = false;
                    continue;
                }
                let (px, py) = to_px(t, v);
                if pen_down {
                    write!(d, " L{px:.3},{py:.3}").unwrap();
                } else {
                    write!(d, "M{px:.3},{py:.3}").unwrap();
                    pen_down = true;
                }
            }
            writeln!(
                svg,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash_attr}/>"#
            )
            .unwrap();
        }
    }

    // legend, top-right inside the frame
    let entries: Vec<(String, &str, &str)> = series
        .iter()
        .enumerate()
        .flat_map(|(series_idx, s)| {
            let dash = DASHES[series_idx % DASHES.len()];
            signals.iter().enumerate().map(move |(signal_idx, name)| {
                (
                    format!("{} {}", s.label, name),
                    COLORS[signal_idx % COLORS.len()],
                    dash,
                )
            })
        })
        .collect();
    let legend_h = entries.len() as f64 * 18.0 + 10.0;
    let legend_w = 230.0;
    let lx = MARGIN_LEFT + plot_w - legend_w - 10.0;
    let ly = MARGIN_TOP + 10.0;
    writeln!(
        svg,
        r##"<rect x="{lx:.2}" y="{ly:.2}" width="{legend_w}" height="{legend_h:.2}" fill="white" fill-opacity="0.85" stroke="#999999"/>"##
    )
    .unwrap();
    for (k, (label, color, dash)) in entries.iter().enumerate() {
        let yy = ly + 18.0 * (k as f64 + 1.0) - 4.0;
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        writeln!(
            svg,
            r#"<line x1="{x1:.2}" y1="{yy:.2}" x2="{x2:.2}" y2="{yy:.2}" stroke="{color}" stroke-width="1.5"{dash_attr}/>"#,
            x1 = lx + 8.0,
            x2 = lx + 40.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{x:.2}" y="{yy:.2}" font-size="12" dominant-baseline="middle" font-family="sans-serif">{label}</text>"#,
            x = lx + 48.0
        )
        .unwrap();
    }

    writeln!(svg, "</svg>").unwrap();
    Ok(svg)
}

/// Render and write to a file.
pub fn emit_plot_svg(
    series: &[PlotSeries<'_>],
    signals: &[String],
    path: &Path,
) -> Result<(), PlotError> {
    let svg = render_svg(series, signals)?;
    std::fs::write(path, svg)?;
    Ok(())
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let abs = v.abs();
    if (1e-3..1e4).contains(&abs) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.3e}")
    }
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no series or signals selected")]
    EmptySelection,
    #[error("signal {name:?} not present in every series")]
    UnknownSignal { name: String },
    #[error("sample grids do not match: {detail}")]
    GridMismatch { detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PlotError {
    pub fn kind(&self) -> &'static str {
        match self {
            PlotError::EmptySelection => "EmptySelection",
            PlotError::UnknownSignal { .. } => "UnknownSignal",
            PlotError::GridMismatch { .. } => "GridMismatch",
            PlotError::Io(_) => "IoError",
        }
    }
}
