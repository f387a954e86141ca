//! Minimal standalone SVG line plot of one sweep series.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::SweepSeries;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG text for `series`: axes with ticks, mean polyline, and a ±std band
/// polygon only when some std is positive.
pub fn render_svg(series: &SweepSeries) -> Result<String> {
    if series.is_empty() {
        return Err(Error::invalid("cannot plot an empty series"));
    }
    let (x_lo, x_hi) = range(series.axis.iter().copied());
    let has_band = series.std.iter().any(|s| *s > 0.0);
    let (y_lo, y_hi) = if has_band {
        range(
            series
                .mean
                .iter()
                .zip(&series.std)
                .flat_map(|(m, s)| [m - s, m + s]),
        )
    } else {
        range(series.mean.iter().copied())
    };
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{} {}</text>"#,
        WIDTH / 2.0,
        escape(&series.name),
        escape(&series.params)
    );
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph,
        TOP + ph
    );
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#);
    for k in 0..TICKS {
        let f = k as f64 / (TICKS - 1) as f64;
        let (xv, yv) = (x_lo + f * (x_hi - x_lo), y_lo + f * (y_hi - y_lo));
        let (x, y) = (px(xv), py(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(s, "</g>");
    if has_band {
        let upper = series.axis.iter().zip(&series.mean).zip(&series.std).map(|((x, m), sd)| (px(*x), py(m + sd)));
        let lower: Vec<(f64, f64)> = series
            .axis
            .iter()
            .zip(&series.mean)
            .zip(&series.std)
            .map(|((x, m), sd)| (px(*x), py(m - sd)))
            .collect();
        let pts: Vec<String> = upper
            .chain(lower.into_iter().rev())
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect();
        let _ = writeln!(s, r##"<polygon points="{}" fill="#4477aa" fill-opacity="0.25" stroke="none"/>"##, pts.join(" "));
    }
    let pts: Vec<String> = series
        .axis
        .iter()
        .zip(&series.mean)
        .map(|(x, m)| format!("{:.2},{:.2}", px(*x), py(*m)))
        .collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#224488" stroke-width="2"/>"##, pts.join(" "));
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(series: &SweepSeries, path: &Path) -> Result<()> {
    let text = render_svg(series)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
