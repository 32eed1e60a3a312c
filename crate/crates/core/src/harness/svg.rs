//! Minimal SVG 1.1 time-series plots with fixed number formatting, so the
//! same inputs always produce the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::run::Snapshot;
use crate::metrics::EnsembleStats;

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 45.0;
/// Points per polyline beyond which series are thinned.
const MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub width: f64,
    pub height: f64,
    pub title: String,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            width: 800.0,
            height: 500.0,
            title: String::new(),
        }
    }
}

struct Frame {
    w: f64,
    h: f64,
    t_max: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        MARGIN_LEFT + (self.w - MARGIN_LEFT - MARGIN_RIGHT) * t / self.t_max.max(1.0)
    }

    fn y(&self, v: f64) -> f64 {
        self.h - MARGIN_BOTTOM - (self.h - MARGIN_TOP - MARGIN_BOTTOM) * v.clamp(0.0, 1.0)
    }
}

fn header(out: &mut String, opts: &PlotOptions, frame: &Frame, y_label: &str) {
    let (w, h) = (opts.width, opts.height);
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1) = (frame.x(0.0), frame.x(frame.t_max));
    let (y0, y1) = (frame.y(0.0), frame.y(1.0));
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.2} {y1:.2} L{x0:.2} {y0:.2} L{x1:.2} {y0:.2}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
        let t = frame.t_max * v;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{t:.0}</text>"#,
            frame.x(t),
            y0 + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">t</text>"#,
        (x0 + x1) / 2.0,
        h - 8.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{y_label}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    if !opts.title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="18" font-size="14" text-anchor="middle">{}</text>"#,
            w / 2.0,
            escape(&opts.title)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn thin(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

fn polyline(out: &mut String, points: impl Iterator<Item = (f64, f64)>, style: &str) {
    out.push_str(r#"<polyline points=""#);
    let mut first = true;
    for (x, y) in points {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    let _ = writeln!(out, r#"" fill="none" {style}/>"#);
}

/// Every agent's opinion over the snapshot times.
pub fn agents_svg(snapshots: &[Snapshot], opts: &PlotOptions) -> Result<String> {
    if snapshots.is_empty() {
        return Err(Error::Plot(
            "no snapshots to plot (record with a snapshot stride)".into(),
        ));
    }
    let n = snapshots[0].values.len();
    if snapshots.iter().any(|s| s.values.len() != n) {
        return Err(Error::Plot("snapshots disagree on agent count".into()));
    }
    let frame = Frame {
        w: opts.width,
        h: opts.height,
        t_max: snapshots.last().map_or(1, |s| s.t) as f64,
    };
    let mut out = String::new();
    header(&mut out, opts, &frame, "opinion");
    let stride = thin(snapshots.len());
    for i in 0..n {
        polyline(
            &mut out,
            snapshots
                .iter()
                .step_by(stride)
                .map(|s| (frame.x(s.t as f64), frame.y(s.values[i]))),
            r##"stroke="#1f4e9c" stroke-width="0.6" stroke-opacity="0.7""##,
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Ensemble mean diameter with its confidence band and the `epsilon` line.
pub fn diameter_svg(stats: &EnsembleStats, epsilon: f64, opts: &PlotOptions) -> Result<String> {
    let steps = stats.steps();
    if steps == 0 {
        return Err(Error::Plot("empty ensemble statistics".into()));
    }
    let frame = Frame {
        w: opts.width,
        h: opts.height,
        t_max: (steps - 1) as f64,
    };
    let mut out = String::new();
    header(&mut out, opts, &frame, "mean d_V");
    let stride = thin(steps);
    let idx: Vec<usize> = (0..steps).step_by(stride).collect();
    out.push_str(r#"<polygon points=""#);
    let upper = idx.iter().map(|&t| (t, stats.upper(t)));
    let lower = idx.iter().rev().map(|&t| (t, stats.lower(t)));
    let mut first = true;
    for (t, v) in upper.chain(lower) {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{:.2},{:.2}", frame.x(t as f64), frame.y(v));
    }
    let _ = writeln!(out, r##"" fill="#9cb8e6" fill-opacity="0.5" stroke="none"/>"##);
    polyline(
        &mut out,
        idx.iter().map(|&t| (frame.x(t as f64), frame.y(stats.mean[t]))),
        r##"stroke="#1f4e9c" stroke-width="1.2""##,
    );
    let y = frame.y(epsilon);
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#c0392b" stroke-width="1" stroke-dasharray="6 4"/>"##,
        frame.x(0.0),
        frame.x(frame.t_max)
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#c0392b" text-anchor="end">epsilon = {epsilon}</text>"##,
        frame.x(frame.t_max),
        y - 4.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(svg: &str, path: &Path) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
