//! Standalone SVG plot of mean final regret against dimension.
//!
//! The x axis is log-scaled with ticks at powers of two. Each privacy level
//! gets one mean polyline and one shaded polygon for its 95% band.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::config::EpsilonSetting;
use crate::sweep::{Aggregate, SweepResult};

pub const PLOT_FILE: &str = "regret_vs_d.svg";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, d: f64) -> f64 {
        LEFT + (d.log2() - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - TOP - BOTTOM)
    }
}

fn label(e: EpsilonSetting) -> String {
    match e {
        EpsilonSetting::Private(v) => format!("ε = {v}"),
        EpsilonSetting::NonPrivate => "non-private".to_owned(),
    }
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

fn series(res: &SweepResult, e: EpsilonSetting) -> Vec<&Aggregate> {
    let mut pts: Vec<&Aggregate> = res.aggregates.iter().filter(|a| a.epsilon == e).collect();
    pts.sort_by_key(|a| a.dim);
    pts
}

pub fn render_svg(res: &SweepResult) -> String {
    let dims = res.aggregates.iter().map(|a| a.dim as f64);
    let (mut x_lo, mut x_hi) = dims.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
        (lo.min(d.log2()), hi.max(d.log2()))
    });
    if x_hi - x_lo < 1e-9 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let y_lo = res.aggregates.iter().map(Aggregate::lower).fold(0.0f64, f64::min);
    let mut y_hi = res.aggregates.iter().map(Aggregate::upper).fold(f64::NEG_INFINITY, f64::max);
    if !(y_hi > y_lo) {
        y_hi = y_lo + 1.0;
    }
    let step = nice_step(y_hi - y_lo);
    let y_hi = (y_hi / step).ceil() * step;
    let y_lo = (y_lo / step).floor() * step;
    let f = Frame { x_lo, x_hi, y_lo, y_hi };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);

    for k in x_lo.ceil() as i32..=x_hi.floor() as i32 {
        let d = 2f64.powi(k);
        let px = f.x(d);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{d}</text>"#, y0 + 20.0);
    }
    let prec = (-step.log10().floor()).max(0.0) as usize;
    let ticks = ((y_hi - y_lo) / step).round() as i64;
    for k in 0..=ticks {
        let v = y_lo + k as f64 * step;
        let py = f.y(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.prec$}</text>"#, x0 - 8.0, py + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">dimension d (log scale)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">mean final regret</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    for (i, &e) in res.config.epsilons.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts = series(res, e);
        let mut band: Vec<String> = pts.iter().map(|a| format!("{:.2},{:.2}", f.x(a.dim as f64), f.y(a.upper()))).collect();
        band.extend(pts.iter().rev().map(|a| format!("{:.2},{:.2}", f.x(a.dim as f64), f.y(a.lower()))));
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = pts.iter().map(|a| format!("{:.2},{:.2}", f.x(a.dim as f64), f.y(a.mean_regret))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));

        let ly = TOP + 10.0 + 22.0 * i as f64;
        let lx = WIDTH - RIGHT + 20.0;
        let _ = writeln!(s, r#"<rect x="{lx}" y="{:.2}" width="14" height="14" fill="{color}"/>"#, ly - 11.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly:.2}">{}</text>"#, lx + 20.0, label(e));
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg_plot(res: &SweepResult, path: &Path) -> io::Result<()> {
    fs::write(path, render_svg(res))
}
