//! Line charts of summary metrics against the swept parameter, written as
//! standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{Indicator, Level, Metric, SummaryRow};
use crate::format::sig6;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

const COLORS: [&str; 7] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];

fn label(i: Indicator) -> &'static str {
    match i {
        Indicator::Raw => "raw rate",
        Indicator::Smr => "SMR",
        Indicator::Rsmr => "RSMR",
        Indicator::Shor => "SHOR",
        Indicator::ShorNoRegion => "SHOR (no region)",
        Indicator::Rspor => "RSPOR",
        Indicator::RegionalSmr => "regional SMR",
    }
}

fn metric_title(m: Metric) -> &'static str {
    match m {
        Metric::Spearman => "Spearman rank correlation",
        Metric::Best10 => "share of best 10% identified",
        Metric::Worst10 => "share of worst 10% identified",
    }
}

/// One chart: its file stem and the series it shows.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub metric: Metric,
    pub level: Level,
    pub axis: String,
    /// Points `(x, mean)` per indicator, sorted by x.
    pub series: BTreeMap<Indicator, Vec<(f64, f64)>>,
}

impl Figure {
    pub fn file_name(&self) -> String {
        format!("{}_{}.svg", self.level.name(), self.metric.name())
    }
}

/// Groups summary rows into one figure per (metric, level). Rows without a
/// mean are left out; a baseline-only summary gives single-point series at
/// x = 0.
pub fn figures(rows: &[SummaryRow]) -> Vec<Figure> {
    let mut out: BTreeMap<(Level, Metric), Figure> = BTreeMap::new();
    for row in rows {
        let Some(mean) = row.aggregate.mean else { continue };
        let key = row.aggregate.key;
        let level = key.indicator.level();
        let fig = out.entry((level, key.metric)).or_insert_with(|| Figure {
            metric: key.metric,
            level,
            axis: row.scenario_param.clone(),
            series: BTreeMap::new(),
        });
        fig.series.entry(key.indicator).or_default().push((row.param_value.unwrap_or(0.0), mean));
    }
    let mut figs: Vec<Figure> = out.into_values().collect();
    for f in &mut figs {
        for pts in f.series.values_mut() {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }
    figs
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if hi - lo < 1e-9 {
        let pad = if lo.abs() > 1e-9 { lo.abs() * 0.1 } else { 0.5 };
        (lo - pad, hi + pad)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG text of one figure.
pub fn render(fig: &Figure) -> String {
    let xs: Vec<f64> = fig.series.values().flatten().map(|p| p.0).collect();
    let (x0, x1) = range(xs.iter().copied());
    let (y0, y1) = range(fig.series.values().flatten().map(|p| p.1));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{} ({} level)</text>"#,
        LEFT + pw / 2.0,
        metric_title(fig.metric),
        fig.level.name()
    );
    let _ = writeln!(svg, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in &ticks {
        let px = sx(*x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            sig6(*x)
        );
    }
    for k in 0..=5 {
        let y = y0 + (y1 - y0) * k as f64 / 5.0;
        let py = sy(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0,
            sig6((y * 1e4).round() / 1e4)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(&fig.axis)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">mean {}</text>"#,
        TOP + ph / 2.0,
        fig.metric.name()
    );

    for (i, (indicator, pts)) in fig.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        if pts.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
        for &(x, y) in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 12.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(label(*indicator))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes one SVG per figure into `dir` and returns the paths; nothing is
/// written for a summary without values.
pub fn write_figures(rows: &[SummaryRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let figs = figures(rows);
    if figs.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    figs.iter()
        .map(|f| {
            let path = dir.join(f.file_name());
            std::fs::write(&path, render(f)).map_err(|e| Error::io(path.display().to_string(), e))?;
            Ok(path)
        })
        .collect()
}
