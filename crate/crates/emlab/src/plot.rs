//! Standalone SVG figures with CSV sidecars.
//!
//! A [`Figure`] is plain data. [`render_svg`] draws it and [`to_csv`] /
//! [`from_csv`] store it, so re-plotting from a sidecar reproduces the SVG
//! exactly. Values are written with Rust's shortest round-trip float
//! formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Scatter,
    RankFrequency,
    HyperparamSlices,
    ScoreBars,
}

impl PlotKind {
    fn name(self) -> &'static str {
        match self {
            PlotKind::Scatter => "scatter",
            PlotKind::RankFrequency => "rank_frequency",
            PlotKind::HyperparamSlices => "hyperparam_slices",
            PlotKind::ScoreBars => "score_bars",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [PlotKind::Scatter, PlotKind::RankFrequency, PlotKind::HyperparamSlices, PlotKind::ScoreBars]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Point,
    Line,
    Bar,
}

impl Mark {
    fn name(self) -> &'static str {
        match self {
            Mark::Point => "point",
            Mark::Line => "line",
            Mark::Bar => "bar",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Mark::Point, Mark::Line, Mark::Bar].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datum {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub mark: Mark,
    pub data: Vec<Datum>,
}

impl Series {
    pub fn new(name: &str, mark: Mark, data: Vec<Datum>) -> Self {
        Self { name: name.into(), mark, data }
    }

    pub fn xy(name: &str, mark: Mark, pts: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self::new(name, mark, pts.into_iter().map(|(x, y)| Datum { label: String::new(), x, y }).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    /// Replaces numeric x ticks, e.g. for categories or bars.
    pub x_ticks: Vec<(f64, String)>,
    pub note: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub kind: PlotKind,
    pub title: String,
    pub panels: Vec<Panel>,
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 48.0;
const TITLE_H: f64 = 28.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A "nice" tick step near `span / 5`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    mag * if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    }
}

fn fmt_tick(v: f64, step: f64) -> String {
    if v.abs() < step * 1e-9 {
        return "0".into();
    }
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    if v.abs() >= 1e5 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        format!("{v:.decimals$}")
    }
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let step = tick_step(hi - lo);
    let mut out = Vec::new();
    let mut k = (lo / step).ceil();
    while k * step <= hi + step * 1e-9 {
        out.push((k * step, fmt_tick(k * step, step)));
        k += 1.0;
    }
    out
}

fn log_label(m: u32, k: i32) -> String {
    match k {
        -3..=-1 => format!("{:.*}", (-k) as usize, m as f64 * 10f64.powi(k)),
        0..=4 => (m as u64 * 10u64.pow(k as u32)).to_string(),
        _ => format!("{m}e{k}"),
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool, include_zero: bool) -> Axis {
        let vals: Vec<f64> =
            values.filter(|v| v.is_finite() && (!log || *v > 0.0)).map(|v| if log { v.log10() } else { v }).collect();
        let (mut lo, mut hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if vals.is_empty() {
            (lo, hi) = (0.0, 1.0);
        }
        if include_zero && !log {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        } else {
            let pad = (hi - lo) * 0.05;
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    fn t(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if !self.log {
            return linear_ticks(self.lo, self.hi);
        }
        // Decades, then 1-2-5 steps, then linear ticks for short ranges.
        let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
        for mantissas in [&[1][..], &[1, 2, 5]] {
            let ticks: Vec<(f64, String)> = (a..=b)
                .flat_map(|k| mantissas.iter().map(move |&m| (m, k)))
                .filter(|&(m, k)| (self.lo..=self.hi).contains(&(m as f64 * 10f64.powi(k)).log10()))
                .map(|(m, k)| (m as f64 * 10f64.powi(k), log_label(m, k)))
                .collect();
            if ticks.len() >= 3 {
                return ticks;
            }
        }
        linear_ticks(10f64.powf(self.lo), 10f64.powf(self.hi))
    }
}

fn render_panel(svg: &mut String, p: &Panel, ox: f64, oy: f64) {
    let (pw, ph) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let (x0, y0) = (ox + MARGIN_L, oy + MARGIN_T);
    let all = || p.series.iter().flat_map(|s| s.data.iter());
    let has_bars = p.series.iter().any(|s| s.mark == Mark::Bar);
    let mut xa = Axis::fit(all().map(|d| d.x).chain(p.x_ticks.iter().map(|t| t.0)), p.log_x, false);
    if has_bars && !p.log_x {
        // Leave room for half a bar slot on each side.
        let mut xs: Vec<f64> = all().map(|d| d.x).filter(|x| x.is_finite()).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        if let (Some(&first), Some(&last)) = (xs.first(), xs.last()) {
            let slot = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            let slot = if slot.is_finite() { slot } else { 1.0 };
            xa.lo = first - 0.6 * slot;
            xa.hi = last + 0.6 * slot;
        }
    }
    let ya = Axis::fit(all().map(|d| d.y), p.log_y, has_bars);
    let px = |v: f64| x0 + xa.t(v) * pw;
    let py = |v: f64| y0 + (1.0 - ya.t(v)) * ph;

    writeln!(svg, r##"<rect x="{x0:.2}" y="{y0:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333"/>"##)
        .unwrap();
    let xt = if p.x_ticks.is_empty() { xa.ticks() } else { p.x_ticks.clone() };
    for (v, label) in xt {
        let x = px(v);
        writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##,
            y0 + ph,
            y0 + ph + 4.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            y0 + ph + 15.0,
            esc(&label)
        )
        .unwrap();
    }
    for (v, label) in ya.ticks() {
        let y = py(v);
        writeln!(svg, r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#333"/>"##, x0 - 4.0).unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            y + 3.5,
            esc(&label)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        x0 + pw / 2.0,
        oy + PANEL_H - 10.0,
        esc(&p.x_label)
    )
    .unwrap();
    let (lx, ly) = (ox + 14.0, y0 + ph / 2.0);
    writeln!(svg, r#"<text x="{lx:.2}" y="{ly:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#, esc(&p.y_label)).unwrap();
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
        x0 + pw / 2.0,
        oy + 18.0,
        esc(&p.title)
    )
    .unwrap();

    let n_bar_series = p.series.iter().filter(|s| s.mark == Mark::Bar).count().max(1);
    let mut bar_i = 0;
    for (si, s) in p.series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let visible: Vec<&Datum> = s
            .data
            .iter()
            .filter(|d| d.x.is_finite() && d.y.is_finite() && (!p.log_x || d.x > 0.0) && (!p.log_y || d.y > 0.0))
            .collect();
        match s.mark {
            Mark::Point => {
                for d in visible {
                    writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.75"/>"#,
                        px(d.x),
                        py(d.y)
                    )
                    .unwrap();
                }
            }
            Mark::Line => {
                let pts: Vec<String> = visible.iter().map(|d| format!("{:.2},{:.2}", px(d.x), py(d.y))).collect();
                if !pts.is_empty() {
                    writeln!(
                        svg,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        pts.join(" ")
                    )
                    .unwrap();
                }
            }
            Mark::Bar => {
                // Bars are centred on their x with width from the closest pair.
                let mut xs: Vec<f64> = visible.iter().map(|d| px(d.x)).collect();
                xs.sort_by(f64::total_cmp);
                let gap = xs.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).fold(pw / 1.2, f64::min);
                let w = gap * 0.8 / n_bar_series as f64;
                let base = py(if ya.log { 10f64.powf(ya.lo) } else { 0.0f64.clamp(ya.lo, ya.hi) });
                for d in visible {
                    let x = px(d.x) - gap * 0.4 + w * bar_i as f64;
                    let y = py(d.y);
                    let (top, h) = if y < base { (y, base - y) } else { (base, y - base) };
                    writeln!(svg, r#"<rect x="{x:.2}" y="{top:.2}" width="{w:.2}" height="{h:.2}" fill="{color}"/>"#)
                        .unwrap();
                }
                bar_i += 1;
            }
        }
    }
    if all().next().is_none() {
        writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="16" fill="#888" text-anchor="middle">no data</text>"##,
            x0 + pw / 2.0,
            y0 + ph / 2.0
        )
        .unwrap();
    }
    let named: Vec<(usize, &Series)> = p.series.iter().enumerate().filter(|(_, s)| !s.name.is_empty()).collect();
    for (row, (si, s)) in named.iter().enumerate() {
        let y = y0 + 14.0 + 14.0 * row as f64;
        let color = PALETTE[si % PALETTE.len()];
        writeln!(svg, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#, x0 + pw - 110.0, y - 8.0)
            .unwrap();
        writeln!(svg, r#"<text x="{:.2}" y="{y:.2}" font-size="10">{}</text>"#, x0 + pw - 98.0, esc(&s.name)).unwrap();
    }
    if !p.note.is_empty() {
        writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#, x0 + 6.0, y0 + 14.0, esc(&p.note))
            .unwrap();
    }
}

pub fn render_svg(fig: &Figure) -> String {
    let n = fig.panels.len().max(1);
    let cols = n.min(3);
    let rows = n.div_ceil(cols);
    let (w, h) = (cols as f64 * PANEL_W, rows as f64 * PANEL_H + TITLE_H);
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#).unwrap();
    writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(svg, r#"<text x="{:.2}" y="19" font-size="15" text-anchor="middle">{}</text>"#, w / 2.0, esc(&fig.title))
        .unwrap();
    let empty = Panel::default();
    let panels: Vec<&Panel> = if fig.panels.is_empty() { vec![&empty] } else { fig.panels.iter().collect() };
    for (i, p) in panels.into_iter().enumerate() {
        render_panel(&mut svg, p, (i % cols) as f64 * PANEL_W, TITLE_H + (i / cols) as f64 * PANEL_H);
    }
    svg.push_str("</svg>\n");
    svg
}

fn clean(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// Sidecar: `#key=value` metadata lines, then a CSV table with columns
/// `panel,series,mark,label,x,y`.
pub fn to_csv(fig: &Figure) -> String {
    let mut meta = String::new();
    writeln!(meta, "#kind={}", fig.kind.name()).unwrap();
    writeln!(meta, "#title={}", clean(&fig.title)).unwrap();
    for (i, p) in fig.panels.iter().enumerate() {
        writeln!(meta, "#panel.{i}.title={}", clean(&p.title)).unwrap();
        writeln!(meta, "#panel.{i}.x_label={}", clean(&p.x_label)).unwrap();
        writeln!(meta, "#panel.{i}.y_label={}", clean(&p.y_label)).unwrap();
        writeln!(meta, "#panel.{i}.log={},{}", p.log_x, p.log_y).unwrap();
        writeln!(meta, "#panel.{i}.note={}", clean(&p.note)).unwrap();
        for (x, label) in &p.x_ticks {
            writeln!(meta, "#panel.{i}.x_tick={x}|{}", clean(label)).unwrap();
        }
        for s in &p.series {
            writeln!(meta, "#panel.{i}.series={}|{}", s.mark.name(), clean(&s.name)).unwrap();
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["panel", "series", "mark", "label", "x", "y"]).unwrap();
    for (i, p) in fig.panels.iter().enumerate() {
        for s in &p.series {
            for d in &s.data {
                w.write_record([&i.to_string(), &s.name, s.mark.name(), &d.label, &d.x.to_string(), &d.y.to_string()])
                    .unwrap();
            }
        }
    }
    meta + &String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn from_csv(text: &str) -> Result<Figure> {
    let bad = |msg: String| Error::Invalid(format!("plot sidecar: {msg}"));
    let mut fig = Figure { kind: PlotKind::Scatter, title: String::new(), panels: Vec::new() };
    let mut body = String::new();
    for line in text.lines() {
        let Some(meta) = line.strip_prefix('#') else {
            body.push_str(line);
            body.push('\n');
            continue;
        };
        let (key, value) = meta.split_once('=').ok_or_else(|| bad(format!("bad metadata line {line:?}")))?;
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["kind"] => fig.kind = PlotKind::parse(value).ok_or_else(|| bad(format!("unknown kind {value}")))?,
            ["title"] => fig.title = value.into(),
            ["panel", i, field] => {
                let i: usize = i.parse().map_err(|_| bad(format!("bad panel index in {line:?}")))?;
                if fig.panels.len() <= i {
                    fig.panels.resize(i + 1, Panel::default());
                }
                let p = &mut fig.panels[i];
                match *field {
                    "title" => p.title = value.into(),
                    "x_label" => p.x_label = value.into(),
                    "y_label" => p.y_label = value.into(),
                    "note" => p.note = value.into(),
                    "log" => {
                        let (a, b) = value.split_once(',').ok_or_else(|| bad(format!("bad log flags {value}")))?;
                        p.log_x = a == "true";
                        p.log_y = b == "true";
                    }
                    "x_tick" => {
                        let (x, label) = value.split_once('|').ok_or_else(|| bad(format!("bad tick {value}")))?;
                        let x = x.parse().map_err(|_| bad(format!("bad tick position {x}")))?;
                        p.x_ticks.push((x, label.into()));
                    }
                    "series" => {
                        let (mark, name) = value.split_once('|').ok_or_else(|| bad(format!("bad series {value}")))?;
                        let mark = Mark::parse(mark).ok_or_else(|| bad(format!("unknown mark {mark}")))?;
                        p.series.push(Series::new(name, mark, Vec::new()));
                    }
                    other => return Err(bad(format!("unknown panel field {other}"))),
                }
            }
            _ => return Err(bad(format!("unknown metadata key {key}"))),
        }
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    for row in r.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| row.get(i).ok_or_else(|| bad(format!("short row {row:?}")));
        let panel: usize = field(0)?.parse().map_err(|_| bad(format!("bad panel in {row:?}")))?;
        let name = field(1)?;
        let num = |i: usize| -> Result<f64> { field(i)?.parse().map_err(|_| bad(format!("bad number in {row:?}"))) };
        let d = Datum { label: field(3)?.into(), x: num(4)?, y: num(5)? };
        let series = fig
            .panels
            .get_mut(panel)
            .and_then(|p| p.series.iter_mut().find(|s| s.name == name))
            .ok_or_else(|| bad(format!("row for undeclared series {name:?} in panel {panel}")))?;
        series.data.push(d);
    }
    Ok(fig)
}

/// Writes `<stem>.svg` and `<stem>.csv` into `dir`.
pub fn write_figure(fig: &Figure, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let svg = dir.join(format!("{stem}.svg"));
    fs::write(&svg, render_svg(fig)).map_err(io_err(&svg))?;
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, to_csv(fig)).map_err(io_err(&csv))
}

/// Re-draws an SVG from a CSV sidecar.
pub fn replot(csv_path: &Path, svg_path: &Path) -> Result<()> {
    let text = fs::read_to_string(csv_path).map_err(io_err(csv_path))?;
    fs::write(svg_path, render_svg(&from_csv(&text)?)).map_err(io_err(svg_path))
}

/// One scatter panel of labelled points with an optional annotation.
pub fn scatter(title: &str, x_label: &str, y_label: &str, series: Vec<Series>, note: &str) -> Figure {
    Figure {
        kind: PlotKind::Scatter,
        title: title.into(),
        panels: vec![Panel {
            x_label: x_label.into(),
            y_label: y_label.into(),
            note: note.into(),
            series,
            ..Panel::default()
        }],
    }
}

/// Log₁₀–log₁₀ rank against frequency.
pub fn rank_frequency(title: &str, series: Vec<(String, Vec<(u64, u64)>)>) -> Figure {
    let series = series
        .into_iter()
        .map(|(name, pts)| Series::xy(&name, Mark::Line, pts.into_iter().map(|(r, f)| (r as f64, f as f64))))
        .collect();
    Figure {
        kind: PlotKind::RankFrequency,
        title: title.into(),
        panels: vec![Panel {
            x_label: "rank".into(),
            y_label: "frequency".into(),
            log_x: true,
            log_y: true,
            series,
            ..Panel::default()
        }],
    }
}

/// Named bars, one per entry, in the given order.
pub fn score_bars(title: &str, y_label: &str, bars: &[(String, f64)]) -> Figure {
    let data = bars.iter().enumerate().map(|(i, (l, v))| Datum { label: l.clone(), x: i as f64, y: *v }).collect();
    Figure {
        kind: PlotKind::ScoreBars,
        title: title.into(),
        panels: vec![Panel {
            y_label: y_label.into(),
            x_ticks: bars.iter().enumerate().map(|(i, (l, _))| (i as f64, l.clone())).collect(),
            series: vec![Series::new("", Mark::Bar, data)],
            ..Panel::default()
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Figure {
        let mut fig = scatter(
            "entropy, score",
            "entropy \"bits\"",
            "score",
            vec![
                Series::new(
                    "ok",
                    Mark::Point,
                    vec![
                        Datum { label: "trial 0, a".into(), x: 0.1 + 0.2, y: 1.0 / 3.0 },
                        Datum { label: "trial 1".into(), x: -1e-300, y: 12345.678 },
                    ],
                ),
                Series::xy("front", Mark::Line, [(0.0, 1.0), (2.0, 0.5)]),
            ],
            "r = -0.50",
        );
        fig.panels.push(Panel { title: "empty".into(), log_x: true, ..Panel::default() });
        fig
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let fig = sample();
        let back = from_csv(&to_csv(&fig)).unwrap();
        assert_eq!(back, fig);
        assert_eq!(render_svg(&back), render_svg(&fig));
    }

    #[test]
    fn empty_panel_says_no_data() {
        let svg = render_svg(&scatter("t", "x", "y", vec![], ""));
        assert!(svg.contains(">no data<") && svg.contains("<rect x="));
        let bars = render_svg(&score_bars("bars", "score", &[]));
        assert!(bars.contains("no data"));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = render_svg(&scatter("a<b & c", "x", "y", vec![], ""));
        assert!(svg.contains("a&lt;b &amp; c"));
    }

    #[test]
    fn ticks_are_nice() {
        assert_eq!(tick_step(10.0), 2.0);
        assert_eq!(tick_step(0.7), 0.1);
        assert_eq!(tick_step(40.0), 10.0);
    }

    #[test]
    fn log_axes_always_get_ticks() {
        let labels = |lo: f64, hi: f64| {
            Axis { lo: lo.log10(), hi: hi.log10(), log: true }.ticks().into_iter().map(|t| t.1).collect::<Vec<_>>()
        };
        assert_eq!(labels(0.5, 2000.0), ["1", "10", "100", "1000"]);
        assert_eq!(labels(0.15, 6.0), ["0.2", "0.5", "1", "2", "5"]);
        assert_eq!(labels(0.55, 0.95), ["0.6", "0.7", "0.8", "0.9"]);
        assert_eq!(labels(1e-6, 1e6)[0], "1e-6");
    }
}
