//! Self-contained SVG line plots.

use std::fmt::Write;

use extruder_core::sim::{RunRecord, Sample};
use extruder_core::steady_state::SteadyState;

const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 330.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 48.0;
/// More points than this are thinned by striding.
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone)]
pub struct Line {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

impl Line {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        Line { label: label.into(), points, color, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Line>,
    /// Horizontal reference lines.
    pub refs: Vec<(String, f64)>,
}

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Tick positions at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), step)
}

fn tick_label(v: f64, step: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.1e}");
    }
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()) {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        return Some((lo - pad, hi + pad));
    }
    let pad = 0.04 * (hi - lo);
    Some((lo - pad, hi + pad))
}

fn thin(points: &[(f64, f64)]) -> impl Iterator<Item = &(f64, f64)> {
    let stride = points.len().div_ceil(MAX_POINTS).max(1);
    let last = points.len().saturating_sub(1);
    points.iter().enumerate().filter(move |(i, _)| i % stride == 0 || *i == last).map(|(_, p)| p)
}

fn render_panel(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    let xs = p.lines.iter().flat_map(|l| l.points.iter().map(|q| q.0));
    let ys = p.lines.iter().flat_map(|l| l.points.iter().map(|q| q.1)).chain(p.refs.iter().map(|r| r.1));
    let (Some((x0, x1)), Some((y0, y1))) = (range(xs), range(ys)) else {
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="13">{}: no data</text>"#, ox + LEFT, oy + TOP + 20.0, escape(&p.title));
        return;
    };
    let (w, h) = (PANEL_W - LEFT - RIGHT, PANEL_H - TOP - BOTTOM);
    let sx = |x: f64| ox + LEFT + (x - x0) / (x1 - x0) * w;
    let sy = |y: f64| oy + TOP + (y1 - y) / (y1 - y0) * h;
    let _ = writeln!(out, r##"<rect x="{:.1}" y="{:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##, ox + LEFT, oy + TOP);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#, ox + LEFT + w / 2.0, oy + 20.0, escape(&p.title));
    let (xt, xstep) = ticks(x0, x1);
    for v in xt {
        let x = sx(v);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"##,
            oy + TOP,
            oy + TOP + h,
            oy + TOP + h + 15.0,
            tick_label(v, xstep)
        );
    }
    let (yt, ystep) = ticks(y0, y1);
    for v in yt {
        let y = sy(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"##,
            ox + LEFT,
            ox + LEFT + w,
            ox + LEFT - 5.0,
            y + 4.0,
            tick_label(v, ystep)
        );
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#, ox + LEFT + w / 2.0, oy + PANEL_H - 8.0, escape(&p.x_label));
    let (lx, ly) = (ox + 16.0, oy + TOP + h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.1}" y="{ly:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
        escape(&p.y_label)
    );
    for (label, v) in &p.refs {
        let y = sy(*v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#888" stroke-dasharray="2 3"/><text x="{:.1}" y="{:.1}" font-size="10" fill="#666">{}</text>"##,
            ox + LEFT,
            ox + LEFT + w,
            ox + LEFT + 4.0,
            y - 3.0,
            escape(label)
        );
    }
    for l in &p.lines {
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in thin(&l.points) {
            if !(x.is_finite() && y.is_finite()) {
                pen_down = false;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
            pen_down = true;
        }
        let dash = if l.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.6"{dash}/>"#, d.trim_end(), l.color);
    }
    let mut ly = oy + TOP + 14.0;
    for l in p.lines.iter().filter(|l| !l.label.is_empty()) {
        let x = ox + LEFT + w - 150.0;
        let dash = if l.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{ly:.1}" font-size="11">{}</text>"#,
            ly - 4.0,
            x + 22.0,
            ly - 4.0,
            l.color,
            x + 27.0,
            escape(&l.label)
        );
        ly += 15.0;
    }
}

/// Panels laid out on a grid with `cols` columns.
pub fn render(panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1).min(panels.len().max(1));
    let rows = panels.len().div_ceil(cols).max(1);
    let (w, h) = (PANEL_W * cols as f64, PANEL_H * rows as f64);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (k, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, (k % cols) as f64 * PANEL_W, (k / cols) as f64 * PANEL_H);
    }
    out.push_str("</svg>\n");
    out
}

fn trace(series: &[Sample], get: impl Fn(&Sample) -> f64) -> Vec<(f64, f64)> {
    series.iter().map(|p| (p.t, get(p))).collect()
}

fn time_panel(title: &str, y_label: &str, lines: Vec<Line>, refs: Vec<(String, f64)>) -> Panel {
    Panel { title: title.into(), x_label: "t (s)".into(), y_label: y_label.into(), lines, refs }
}

/// Snapshot indices to overlay: all of them, or `max` spread evenly with both ends kept.
fn pick_snapshots(count: usize, max: usize) -> Vec<usize> {
    if count <= max {
        return (0..count).collect();
    }
    let mut v: Vec<usize> = (0..max).map(|k| (k * (count - 1)) / (max - 1)).collect();
    v.dedup();
    v
}

/// Plant and estimated temperature profiles at selected snapshots.
pub fn profile_panel(rec: &RunRecord, max: usize) -> Option<Panel> {
    if rec.snapshots.is_empty() {
        return None;
    }
    let len = rec.config.length;
    let mut lines = Vec::new();
    for (k, &i) in pick_snapshots(rec.snapshots.len(), max).iter().enumerate() {
        let s = &rec.snapshots[i];
        let node = |j: usize, n: usize| j as f64 / (n - 1) as f64;
        let mut plant: Vec<(f64, f64)> = s.ts.iter().enumerate().map(|(j, &v)| (s.s * node(j, s.ts.len()), v)).collect();
        plant.extend(s.tl.iter().enumerate().map(|(j, &v)| (s.s + (len - s.s) * node(j, s.tl.len()), v)));
        let obs = s.that.iter().enumerate().map(|(j, &v)| (s.s_obs * node(j, s.that.len()), v)).collect();
        lines.push(Line::new(format!("t = {} s", (s.t * 1e4).round() / 1e4), plant, color(k)));
        lines.push(Line::new("", obs, color(k)).dashed());
    }
    Some(Panel {
        title: "temperature profiles (solid: plant, dashed: estimate)".into(),
        x_label: "x (m)".into(),
        y_label: "T (°C)".into(),
        lines,
        refs: vec![("T_m".into(), rec.config.t_m)],
    })
}

/// Files for one run and warnings about skipped plots.
pub fn run_plots(rec: &RunRecord) -> (Vec<(&'static str, String)>, Vec<String>) {
    let c = &rec.config;
    let label = c.controller.as_str();
    let mut files = vec![
        (
            "interface.svg",
            render(&[time_panel("interface position", "s (m)", vec![Line::new(label, trace(&rec.series, |p| p.s), color(0))], vec![("s_r".into(), c.s_r)])], 1),
        ),
        ("heat_input.svg", render(&[time_panel("inlet heat input", "q_f (W/m²)", vec![Line::new(label, trace(&rec.series, |p| p.q_f), color(1))], vec![])], 1)),
        (
            "inlet_temperature.svg",
            render(
                &[time_panel("inlet solid temperature", "T_s(0) (°C)", vec![Line::new(label, trace(&rec.series, |p| p.ts_inlet), color(2))], vec![("T_m".into(), c.t_m)])],
                1,
            ),
        ),
    ];
    let mut warnings = Vec::new();
    match profile_panel(rec, 6) {
        Some(p) => files.push(("profiles.svg", render(&[p], 1))),
        None => warnings.push("no profile snapshots; profiles.svg skipped".to_string()),
    }
    (files, warnings)
}

/// Interface, inlet temperature and heat input of several runs on shared axes.
pub fn overlay(records: &[(&str, &RunRecord)]) -> String {
    let lines = |get: fn(&Sample) -> f64| -> Vec<Line> { records.iter().enumerate().map(|(k, (name, r))| Line::new(*name, trace(&r.series, get), color(k))).collect() };
    let first = records.first().map(|r| &r.1.config);
    let refs = |v: Option<f64>, name: &str| v.map(|v| vec![(name.to_string(), v)]).unwrap_or_default();
    render(
        &[
            time_panel("interface position", "s (m)", lines(|p| p.s), refs(first.map(|c| c.s_r), "s_r")),
            time_panel("inlet solid temperature", "T_s(0) (°C)", lines(|p| p.ts_inlet), refs(first.map(|c| c.t_m), "T_m")),
            time_panel("inlet heat input", "q_f (W/m²)", lines(|p| p.q_f), vec![]),
        ],
        1,
    )
}

pub fn steady_plot(ss: &SteadyState, points: usize) -> String {
    let xs = (0..points).map(|i| ss.length * i as f64 / (points - 1) as f64);
    let solid: Vec<(f64, f64)> = xs.clone().filter(|&x| x <= ss.setpoint).map(|x| (x, ss.solid(x).0)).chain([(ss.setpoint, ss.t_melt)]).collect();
    let liquid: Vec<(f64, f64)> = [(ss.setpoint, ss.t_melt)].into_iter().chain(xs.filter(|&x| x > ss.setpoint).map(|x| (x, ss.liquid(x).0))).collect();
    render(
        &[Panel {
            title: "equilibrium temperature".into(),
            x_label: "x (m)".into(),
            y_label: "T_eq (°C)".into(),
            lines: vec![Line::new("solid", solid, color(0)), Line::new("liquid", liquid, color(1))],
            refs: vec![("T_m".into(), ss.t_melt), ("T_b".into(), ss.barrel_temp)],
        }],
        1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let (t, step) = ticks(0.013, 0.097);
        assert_eq!(step, 0.02);
        assert!(t.iter().all(|v| (0.013..=0.097).contains(v)));
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn flat_series_gets_a_nonzero_range() {
        let (lo, hi) = range([135.0, 135.0].into_iter()).unwrap();
        assert!(lo < 135.0 && hi > 135.0);
        assert_eq!(range([f64::NAN].into_iter()), None);
    }

    #[test]
    fn snapshot_pick_keeps_both_ends() {
        assert_eq!(pick_snapshots(4, 6), vec![0, 1, 2, 3]);
        let p = pick_snapshots(16, 6);
        assert_eq!((p[0], *p.last().unwrap(), p.len()), (0, 15, 6));
    }

    #[test]
    fn svg_is_well_formed_and_escapes_labels() {
        let p = Panel {
            title: "a < b & c".into(),
            lines: vec![Line::new("x", vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0)], color(0))],
            ..Panel::default()
        };
        let svg = render(&[p], 1);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(svg.contains(r#"d="M"#) && svg.matches('M').count() >= 2);
    }

    #[test]
    fn missing_snapshots_skip_the_profile_plot() {
        let cfg = extruder_core::config::RunConfig { grid_n: 21, t_end: 1.0, ..Default::default() };
        let mut rec = extruder_core::sim::run_closed_loop(&cfg).unwrap();
        rec.snapshots.clear();
        let (files, warnings) = run_plots(&rec);
        assert_eq!(files.len(), 3);
        assert!(files.iter().all(|f| f.0 != "profiles.svg"));
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn empty_panel_says_so() {
        let svg = render(&[Panel { title: "q".into(), ..Panel::default() }], 1);
        assert!(svg.contains("q: no data"));
    }
}
