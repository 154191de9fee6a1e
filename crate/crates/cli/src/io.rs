//! Run directories: a TOML header, CSV tables and a plain-text report.
//!
//! Floats are written in shortest round-trip form, so reading a directory
//! back gives the same numbers bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use extruder_core::analysis::{DecayFit, InvariantReport, Margins};
use extruder_core::config::RunConfig;
use extruder_core::control::KernelFunctions;
use extruder_core::integrator::IntegrationStats;
use extruder_core::sim::{Assumptions, RunRecord, RunSummary, Sample, Snapshot, FORMAT_TAG};
use extruder_core::steady_state::{SteadyPhase, SteadyState};

use crate::CliError;

pub const HEADER_FILE: &str = "run.toml";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SNAPSHOT_FILE: &str = "snapshots.csv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    positivity_applies: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stopped: Option<String>,
    assumptions: Assumptions,
    stats: IntegrationStats,
    config: RunConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct TimeseriesRow {
    t: f64,
    s: f64,
    q_f: f64,
    #[serde(rename = "Ts_inlet")]
    ts_inlet: f64,
    sdot: f64,
    valid_solid: bool,
    valid_liquid: bool,
    margin_valid_solid: f64,
    margin_valid_liquid: f64,
    margin_sdot_nonneg: f64,
    margin_s_in_band: f64,
    margin_z_positive: f64,
    margin_underestimate: f64,
    z: f64,
    err_l2: f64,
    err_h1: f64,
    err_grad_s: f64,
    dev_h1: f64,
    phi_hat: f64,
    v_tilde: f64,
    pi_integral: f64,
    obs_domain: f64,
}

impl From<&Sample> for TimeseriesRow {
    fn from(p: &Sample) -> Self {
        let m = &p.margins;
        TimeseriesRow {
            t: p.t,
            s: p.s,
            q_f: p.q_f,
            ts_inlet: p.ts_inlet,
            sdot: p.sdot,
            valid_solid: p.valid_solid,
            valid_liquid: p.valid_liquid,
            margin_valid_solid: m.valid_solid,
            margin_valid_liquid: m.valid_liquid,
            margin_sdot_nonneg: m.sdot_nonneg,
            margin_s_in_band: m.s_in_band,
            margin_z_positive: m.z_positive,
            margin_underestimate: m.underestimate,
            z: p.z,
            err_l2: p.err_l2,
            err_h1: p.err_h1,
            err_grad_s: p.err_grad_s,
            dev_h1: p.dev_h1,
            phi_hat: p.phi_hat,
            v_tilde: p.v_tilde,
            pi_integral: p.pi_integral,
            obs_domain: p.obs_domain,
        }
    }
}

impl From<TimeseriesRow> for Sample {
    fn from(r: TimeseriesRow) -> Self {
        Sample {
            t: r.t,
            s: r.s,
            q_f: r.q_f,
            ts_inlet: r.ts_inlet,
            sdot: r.sdot,
            valid_solid: r.valid_solid,
            valid_liquid: r.valid_liquid,
            margins: Margins {
                valid_solid: r.margin_valid_solid,
                valid_liquid: r.margin_valid_liquid,
                sdot_nonneg: r.margin_sdot_nonneg,
                s_in_band: r.margin_s_in_band,
                z_positive: r.margin_z_positive,
                underestimate: r.margin_underestimate,
            },
            z: r.z,
            err_l2: r.err_l2,
            err_h1: r.err_h1,
            err_grad_s: r.err_grad_s,
            dev_h1: r.dev_h1,
            phi_hat: r.phi_hat,
            v_tilde: r.v_tilde,
            pi_integral: r.pi_integral,
            obs_domain: r.obs_domain,
        }
    }
}

#[derive(Debug, Serialize)]
struct ProfileRow<'a> {
    t: f64,
    x: f64,
    #[serde(rename = "T")]
    temp: f64,
    phase: &'a str,
    source: &'a str,
}

#[derive(Debug, Deserialize)]
struct ProfileIn {
    t: f64,
    x: f64,
    #[serde(rename = "T")]
    temp: f64,
    phase: String,
    source: String,
}

#[derive(Debug, Serialize)]
struct SteadyRow {
    x: f64,
    #[serde(rename = "T_eq")]
    t_eq: f64,
    #[serde(rename = "dT_eq_dx")]
    dt_eq_dx: f64,
    phase: &'static str,
}

#[derive(Debug, Serialize)]
struct GainRow {
    x: f64,
    phi: f64,
    /// `φ(−x)`, the argument range the heat law integrates over.
    phi_neg: f64,
    f: f64,
    g: f64,
}

#[derive(Debug, Serialize)]
struct FitRow<'a> {
    norm: &'a str,
    t0: f64,
    t1: f64,
    rate: f64,
    theoretical: Option<f64>,
    ratio: Option<f64>,
    r2: f64,
    points: usize,
    conclusive: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv { path: path.to_path_buf(), source }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Profile rows of one snapshot: plant solid and liquid, then the estimate.
fn snapshot_rows<'a>(s: &'a Snapshot, length: f64) -> impl Iterator<Item = ProfileRow<'static>> + 'a {
    let node = |i: usize, n: usize| i as f64 / (n - 1) as f64;
    let (ns, nl, no) = (s.ts.len(), s.tl.len(), s.that.len());
    let solid = s.ts.iter().enumerate().map(move |(i, &v)| ProfileRow { t: s.t, x: s.s * node(i, ns), temp: v, phase: "solid", source: "plant" });
    let liquid = s.tl.iter().enumerate().map(move |(i, &v)| ProfileRow {
        t: s.t,
        x: s.s + (length - s.s) * node(i, nl),
        temp: v,
        phase: "liquid",
        source: "plant",
    });
    let obs = s.that.iter().enumerate().map(move |(i, &v)| ProfileRow { t: s.t, x: s.s_obs * node(i, no), temp: v, phase: "solid", source: "observer" });
    solid.chain(liquid).chain(obs)
}

pub fn write_timeseries(path: &Path, series: &[Sample]) -> Result<(), CliError> {
    write_rows(path, series.iter().map(TimeseriesRow::from))
}

pub fn write_snapshots(path: &Path, snaps: &[Snapshot], length: f64) -> Result<(), CliError> {
    write_rows(path, snaps.iter().flat_map(|s| snapshot_rows(s, length)))
}

/// Everything a run directory holds apart from the plots.
pub fn write_run(dir: &Path, rec: &RunRecord) -> Result<(), CliError> {
    create_dir(dir)?;
    let header = Header {
        format: rec.format.clone(),
        positivity_applies: rec.report.positivity_applies,
        stopped: rec.stopped.clone(),
        assumptions: rec.assumptions,
        stats: rec.stats,
        config: rec.config.clone(),
    };
    let text = toml::to_string(&header).map_err(|e| CliError::Format { path: dir.join(HEADER_FILE), msg: e.to_string() })?;
    write_text(&dir.join(HEADER_FILE), &text)?;
    write_timeseries(&dir.join(TIMESERIES_FILE), &rec.series)?;
    write_snapshots(&dir.join(SNAPSHOT_FILE), &rec.snapshots, rec.config.length)?;
    write_text(&dir.join(REPORT_FILE), &report_text(rec))
}

/// Invariant report followed by the run's headline numbers.
pub fn report_text(rec: &RunRecord) -> String {
    let s = RunSummary::of(rec);
    let mut out = format!("format = {}\ncontroller = {}\n", rec.format, rec.config.controller.as_str());
    if let Some(why) = &rec.stopped {
        out.push_str(&format!("stopped = {why}\n"));
    }
    out.push_str(&rec.report.to_text());
    out.push_str(&format!(
        "settling_time = {}\nfinal_rel_error = {:.6e}\npeak_abs_q_f = {:.6e}\nmin_inlet_temp = {:.6e}\naccepted_steps = {}\nrejected_steps = {}\n",
        s.settling_time.map_or("none".to_string(), |t| format!("{t:.6e}")),
        s.final_rel_error,
        s.peak_abs_q_f,
        s.min_inlet_temp,
        s.accepted_steps,
        s.rejected_steps
    ));
    out
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out: Vec<Snapshot> = Vec::new();
    let bad = |msg: String| CliError::Format { path: path.to_path_buf(), msg };
    for row in r.deserialize::<ProfileIn>() {
        let row = row.map_err(csv_err(path))?;
        if out.last().is_none_or(|s| s.t != row.t) {
            out.push(Snapshot { t: row.t, s: 0.0, s_obs: 0.0, ts: vec![], tl: vec![], that: vec![] });
        }
        let snap = out.last_mut().expect("pushed above");
        match (row.source.as_str(), row.phase.as_str()) {
            ("plant", "solid") => {
                snap.ts.push(row.temp);
                snap.s = row.x;
            }
            ("plant", "liquid") => snap.tl.push(row.temp),
            ("observer", _) => {
                snap.that.push(row.temp);
                snap.s_obs = row.x;
            }
            (src, ph) => return Err(bad(format!("unknown profile row source '{src}' phase '{ph}'"))),
        }
    }
    Ok(out)
}

/// Rebuild a record from its directory; the invariant report is recomputed from the logged margins.
pub fn read_run(dir: &Path) -> Result<RunRecord, CliError> {
    let hpath = dir.join(HEADER_FILE);
    let header: Header = toml::from_str(&read_to_string(&hpath)?).map_err(|e| CliError::Format { path: hpath.clone(), msg: e.to_string() })?;
    if header.format != FORMAT_TAG {
        return Err(CliError::Format { path: hpath, msg: format!("format '{}' is not '{FORMAT_TAG}'", header.format) });
    }
    let tpath = dir.join(TIMESERIES_FILE);
    let mut r = csv::Reader::from_path(&tpath).map_err(csv_err(&tpath))?;
    let series: Vec<Sample> = r
        .deserialize::<TimeseriesRow>()
        .map(|row| row.map(Sample::from))
        .collect::<Result<_, _>>()
        .map_err(csv_err(&tpath))?;
    if series.is_empty() {
        return Err(CliError::Format { path: tpath, msg: "no samples".into() });
    }
    if series.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(CliError::Format { path: tpath, msg: "time column is not monotone".into() });
    }
    let spath = dir.join(SNAPSHOT_FILE);
    let snapshots = if spath.exists() { read_snapshots(&spath)? } else { Vec::new() };
    let mut report = InvariantReport::new(header.config.eps(), header.positivity_applies);
    for p in &series {
        report.push(p.t, &p.margins);
    }
    Ok(RunRecord {
        format: header.format,
        config: header.config,
        assumptions: header.assumptions,
        series,
        snapshots,
        report,
        stats: header.stats,
        stopped: header.stopped,
    })
}

/// Equilibrium profile on `points` uniform positions.
pub fn write_steady_profile(path: &Path, ss: &SteadyState, points: usize) -> Result<(), CliError> {
    let rows = (0..points).map(|i| {
        let x = if i + 1 == points { ss.length } else { ss.length * i as f64 / (points - 1) as f64 };
        let phase = ss.phase_at(x);
        let (t_eq, dt_eq_dx, _) = match phase {
            SteadyPhase::Solid => ss.solid(x),
            SteadyPhase::Liquid => ss.liquid(x),
        };
        SteadyRow { x, t_eq, dt_eq_dx, phase: phase.as_str() }
    });
    write_rows(path, rows)
}

/// `φ`, `f` and `g` on `points` positions over `[0, s_r]`.
pub fn write_gain_table(path: &Path, kf: &KernelFunctions, setpoint: f64, points: usize) -> Result<(), CliError> {
    let rows = (0..points).map(|i| {
        let x = setpoint * i as f64 / (points - 1) as f64;
        GainRow { x, phi: kf.phi(x), phi_neg: kf.phi(-x), f: kf.f(x), g: kf.g(x) }
    });
    write_rows(path, rows)
}

pub fn write_summaries(path: &Path, rows: &[RunSummary]) -> Result<(), CliError> {
    write_rows(path, rows)
}

pub fn write_fits(path: &Path, fits: &[(String, DecayFit)]) -> Result<(), CliError> {
    write_rows(
        path,
        fits.iter().map(|(name, f)| FitRow {
            norm: name,
            t0: f.t0,
            t1: f.t1,
            rate: f.rate,
            theoretical: f.theoretical,
            ratio: f.ratio,
            r2: f.r2,
            points: f.points,
            conclusive: f.conclusive(),
        }),
    )
}

/// Subdirectory name of one sweep member.
pub fn run_dir_name(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(format!("{}_b{}mm_c{}", cfg.controller.as_str(), cfg.b * 1e3, cfg.gain_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use extruder_core::sim::run_closed_loop;

    fn short() -> RunConfig {
        RunConfig { grid_n: 21, t_end: 5.0, snapshot_every: 2.0, ..RunConfig::default() }
    }

    #[test]
    fn run_directory_round_trips() {
        let rec = run_closed_loop(&short()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &rec).unwrap();
        let back = read_run(dir.path()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let rec = run_closed_loop(&short()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &rec).unwrap();
        let h = dir.path().join(HEADER_FILE);
        let text = fs::read_to_string(&h).unwrap().replace(FORMAT_TAG, "extruder-run/0");
        fs::write(&h, text).unwrap();
        assert!(matches!(read_run(dir.path()), Err(CliError::Format { .. })));
    }

    #[test]
    fn timeseries_starts_with_the_documented_columns() {
        let rec = run_closed_loop(&short()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ts.csv");
        write_timeseries(&p, &rec.series).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert!(text.starts_with("t,s,q_f,Ts_inlet,sdot,valid_solid,valid_liquid,"));
    }

    #[test]
    fn steady_profile_ends_on_the_barrel_ends() {
        let setup = RunConfig::default().setup().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("steady.csv");
        write_steady_profile(&p, &setup.steady, 11).unwrap();
        let text = fs::read_to_string(p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,T_eq,dT_eq_dx,phase");
        assert_eq!(lines.len(), 12);
        assert!(lines[1].starts_with("0.0,") && lines[1].ends_with(",solid"));
        assert!(lines[11].starts_with("0.1,") && lines[11].ends_with(",liquid"));
    }
}
