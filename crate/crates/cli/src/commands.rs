//! One function per subcommand. Each writes its files under `out` and
//! prints a short summary.

use std::path::Path;

use extruder_core::analysis::{closed_loop_decay_bound, fit_decay_rate, lyapunov_trace, observer_decay_bound, DecayFit, Flag};
use extruder_core::config::RunConfig;
use extruder_core::control::{ControllerKind, KernelRegime};
use extruder_core::params::derive_diffusivities;
use extruder_core::sim::{run_all, run_closed_loop, sweep, RunRecord, RunSummary};
use extruder_core::steady_state::{barrel_temperature_bounds, solve_steady_state};

use crate::io::{self, REPORT_FILE};
use crate::plot;
use crate::CliError;

const PROFILE_POINTS: usize = 401;

fn write_plots(dir: &Path, rec: &RunRecord) -> Result<(), CliError> {
    let (files, warnings) = plot::run_plots(rec);
    for w in warnings {
        eprintln!("warning: {}: {w}", dir.display());
    }
    for (name, svg) in files {
        io::write_text(&dir.join(name), &svg)?;
    }
    Ok(())
}

fn save(dir: &Path, rec: &RunRecord) -> Result<(), CliError> {
    io::write_run(dir, rec)?;
    write_plots(dir, rec)
}

pub fn steady(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let (m, p) = (cfg.material(), cfg.process());
    let ss = solve_steady_state(&m, &p)?;
    let (lo, hi) = barrel_temperature_bounds(&m, &p)?;
    io::create_dir(out)?;
    io::write_steady_profile(&out.join("steady_profile.csv"), &ss, PROFILE_POINTS)?;
    io::write_text(&out.join("steady.svg"), &plot::steady_plot(&ss, PROFILE_POINTS))?;
    println!("setpoint s_r      = {} m", ss.setpoint);
    // adding zero prints −0 as 0
    let z = |v: f64| v + 0.0;
    println!("exponents q1..q4  = {:.6e} {:.6e} {:.6e} {:.6e} 1/m", z(ss.q1), z(ss.q2), z(ss.q3), z(ss.q4));
    println!("amplitudes p1..p4 = {:.6e} {:.6e} {:.6e} {:.6e} K", z(ss.p1()), z(ss.p2), z(ss.p3), z(ss.p4));
    println!("interface flux    = {:.6e} W/m²", z(ss.k_flux));
    println!("inlet heat q_f*   = {:.6e} W/m²", z(ss.q_f_star));
    println!("T_s,eq(0)         = {:.6} °C", ss.solid(0.0).0);
    println!("T_l,eq(L)         = {:.6} °C", ss.liquid(ss.length).0);
    println!("T_b − T_m bounds  = [{lo:.6e}, {hi:.6e}] K (actual {:.6e} K)", p.barrel_temp - m.t_melt);
    println!("wrote {}", out.display());
    Ok(())
}

pub fn gains(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let setup = cfg.setup()?;
    let kf = &setup.kernel;
    let g = &kf.gains;
    io::create_dir(out)?;
    io::write_gain_table(&out.join("gains.csv"), kf, cfg.s_r, PROFILE_POINTS)?;
    let regime = match kf.regime {
        KernelRegime::Distinct => "distinct real exponents".to_string(),
        KernelRegime::Repeated => "repeated exponent".to_string(),
        KernelRegime::Oscillatory { omega } => format!("oscillatory, omega = {omega:.6e} 1/m"),
    };
    println!("c            = {}", g.c);
    println!("C            = {:.6e}", g.c_lin);
    println!("A            = {:.6e}", g.a_lin);
    println!("beta_bar     = {:.6e}", g.beta_bar);
    println!("b_bar        = {:.6e} m/s", g.b_bar);
    println!("gamma        = {:.6e} 1/m", g.gamma);
    println!("discriminant = {:.6e}", g.discriminant);
    println!("d1, d2       = {:.6e}, {:.6e} 1/m", g.d1, g.d2);
    println!("regime       = {regime}");
    println!("wrote {}", out.join("gains.csv").display());
    Ok(())
}

fn outcome(rec: &RunRecord, strict: bool, name: &str) -> Result<(), CliError> {
    if let Some(why) = &rec.stopped {
        return Err(CliError::Stopped(format!("{name}: {why}")));
    }
    if strict && !rec.report.all_passed() {
        return Err(CliError::Invariant(name.to_string()));
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, out: &Path, strict: bool) -> Result<(), CliError> {
    let rec = run_closed_loop(cfg)?;
    save(out, &rec)?;
    print!("{}", io::report_text(&rec));
    println!("wrote {}", out.display());
    outcome(&rec, strict, &out.display().to_string())
}

pub fn sweep_runs(cfg: &RunConfig, out: &Path, strict: bool) -> Result<(), CliError> {
    cfg.validate()?;
    io::create_dir(out)?;
    let runs = sweep(cfg);
    let mut summaries = Vec::with_capacity(runs.len());
    let mut done = Vec::new();
    let mut first_err: Option<CliError> = None;
    for (c, res) in &runs {
        let name = io::run_dir_name(c);
        match res {
            Ok(rec) => {
                save(&out.join(&name), rec)?;
                summaries.push(RunSummary::of(rec));
                if let Err(e) = outcome(rec, strict, &name.display().to_string()) {
                    // solver failures outrank invariant violations
                    if first_err.as_ref().is_none_or(|f| f.exit_code() == 4 && e.exit_code() == 3) {
                        first_err = Some(e);
                    }
                }
                done.push((name.display().to_string(), rec));
            }
            Err(e) => {
                eprintln!("{}: {e}", name.display());
                summaries.push(RunSummary::failed(c, e));
                if first_err.as_ref().is_none_or(|f| f.exit_code() != 3) {
                    first_err = Some(CliError::Stopped(format!("{}: {e}", name.display())));
                }
            }
        }
    }
    io::write_summaries(&out.join("sweep_summary.csv"), &summaries)?;
    if !done.is_empty() {
        let labelled: Vec<(&str, &RunRecord)> = done.iter().map(|(n, r)| (n.as_str(), *r)).collect();
        io::write_text(&out.join("sweep.svg"), &plot::overlay(&labelled))?;
    }
    for s in &summaries {
        println!(
            "b = {:.4} m/s, c = {}: settling {}, final error {:.3e}, validity {}",
            s.b,
            s.c,
            s.settling_time.map_or("none".to_string(), |t| format!("{t:.2} s")),
            s.final_rel_error,
            if s.validity_passed { "pass" } else { "FAIL" }
        );
    }
    println!("wrote {} runs to {}", summaries.len(), out.display());
    first_err.map_or(Ok(()), Err)
}

/// Backstepping and PI on identical physics.
pub fn compare_pi(cfg: &RunConfig, out: &Path, strict: bool) -> Result<(), CliError> {
    let bs_kind = if cfg.controller == ControllerKind::Pi { ControllerKind::OutputFeedback } else { cfg.controller };
    let cfgs = [RunConfig { controller: bs_kind, ..cfg.clone() }, RunConfig { controller: ControllerKind::Pi, ..cfg.clone() }];
    for c in &cfgs {
        c.validate()?;
    }
    let mut runs = run_all(&cfgs).into_iter();
    let (bs, pi) = (runs.next().expect("two runs")?, runs.next().expect("two runs")?);
    io::create_dir(out)?;
    save(&out.join(bs_kind.as_str()), &bs)?;
    save(&out.join("pi"), &pi)?;
    io::write_summaries(&out.join("comparison_summary.csv"), &[RunSummary::of(&bs), RunSummary::of(&pi)])?;
    io::write_text(&out.join("comparison.svg"), &plot::overlay(&[(bs_kind.as_str(), &bs), ("pi", &pi)]))?;
    for (name, rec) in [(bs_kind.as_str(), &bs), ("pi", &pi)] {
        let tol = rec.report.eps.temperature;
        let over = rec.series.iter().find(|p| p.ts_inlet > rec.config.t_m + tol);
        println!(
            "{name:16} inlet above T_m: {}, worst solid margin {:.4} K, validity {}{}",
            over.map_or("never".to_string(), |p| format!("from t = {:.2} s", p.t)),
            rec.report.worst_margin(Flag::ValidSolid),
            if rec.report.validity_passed() { "pass" } else { "FAIL" },
            rec.stopped.as_ref().map_or(String::new(), |s| format!(" ({s})"))
        );
    }
    println!("wrote {}", out.display());
    // the PI run is expected to break validity; only the backstepping run decides the exit code
    outcome(&bs, strict, bs_kind.as_str())
}

fn fit(name: &str, points: Vec<(f64, f64)>, skip: f64, theoretical: Option<f64>, fits: &mut Vec<(String, DecayFit)>) {
    match fit_decay_rate(&points, skip, theoretical) {
        Ok(f) => fits.push((name.to_string(), f)),
        Err(e) => eprintln!("warning: no decay fit for {name}: {e}"),
    }
}

/// Rebuild the invariant report from a run directory and fit decay rates.
pub fn analyze(dir: &Path, out: &Path, strict: bool) -> Result<(), CliError> {
    let rec = io::read_run(dir)?;
    let c = &rec.config;
    let d = derive_diffusivities(&c.material())?;
    let obs_bound = observer_decay_bound(d.alpha_s, c.b, d.h_s, c.length);
    let cl_bound = closed_loop_decay_bound(d.alpha_s, c.b, d.h_s, c.s_r, c.gain_c);
    let skip = c.skip_fraction;
    let mut fits = Vec::new();
    let series = |get: fn(&extruder_core::sim::Sample) -> f64| rec.series.iter().map(|p| (p.t, get(p))).collect::<Vec<_>>();
    fit("err_h1", series(|p| p.err_h1), skip, Some(obs_bound), &mut fits);
    fit("v_tilde", series(|p| p.v_tilde), skip, Some(obs_bound), &mut fits);
    fit("phi_hat", series(|p| p.phi_hat), skip, Some(cl_bound), &mut fits);
    if rec.snapshots.len() >= 3 {
        match lyapunov_trace(&rec) {
            Ok(tr) => fit("v_hat", tr.iter().map(|p| (p.t, p.v_hat)).collect(), skip, Some(cl_bound), &mut fits),
            Err(e) => eprintln!("warning: no Lyapunov trace: {e}"),
        }
    } else {
        eprintln!("warning: fewer than three profile snapshots; v_hat fit skipped");
    }
    let text = io::report_text(&rec);
    io::create_dir(out)?;
    io::write_text(&out.join(REPORT_FILE), &text)?;
    io::write_fits(&out.join("decay_fit.csv"), &fits)?;
    print!("{text}");
    for (name, f) in &fits {
        println!(
            "decay {name:8} rate {:.4e} 1/s over [{:.3e}, {:.3e}] s, r2 {:.3}{}",
            f.rate,
            f.t0,
            f.t1,
            f.r2,
            f.ratio.map_or(String::new(), |r| format!(", ratio to bound {r:.3}"))
        );
    }
    match std::fs::read_to_string(dir.join(REPORT_FILE)) {
        Ok(inline) if inline == text => println!("report matches the inline report"),
        Ok(_) => eprintln!("warning: report differs from {}", dir.join(REPORT_FILE).display()),
        Err(_) => eprintln!("warning: no inline report in {}", dir.display()),
    }
    println!("wrote {}", out.display());
    if strict && !rec.report.all_passed() {
        return Err(CliError::Invariant(dir.display().to_string()));
    }
    Ok(())
}
