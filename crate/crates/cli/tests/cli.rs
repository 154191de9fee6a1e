use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_extruder");

fn extruder(args: &[&str], out: &Path) -> Output {
    Command::new(BIN).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SHORT: [&str; 6] = ["--override", "grid_n=31", "--override", "t_end=20", "--override", "snapshot_every=5"];

fn run_short(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run"];
    args.extend(SHORT);
    args.extend(extra);
    extruder(&args, out)
}

#[test]
fn steady_writes_the_profile_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = extruder(&["steady"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("steady_profile.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,T_eq,dT_eq_dx,phase"));
    assert!(dir.path().join("steady.svg").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("inlet heat q_f*"));
}

#[test]
fn gains_dump_the_kernel_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = extruder(&["gains", "--override", "gain_c=1.0"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("gains.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,phi,phi_neg,f,g"));
    assert_eq!(csv.lines().count(), 402);
    assert!(String::from_utf8_lossy(&o.stdout).contains("d1, d2"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&extruder(&["run", "--override", "no_such_key=1"], dir.path())), 2);
    assert_eq!(code(&extruder(&["steady", "--override", "L=-1"], dir.path())), 2);
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&extruder(&["run", "--config", missing.to_str().unwrap()], dir.path())), 1);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "b = 0.01\ngain_c = 1.0\ngrid_n = 31\nt_end = 4.0\n").unwrap();
    let out = dir.path().join("o");
    let o = extruder(&["run", "--config", cfg.to_str().unwrap(), "--override", "t_end=2.0"], &out);
    assert_eq!(code(&o), 0);
    let header = fs::read_to_string(out.join("run.toml")).unwrap();
    assert!(header.contains("b = 0.01") && header.contains("t_end = 2.0"));
}

#[test]
fn run_then_analyze_reproduces_the_inline_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_short(dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["run.toml", "timeseries.csv", "snapshots.csv", "report.txt", "interface.svg", "heat_input.svg", "inlet_temperature.svg", "profiles.svg"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let ts = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert!(ts.starts_with("t,s,q_f,Ts_inlet,sdot,valid_solid,valid_liquid,"));
    let snaps = fs::read_to_string(dir.path().join("snapshots.csv")).unwrap();
    assert_eq!(snaps.lines().next(), Some("t,x,T,phase,source"));
    assert!(snaps.contains(",solid,observer"));

    let analysis = dir.path().join("analysis");
    let o = Command::new(BIN).arg("analyze").arg(dir.path()).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("report matches the inline report"));
    assert_eq!(fs::read_to_string(analysis.join("report.txt")).unwrap(), fs::read_to_string(dir.path().join("report.txt")).unwrap());
    let fits = fs::read_to_string(analysis.join("decay_fit.csv")).unwrap();
    assert!(fits.starts_with("norm,t0,t1,rate,theoretical,ratio,r2,points,conclusive"));
    assert!(fits.contains("\nphi_hat,") && fits.contains("\nv_hat,"));
}

#[test]
fn repeated_runs_write_identical_tables() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&run_short(a.path(), &[])), 0);
    assert_eq!(code(&run_short(b.path(), &[])), 0);
    for f in ["timeseries.csv", "snapshots.csv", "report.txt", "run.toml"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn strict_mode_turns_invariant_failures_into_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    // the cold start overshoots the melting point by a fraction of a kelvin within the first minute
    let args = ["--override", "eps_temp=0", "--override", "t_end=60"];
    assert_eq!(code(&run_short(dir.path(), &args)), 0);
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(code(&run_short(dir.path(), &strict)), 4);
    let o = Command::new(BIN).arg("analyze").arg(dir.path()).arg("--strict").output().unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn a_run_driven_out_of_its_domain_exits_with_three_and_keeps_its_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = extruder(&["run", "--override", "controller=pi", "--override", "t_end=120"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stopped at t ="));
    let header = fs::read_to_string(dir.path().join("run.toml")).unwrap();
    assert!(header.contains("stopped = "));
    assert!(fs::read_to_string(dir.path().join("timeseries.csv")).unwrap().lines().count() > 100);
}

#[test]
fn compare_pi_contrasts_validity() {
    let dir = tempfile::tempdir().unwrap();
    let o = extruder(&["compare-pi", "--override", "t_end=120"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("comparison_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0.002,0.2,output_feedback,") && rows[0].contains(",true,true,"));
    assert!(rows[1].contains(",pi,") && rows[1].contains(",false,false,"));
    assert!(dir.path().join("comparison.svg").exists());
    assert!(dir.path().join("pi/timeseries.csv").exists());
}

#[test]
fn sweep_cross_product_gives_nine_records() {
    let dir = tempfile::tempdir().unwrap();
    let o = extruder(
        &["sweep", "--override", "sweep_cross=true", "--override", "grid_n=21", "--override", "t_end=1", "--override", "snapshot_every=1"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 10);
    assert!(dir.path().join("output_feedback_b50mm_c0.2/timeseries.csv").exists());
}

#[test]
fn empty_sweep_gives_an_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = extruder(&["sweep", "--override", "sweep_b=[]", "--override", "sweep_c=[]"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    assert!(summary.lines().count() <= 1);
}
