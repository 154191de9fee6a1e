//! Closed-loop simulation: plant, observer and interface co-integrated as one
//! stiff system, with the selected heat law evaluated continuously inside the
//! right-hand side.
//!
//! State layout: `[T_s (n), T_l (n), T̂_s (n), s, ∫(s − s_r)]`, plus the
//! observer domain length when the observer differentiates the measured
//! interface position itself.
//!
//! The Jacobian is assembled as a tridiagonal part (three coloured difference
//! sweeps with the interface speed and the heat input frozen) plus rank-one
//! corrections: one per globally coupled column (`T_s(0)`, `s`), one for the
//! interface speed and one for the heat input. Each step thus costs a handful
//! of right-hand-side evaluations and an `O(n)` solve.

use serde::{Deserialize, Serialize};

use crate::analysis::{h1_norm, v_tilde, InvariantReport, Margins};
use crate::config::{RunConfig, SdotSource, SetpointCheck, Setup};
use crate::control::{control_z, full_state_feedback_u, output_feedback_qf, ControllerKind, KernelFunctions, Saturation};
use crate::error::{Error, Result};
use crate::integrator::{integrate, Flow, IntegrationStats, Jacobian, StiffSystem, StructuredJacobian};
use crate::mesh::{
    immobilized_rhs_liquid, immobilized_rhs_solid, resample_profile, GridMap, ImmobilizedGrid, LiquidProfile, Phase,
    Physics, SolidProfile,
};
use crate::observer::{estimation_error, observer_rhs};
use crate::params::check_setpoint_restriction;
use crate::plant::{default_initial_condition, interface_speed, Measurements};
use crate::quadrature::h1_norm_sq;
use crate::steady_state::SteadyState;

pub const FORMAT_TAG: &str = "extruder-run/1";

/// Indices into the closed-loop state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub s: usize,
    pub pi: usize,
    pub s_obs: Option<usize>,
}

impl Layout {
    pub fn new(n: usize, source: SdotSource) -> Self {
        let s_obs = (source == SdotSource::FiniteDifference).then_some(3 * n + 2);
        Layout { n, s: 3 * n, pi: 3 * n + 1, s_obs }
    }

    pub fn dim(&self) -> usize {
        3 * self.n + if self.s_obs.is_some() { 3 } else { 2 }
    }

    pub fn ts<'a>(&self, y: &'a [f64]) -> &'a [f64] {
        &y[..self.n]
    }

    pub fn tl<'a>(&self, y: &'a [f64]) -> &'a [f64] {
        &y[self.n..2 * self.n]
    }

    pub fn that<'a>(&self, y: &'a [f64]) -> &'a [f64] {
        &y[2 * self.n..3 * self.n]
    }

    pub fn obs_domain(&self, y: &[f64]) -> f64 {
        self.s_obs.map_or(y[self.s], |i| y[i])
    }
}

/// Interface speed and heat input at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signals {
    pub sdot: f64,
    pub q_f: f64,
    /// Heat input before actuator limits.
    pub q_f_raw: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Frozen {
    sdot: Option<f64>,
    q_f: Option<f64>,
}

/// The closed-loop right-hand side.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub layout: Layout,
    pub physics: Physics,
    pub steady: SteadyState,
    pub kernel: KernelFunctions,
    pub controller: ControllerKind,
    pub saturation: Saturation,
    pub kp: f64,
    pub ki: f64,
    /// Domain rate used by the observer in the differenced variant.
    pub held_rate: f64,
    mask: Vec<bool>,
}

fn fd_step(v: f64) -> f64 {
    1.5e-8 * v.abs().max(1.0)
}

impl ClosedLoop {
    pub fn new(setup: &Setup, cfg: &RunConfig) -> Self {
        let layout = Layout::new(cfg.grid_n, cfg.sdot_source);
        let n = layout.n;
        let mut mask = vec![true; layout.dim()];
        mask[n - 1] = false;
        mask[n] = false;
        mask[3 * n - 1] = false;
        ClosedLoop {
            layout,
            physics: setup.physics,
            steady: setup.steady,
            kernel: setup.kernel,
            controller: cfg.controller,
            saturation: setup.saturation,
            kp: cfg.kp,
            ki: cfg.ki,
            held_rate: 0.0,
            mask,
        }
    }

    fn check_domains(&self, y: &[f64]) -> Result<(f64, f64)> {
        let s = y[self.layout.s];
        let obs_s = self.layout.obs_domain(y);
        if !(s.is_finite() && obs_s.is_finite()) {
            return Err(Error::NonFinite(format!("interface position {s}, observer domain {obs_s}")));
        }
        self.physics.check_solid(s)?;
        self.physics.check_liquid(s)?;
        self.physics.check_solid(obs_s)?;
        Ok((s, obs_s))
    }

    /// Heat input before limits.
    fn law(&self, y: &[f64], s: f64, obs_s: f64) -> f64 {
        let l = &self.layout;
        let ss = &self.steady;
        let meas = Measurements { y1: s, y2: y[0] };
        match self.controller {
            ControllerKind::OutputFeedback => {
                output_feedback_qf(&self.kernel, ss, &meas, SolidProfile { values: l.that(y), s: obs_s })
            }
            ControllerKind::FullState => {
                ss.q_f_star - full_state_feedback_u(&self.kernel, ss, SolidProfile { values: l.ts(y), s })
            }
            ControllerKind::Pi => ss.q_f_star + self.kp * (s - ss.setpoint) + self.ki * y[l.pi],
            ControllerKind::OpenLoop => ss.q_f_star,
        }
    }

    pub fn signals(&self, y: &[f64]) -> Result<Signals> {
        let (s, obs_s) = self.check_domains(y)?;
        let l = &self.layout;
        let ph = &self.physics;
        let sdot = interface_speed(SolidProfile { values: l.ts(y), s }, LiquidProfile { values: l.tl(y), s, length: ph.length }, ph)?;
        let q_f_raw = self.law(y, s, obs_s);
        Ok(Signals { sdot, q_f: self.saturation.apply(q_f_raw), q_f_raw })
    }

    fn eval(&self, y: &[f64], frozen: Frozen, dy: &mut [f64]) -> Result<Signals> {
        let (s, obs_s) = self.check_domains(y)?;
        let l = self.layout;
        let n = l.n;
        let ph = &self.physics;
        let ts = SolidProfile { values: l.ts(y), s };
        let tl = LiquidProfile { values: l.tl(y), s, length: ph.length };
        let sdot = match frozen.sdot {
            Some(v) => v,
            None => interface_speed(ts, tl, ph)?,
        };
        let q_f_raw = self.law(y, s, obs_s);
        let q_f = frozen.q_f.unwrap_or_else(|| self.saturation.apply(q_f_raw));
        if !(q_f.is_finite() && sdot.is_finite()) {
            return Err(Error::NonFinite(format!("heat input {q_f}, interface speed {sdot}")));
        }
        let obs_rate = if l.s_obs.is_some() { self.held_rate } else { sdot };
        let meas = Measurements { y1: s, y2: y[0] };
        immobilized_rhs_solid(ts, sdot, q_f, ph, &mut dy[..n])?;
        immobilized_rhs_liquid(tl, sdot, ph.q_m, ph, &mut dy[n..2 * n])?;
        observer_rhs(
            SolidProfile { values: l.that(y), s: obs_s },
            &meas,
            obs_rate,
            q_f,
            self.kernel.gains.gamma,
            ph,
            &mut dy[2 * n..3 * n],
        )?;
        dy[l.s] = sdot;
        dy[l.pi] = s - self.steady.setpoint;
        if let Some(i) = l.s_obs {
            dy[i] = self.held_rate;
        }
        Ok(Signals { sdot, q_f, q_f_raw })
    }

    /// `∂q_f/∂y` on the columns not treated as dense.
    fn heat_input_row(&self, y: &[f64], sig: &Signals) -> Vec<f64> {
        let l = &self.layout;
        let mut row = vec![0.0; l.dim()];
        if sig.q_f != sig.q_f_raw {
            return row;
        }
        let kf = &self.kernel;
        let coef = -kf.gains.beta_bar * kf.k_s() / kf.alpha_s();
        match self.controller {
            ControllerKind::OutputFeedback => {
                let w = kf.f_weights(l.obs_domain(y), l.n);
                for (i, wi) in w.iter().enumerate() {
                    row[2 * l.n + i] = coef * wi;
                }
            }
            ControllerKind::FullState => {
                let w = kf.f_weights(y[l.s], l.n);
                for (i, wi) in w.iter().enumerate().skip(1) {
                    row[i] = coef * wi;
                }
            }
            ControllerKind::Pi => row[l.pi] = self.ki,
            ControllerKind::OpenLoop => {}
        }
        row
    }

    /// `∂ṡ/∂T` at the six nodes next to the interface.
    fn speed_row(&self, y: &[f64], sdot: f64) -> Result<Vec<f64>> {
        let l = &self.layout;
        let n = l.n;
        let ph = &self.physics;
        let s = y[l.s];
        let mut row = vec![0.0; l.dim()];
        let mut ts = l.ts(y).to_vec();
        let mut tl = l.tl(y).to_vec();
        for k in n - 3..n {
            let h = fd_step(ts[k]);
            let keep = ts[k];
            ts[k] = keep + h;
            let v = interface_speed(SolidProfile { values: &ts, s }, LiquidProfile { values: &tl, s, length: ph.length }, ph)?;
            ts[k] = keep;
            row[k] = (v - sdot) / h;
        }
        for k in 0..3 {
            let h = fd_step(tl[k]);
            let keep = tl[k];
            tl[k] = keep + h;
            let v = interface_speed(SolidProfile { values: &ts, s }, LiquidProfile { values: &tl, s, length: ph.length }, ph)?;
            tl[k] = keep;
            row[n + k] = (v - sdot) / h;
        }
        Ok(row)
    }

    /// Jacobian in tridiagonal-plus-low-rank form.
    pub fn structured_jacobian(&self, y: &[f64], f0: &[f64]) -> Result<StructuredJacobian> {
        let l = self.layout;
        let dim = l.dim();
        let band = 3 * l.n;
        let sig = self.signals(y)?;
        let frozen = Frozen { sdot: Some(sig.sdot), q_f: Some(sig.q_f) };
        let mut jac = StructuredJacobian::zeros(dim);
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; dim];
        let mut hs = vec![0.0; band];
        for color in 0..3 {
            yp.copy_from_slice(y);
            for j in (color..band).step_by(3) {
                // column 0 feeds the observer inlet and the heat law; it is handled densely
                if j == 0 {
                    continue;
                }
                yp[j] = y[j] + fd_step(y[j]);
                hs[j] = yp[j] - y[j];
            }
            self.eval(&yp, frozen, &mut fp)?;
            for j in (color..band).step_by(3) {
                if j == 0 {
                    continue;
                }
                for i in j.saturating_sub(1)..=(j + 1).min(band - 1) {
                    let d = (fp[i] - f0[i]) / hs[j];
                    match i.cmp(&j) {
                        std::cmp::Ordering::Less => jac.upper[i] = d,
                        std::cmp::Ordering::Equal => jac.diag[i] = d,
                        std::cmp::Ordering::Greater => jac.lower[i] = d,
                    }
                }
            }
        }
        let mut dense = vec![0, l.s];
        dense.extend(l.s_obs);
        for &j in &dense {
            yp.copy_from_slice(y);
            let h = if j == 0 { fd_step(y[j]) } else { 1.5e-8 * y[j].abs().max(1e-3) };
            yp[j] = y[j] + h;
            let h = yp[j] - y[j];
            self.eval(&yp, Frozen::default(), &mut fp)?;
            let col: Vec<f64> = fp.iter().zip(f0).map(|(a, b)| (a - b) / h).collect();
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            jac.terms.push((col, e));
        }
        // interface speed
        let dv = 1e-6 * sig.sdot.abs().max(self.physics.b).max(1e-9);
        self.eval(y, Frozen { sdot: Some(sig.sdot + dv), q_f: Some(sig.q_f) }, &mut fp)?;
        let a: Vec<f64> = fp.iter().zip(f0).map(|(p, b)| (p - b) / dv).collect();
        jac.terms.push((a, self.speed_row(y, sig.sdot)?));
        // heat input
        let row = self.heat_input_row(y, &sig);
        if row.iter().any(|v| *v != 0.0) {
            let dq = 1e-6 * sig.q_f.abs().max(1.0);
            self.eval(y, Frozen { sdot: Some(sig.sdot), q_f: Some(sig.q_f + dq) }, &mut fp)?;
            let c: Vec<f64> = fp.iter().zip(f0).map(|(p, b)| (p - b) / dq).collect();
            jac.terms.push((c, row));
        }
        Ok(jac)
    }
}

impl StiffSystem for ClosedLoop {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self.eval(y, Frozen::default(), dy).map(|_| ())
    }

    fn jacobian(&mut self, _t: f64, y: &[f64], f0: &[f64]) -> Result<Jacobian> {
        Ok(Jacobian::Structured(self.structured_jacobian(y, f0)?))
    }

    fn time_derivative(&mut self, _t: f64, _y: &[f64], _f0: &[f64], _out: &mut [f64]) -> Result<bool> {
        Ok(false)
    }

    fn error_mask(&self) -> Option<&[bool]> {
        Some(&self.mask)
    }
}

/// One logged point of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub s: f64,
    pub q_f: f64,
    pub ts_inlet: f64,
    pub sdot: f64,
    pub valid_solid: bool,
    pub valid_liquid: bool,
    pub margins: Margins,
    pub z: f64,
    /// `‖T_s − T̂_s‖` in L2 and H1.
    pub err_l2: f64,
    pub err_h1: f64,
    /// Gradient of `T_s − T̂_s` at the interface (K/m).
    pub err_grad_s: f64,
    /// `‖T_s − T_s,eq‖_{H1}`.
    pub dev_h1: f64,
    /// `‖T_s − T_s,eq‖_{H1} + ‖T_s − T̂_s‖_{H1} + |s − s_r|`.
    pub phi_hat: f64,
    pub v_tilde: f64,
    pub pi_integral: f64,
    pub obs_domain: f64,
}

/// Profiles at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub s: f64,
    pub s_obs: f64,
    pub ts: Vec<f64>,
    pub tl: Vec<f64>,
    pub that: Vec<f64>,
}

/// Hypotheses of the positivity properties, checked on the run inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assumptions {
    pub barrel_at_melting_point: bool,
    pub no_nozzle_flux: bool,
    pub underestimated_start: bool,
    /// `None` when the heat law is not backstepping.
    pub setpoint_restriction: Option<bool>,
    /// Smallest admissible setpoint for the initial estimate.
    pub setpoint_bound: Option<f64>,
}

impl Assumptions {
    pub fn all_hold(&self) -> bool {
        self.barrel_at_melting_point && self.no_nozzle_flux && self.underestimated_start && self.setpoint_restriction == Some(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub config: RunConfig,
    pub assumptions: Assumptions,
    pub series: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
    pub report: InvariantReport,
    pub stats: IntegrationStats,
    /// Why the run ended before `t_end`, if it did.
    #[serde(default)]
    pub stopped: Option<String>,
}

/// Initial state vector and the run's hypotheses.
pub fn initial_state(setup: &Setup, cfg: &RunConfig) -> Result<(Vec<f64>, Assumptions)> {
    let n = cfg.grid_n;
    let plant = default_initial_condition(&setup.material, &setup.process, n, cfg.ts0_inlet, cfg.init_liquid)?;
    let g = ImmobilizedGrid::new(n, Phase::Observer)?;
    let that: Vec<f64> = plant.ts.iter().enumerate().map(|(i, v)| v - cfg.observer_offset * (1.0 - g.xi(i))).collect();
    let layout = Layout::new(n, cfg.sdot_source);
    let mut y = vec![0.0; layout.dim()];
    y[..n].copy_from_slice(&plant.ts);
    y[n..2 * n].copy_from_slice(&plant.tl);
    y[2 * n..3 * n].copy_from_slice(&that);
    y[layout.s] = plant.s;
    if let Some(i) = layout.s_obs {
        y[i] = plant.s;
    }
    let backstepping = matches!(cfg.controller, ControllerKind::OutputFeedback | ControllerKind::FullState);
    let (restriction, bound) = if backstepping {
        let prof = SolidProfile { values: &that, s: plant.s };
        let ok = check_setpoint_restriction(&setup.process, prof, &setup.kernel)?;
        let bound = crate::params::setpoint_restriction_bound(prof, &setup.kernel)?;
        (Some(ok), Some(bound))
    } else {
        (None, None)
    };
    let assumptions = Assumptions {
        barrel_at_melting_point: cfg.t_b == cfg.t_m,
        no_nozzle_flux: cfg.q_m_star == 0.0,
        underestimated_start: cfg.observer_offset >= 0.0,
        setpoint_restriction: restriction,
        setpoint_bound: bound,
    };
    Ok((y, assumptions))
}

fn sample(sys: &ClosedLoop, t: f64, y: &[f64], s0: f64, z_scale: f64) -> Result<Sample> {
    let l = &sys.layout;
    let n = l.n;
    let ph = &sys.physics;
    let ss = &sys.steady;
    let sig = sys.signals(y)?;
    let s = y[l.s];
    let obs_s = l.obs_domain(y);
    let ts = l.ts(y);
    let plant = SolidProfile { values: ts, s };
    let obs = SolidProfile { values: l.that(y), s: obs_s };
    let t_m = ph.t_m;
    let valid_solid = ts.iter().fold(f64::INFINITY, |m, v| m.min(t_m - v));
    let valid_liquid = l.tl(y).iter().fold(f64::INFINITY, |m, v| m.min(v - t_m));
    let meas = Measurements { y1: s, y2: ts[0] };
    let z = control_z(&sys.kernel, ss, obs, &meas);
    let err = estimation_error(plant, obs)?;
    let dx = s / (n - 1) as f64;
    let (l2, d2) = h1_norm_sq(&err, dx);
    let err_grad_s = (3.0 * err[n - 1] - 4.0 * err[n - 2] + err[n - 3]) / (2.0 * dx);
    let eq: Vec<f64> = (0..n).map(|i| ss.solid(i as f64 * dx).0).collect();
    let dev_h1 = h1_norm(ts, &eq, dx)?;
    let err_h1 = (l2 + d2).sqrt();
    let margins = Margins {
        valid_solid,
        valid_liquid,
        sdot_nonneg: sig.sdot,
        s_in_band: (s - s0).min(ss.setpoint - s),
        z_positive: z / z_scale,
        underestimate: err.iter().fold(f64::INFINITY, |m, e| m.min(*e)),
    };
    Ok(Sample {
        t,
        s,
        q_f: sig.q_f,
        ts_inlet: ts[0],
        sdot: sig.sdot,
        valid_solid: valid_solid >= 0.0,
        valid_liquid: valid_liquid >= 0.0,
        margins,
        z,
        err_l2: l2.sqrt(),
        err_h1,
        err_grad_s,
        dev_h1,
        phi_hat: dev_h1 + err_h1 + (s - ss.setpoint).abs(),
        v_tilde: v_tilde(plant, obs, sys.kernel.gains.gamma, ph.k_s)?,
        pi_integral: y[l.pi],
        obs_domain: obs_s,
    })
}

fn snapshot(layout: &Layout, t: f64, y: &[f64]) -> Snapshot {
    Snapshot {
        t,
        s: y[layout.s],
        s_obs: layout.obs_domain(y),
        ts: layout.ts(y).to_vec(),
        tl: layout.tl(y).to_vec(),
        that: layout.that(y).to_vec(),
    }
}

/// Simulate the configured loop from the default initial condition.
pub fn run_closed_loop(cfg: &RunConfig) -> Result<RunRecord> {
    let setup = cfg.setup()?;
    let (y0, assumptions) = initial_state(&setup, cfg)?;
    if assumptions.setpoint_restriction == Some(false) && cfg.setpoint_check == SetpointCheck::Error {
        return Err(Error::Config(format!(
            "setpoint restriction fails: s_r = {} m must exceed {:.6} m for this initial estimate; \
             raise s_r, reduce observer_offset, or set setpoint_check = \"warn\"",
            cfg.s_r,
            assumptions.setpoint_bound.unwrap_or(f64::NAN)
        )));
    }
    let positivity = assumptions.all_hold() && cfg.controller == ControllerKind::OutputFeedback;
    let mut report = InvariantReport::new(setup.eps, positivity);
    let mut sys = ClosedLoop::new(&setup, cfg);
    let layout = sys.layout;
    let s0 = cfg.s_0;
    let z_scale = match sample(&sys, 0.0, &y0, s0, 1.0)?.z.abs() {
        z if z > 0.0 => z,
        _ => 1.0,
    };
    let first = sample(&sys, 0.0, &y0, s0, z_scale)?;
    report.push(0.0, &first.margins);
    let mut series = vec![first];
    let mut snapshots = vec![snapshot(&layout, 0.0, &y0)];
    let mut next_snap = cfg.snapshot_every;
    let mut buf = vec![0.0; layout.dim()];
    let mut last = (0.0, y0.clone(), 0.0);
    let outcome = integrate(&mut sys, 0.0, &y0, cfg.t_end, &setup.step, |sys, acc, y| {
        let t1 = acc.t1();
        while next_snap <= t1 * (1.0 + 1e-12) && next_snap <= cfg.t_end * (1.0 + 1e-12) {
            acc.state_at(next_snap, &mut buf);
            snapshots.push(snapshot(&layout, next_snap, &buf));
            next_snap += cfg.snapshot_every;
        }
        if let Some(i) = layout.s_obs {
            let n = layout.n;
            let s1 = y[layout.s];
            sys.held_rate = (s1 - acc.y0[layout.s]) / acc.h;
            let from = GridMap { start: 0.0, end: y[i] };
            let to = GridMap { start: 0.0, end: s1 };
            let that = resample_profile(&y[2 * n..3 * n], from, to, n, true)?;
            y[2 * n..3 * n].copy_from_slice(&that);
            y[i] = s1;
        }
        let smp = sample(sys, t1, y, s0, z_scale)?;
        report.push(t1, &smp.margins);
        series.push(smp);
        last.0 = t1;
        last.1.copy_from_slice(y);
        last.2 = acc.h;
        Ok(Flow::Continue)
    });
    // a plant driven out of its domain keeps the trace up to the failure
    let (t_final, y_final, stats, stopped) = match outcome {
        Ok((t, y, stats)) => (t, y, stats, None),
        Err(e) => {
            let (t, y, h) = last;
            let stats = IntegrationStats { accepted: series.len() - 1, last_dt: h, ..Default::default() };
            (t, y, stats, Some(format!("stopped at t = {t} s: {e}")))
        }
    };
    if snapshots.last().is_some_and(|s| s.t < t_final * (1.0 - 1e-12)) {
        snapshots.push(snapshot(&layout, t_final, &y_final));
    }
    Ok(RunRecord { format: FORMAT_TAG.to_string(), config: cfg.clone(), assumptions, series, snapshots, report, stats, stopped })
}

/// Time after which `|s − s_r| ≤ band |s_0 − s_r|` for the rest of the run; `None` if never settled.
pub fn settling_time(series: &[Sample], s0: f64, setpoint: f64, band: f64) -> Option<f64> {
    let tol = band * (s0 - setpoint).abs();
    let last_out = series.iter().rposition(|p| (p.s - setpoint).abs() > tol);
    match last_out {
        None => series.first().map(|p| p.t),
        Some(i) if i + 1 < series.len() => Some(series[i + 1].t),
        Some(_) => None,
    }
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub b: f64,
    pub c: f64,
    pub controller: ControllerKind,
    pub settling_time: Option<f64>,
    /// `|s(t_end) − s_r| / |s_0 − s_r|`.
    pub final_rel_error: f64,
    pub peak_abs_q_f: f64,
    pub min_inlet_temp: f64,
    pub peak_err_l2: f64,
    pub peak_err_h1: f64,
    pub peak_dev_h1: f64,
    pub peak_phi_hat: f64,
    pub validity_passed: bool,
    pub invariants_passed: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub error: Option<String>,
}

pub const SETTLING_BAND: f64 = 0.05;

impl RunSummary {
    pub fn of(rec: &RunRecord) -> Self {
        let c = &rec.config;
        let last = rec.series.last().expect("a run has at least the initial sample");
        let peak = |get: fn(&Sample) -> f64| rec.series.iter().fold(0.0f64, |m, p| m.max(get(p)));
        RunSummary {
            b: c.b,
            c: c.gain_c,
            controller: c.controller,
            settling_time: settling_time(&rec.series, c.s_0, c.s_r, SETTLING_BAND),
            final_rel_error: (last.s - c.s_r).abs() / (c.s_0 - c.s_r).abs(),
            peak_abs_q_f: rec.series.iter().fold(0.0, |m, p| m.max(p.q_f.abs())),
            min_inlet_temp: rec.series.iter().fold(f64::INFINITY, |m, p| m.min(p.ts_inlet)),
            peak_err_l2: peak(|p| p.err_l2),
            peak_err_h1: peak(|p| p.err_h1),
            peak_dev_h1: peak(|p| p.dev_h1),
            peak_phi_hat: peak(|p| p.phi_hat),
            validity_passed: rec.report.validity_passed(),
            invariants_passed: rec.report.all_passed(),
            accepted_steps: rec.stats.accepted,
            rejected_steps: rec.stats.rejected,
            error: rec.stopped.clone(),
        }
    }

    pub fn failed(cfg: &RunConfig, e: &Error) -> Self {
        RunSummary {
            b: cfg.b,
            c: cfg.gain_c,
            controller: cfg.controller,
            settling_time: None,
            final_rel_error: f64::NAN,
            peak_abs_q_f: f64::NAN,
            min_inlet_temp: f64::NAN,
            peak_err_l2: f64::NAN,
            peak_err_h1: f64::NAN,
            peak_dev_h1: f64::NAN,
            peak_phi_hat: f64::NAN,
            validity_passed: false,
            invariants_passed: false,
            accepted_steps: 0,
            rejected_steps: 0,
            error: Some(e.to_string()),
        }
    }
}

/// Configurations of a speed/gain sweep: paired lists or their cross product.
pub fn sweep_configs(cfg: &RunConfig) -> Vec<RunConfig> {
    let with = |b: f64, c: f64| RunConfig { b, gain_c: c, ..cfg.clone() };
    if cfg.sweep_cross {
        cfg.sweep_b.iter().flat_map(|&b| cfg.sweep_c.iter().map(move |&c| with(b, c))).collect()
    } else {
        cfg.sweep_b.iter().zip(&cfg.sweep_c).map(|(&b, &c)| with(b, c)).collect()
    }
}

/// Run every configuration on its own thread; failures stay with their run.
pub fn run_all(cfgs: &[RunConfig]) -> Vec<Result<RunRecord>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs.iter().map(|c| scope.spawn(move || run_closed_loop(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::NonFinite("run panicked".into()))))
            .collect()
    })
}

pub fn sweep(cfg: &RunConfig) -> Vec<(RunConfig, Result<RunRecord>)> {
    let cfgs = sweep_configs(cfg);
    let runs = run_all(&cfgs);
    cfgs.into_iter().zip(runs).collect()
}

/// Outcome of holding the steady input from a perturbed start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopCheck {
    pub horizon: f64,
    pub final_rel_error: f64,
    pub converged: bool,
}

/// Run the plant under `q_f = q_f*` for `horizon` seconds and test for settling.
pub fn open_loop_check(cfg: &RunConfig, horizon: f64) -> Result<OpenLoopCheck> {
    let c = RunConfig {
        controller: ControllerKind::OpenLoop,
        t_end: horizon,
        snapshot_every: horizon,
        ..cfg.clone()
    };
    let rec = run_closed_loop(&c)?;
    let sum = RunSummary::of(&rec);
    Ok(OpenLoopCheck { horizon, final_rel_error: sum.final_rel_error, converged: sum.settling_time.is_some() })
}
