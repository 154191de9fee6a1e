//! Browser bindings: equilibrium profile, gain kernel and a short closed-loop
//! run, each returning plain arrays for a canvas to draw.
//!
//! The computations are ordinary functions so they can be tested natively;
//! the `wasm_bindgen` wrappers only convert errors.

use wasm_bindgen::prelude::*;

use extruder_core::config::{RunConfig, SetpointCheck};
use extruder_core::control::KernelRegime;
use extruder_core::sim::{run_closed_loop, settling_time, SETTLING_BAND};
use extruder_core::steady_state::{barrel_temperature_bounds, solve_steady_state};
use extruder_core::Result;

/// Nodes per phase in browser runs. Coarse enough to stay interactive, fine
/// enough that the cold-start overshoot stays inside the validity tolerance.
const WEB_GRID: usize = 61;

/// The knobs the page exposes, in SI units.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knobs {
    pub b: f64,
    pub t_b: f64,
    pub hbar: f64,
    pub s_r: f64,
    pub c: f64,
}

#[wasm_bindgen]
impl Knobs {
    #[wasm_bindgen(constructor)]
    pub fn new(b: f64, t_b: f64, hbar: f64, s_r: f64, c: f64) -> Knobs {
        Knobs { b, t_b, hbar, s_r, c }
    }
}

impl Knobs {
    fn config(&self) -> RunConfig {
        RunConfig {
            b: self.b,
            t_b: self.t_b,
            hbar_s: self.hbar,
            hbar_l: self.hbar,
            s_r: self.s_r,
            gain_c: self.c,
            grid_n: WEB_GRID,
            setpoint_check: SetpointCheck::Warn,
            ..RunConfig::default()
        }
    }
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyCurve {
    x: Vec<f64>,
    temp: Vec<f64>,
    pub q_f_star: f64,
    pub t_melt: f64,
    /// Admissible range of `T_b − T_m`.
    pub bound_lo: f64,
    pub bound_hi: f64,
}

#[wasm_bindgen]
impl SteadyCurve {
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    pub fn temp(&self) -> Vec<f64> {
        self.temp.clone()
    }
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCurve {
    x: Vec<f64>,
    phi: Vec<f64>,
    f: Vec<f64>,
    regime: String,
}

#[wasm_bindgen]
impl KernelCurve {
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    pub fn phi(&self) -> Vec<f64> {
        self.phi.clone()
    }

    pub fn f(&self) -> Vec<f64> {
        self.f.clone()
    }

    pub fn regime(&self) -> String {
        self.regime.clone()
    }
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    t: Vec<f64>,
    s: Vec<f64>,
    inlet: Vec<f64>,
    q_f: Vec<f64>,
    pub validity_passed: bool,
    /// NaN when the interface never settles.
    pub settling_time: f64,
    stopped: String,
}

#[wasm_bindgen]
impl RunTrace {
    pub fn t(&self) -> Vec<f64> {
        self.t.clone()
    }

    pub fn s(&self) -> Vec<f64> {
        self.s.clone()
    }

    pub fn inlet(&self) -> Vec<f64> {
        self.inlet.clone()
    }

    pub fn q_f(&self) -> Vec<f64> {
        self.q_f.clone()
    }

    /// Empty unless the run ended early.
    pub fn stopped(&self) -> String {
        self.stopped.clone()
    }
}

pub fn steady_curve(k: &Knobs, points: usize) -> Result<SteadyCurve> {
    let cfg = k.config();
    let (m, p) = (cfg.material(), cfg.process());
    let ss = solve_steady_state(&m, &p)?;
    let (bound_lo, bound_hi) = barrel_temperature_bounds(&m, &p)?;
    let n = points.max(2);
    let x: Vec<f64> = (0..n).map(|i| p.length * i as f64 / (n - 1) as f64).collect();
    let temp = x.iter().map(|&x| if x < ss.setpoint { ss.solid(x).0 } else { ss.liquid(x).0 }).collect();
    Ok(SteadyCurve { x, temp, q_f_star: ss.q_f_star, t_melt: m.t_melt, bound_lo, bound_hi })
}

pub fn kernel_curve(k: &Knobs, points: usize) -> Result<KernelCurve> {
    let setup = k.config().setup()?;
    let kf = &setup.kernel;
    let n = points.max(2);
    let x: Vec<f64> = (0..n).map(|i| k.s_r * i as f64 / (n - 1) as f64).collect();
    let regime = match kf.regime {
        KernelRegime::Distinct => "distinct".to_string(),
        KernelRegime::Repeated => "repeated".to_string(),
        KernelRegime::Oscillatory { omega } => format!("oscillatory (omega = {omega:.3e} 1/m)"),
    };
    Ok(KernelCurve { phi: x.iter().map(|&x| kf.phi(x)).collect(), f: x.iter().map(|&x| kf.f(x)).collect(), x, regime })
}

pub fn run_trace(k: &Knobs, controller: &str, t_end: f64) -> Result<RunTrace> {
    let cfg = RunConfig { controller: controller.parse()?, t_end, snapshot_every: t_end, ..k.config() };
    let rec = run_closed_loop(&cfg)?;
    let pick = |get: fn(&extruder_core::sim::Sample) -> f64| rec.series.iter().map(get).collect::<Vec<_>>();
    Ok(RunTrace {
        t: pick(|p| p.t),
        s: pick(|p| p.s),
        inlet: pick(|p| p.ts_inlet),
        q_f: pick(|p| p.q_f),
        validity_passed: rec.report.validity_passed(),
        settling_time: settling_time(&rec.series, cfg.s_0, cfg.s_r, SETTLING_BAND).unwrap_or(f64::NAN),
        stopped: rec.stopped.unwrap_or_default(),
    })
}

fn js(e: extruder_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = steadyProfile)]
pub fn steady_profile(k: &Knobs, points: usize) -> std::result::Result<SteadyCurve, JsError> {
    steady_curve(k, points).map_err(js)
}

#[wasm_bindgen(js_name = gainKernel)]
pub fn gain_kernel(k: &Knobs, points: usize) -> std::result::Result<KernelCurve, JsError> {
    kernel_curve(k, points).map_err(js)
}

#[wasm_bindgen(js_name = closedLoop)]
pub fn closed_loop(k: &Knobs, controller: &str, t_end: f64) -> std::result::Result<RunTrace, JsError> {
    run_trace(k, controller, t_end).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slow() -> Knobs {
        Knobs::new(0.002, 145.0, 0.0, 0.07, 0.2)
    }

    #[test]
    fn steady_curve_meets_the_melting_point_at_the_setpoint() {
        let k = Knobs { hbar: 2.0e4, ..slow() };
        let c = steady_curve(&k, 201).unwrap();
        assert_eq!(c.x.len(), 201);
        let i = c.x.iter().position(|&x| x >= k.s_r).unwrap();
        assert!((c.temp[i] - c.t_melt).abs() < 1e-9);
        assert!(c.temp[..i].iter().all(|&t| t <= c.t_melt + 1e-9));
        assert!(c.bound_hi.is_finite());
    }

    #[test]
    fn kernel_starts_at_zero() {
        let c = kernel_curve(&slow(), 11).unwrap();
        assert_eq!(c.phi[0], 0.0);
        assert_eq!(c.regime, "distinct");
        assert!(c.f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn short_backstepping_run_heads_for_the_setpoint() {
        let tr = run_trace(&Knobs { b: 0.05, c: 5.0, ..slow() }, "output_feedback", 5.0).unwrap();
        let (s0, s1) = (tr.s[0], *tr.s.last().unwrap());
        assert!((s1 - 0.07).abs() < 0.1 * (s0 - 0.07).abs());
        assert!(tr.validity_passed && tr.stopped.is_empty());
        assert!(tr.settling_time.is_finite());
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(run_trace(&slow(), "bang_bang", 1.0).is_err());
        assert!(kernel_curve(&Knobs { c: -1.0, ..slow() }, 5).is_err());
        assert!(steady_curve(&Knobs { s_r: 0.2, ..slow() }, 5).is_err());
    }
}
