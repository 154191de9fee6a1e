//! Flat run configuration, read from TOML with `key=value` overrides.
//!
//! Every key has a default, so an empty file describes the slow HDPE
//! scenario under observer-based backstepping control.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::EpsGrid;
use crate::control::{synthesize_kernel, ControllerKind, KernelFunctions, Saturation};
use crate::error::{Error, Result};
use crate::integrator::StepControl;
use crate::mesh::{Physics, MIN_NODES};
use crate::params::{MaterialParams, ProcessParams};
use crate::plant::InitLiquid;
use crate::steady_state::{solve_steady_state, SteadyState};

/// Where the observer takes the rate of its moving domain from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdotSource {
    /// The plant's interface ODE.
    Plant,
    /// Differences of the measured interface position between accepted steps.
    FiniteDifference,
}

impl FromStr for SdotSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plant" => Ok(SdotSource::Plant),
            "finite_difference" => Ok(SdotSource::FiniteDifference),
            other => Err(Error::Config(format!("sdot_source must be plant or finite_difference, got '{other}'"))),
        }
    }
}

/// What to do when the setpoint restriction fails for a backstepping run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetpointCheck {
    Error,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rho_s: f64,
    pub rho_l: f64,
    pub c_s: f64,
    pub c_l: f64,
    pub k_s: f64,
    pub k_l: f64,
    pub hbar_s: f64,
    pub hbar_l: f64,
    #[serde(rename = "dH")]
    pub dh: f64,
    #[serde(rename = "T_m")]
    pub t_m: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub b: f64,
    #[serde(rename = "T_b")]
    pub t_b: f64,
    pub q_m_star: f64,
    pub s_r: f64,
    pub s_0: f64,
    pub gain_c: f64,

    pub grid_n: usize,
    /// Smallest admissible phase length (m); defaults to `1e-4 L`.
    pub s_min: Option<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub snapshot_every: f64,

    pub controller: ControllerKind,
    #[serde(rename = "Kp")]
    pub kp: f64,
    #[serde(rename = "Ki")]
    pub ki: f64,
    pub q_f_min: Option<f64>,
    pub q_f_max: Option<f64>,
    pub sdot_source: SdotSource,
    pub init_liquid: InitLiquid,
    #[serde(rename = "Ts0_inlet")]
    pub ts0_inlet: f64,
    /// Inlet under-estimate of the initial observer profile (K), tapering to zero at the interface.
    pub observer_offset: f64,
    pub setpoint_check: SetpointCheck,

    pub skip_fraction: f64,
    pub eps_temp: f64,
    pub eps_s: f64,
    pub eps_sdot: f64,
    pub eps_z: f64,

    /// Screw speeds (m/s) and gains for `sweep`.
    pub sweep_b: Vec<f64>,
    pub sweep_c: Vec<f64>,
    pub sweep_cross: bool,

    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = MaterialParams::hdpe();
        let p = ProcessParams::hdpe_slow();
        let ctl = StepControl::default();
        let eps = EpsGrid::default();
        RunConfig {
            rho_s: m.rho_s,
            rho_l: m.rho_l,
            c_s: m.c_s,
            c_l: m.c_l,
            k_s: m.k_s,
            k_l: m.k_l,
            hbar_s: m.hbar_s,
            hbar_l: m.hbar_l,
            dh: m.latent_heat,
            t_m: m.t_melt,
            length: p.length,
            b: p.screw_speed,
            t_b: p.barrel_temp,
            q_m_star: p.nozzle_flux,
            s_r: p.setpoint,
            s_0: p.initial_interface,
            gain_c: 0.2,
            grid_n: 101,
            s_min: None,
            abs_tol: ctl.abs_tol,
            rel_tol: ctl.rel_tol,
            dt_init: ctl.dt_init,
            dt_min: ctl.dt_min,
            dt_max: ctl.dt_max,
            t_end: 900.0,
            snapshot_every: 60.0,
            controller: ControllerKind::OutputFeedback,
            kp: PI_KP,
            ki: PI_KI,
            q_f_min: None,
            q_f_max: None,
            sdot_source: SdotSource::Plant,
            init_liquid: InitLiquid::Linear,
            ts0_inlet: 100.0,
            observer_offset: 5.0,
            setpoint_check: SetpointCheck::Error,
            skip_fraction: 0.1,
            eps_temp: eps.temperature,
            eps_s: eps.position,
            eps_sdot: eps.speed,
            eps_z: eps.z,
            sweep_b: vec![0.002, 0.01, 0.05],
            sweep_c: vec![0.2, 1.0, 5.0],
            sweep_cross: false,
            output_dir: None,
        }
    }
}

/// Default PI gains (W m⁻³ and W m⁻³ s⁻¹).
///
/// Negative gains heat the inlet while the front lags the setpoint, which a
/// cold start needs; positive gains freeze the barrel within a minute.
pub const PI_KP: f64 = -1.0e4;
pub const PI_KI: f64 = -2.0e2;

/// Everything derived from a configuration that a run needs.
#[derive(Debug, Clone)]
pub struct Setup {
    pub material: MaterialParams,
    pub process: ProcessParams,
    pub physics: Physics,
    pub steady: SteadyState,
    pub kernel: KernelFunctions,
    pub step: StepControl,
    pub saturation: Saturation,
    pub eps: EpsGrid,
}

impl RunConfig {
    /// Parse TOML text, then apply `key=value` overrides (values in TOML syntax; bare words are strings).
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not of the form key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            table.insert(k.to_string(), parse_value(v));
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn material(&self) -> MaterialParams {
        MaterialParams {
            rho_s: self.rho_s,
            rho_l: self.rho_l,
            c_s: self.c_s,
            c_l: self.c_l,
            k_s: self.k_s,
            k_l: self.k_l,
            hbar_s: self.hbar_s,
            hbar_l: self.hbar_l,
            latent_heat: self.dh,
            t_melt: self.t_m,
        }
    }

    pub fn process(&self) -> ProcessParams {
        ProcessParams {
            length: self.length,
            screw_speed: self.b,
            barrel_temp: self.t_b,
            nozzle_flux: self.q_m_star,
            setpoint: self.s_r,
            initial_interface: self.s_0,
        }
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            dt_init: self.dt_init,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
        }
    }

    pub fn eps(&self) -> EpsGrid {
        EpsGrid { temperature: self.eps_temp, position: self.eps_s, speed: self.eps_sdot, z: self.eps_z }
    }

    pub fn saturation(&self) -> Saturation {
        Saturation { min: self.q_f_min.unwrap_or(f64::NEG_INFINITY), max: self.q_f_max.unwrap_or(f64::INFINITY) }
    }

    pub fn validate(&self) -> Result<()> {
        self.material().validate()?;
        self.process().validate()?;
        self.step_control().validate()?;
        if self.grid_n < MIN_NODES {
            return Err(Error::Config(format!("grid_n must be at least {MIN_NODES}, got {}", self.grid_n)));
        }
        if !(self.gain_c.is_finite() && self.gain_c > 0.0) {
            return Err(Error::Config(format!("gain_c must be > 0, got {}", self.gain_c)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.snapshot_every > 0.0) {
            return Err(Error::Config(format!("snapshot_every must be > 0, got {}", self.snapshot_every)));
        }
        if self.ts0_inlet > self.t_m {
            return Err(Error::Config(format!("Ts0_inlet = {} exceeds T_m = {}", self.ts0_inlet, self.t_m)));
        }
        if !(self.observer_offset.is_finite()) {
            return Err(Error::Config("observer_offset must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.skip_fraction) {
            return Err(Error::Config(format!("skip_fraction must lie in [0, 1), got {}", self.skip_fraction)));
        }
        for (name, v) in [("eps_temp", self.eps_temp), ("eps_s", self.eps_s), ("eps_sdot", self.eps_sdot), ("eps_z", self.eps_z)] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let (Some(lo), Some(hi)) = (self.q_f_min, self.q_f_max) {
            if lo > hi {
                return Err(Error::Config(format!("q_f_min = {lo} exceeds q_f_max = {hi}")));
            }
        }
        if let Some(s_min) = self.s_min {
            if !(s_min > 0.0 && s_min < self.s_0) {
                return Err(Error::Config(format!("need 0 < s_min < s_0, got s_min = {s_min}")));
            }
        }
        if !self.sweep_cross && self.sweep_b.len() != self.sweep_c.len() {
            return Err(Error::Config(format!(
                "paired sweep needs equally long sweep_b ({}) and sweep_c ({}); set sweep_cross = true for all combinations",
                self.sweep_b.len(),
                self.sweep_c.len()
            )));
        }
        Ok(())
    }

    pub fn setup(&self) -> Result<Setup> {
        self.validate()?;
        let material = self.material();
        let process = self.process();
        let physics = Physics::new(&material, &process, self.s_min)?;
        let steady = solve_steady_state(&material, &process)?;
        let kernel = synthesize_kernel(&material, &process, &steady, self.gain_c)?;
        Ok(Setup {
            material,
            process,
            physics,
            steady,
            kernel,
            step: self.step_control(),
            saturation: self.saturation(),
            eps: self.eps(),
        })
    }
}

fn parse_value(v: &str) -> toml::Value {
    match format!("x = {v}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("x").expect("key present"),
        Err(_) => toml::Value::String(v.to_string()),
    }
}
