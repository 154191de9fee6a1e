//! Material, process and controller parameters shared by every module.
//!
//! Temperatures are carried on a single affine scale (°C in the shipped
//! defaults); only differences such as `T_b - T_m` enter the formulas, so any
//! consistent scale works.

use serde::{Deserialize, Serialize};

use crate::control::KernelFunctions;
use crate::error::{Error, Result};
use crate::mesh::SolidProfile;

/// Thermophysical constants of the two phases.
///
/// `hbar_s`/`hbar_l` are volumetric barrel heat-transfer coefficients
/// (W m⁻³ K⁻¹). They default to zero, which reduces both phases to pure
/// conduction-advection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub rho_s: f64,
    pub rho_l: f64,
    pub c_s: f64,
    pub c_l: f64,
    pub k_s: f64,
    pub k_l: f64,
    pub hbar_s: f64,
    pub hbar_l: f64,
    /// Latent heat of fusion (J kg⁻¹).
    pub latent_heat: f64,
    /// Melting point.
    pub t_melt: f64,
}

impl MaterialParams {
    /// High-density polyethylene with no barrel heat exchange.
    pub fn hdpe() -> Self {
        MaterialParams {
            rho_s: 955.0,
            rho_l: 780.0,
            c_s: 1895.0,
            c_l: 2640.0,
            k_s: 0.373,
            k_l: 0.324,
            hbar_s: 0.0,
            hbar_l: 0.0,
            latent_heat: 39_000.0,
            t_melt: 135.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_s", self.rho_s),
            ("rho_l", self.rho_l),
            ("c_s", self.c_s),
            ("c_l", self.c_l),
            ("k_s", self.k_s),
            ("k_l", self.k_l),
            ("dH", self.latent_heat),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("hbar_s", self.hbar_s), ("hbar_l", self.hbar_l)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.t_melt.is_finite() {
            return Err(Error::Config("T_m must be finite".into()));
        }
        Ok(())
    }

    /// Interface coefficient β̄ = 1/(ρ_s ΔH) of the Stefan condition.
    pub fn beta_bar(&self) -> f64 {
        1.0 / (self.rho_s * self.latent_heat)
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::hdpe()
    }
}

/// Derived diffusivities `α_i = k_i/(ρ_i c_i)` and rates `h_i = h̄_i/(ρ_i c_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusivities {
    pub alpha_s: f64,
    pub alpha_l: f64,
    pub h_s: f64,
    pub h_l: f64,
}

pub fn derive_diffusivities(m: &MaterialParams) -> Result<Diffusivities> {
    m.validate()?;
    Ok(Diffusivities {
        alpha_s: m.k_s / (m.rho_s * m.c_s),
        alpha_l: m.k_l / (m.rho_l * m.c_l),
        h_s: m.hbar_s / (m.rho_s * m.c_s),
        h_l: m.hbar_l / (m.rho_l * m.c_l),
    })
}

/// Geometry and operating point of the extruder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    /// Extruder length L (m).
    pub length: f64,
    /// Screw advection speed b (m s⁻¹).
    pub screw_speed: f64,
    /// Barrel temperature T_b.
    pub barrel_temp: f64,
    /// Nozzle heat flux q_m* (W m⁻²).
    pub nozzle_flux: f64,
    /// Interface setpoint s_r (m).
    pub setpoint: f64,
    /// Initial interface position s_0 (m).
    pub initial_interface: f64,
}

impl ProcessParams {
    pub fn hdpe_slow() -> Self {
        ProcessParams {
            length: 0.1,
            screw_speed: 0.002,
            barrel_temp: 145.0,
            nozzle_flux: 100.0,
            setpoint: 0.07,
            initial_interface: 0.03,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_setpoint()?;
        let (s0, sr) = (self.initial_interface, self.setpoint);
        if !(s0.is_finite() && s0 > 0.0 && s0 < sr) {
            return Err(Error::Config(format!(
                "need 0 < s_0 < s_r < L, got s_0 = {s0}, s_r = {sr}, L = {}",
                self.length
            )));
        }
        Ok(())
    }

    /// The weaker check used by steady-state routines: `0 < s_r < L`, `b >= 0`, `q_m* >= 0`.
    pub fn validate_setpoint(&self) -> Result<()> {
        let (l, sr) = (self.length, self.setpoint);
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Config(format!("L must be finite and > 0, got {l}")));
        }
        if !(sr.is_finite() && sr > 0.0 && sr < l) {
            return Err(Error::Config(format!("need 0 < s_r < L, got s_r = {sr}, L = {l}")));
        }
        if !(self.screw_speed.is_finite() && self.screw_speed >= 0.0) {
            return Err(Error::Config(format!("b must be >= 0, got {}", self.screw_speed)));
        }
        if !(self.nozzle_flux.is_finite() && self.nozzle_flux >= 0.0) {
            return Err(Error::Config(format!("q_m_star must be >= 0, got {}", self.nozzle_flux)));
        }
        if !self.barrel_temp.is_finite() {
            return Err(Error::Config("T_b must be finite".into()));
        }
        Ok(())
    }
}

impl Default for ProcessParams {
    fn default() -> Self {
        Self::hdpe_slow()
    }
}

/// Scalar constants of the backstepping design.
///
/// `c_lin`/`a_lin` are the linearisation constants of the interface
/// boundary value and interface ODE; `d1`/`d2` are the kernel exponents
/// (real parts when `discriminant < 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub c: f64,
    pub gamma: f64,
    pub beta_bar: f64,
    pub c_lin: f64,
    pub a_lin: f64,
    pub b_bar: f64,
    pub discriminant: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Setpoint restriction: the cooling-only loop can reach `s_r` from the
/// initial estimate `that0` on `(0, s_0)`.
///
/// Returns `true` iff
/// `s_r > s_0 + (β̄ k_s/α_s) ∫₀^{s₀} f(x)/f(s₀) (T_m − T̂(x,0)) dx`,
/// with the integral taken by the same product rule the control law uses.
pub fn check_setpoint_restriction(
    p: &ProcessParams,
    that0: SolidProfile<'_>,
    kernel: &KernelFunctions,
) -> Result<bool> {
    let rhs = setpoint_restriction_bound(that0, kernel)?;
    Ok(p.setpoint > rhs)
}

/// Right-hand side of the setpoint restriction (the smallest admissible `s_r`).
pub fn setpoint_restriction_bound(that0: SolidProfile<'_>, kernel: &KernelFunctions) -> Result<f64> {
    let s0 = that0.s;
    let f_s0 = kernel.f(s0);
    if !f_s0.is_finite() || f_s0 == 0.0 {
        return Err(Error::DegenerateGain(format!("f(s_0) = {f_s0} at s_0 = {s0}")));
    }
    let t_m = kernel.t_melt();
    let w = kernel.f_weights(s0, that0.values.len());
    let integral: f64 = w.iter().zip(that0.values).map(|(w, v)| w / f_s0 * (t_m - v)).sum();
    Ok(s0 + kernel.gains.beta_bar * kernel.k_s() / kernel.alpha_s() * integral)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hdpe_diffusivities() {
        let d = derive_diffusivities(&MaterialParams::hdpe()).unwrap();
        // 0.373 / (955 * 1895) and 0.324 / (780 * 2640)
        assert!((d.alpha_s - 2.061_086_629e-7).abs() < 1e-15);
        assert!((d.alpha_l - 1.573_426_573e-7).abs() < 1e-15);
        assert_eq!(d.h_s, 0.0);
        assert_eq!(d.h_l, 0.0);
    }

    #[test]
    fn unit_constants_give_unit_diffusivity() {
        let m = MaterialParams {
            rho_s: 1.0,
            rho_l: 1.0,
            c_s: 1.0,
            c_l: 1.0,
            k_s: 1.0,
            k_l: 1.0,
            hbar_s: 2.0,
            hbar_l: 0.0,
            latent_heat: 1.0,
            t_melt: 0.0,
        };
        let d = derive_diffusivities(&m).unwrap();
        assert_eq!(d.alpha_s, 1.0);
        assert_eq!(d.alpha_l, 1.0);
        assert_eq!(d.h_s, 2.0);
    }

    #[test]
    fn non_positive_constants_rejected() {
        let mut m = MaterialParams::hdpe();
        m.k_s = 0.0;
        assert!(matches!(derive_diffusivities(&m), Err(Error::Config(_))));
        let mut m = MaterialParams::hdpe();
        m.rho_l = -1.0;
        assert!(matches!(derive_diffusivities(&m), Err(Error::Config(_))));
        let mut m = MaterialParams::hdpe();
        m.hbar_s = -1.0;
        assert!(derive_diffusivities(&m).is_err());
    }

    #[test]
    fn process_ordering_enforced() {
        let mut p = ProcessParams::hdpe_slow();
        assert!(p.validate().is_ok());
        p.initial_interface = 0.08;
        assert!(p.validate().is_err());
        p.initial_interface = 0.03;
        p.setpoint = 0.1;
        assert!(p.validate().is_err());
        p.setpoint = 0.07;
        p.screw_speed = -1.0;
        assert!(p.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn diffusivity_scaling(lambda in 0.01f64..100.0, k in 0.01f64..10.0, rho in 1.0f64..5000.0, c in 10.0f64..5000.0) {
                let mut m = MaterialParams::hdpe();
                m.k_s = k; m.rho_s = rho; m.c_s = c;
                let a = derive_diffusivities(&m).unwrap().alpha_s;
                let mut kr = m;
                kr.k_s *= lambda; kr.rho_s *= lambda;
                let a_kr = derive_diffusivities(&kr).unwrap().alpha_s;
                prop_assert!((a_kr / a - 1.0).abs() < 1e-12);
                let mut konly = m;
                konly.k_s *= lambda;
                let a_k = derive_diffusivities(&konly).unwrap().alpha_s;
                prop_assert!((a_k / a - lambda).abs() < 1e-12 * lambda);
            }
        }
    }
}
