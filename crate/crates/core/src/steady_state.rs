//! Closed-form equilibrium profiles of both phases at a prescribed interface
//! position, the steady inlet flux that holds it there, and the admissible
//! barrel-temperature band.
//!
//! Both phases solve `α T'' − b T' + h (T_b − T) = 0`. The liquid amplitude of
//! the growing exponential is stored referenced to the nozzle,
//! `p1_nozzle = p1 e^{q1 (L − s_r)}`, so that fast screws (q1 (L − s_r) in the
//! thousands) never overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{derive_diffusivities, MaterialParams, ProcessParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    /// Liquid amplitude of `e^{q1 (x − L)}`.
    pub p1_nozzle: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    /// Interface flux `k_s T'_s,eq(s_r) = k_l T'_l,eq(s_r)`.
    pub k_flux: f64,
    pub q_f_star: f64,
    pub setpoint: f64,
    pub barrel_temp: f64,
    pub nozzle_flux: f64,
    pub length: f64,
    pub t_melt: f64,
    pub k_s: f64,
    pub k_l: f64,
    pub alpha_s: f64,
    pub alpha_l: f64,
    pub h_s: f64,
    pub h_l: f64,
    pub screw_speed: f64,
    /// `b = 0` and `h_s = 0`: the solid profile is a straight line.
    pub solid_linear: bool,
    /// `b = 0` and `h_l = 0`: the liquid profile is a straight line.
    pub liquid_linear: bool,
}

/// Which side of the interface a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SteadyPhase {
    Solid,
    Liquid,
}

impl SteadyPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            SteadyPhase::Solid => "solid",
            SteadyPhase::Liquid => "liquid",
        }
    }
}

fn exponents(alpha: f64, b: f64, h: f64) -> (f64, f64) {
    let root = (b * b + 4.0 * alpha * h).sqrt();
    let plus = (b + root) / (2.0 * alpha);
    // b − root loses everything to cancellation when 4αh ≪ b²; use the product of roots.
    let minus = if b > 0.0 { -h / (alpha * plus) } else { (b - root) / (2.0 * alpha) };
    (plus, minus)
}

pub fn solve_steady_state(m: &MaterialParams, p: &ProcessParams) -> Result<SteadyState> {
    p.validate_setpoint()?;
    let d = derive_diffusivities(m)?;
    let b = p.screw_speed;
    let (q1, q2) = exponents(d.alpha_l, b, d.h_l);
    let (q3, q4) = exponents(d.alpha_s, b, d.h_s);
    let ell = p.length - p.setpoint;
    let r = p.barrel_temp - m.t_melt;
    let qm = p.nozzle_flux;
    let liquid_linear = q1 == 0.0 && q2 == 0.0;
    let solid_linear = q3 == 0.0 && q4 == 0.0;

    let (p1_nozzle, p2, k_flux) = if liquid_linear {
        (0.0, 0.0, qm)
    } else {
        let e1 = (-q1 * ell).exp();
        let e2 = (q2 * ell).exp();
        let ratio = ((q2 - q1) * ell).exp();
        let den = q1 - q2 * ratio;
        assert!(den > 0.0, "steady denominator must be positive, got {den}");
        let big_q = qm / m.k_l;
        let p1n = (r * q2 * e2 + big_q) / den;
        let p2 = -(r * q1 + big_q * e1) / den;
        let k = (m.k_l * r * (-q1 * q2) * (1.0 - ratio) + (q1 - q2) * qm * e1) / den;
        (p1n, p2, k)
    };

    let (p3, p4) = if solid_linear {
        (0.0, 0.0)
    } else {
        let den = q3 - q4;
        ((r * q4 + k_flux / m.k_s) / den, (-r * q3 - k_flux / m.k_s) / den)
    };

    let mut ss = SteadyState {
        q1,
        q2,
        q3,
        q4,
        p1_nozzle,
        p2,
        p3,
        p4,
        k_flux,
        q_f_star: 0.0,
        setpoint: p.setpoint,
        barrel_temp: p.barrel_temp,
        nozzle_flux: qm,
        length: p.length,
        t_melt: m.t_melt,
        k_s: m.k_s,
        k_l: m.k_l,
        alpha_s: d.alpha_s,
        alpha_l: d.alpha_l,
        h_s: d.h_s,
        h_l: d.h_l,
        screw_speed: b,
        solid_linear,
        liquid_linear,
    };
    ss.q_f_star = -m.k_s * ss.solid(0.0).1;
    if !ss.q_f_star.is_finite() {
        return Err(Error::NonFinite(format!("steady inlet flux is {}", ss.q_f_star)));
    }
    Ok(ss)
}

impl SteadyState {
    /// Amplitude `p1` of `e^{q1 (x − s_r)}`; may underflow to zero for fast screws.
    pub fn p1(&self) -> f64 {
        if self.liquid_linear {
            return 0.0;
        }
        self.p1_nozzle * (-self.q1 * (self.length - self.setpoint)).exp()
    }

    /// Solid branch `(T, T', T'')` at any `x`, including past `s_r`.
    pub fn solid(&self, x: f64) -> (f64, f64, f64) {
        let y = x - self.setpoint;
        if self.solid_linear {
            let g = self.k_flux / self.k_s;
            return (self.t_melt + g * y, g, 0.0);
        }
        let e3 = self.p3 * (self.q3 * y).exp();
        let e4 = self.p4 * (self.q4 * y).exp();
        (
            self.barrel_temp + e3 + e4,
            self.q3 * e3 + self.q4 * e4,
            self.q3 * self.q3 * e3 + self.q4 * self.q4 * e4,
        )
    }

    /// Liquid branch `(T, T', T'')` at any `x`.
    pub fn liquid(&self, x: f64) -> (f64, f64, f64) {
        if self.liquid_linear {
            let g = self.nozzle_flux / self.k_l;
            return (self.t_melt + g * (x - self.setpoint), g, 0.0);
        }
        let e1 = self.p1_nozzle * (self.q1 * (x - self.length)).exp();
        let e2 = self.p2 * (self.q2 * (x - self.setpoint)).exp();
        (
            self.barrel_temp + e1 + e2,
            self.q1 * e1 + self.q2 * e2,
            self.q1 * self.q1 * e1 + self.q2 * self.q2 * e2,
        )
    }

    pub fn phase_at(&self, x: f64) -> SteadyPhase {
        if x < self.setpoint {
            SteadyPhase::Solid
        } else {
            SteadyPhase::Liquid
        }
    }

    /// Residual of the steady ODE on the branch owning `x`, and the size of its largest term.
    pub fn ode_residual(&self, x: f64) -> (f64, f64) {
        let (a, h, (t, dt, ddt)) = match self.phase_at(x) {
            SteadyPhase::Solid => (self.alpha_s, self.h_s, self.solid(x)),
            SteadyPhase::Liquid => (self.alpha_l, self.h_l, self.liquid(x)),
        };
        let terms = [a * ddt, -self.screw_speed * dt, h * (self.barrel_temp - t)];
        let scale = terms.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        (terms.iter().sum(), scale)
    }
}

/// `(T_eq, T'_eq)` at `x ∈ [0, L]`, solid branch for `x < s_r`.
pub fn eval_steady_profile(ss: &SteadyState, x: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0 && x <= ss.length) {
        return Err(Error::Domain { x, length: ss.length });
    }
    let (t, dt, _) = match ss.phase_at(x) {
        SteadyPhase::Solid => ss.solid(x),
        SteadyPhase::Liquid => ss.liquid(x),
    };
    Ok((t, dt))
}

/// `(−q̲, q̄)`: a barrel temperature with `−q̲ ≤ T_b − T_m ≤ q̄` gives a valid steady state.
///
/// Bounds may be infinite (e.g. `q̄ = +∞` when `h_l = 0` and `q_m* > 0`).
pub fn barrel_temperature_bounds(m: &MaterialParams, p: &ProcessParams) -> Result<(f64, f64)> {
    p.validate_setpoint()?;
    let d = derive_diffusivities(m)?;
    let b = p.screw_speed;
    let (q1, q2) = exponents(d.alpha_l, b, d.h_l);
    let (q3, _) = exponents(d.alpha_s, b, d.h_s);
    let ell = p.length - p.setpoint;
    let qm = p.nozzle_flux;
    if qm == 0.0 {
        return Ok((0.0, 0.0));
    }
    let upper = if q2 == 0.0 {
        f64::INFINITY
    } else {
        -qm / (m.k_l * q2 * (q2 * ell).exp())
    };
    let q_low = if q1 == 0.0 && q2 == 0.0 {
        qm / (m.k_s * q3)
    } else {
        let e1 = (-q1 * ell).exp();
        let ratio = ((q2 - q1) * ell).exp();
        let den_scaled = -m.k_l * q1 * q2 * (1.0 - ratio) + m.k_s * q3 * (q1 - q2 * ratio);
        (q1 - q2) * qm * e1 / den_scaled
    };
    Ok((-q_low, upper))
}
