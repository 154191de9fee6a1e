//! The two-phase plant: solid and liquid fields coupled through the
//! interface energy balance `ṡ = β̄ (k_s T_s,x(s) − k_l T_l,x(s))`.
//!
//! The interface gradients are taken with the fitted three-node formula,
//! whose exponent depends on `b − ṡ`; the energy balance is therefore an
//! implicit scalar equation in `ṡ`, solved by safeguarded Newton iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{immobilized_rhs_liquid, immobilized_rhs_solid, FittedGradients, ImmobilizedGrid, LiquidProfile, Phase, Physics, SolidProfile};
use crate::params::{MaterialParams, ProcessParams};
use crate::steady_state::solve_steady_state;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Solid temperatures on `x = ξ s`.
    pub ts: Vec<f64>,
    /// Liquid temperatures on `x = s + ξ (L − s)`.
    pub tl: Vec<f64>,
    pub s: f64,
    pub t: f64,
}

impl PlantState {
    pub fn solid(&self) -> SolidProfile<'_> {
        SolidProfile { values: &self.ts, s: self.s }
    }

    pub fn liquid(&self, length: f64) -> LiquidProfile<'_> {
        LiquidProfile { values: &self.tl, s: self.s, length }
    }
}

/// Interface position and inlet temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    pub y1: f64,
    pub y2: f64,
}

pub fn measure(state: &PlantState) -> Measurements {
    Measurements { y1: state.s, y2: state.ts[0] }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantDerivative {
    pub dts: Vec<f64>,
    pub dtl: Vec<f64>,
    pub sdot: f64,
}

/// Interface speed from the energy balance with fitted gradients.
pub fn interface_speed(ts: SolidProfile<'_>, tl: LiquidProfile<'_>, ph: &Physics) -> Result<f64> {
    let fg = FittedGradients::new(ts, tl, ph)?;
    let residual = |v: f64| {
        let (gs, gl) = fg.eval(v);
        v - ph.beta_bar * (ph.k_s * gs - ph.k_l * gl)
    };
    let slope = |v: f64| {
        let (ds, dl) = fg.slope(v);
        1.0 - ph.beta_bar * (ph.k_s * ds - ph.k_l * dl)
    };
    solve_scalar(residual, slope, 0.0, ph.b.max(1e-9)).ok_or_else(|| {
        Error::NonFinite(format!("interface energy balance has no root at s = {}", ts.s))
    })
}

/// Bracketed Newton iteration; the bracket is found by doubling outwards from `x0`.
fn solve_scalar(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, x0: f64, step0: f64) -> Option<f64> {
    let f0 = f(x0);
    if !f0.is_finite() {
        return None;
    }
    if f0 == 0.0 {
        return Some(x0);
    }
    // f is increasing near the root in all regular cases, so search in the direction of −f0
    let dir = if f0 > 0.0 { -1.0 } else { 1.0 };
    let mut step = step0;
    let mut prev = x0;
    let mut bracket = None;
    for _ in 0..200 {
        let x1 = x0 + dir * step;
        let f1 = f(x1);
        if !f1.is_finite() {
            return None;
        }
        if f1.signum() != f0.signum() {
            bracket = Some((prev.min(x1), prev.max(x1)));
            break;
        }
        prev = x1;
        step *= 2.0;
    }
    let (mut lo, mut hi) = bracket?;
    let mut flo = f(lo);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return Some(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        let d = df(x);
        let newton = x - fx / d;
        let next = if d.is_finite() && d != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let tol = 1e-15 * x.abs().max(1e-12);
        if (next - x).abs() <= tol || (hi - lo) <= tol {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

/// Time derivative of the plant for inlet flux `q_f`.
pub fn plant_rhs(state: &PlantState, q_f: f64, ph: &Physics) -> Result<PlantDerivative> {
    ph.check_solid(state.s)?;
    ph.check_liquid(state.s)?;
    let sdot = interface_speed(state.solid(), state.liquid(ph.length), ph)?;
    let mut dts = vec![0.0; state.ts.len()];
    let mut dtl = vec![0.0; state.tl.len()];
    immobilized_rhs_solid(state.solid(), sdot, q_f, ph, &mut dts)?;
    immobilized_rhs_liquid(state.liquid(ph.length), sdot, ph.q_m, ph, &mut dtl)?;
    Ok(PlantDerivative { dts, dtl, sdot })
}

/// Initial liquid profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitLiquid {
    /// `T_m` at `s_0` rising with slope `q_m*/k_l`.
    Linear,
    /// The equilibrium liquid profile for an interface held at `s_0`.
    Steady,
}

impl std::str::FromStr for InitLiquid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(InitLiquid::Linear),
            "steady" => Ok(InitLiquid::Steady),
            other => Err(Error::Config(format!("init_liquid must be linear or steady, got '{other}'"))),
        }
    }
}

/// Linear solid from `ts0_inlet` to `T_m` at `s_0`, liquid per `init_liquid`.
pub fn default_initial_condition(
    m: &MaterialParams,
    p: &ProcessParams,
    n: usize,
    ts0_inlet: f64,
    init_liquid: InitLiquid,
) -> Result<PlantState> {
    let s0 = p.initial_interface;
    if !(s0 > 0.0 && s0 < p.length) {
        return Err(Error::Config(format!("need 0 < s_0 < L, got s_0 = {s0}")));
    }
    if ts0_inlet > m.t_melt {
        return Err(Error::Config(format!(
            "initial inlet temperature {ts0_inlet} exceeds the melting point {}",
            m.t_melt
        )));
    }
    let gs = ImmobilizedGrid::new(n, Phase::Solid)?;
    let gl = ImmobilizedGrid::new(n, Phase::Liquid)?;
    let mut ts: Vec<f64> = (0..n).map(|i| ts0_inlet + (m.t_melt - ts0_inlet) * gs.xi(i)).collect();
    ts[n - 1] = m.t_melt;
    let xl = gl.nodes(s0, p.length);
    let mut tl: Vec<f64> = match init_liquid {
        InitLiquid::Linear => {
            let g = p.nozzle_flux / m.k_l;
            xl.iter().map(|&x| m.t_melt + g * (x - s0)).collect()
        }
        InitLiquid::Steady => {
            let mut q = *p;
            q.setpoint = s0;
            let ss = solve_steady_state(m, &q)?;
            xl.iter().map(|&x| ss.liquid(x).0).collect()
        }
    };
    tl[0] = m.t_melt;
    Ok(PlantState { ts, tl, s: s0, t: 0.0 })
}
