//! Front-fixing finite differences on unit grids.
//!
//! Each phase is mapped onto `ξ ∈ [0, 1]`: the solid (and the observer) by
//! `x = ξ s`, the liquid by `x = s + ξ (L − s)`. Holding `ξ` fixed while the
//! interface moves adds a grid-velocity term, giving
//!
//! ```text
//! solid   θ_t = α_s/s² θ_ξξ − (b − ξ ṡ)/s θ_ξ + h_s (T_b − θ)
//! liquid  θ_t = α_l/ℓ² θ_ξξ − (b − (1 − ξ) ṡ)/ℓ θ_ξ + h_l (T_b − θ),   ℓ = L − s
//! ```
//!
//! Cell Péclet numbers reach the hundreds for fast screws, so the diffusion
//! coefficient is exponentially fitted (`σ = (P/2) coth(P/2)` times the
//! physical value). The resulting three-point operator is an M-matrix for every
//! `P` and reduces to central differences as `P → 0`. Neumann ends use a ghost
//! node; interface nodes are pinned at `T_m`.

use crate::error::{Error, Result};
use crate::params::{derive_diffusivities, MaterialParams, ProcessParams};

/// Smallest admissible node count for a phase grid.
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Solid,
    Liquid,
    Observer,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Solid => "solid",
            Phase::Liquid => "liquid",
            Phase::Observer => "observer",
        }
    }
}

/// A uniform grid on `[0, 1]` together with its physical mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmobilizedGrid {
    pub n: usize,
    pub phase: Phase,
}

impl ImmobilizedGrid {
    pub fn new(n: usize, phase: Phase) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::Grid(format!("{} grid needs at least {MIN_NODES} nodes, got {n}", phase.as_str())));
        }
        Ok(ImmobilizedGrid { n, phase })
    }

    pub fn dxi(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn xi(&self, i: usize) -> f64 {
        i as f64 * self.dxi()
    }

    /// Physical coordinate of node `i` for interface `s` in a barrel of length `length`.
    pub fn x(&self, i: usize, s: f64, length: f64) -> f64 {
        match self.phase {
            Phase::Solid | Phase::Observer => self.xi(i) * s,
            Phase::Liquid => s + self.xi(i) * (length - s),
        }
    }

    pub fn nodes(&self, s: f64, length: f64) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i, s, length)).collect()
    }
}

/// Solid (or observer) temperatures on `ξ = x/s`; the last node sits on the interface.
#[derive(Debug, Clone, Copy)]
pub struct SolidProfile<'a> {
    pub values: &'a [f64],
    pub s: f64,
}

/// Liquid temperatures on `ξ = (x − s)/(L − s)`; the first node sits on the interface.
#[derive(Debug, Clone, Copy)]
pub struct LiquidProfile<'a> {
    pub values: &'a [f64],
    pub s: f64,
    pub length: f64,
}

/// Physical constants needed by the phase operators, derived once per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    pub alpha_s: f64,
    pub alpha_l: f64,
    pub h_s: f64,
    pub h_l: f64,
    pub k_s: f64,
    pub k_l: f64,
    pub b: f64,
    pub t_b: f64,
    pub t_m: f64,
    pub length: f64,
    pub beta_bar: f64,
    pub q_m: f64,
    pub s_min: f64,
}

impl Physics {
    /// `s_min` defaults to `1e-4 L`.
    pub fn new(m: &MaterialParams, p: &ProcessParams, s_min: Option<f64>) -> Result<Self> {
        let d = derive_diffusivities(m)?;
        p.validate_setpoint()?;
        let s_min = s_min.unwrap_or(1e-4 * p.length);
        if !(s_min > 0.0 && s_min < 0.5 * p.length) {
            return Err(Error::Config(format!("s_min must lie in (0, L/2), got {s_min}")));
        }
        Ok(Physics {
            alpha_s: d.alpha_s,
            alpha_l: d.alpha_l,
            h_s: d.h_s,
            h_l: d.h_l,
            k_s: m.k_s,
            k_l: m.k_l,
            b: p.screw_speed,
            t_b: p.barrel_temp,
            t_m: m.t_melt,
            length: p.length,
            beta_bar: m.beta_bar(),
            q_m: p.nozzle_flux,
            s_min,
        })
    }

    pub fn check_solid(&self, s: f64) -> Result<()> {
        if !(s > self.s_min) {
            return Err(Error::DegenerateDomain { phase: "solid", length: s, s_min: self.s_min });
        }
        Ok(())
    }

    pub fn check_liquid(&self, s: f64) -> Result<()> {
        let ell = self.length - s;
        if !(ell > self.s_min) {
            return Err(Error::DegenerateDomain { phase: "liquid", length: ell, s_min: self.s_min });
        }
        Ok(())
    }
}

/// End condition of a phase operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bc {
    /// Dirichlet node held at its current value.
    Pinned,
    /// `θ_ξ = g0 + g1 θ_end` at the boundary node.
    Flux { g0: f64, g1: f64 },
}

/// Affine tridiagonal operator `dθ_i/dt = lower_i θ_{i−1} + diag_i θ_i + upper_i θ_{i+1} + constant_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub constant: Vec<f64>,
}

impl Stencil {
    fn zeros(n: usize) -> Self {
        Stencil { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n], constant: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, theta: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * theta[i] + self.constant[i];
            if i > 0 {
                v += self.lower[i] * theta[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * theta[i + 1];
            }
            out[i] = v;
        }
    }
}

/// `B(P) = P/(e^P − 1)`, so that `σ ∓ P/2 = B(±P)`.
fn bernoulli(p: f64) -> f64 {
    if p.abs() < 1e-10 {
        1.0 - 0.5 * p
    } else {
        p / p.exp_m1()
    }
}

/// Fitted operator for `θ_t = D θ_ξξ − v(ξ) θ_ξ + h (T_b − θ)`.
///
/// Off-diagonals are written through the Bernoulli function, which keeps
/// them non-negative at any Péclet number.
pub fn fitted_stencil(n: usize, diffusion: f64, velocity: impl Fn(f64) -> f64, h: f64, t_b: f64, left: Bc, right: Bc) -> Stencil {
    let mut st = Stencil::zeros(n);
    let dxi = 1.0 / (n - 1) as f64;
    let scale = diffusion / (dxi * dxi);
    for i in 0..n {
        let v = velocity(i as f64 * dxi);
        let pe = v * dxi / diffusion;
        let lo = scale * bernoulli(-pe);
        let up = scale * bernoulli(pe);
        st.constant[i] = h * t_b;
        st.diag[i] = -(lo + up) - h;
        if i == 0 || i == n - 1 {
            let bc = if i == 0 { left } else { right };
            let Bc::Flux { g0, g1 } = bc else {
                st.diag[i] = 0.0;
                st.constant[i] = 0.0;
                continue;
            };
            // ghost node θ_{∓1} = θ_{±1} ∓ 2Δξ g
            let w = if i == 0 { -2.0 * dxi * lo } else { 2.0 * dxi * up };
            st.diag[i] += w * g1;
            st.constant[i] += w * g0;
            if i == 0 {
                st.upper[i] = lo + up;
            } else {
                st.lower[i] = lo + up;
            }
        } else {
            st.lower[i] = lo;
            st.upper[i] = up;
        }
    }
    st
}

/// Solid operator on `(0, s)` with the given inlet condition (in ξ units) and pinned interface.
pub fn solid_stencil(n: usize, s: f64, s_dot: f64, inlet: Bc, ph: &Physics) -> Result<Stencil> {
    ph.check_solid(s)?;
    let d = ph.alpha_s / (s * s);
    Ok(fitted_stencil(n, d, |xi| (ph.b - xi * s_dot) / s, ph.h_s, ph.t_b, inlet, Bc::Pinned))
}

/// Liquid operator on `(s, L)` with pinned interface and nozzle flux `q_m`.
pub fn liquid_stencil(n: usize, s: f64, s_dot: f64, q_m: f64, ph: &Physics) -> Result<Stencil> {
    ph.check_liquid(s)?;
    let ell = ph.length - s;
    let d = ph.alpha_l / (ell * ell);
    let outlet = Bc::Flux { g0: ell * q_m / ph.k_l, g1: 0.0 };
    Ok(fitted_stencil(n, d, |xi| (ph.b - (1.0 - xi) * s_dot) / ell, ph.h_l, ph.t_b, Bc::Pinned, outlet))
}

/// Nodal time derivatives of the solid temperature for inlet flux `q_f`.
pub fn immobilized_rhs_solid(ts: SolidProfile<'_>, s_dot: f64, q_f: f64, ph: &Physics, out: &mut [f64]) -> Result<()> {
    let n = ts.values.len();
    check_nodes(n)?;
    let inlet = Bc::Flux { g0: -ts.s * q_f / ph.k_s, g1: 0.0 };
    solid_stencil(n, ts.s, s_dot, inlet, ph)?.apply(ts.values, out);
    Ok(())
}

/// Nodal time derivatives of the liquid temperature for nozzle flux `q_m`.
pub fn immobilized_rhs_liquid(tl: LiquidProfile<'_>, s_dot: f64, q_m: f64, ph: &Physics, out: &mut [f64]) -> Result<()> {
    let n = tl.values.len();
    check_nodes(n)?;
    liquid_stencil(n, tl.s, s_dot, q_m, ph)?.apply(tl.values, out);
    Ok(())
}

fn check_nodes(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::Grid(format!("need at least 3 nodes, got {n}")));
    }
    Ok(())
}

/// Three-point one-sided gradients `(∂T_s/∂x, ∂T_l/∂x)` at the interface.
pub fn interface_gradients(ts: SolidProfile<'_>, tl: LiquidProfile<'_>) -> Result<(f64, f64)> {
    let (ns, nl) = (ts.values.len(), tl.values.len());
    check_nodes(ns)?;
    check_nodes(nl)?;
    let hs = ts.s / (ns - 1) as f64;
    let hl = (tl.length - tl.s) / (nl - 1) as f64;
    let v = ts.values;
    let gs = (3.0 * v[ns - 1] - 4.0 * v[ns - 2] + v[ns - 3]) / (2.0 * hs);
    let w = tl.values;
    let gl = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * hl);
    Ok((gs, gl))
}

/// Weight of the second difference in the fitted end-point derivative.
///
/// For nodes `θ0, θ1, θ2` at unit spacing, the interpolant in
/// `{1, η, e^{Pη}}` has slope `(θ1 − θ0) + (θ2 − 2θ1 + θ0) R(P)` at `η = 2`.
pub fn endpoint_weight(p: f64) -> f64 {
    if p.abs() < 1e-2 {
        let p2 = p * p;
        1.5 + p / 3.0 + p2 / 12.0 + p * p2 / 180.0 - p2 * p2 / 720.0
    } else if p > 40.0 {
        p
    } else if p < -40.0 {
        1.0
    } else {
        let em = p.exp_m1();
        let e = em + 1.0;
        (p * e * e - em) / (em * em)
    }
}

/// Derivative of [`endpoint_weight`] by central difference.
pub fn endpoint_weight_slope(p: f64) -> f64 {
    let h = 1e-5 * p.abs().max(1.0);
    (endpoint_weight(p + h) - endpoint_weight(p - h)) / (2.0 * h)
}

/// Interface gradients fitted to the local exponential layer for interface speed `s_dot`.
///
/// Exact whenever the three nodes nearest the interface lie on
/// `A + B x + C e^{(b − ṡ) x/α}`; equals [`interface_gradients`] when `b = ṡ`.
pub fn fitted_interface_gradients(ts: SolidProfile<'_>, tl: LiquidProfile<'_>, s_dot: f64, ph: &Physics) -> Result<(f64, f64)> {
    let f = FittedGradients::new(ts, tl, ph)?;
    Ok(f.eval(s_dot))
}

/// Three-node data at the interface, ready to evaluate fitted gradients for any interface speed.
#[derive(Debug, Clone, Copy)]
pub struct FittedGradients {
    ds1: f64,
    dd_s: f64,
    hs: f64,
    dl1: f64,
    dd_l: f64,
    hl: f64,
    b: f64,
    alpha_s: f64,
    alpha_l: f64,
}

impl FittedGradients {
    pub fn new(ts: SolidProfile<'_>, tl: LiquidProfile<'_>, ph: &Physics) -> Result<Self> {
        let (ns, nl) = (ts.values.len(), tl.values.len());
        check_nodes(ns)?;
        check_nodes(nl)?;
        let v = ts.values;
        let w = tl.values;
        Ok(FittedGradients {
            ds1: v[ns - 2] - v[ns - 3],
            dd_s: v[ns - 1] - 2.0 * v[ns - 2] + v[ns - 3],
            hs: ts.s / (ns - 1) as f64,
            dl1: w[1] - w[2],
            dd_l: w[0] - 2.0 * w[1] + w[2],
            hl: (tl.length - tl.s) / (nl - 1) as f64,
            b: ph.b,
            alpha_s: ph.alpha_s,
            alpha_l: ph.alpha_l,
        })
    }

    fn peclets(&self, s_dot: f64) -> (f64, f64) {
        let rel = self.b - s_dot;
        (rel * self.hs / self.alpha_s, -rel * self.hl / self.alpha_l)
    }

    pub fn eval(&self, s_dot: f64) -> (f64, f64) {
        let (ps, pl) = self.peclets(s_dot);
        let gs = (self.ds1 + self.dd_s * endpoint_weight(ps)) / self.hs;
        let gl = -(self.dl1 + self.dd_l * endpoint_weight(pl)) / self.hl;
        (gs, gl)
    }

    /// `(d gs/dṡ, d gl/dṡ)`.
    pub fn slope(&self, s_dot: f64) -> (f64, f64) {
        let (ps, pl) = self.peclets(s_dot);
        (
            -self.dd_s * endpoint_weight_slope(ps) / self.alpha_s,
            -self.dd_l * endpoint_weight_slope(pl) / self.alpha_l,
        )
    }
}

/// Physical placement of a uniform grid: node `i` of `n` at `start + i (end − start)/(n − 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMap {
    pub start: f64,
    pub end: f64,
}

/// Monotone cubic (Fritsch–Carlson) interpolation of `values` from `from` onto `n_out` nodes of `to`.
///
/// Targets may reach at most one source cell past either end. With
/// `pin_ends`, the first and last output values copy the source end values
/// exactly (Dirichlet nodes travelling with the domain).
pub fn resample_profile(values: &[f64], from: GridMap, to: GridMap, n_out: usize, pin_ends: bool) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 || n_out < 2 {
        return Err(Error::Resample(format!("need at least 2 nodes, got {n} -> {n_out}")));
    }
    let span = from.end - from.start;
    if !(span > 0.0) || !(to.end > to.start) {
        return Err(Error::Resample("grid maps must be increasing".into()));
    }
    let h = span / (n - 1) as f64;
    let (lo, hi) = (from.start.min(to.start), from.end.max(to.end));
    if from.start - lo > h * (1.0 + 1e-12) || hi - from.end > h * (1.0 + 1e-12) {
        return Err(Error::Resample(format!(
            "target [{}, {}] extends more than one cell beyond source [{}, {}]",
            to.start, to.end, from.start, from.end
        )));
    }
    let slopes = pchip_slopes(values, h);
    let dt = (to.end - to.start) / (n_out - 1) as f64;
    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let x = to.start + j as f64 * dt;
        out.push(hermite_eval(values, &slopes, h, (x - from.start) / h));
    }
    if pin_ends {
        out[0] = values[0];
        out[n_out - 1] = values[n - 1];
    }
    Ok(out)
}

fn pchip_slopes(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let delta: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        d[i] = if a * b <= 0.0 { 0.0 } else { 2.0 * a * b / (a + b) };
    }
    if n >= 4 {
        d[0] = end_slope(&[y[0], y[1], y[2], y[3]], h, delta[0]);
        d[n - 1] = -end_slope(&[y[n - 1], y[n - 2], y[n - 3], y[n - 4]], h, -delta[n - 2]);
    } else {
        d[0] = 1.5 * delta[0] - 0.5 * delta[1];
        d[n - 1] = 1.5 * delta[n - 2] - 0.5 * delta[n - 3];
        d[0] = limit_end(d[0], delta[0]);
        d[n - 1] = limit_end(d[n - 1], delta[n - 2]);
    }
    d
}

/// Third-order one-sided slope at `y[0]`, limited against the first secant `d0`.
fn end_slope(y: &[f64; 4], h: f64, d0: f64) -> f64 {
    let d = (-11.0 * y[0] + 18.0 * y[1] - 9.0 * y[2] + 2.0 * y[3]) / (6.0 * h);
    limit_end(d, d0)
}

fn limit_end(d: f64, d0: f64) -> f64 {
    if d * d0 <= 0.0 {
        0.0
    } else if d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Evaluate the Hermite interpolant at fractional index `u` (clamped to the end cells).
fn hermite_eval(y: &[f64], d: &[f64], h: f64, u: f64) -> f64 {
    let n = y.len();
    let k = (u.floor().max(0.0) as usize).min(n - 2);
    let t = u - k as f64;
    if t == 0.0 {
        return y[k];
    }
    if t == 1.0 {
        return y[k + 1];
    }
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y[k] + h10 * h * d[k] + h01 * y[k + 1] + h11 * h * d[k + 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady_state::solve_steady_state;

    fn physics(b: f64, tb: f64, hbar: f64) -> Physics {
        let mut m = MaterialParams::hdpe();
        m.hbar_s = hbar;
        m.hbar_l = hbar;
        let mut p = ProcessParams::hdpe_slow();
        p.screw_speed = b;
        p.barrel_temp = tb;
        Physics::new(&m, &p, None).unwrap()
    }

    #[test]
    fn bernoulli_pair_is_fitted_central_difference() {
        for p in [0.0, 1e-12, -3e-11, 0.0999, -0.5, 2.0, 37.0, -400.0, 800.0] {
            let (up, lo) = (bernoulli(p), bernoulli(-p));
            assert!(up >= 0.0 && lo >= 0.0);
            assert!((lo - up - p).abs() < 1e-12 * p.abs().max(1.0), "P = {p}");
            let sigma = if p == 0.0 { 1.0 } else { 0.5 * p / (0.5 * p).tanh() };
            assert!((0.5 * (up + lo) - sigma).abs() < 1e-12 * sigma, "P = {p}");
        }
    }

    #[test]
    fn endpoint_weight_branches_agree() {
        assert!((endpoint_weight(0.0) - 1.5).abs() < 1e-15);
        for p in [1e-2, -1e-2, 40.0, -40.0] {
            let em = (p as f64).exp_m1();
            let e = em + 1.0;
            let direct = (p * e * e - em) / (em * em);
            let eps = if p.abs() > 1.0 { 1e-12 * p.abs() } else { 1e-12 };
            let near = endpoint_weight(p * (1.0 - 1e-12));
            assert!((near - direct).abs() < eps.max(1e-10), "{p}: {near} vs {direct}");
        }
        let mut prev = endpoint_weight(-60.0);
        for i in -599..=600 {
            let r = endpoint_weight(i as f64 * 0.1);
            assert!(r >= prev - 1e-12);
            prev = r;
        }
    }

    #[test]
    fn equilibrium_has_zero_rhs() {
        let ph = physics(0.002, 135.0, 0.0);
        let mut ph0 = ph;
        ph0.q_m = 0.0;
        let v = vec![135.0; 41];
        let mut out = vec![1.0; 41];
        // rate scale α/(s Δξ)² ≈ 0.2 K/s per kelvin of curvature; round-off only
        immobilized_rhs_solid(SolidProfile { values: &v, s: 0.04 }, 0.0, 0.0, &ph0, &mut out).unwrap();
        assert!(out.iter().all(|d| d.abs() < 1e-12), "{out:?}");
        immobilized_rhs_liquid(LiquidProfile { values: &v, s: 0.04, length: 0.1 }, 0.0, 0.0, &ph0, &mut out).unwrap();
        assert!(out.iter().all(|d| d.abs() < 1e-12), "{out:?}");
    }

    #[test]
    fn degenerate_domains() {
        let ph = physics(0.002, 145.0, 0.0);
        let v = vec![135.0; 21];
        let mut out = vec![0.0; 21];
        let lp = LiquidProfile { values: &v, s: 0.1 - 0.5 * ph.s_min, length: 0.1 };
        assert!(matches!(immobilized_rhs_liquid(lp, 0.0, 100.0, &ph, &mut out), Err(Error::DegenerateDomain { phase: "liquid", .. })));
        let sp = SolidProfile { values: &v, s: 0.5 * ph.s_min };
        assert!(matches!(immobilized_rhs_solid(sp, 0.0, 0.0, &ph, &mut out), Err(Error::DegenerateDomain { phase: "solid", .. })));
    }

    struct SteadyCheck {
        /// Largest |dθ/dt| of the exact profile away from the flux ends.
        interior: f64,
        /// Largest nodal error of the discrete steady state.
        global: f64,
    }

    /// Solve `lower θ_{i−1} + diag θ_i + upper θ_{i+1} + constant = 0` with pinned rows held at `pins`.
    fn solve_discrete(st: &Stencil, pins: &[f64]) -> Vec<f64> {
        let n = st.len();
        let (mut a, mut b, mut c, mut d) = (st.lower.clone(), st.diag.clone(), st.upper.clone(), st.constant.iter().map(|v| -v).collect::<Vec<_>>());
        for i in [0, n - 1] {
            if b[i] == 0.0 {
                a[i] = 0.0;
                c[i] = 0.0;
                b[i] = 1.0;
                d[i] = pins[i];
            }
        }
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
        }
        x
    }

    fn steady_check(n: usize, b: f64, hbar: f64) -> SteadyCheck {
        let mut m = MaterialParams::hdpe();
        m.hbar_s = hbar;
        m.hbar_l = hbar;
        let mut p = ProcessParams::hdpe_slow();
        p.screw_speed = b;
        let ss = solve_steady_state(&m, &p).unwrap();
        let ph = Physics::new(&m, &p, None).unwrap();
        let gs = ImmobilizedGrid::new(n, Phase::Solid).unwrap();
        let gl = ImmobilizedGrid::new(n, Phase::Liquid).unwrap();
        let ts: Vec<f64> = gs.nodes(p.setpoint, p.length).iter().map(|&x| ss.solid(x).0).collect();
        let tl: Vec<f64> = gl.nodes(p.setpoint, p.length).iter().map(|&x| ss.liquid(x).0).collect();
        let mut ds = vec![0.0; n];
        let mut dl = vec![0.0; n];
        immobilized_rhs_solid(SolidProfile { values: &ts, s: p.setpoint }, 0.0, ss.q_f_star, &ph, &mut ds).unwrap();
        immobilized_rhs_liquid(LiquidProfile { values: &tl, s: p.setpoint, length: p.length }, 0.0, p.nozzle_flux, &ph, &mut dl).unwrap();
        let interior = ds[1..n - 1].iter().chain(&dl[1..n - 1]).fold(0.0f64, |a, v| a.max(v.abs()));
        let inlet = Bc::Flux { g0: -p.setpoint * ss.q_f_star / ph.k_s, g1: 0.0 };
        let xs = solve_discrete(&solid_stencil(n, p.setpoint, 0.0, inlet, &ph).unwrap(), &ts);
        let xl = solve_discrete(&liquid_stencil(n, p.setpoint, 0.0, p.nozzle_flux, &ph).unwrap(), &tl);
        let global = xs.iter().zip(&ts).chain(xl.iter().zip(&tl)).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        SteadyCheck { interior, global }
    }

    #[test]
    fn steady_profile_is_reproduced_to_second_order() {
        // slow screw with barrel exchange so both phases carry curvature
        let r: Vec<SteadyCheck> = [51usize, 101, 201].iter().map(|&n| steady_check(n, 0.0005, 2.0e4)).collect();
        for w in r.windows(2) {
            let interior = (w[0].interior / w[1].interior).log2();
            let global = (w[0].global / w[1].global).log2();
            assert!(interior > 1.8, "interior rate {interior}");
            assert!(global > 1.8, "global rate {global}: {} -> {}", w[0].global, w[1].global);
        }
    }

    #[test]
    fn matches_physical_domain_operator_for_frozen_front() {
        // five smooth profiles, central differences in x on the mapped nodes
        let ph = physics(0.0002, 145.0, 1.0e4);
        for k in 1..=5 {
            let amp = k as f64;
            let f = |x: f64| 120.0 + amp * (30.0 * x).sin() + 5.0 * (x * 7.0).cos();
            let df = |x: f64| amp * 30.0 * (30.0 * x).cos() - 35.0 * (x * 7.0).sin();
            let ddf = |x: f64| -amp * 900.0 * (30.0 * x).sin() - 245.0 * (x * 7.0).cos();
            let s = 0.04 + 0.002 * k as f64;
            let mut errs = Vec::new();
            for n in [101usize, 201] {
                let g = ImmobilizedGrid::new(n, Phase::Solid).unwrap();
                let xs = g.nodes(s, ph.length);
                let v: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
                let mut out = vec![0.0; n];
                immobilized_rhs_solid(SolidProfile { values: &v, s }, 0.0, -ph.k_s * df(0.0), &ph, &mut out).unwrap();
                let mut e = 0.0f64;
                for i in 0..n - 1 {
                    let x = xs[i];
                    let exact = ph.alpha_s * ddf(x) - ph.b * df(x) + ph.h_s * (ph.t_b - f(x));
                    e = e.max((out[i] - exact).abs());
                }
                errs.push(e);
            }
            assert!(errs[0] / errs[1] > 3.5, "profile {k}: {errs:?}");
        }
    }

    #[test]
    fn perturbation_decays_against_spectral_oracle() {
        // b = 0, frozen s, pinned at both ends: sin(πξ) mode decays at α π²/s² + h.
        let ph = physics(0.0, 135.0, 5.0e3);
        let s = 0.05;
        let n = 201;
        let st = fitted_stencil(n, ph.alpha_s / (s * s), |_| 0.0, ph.h_s, ph.t_b, Bc::Pinned, Bc::Pinned);
        let v: Vec<f64> = (0..n).map(|i| 135.0 + (std::f64::consts::PI * i as f64 / (n - 1) as f64).sin()).collect();
        let mut out = vec![0.0; n];
        st.apply(&v, &mut out);
        let rate = ph.alpha_s * std::f64::consts::PI.powi(2) / (s * s) + ph.h_s;
        let mid = (n - 1) / 2;
        let got = -out[mid] / (v[mid] - 135.0);
        assert!((got / rate - 1.0).abs() < 1e-4, "{got} vs {rate}");
    }

    #[test]
    fn stencil_is_m_matrix_at_high_peclet() {
        let ph = physics(0.05, 145.0, 0.0);
        let st = solid_stencil(101, 0.07, 0.001, Bc::Flux { g0: 0.0, g1: 0.0 }, &ph).unwrap();
        for i in 1..100 {
            assert!(st.lower[i] >= 0.0 && st.upper[i] >= 0.0 && st.diag[i] < 0.0, "node {i}");
            assert!(st.lower[i] + st.upper[i] + st.diag[i] <= 1e-12 * st.lower[i]);
        }
    }

    #[test]
    fn three_point_gradients_exact_for_quadratics() {
        let n = 21;
        let s = 0.03;
        let g = ImmobilizedGrid::new(n, Phase::Solid).unwrap();
        let gl = ImmobilizedGrid::new(n, Phase::Liquid).unwrap();
        let ts: Vec<f64> = g.nodes(s, 0.1).iter().map(|&x| 135.0 + 4.0 * (x - s) + 50.0 * (x - s).powi(2)).collect();
        let tl: Vec<f64> = gl.nodes(s, 0.1).iter().map(|&x| 135.0 + 2.5 * (x - s) - 80.0 * (x - s).powi(2)).collect();
        let (a, b) = interface_gradients(SolidProfile { values: &ts, s }, LiquidProfile { values: &tl, s, length: 0.1 }).unwrap();
        assert!((a - 4.0).abs() < 1e-10);
        assert!((b - 2.5).abs() < 1e-10);
        let short = [1.0, 2.0];
        assert!(interface_gradients(SolidProfile { values: &short, s }, LiquidProfile { values: &tl, s, length: 0.1 }).is_err());
    }

    #[test]
    fn fitted_gradients_capture_unresolved_layer() {
        for b in [0.002, 0.01, 0.05] {
            let mut m = MaterialParams::hdpe();
            m.hbar_l = 2.0e4;
            let mut p = ProcessParams::hdpe_slow();
            p.screw_speed = b;
            p.barrel_temp = 160.0;
            let ss = solve_steady_state(&m, &p).unwrap();
            let ph = Physics::new(&m, &p, None).unwrap();
            let n = 101;
            let gs = ImmobilizedGrid::new(n, Phase::Solid).unwrap();
            let gl = ImmobilizedGrid::new(n, Phase::Liquid).unwrap();
            let ts: Vec<f64> = gs.nodes(p.setpoint, p.length).iter().map(|&x| ss.solid(x).0).collect();
            let tl: Vec<f64> = gl.nodes(p.setpoint, p.length).iter().map(|&x| ss.liquid(x).0).collect();
            let sp = SolidProfile { values: &ts, s: p.setpoint };
            let lp = LiquidProfile { values: &tl, s: p.setpoint, length: p.length };
            let (a, c) = fitted_interface_gradients(sp, lp, 0.0, &ph).unwrap();
            let want = ss.k_flux;
            assert!((m.k_s * a - want).abs() < 1e-9 * want.abs().max(1e-6), "b={b}: {} vs {want}", m.k_s * a);
            assert!(want > 1.0);
            assert!((m.k_l * c - want).abs() < 1e-3 * want, "b={b}: {} vs {want}", m.k_l * c);
        }
    }

    #[test]
    fn fitted_gradients_reduce_to_three_point() {
        let ph = physics(0.002, 145.0, 0.0);
        let n = 31;
        let ts: Vec<f64> = (0..n).map(|i| 100.0 + (i as f64).powi(2) * 0.03).collect();
        let tl: Vec<f64> = (0..n).map(|i| 135.0 + (i as f64) * 0.4 - (i as f64).powi(2) * 0.01).collect();
        let sp = SolidProfile { values: &ts, s: 0.05 };
        let lp = LiquidProfile { values: &tl, s: 0.05, length: 0.1 };
        let plain = interface_gradients(sp, lp).unwrap();
        let fit = fitted_interface_gradients(sp, lp, ph.b, &ph).unwrap();
        assert!((plain.0 - fit.0).abs() < 1e-12 * plain.0.abs());
        assert!((plain.1 - fit.1).abs() < 1e-12 * plain.1.abs());
    }

    #[test]
    fn resample_identity_and_linear() {
        let v: Vec<f64> = (0..41).map(|i| 100.0 + 0.7 * i as f64).collect();
        let m = GridMap { start: 0.0, end: 0.04 };
        assert_eq!(resample_profile(&v, m, m, 41, true).unwrap(), v);
        let to = GridMap { start: 0.0, end: 0.0405 };
        let out = resample_profile(&v, m, to, 41, false).unwrap();
        for (j, o) in out.iter().enumerate() {
            let x = 0.0405 * j as f64 / 40.0;
            assert!((o - (100.0 + 0.7 * x / 0.001)).abs() < 1e-10);
        }
        let far = GridMap { start: 0.0, end: 0.042 };
        assert!(matches!(resample_profile(&v, m, far, 41, false), Err(Error::Resample(_))));
        let pinned = resample_profile(&v, m, to, 33, true).unwrap();
        assert_eq!(pinned[0], v[0]);
        assert_eq!(pinned[32], v[40]);
    }

    #[test]
    fn resample_error_is_third_order() {
        // Domain grows by 1%; the moved end node is pinned, so every other
        // target lies inside the source interval while Δξ > 1% of s.
        let f = |x: f64| (20.0 * x).exp() * 0.1 + x.sin();
        let s = 0.05;
        let mut prev = f64::INFINITY;
        for n in [21usize, 41, 81] {
            let v: Vec<f64> = (0..n).map(|i| f(s * i as f64 / (n - 1) as f64)).collect();
            let to = GridMap { start: 0.0, end: 1.01 * s };
            let out = resample_profile(&v, GridMap { start: 0.0, end: s }, to, n, true).unwrap();
            let err = out[..n - 1]
                .iter()
                .enumerate()
                .map(|(j, o)| (o - f(1.01 * s * j as f64 / (n - 1) as f64)).abs())
                .fold(0.0, f64::max);
            assert!(err < prev / 6.0, "n={n}: {err} vs {prev}");
            prev = err;
        }
    }

    #[test]
    fn one_cell_extrapolation_is_bounded() {
        let f = |x: f64| (20.0 * x).exp() * 0.1 + x.sin();
        let s = 0.05;
        let mut prev = f64::INFINITY;
        for n in [21usize, 41, 81] {
            let h = s / (n - 1) as f64;
            let v: Vec<f64> = (0..n).map(|i| f(i as f64 * h)).collect();
            let end = s + 0.5 * h;
            let out = resample_profile(&v, GridMap { start: 0.0, end: s }, GridMap { start: 0.0, end }, 2, false).unwrap();
            let err = (out[1] - f(end)).abs();
            assert!(err < prev / 6.0, "n={n}: {err} vs {prev}");
            prev = err;
        }
    }
}
