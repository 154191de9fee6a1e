//! Runtime checks of the provable closed-loop properties: model validity,
//! positivity and monotonicity invariants, Lyapunov functionals and fitted
//! decay rates.
//!
//! Maximum-principle statements hold exactly only in the continuum, so every
//! check carries an explicit grid tolerance.

use serde::{Deserialize, Serialize};

use crate::control::KernelFunctions;
use crate::error::{Error, Result};
use crate::mesh::SolidProfile;
use crate::observer::estimation_error;
use crate::plant::PlantState;
use crate::quadrature::{exp_product_weights, h1_norm_sq, ExpTerm};
use crate::sim::{RunRecord, Snapshot};
use crate::steady_state::SteadyState;
use num_complex::Complex64;

/// Grid tolerances for the invariant checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsGrid {
    /// Temperatures (K).
    pub temperature: f64,
    /// Interface position (m).
    pub position: f64,
    /// Interface speed (m/s).
    pub speed: f64,
    /// `Z` relative to its initial magnitude.
    pub z: f64,
}

// Three times the largest change of each worst margin between 101 and 401 nodes
// over the paired (b, c) runs, with and without heat exchange at the barrel ends.
impl Default for EpsGrid {
    fn default() -> Self {
        EpsGrid { temperature: 0.37, position: 6.5e-4, speed: 7.6e-4, z: 1.7e-2 }
    }
}

/// Signed distances to violation; a property holds when its margin is `>= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// `min (T_m − T_s)`.
    pub valid_solid: f64,
    /// `min (T_l − T_m)`.
    pub valid_liquid: f64,
    /// `ṡ`.
    pub sdot_nonneg: f64,
    /// `min (s − s_0, s_r − s)`.
    pub s_in_band: f64,
    /// `Z / |Z(0)|`.
    pub z_positive: f64,
    /// `min (T_s − T̂_s)`.
    pub underestimate: f64,
}

impl Margins {
    pub fn min(&self, o: &Margins) -> Margins {
        Margins {
            valid_solid: self.valid_solid.min(o.valid_solid),
            valid_liquid: self.valid_liquid.min(o.valid_liquid),
            sdot_nonneg: self.sdot_nonneg.min(o.sdot_nonneg),
            s_in_band: self.s_in_band.min(o.s_in_band),
            z_positive: self.z_positive.min(o.z_positive),
            underestimate: self.underestimate.min(o.underestimate),
        }
    }

    fn get(&self, f: Flag) -> f64 {
        match f {
            Flag::ValidSolid => self.valid_solid,
            Flag::ValidLiquid => self.valid_liquid,
            Flag::SdotNonneg => self.sdot_nonneg,
            Flag::SInBand => self.s_in_band,
            Flag::ZPositive => self.z_positive,
            Flag::Underestimate => self.underestimate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    ValidSolid,
    ValidLiquid,
    SdotNonneg,
    SInBand,
    ZPositive,
    Underestimate,
}

impl Flag {
    pub const ALL: [Flag; 6] =
        [Flag::ValidSolid, Flag::ValidLiquid, Flag::SdotNonneg, Flag::SInBand, Flag::ZPositive, Flag::Underestimate];

    pub fn as_str(self) -> &'static str {
        match self {
            Flag::ValidSolid => "valid_solid",
            Flag::ValidLiquid => "valid_liquid",
            Flag::SdotNonneg => "sdot_nonneg",
            Flag::SInBand => "s_in_band",
            Flag::ZPositive => "z_positive",
            Flag::Underestimate => "underestimate",
        }
    }

    /// Model validity, as opposed to the positivity properties of the observer-based loop.
    pub fn is_validity(self) -> bool {
        matches!(self, Flag::ValidSolid | Flag::ValidLiquid)
    }

    pub fn tolerance(self, eps: &EpsGrid) -> f64 {
        match self {
            Flag::ValidSolid | Flag::ValidLiquid | Flag::Underestimate => eps.temperature,
            Flag::SdotNonneg => eps.speed,
            Flag::SInBand => eps.position,
            Flag::ZPositive => eps.z,
        }
    }
}

impl std::str::FromStr for Flag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Flag::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown invariant flag '{s}'")))
    }
}

/// Worst margins over a run and where they occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub eps: EpsGrid,
    pub samples: usize,
    pub worst: Margins,
    /// Time of each worst margin.
    pub worst_t: Margins,
    /// Whether the run satisfies the hypotheses under which the positivity properties are claimed.
    pub positivity_applies: bool,
}

impl InvariantReport {
    pub fn new(eps: EpsGrid, positivity_applies: bool) -> Self {
        let inf = Margins {
            valid_solid: f64::INFINITY,
            valid_liquid: f64::INFINITY,
            sdot_nonneg: f64::INFINITY,
            s_in_band: f64::INFINITY,
            z_positive: f64::INFINITY,
            underestimate: f64::INFINITY,
        };
        InvariantReport { eps, samples: 0, worst: inf, worst_t: Margins { ..inf }, positivity_applies }
    }

    pub fn push(&mut self, t: f64, m: &Margins) {
        self.samples += 1;
        let mut wt = self.worst_t;
        let pick = |cur: f64, new: f64, old_t: f64| if new < cur || new.is_nan() { t } else { old_t };
        wt.valid_solid = pick(self.worst.valid_solid, m.valid_solid, wt.valid_solid);
        wt.valid_liquid = pick(self.worst.valid_liquid, m.valid_liquid, wt.valid_liquid);
        wt.sdot_nonneg = pick(self.worst.sdot_nonneg, m.sdot_nonneg, wt.sdot_nonneg);
        wt.s_in_band = pick(self.worst.s_in_band, m.s_in_band, wt.s_in_band);
        wt.z_positive = pick(self.worst.z_positive, m.z_positive, wt.z_positive);
        wt.underestimate = pick(self.worst.underestimate, m.underestimate, wt.underestimate);
        self.worst_t = wt;
        self.worst = self.worst.min(m);
    }

    pub fn passed(&self, f: Flag) -> bool {
        self.worst.get(f) >= -f.tolerance(&self.eps)
    }

    pub fn worst_margin(&self, f: Flag) -> f64 {
        self.worst.get(f)
    }

    pub fn worst_time(&self, f: Flag) -> f64 {
        self.worst_t.get(f)
    }

    pub fn validity_passed(&self) -> bool {
        self.passed(Flag::ValidSolid) && self.passed(Flag::ValidLiquid)
    }

    pub fn positivity_passed(&self) -> bool {
        Flag::ALL.iter().filter(|f| !f.is_validity()).all(|&f| self.passed(f))
    }

    /// Validity always counts; positivity only where its hypotheses hold.
    pub fn all_passed(&self) -> bool {
        self.validity_passed() && (!self.positivity_applies || self.positivity_passed())
    }

    /// Plain-text summary, one line per flag.
    pub fn to_text(&self) -> String {
        let mut out = format!("samples = {}\npositivity_applies = {}\n", self.samples, self.positivity_applies);
        for f in Flag::ALL {
            let status = if self.passed(f) {
                "pass"
            } else if f.is_validity() || self.positivity_applies {
                "FAIL"
            } else {
                "fail (not claimed)"
            };
            out.push_str(&format!(
                "{:<14} {:<18} worst = {:+.6e} at t = {:.6e} s  (tolerance {:.1e})\n",
                f.as_str(),
                status,
                self.worst.get(f),
                self.worst_t.get(f),
                f.tolerance(&self.eps)
            ));
        }
        out
    }
}

/// Validity margins of one plant state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValiditySlice {
    pub solid_margin: f64,
    pub liquid_margin: f64,
    pub solid_ok: bool,
    pub liquid_ok: bool,
}

/// `T_s ≤ T_m` and `T_l ≥ T_m` node by node, with tolerance `tol` (K).
pub fn validity_check(state: &PlantState, t_m: f64, tol: f64) -> ValiditySlice {
    let solid_margin = state.ts.iter().fold(f64::INFINITY, |m, &v| m.min(t_m - v));
    let liquid_margin = state.tl.iter().fold(f64::INFINITY, |m, &v| m.min(v - t_m));
    ValiditySlice {
        solid_margin,
        liquid_margin,
        solid_ok: solid_margin >= -tol,
        liquid_ok: liquid_margin >= -tol,
    }
}

/// `‖v − r‖_{H1}` for nodal data on a common uniform grid of spacing `dx`.
pub fn h1_norm(values: &[f64], reference: &[f64], dx: f64) -> Result<f64> {
    if values.len() != reference.len() {
        return Err(Error::Alignment(format!(
            "profile has {} nodes, reference has {}",
            values.len(),
            reference.len()
        )));
    }
    let d: Vec<f64> = values.iter().zip(reference).map(|(a, b)| a - b).collect();
    let (l2, d2) = h1_norm_sq(&d, dx);
    Ok((l2 + d2).sqrt())
}

/// Least-squares exponential rate of a positive series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t0: f64,
    pub t1: f64,
    /// `−d ln(norm)/dt`.
    pub rate: f64,
    pub theoretical: Option<f64>,
    pub ratio: Option<f64>,
    pub r2: f64,
    pub points: usize,
}

impl DecayFit {
    pub const MIN_R2: f64 = 0.95;

    pub fn conclusive(&self) -> bool {
        self.r2 >= Self::MIN_R2
    }
}

/// Fit `ln(norm) = a − rate·t` on the window after skipping the first
/// `skip_fraction` of the time span.
pub fn fit_decay_rate(series: &[(f64, f64)], skip_fraction: f64, theoretical: Option<f64>) -> Result<DecayFit> {
    if !(0.0..1.0).contains(&skip_fraction) {
        return Err(Error::Fit(format!("skip fraction must lie in [0, 1), got {skip_fraction}")));
    }
    let (Some(first), Some(last)) = (series.first(), series.last()) else {
        return Err(Error::Fit("empty series".into()));
    };
    let start = first.0 + skip_fraction * (last.0 - first.0);
    let window: Vec<(f64, f64)> = series.iter().copied().filter(|p| p.0 >= start).collect();
    if window.len() < 2 {
        return Err(Error::Fit(format!("only {} samples in the fit window", window.len())));
    }
    if let Some(bad) = window.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::Fit(format!("non-positive norm {} at t = {}", bad.1, bad.0)));
    }
    let n = window.len() as f64;
    let tm = window.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = window.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, v) in &window {
        let (dt, dy) = (t - tm, v.ln() - ym);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::Fit("fit window has zero time span".into()));
    }
    let slope = sty / stt;
    let sse = (syy - slope * sty).max(0.0);
    // a flat series leaves only round-off in syy
    let flat = syy <= 1e-24 * n * (ym * ym + 1.0);
    let r2 = if flat { 1.0 } else { 1.0 - sse / syy };
    let rate = -slope;
    Ok(DecayFit {
        t0: window[0].0,
        t1: window[window.len() - 1].0,
        rate,
        theoretical,
        ratio: theoretical.map(|d| rate / d),
        r2,
        points: window.len(),
    })
}

/// Guaranteed decay rate of the estimation error, `2 (h_s + b²/4α_s + α_s/4L²)`.
pub fn observer_decay_bound(alpha_s: f64, b: f64, h_s: f64, length: f64) -> f64 {
    2.0 * (h_s + b * b / (4.0 * alpha_s) + alpha_s / (4.0 * length * length))
}

/// Guaranteed closed-loop rate `min(α_s/(16 s_r) + b²/4α_s + h_s, c)`.
pub fn closed_loop_decay_bound(alpha_s: f64, b: f64, h_s: f64, setpoint: f64, c: f64) -> f64 {
    (alpha_s / (16.0 * setpoint) + b * b / (4.0 * alpha_s) + h_s).min(c)
}

/// Second-order nodal derivative on a uniform grid.
fn nodal_derivative(v: &[f64], dx: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            let g = (v[1] - v[0]) / dx;
            d.fill(g);
        }
        return d;
    }
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dx);
    }
    d
}

/// `½ ∫₀^{s} (z² + z_x²)` for `z = v e^{−γx}`, with the weight integrated exactly.
fn weighted_h1_energy(v: &[f64], s: f64, gamma: f64) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let dx = s / (n - 1) as f64;
    let dv = nodal_derivative(v, dx);
    let w = exp_product_weights(
        &[ExpTerm { a: Complex64::new(1.0, 0.0), b: Complex64::new(0.0, 0.0), lambda: Complex64::new(2.0 * gamma, 0.0) }],
        0.0,
        s,
        n,
    );
    0.5 * (0..n).map(|i| w[i] * (v[i] * v[i] + (dv[i] - gamma * v[i]).powi(2))).sum::<f64>()
}

/// Observer functional `Ṽ = ½‖ũ e^{−γx}‖²_{H1}` with `ũ = k_s (T_s − T̂_s)`.
pub fn v_tilde(plant: SolidProfile<'_>, obs: SolidProfile<'_>, gamma: f64, k_s: f64) -> Result<f64> {
    let err: Vec<f64> = estimation_error(plant, obs)?.into_iter().map(|e| k_s * e).collect();
    Ok(weighted_h1_energy(&err, plant.s, gamma))
}

/// Target-system state `ŵ = û − (β̄/α) ∫_x^{s} φ(x − y) û(y) dy − φ(x − s) X` at the nodes of `uhat`.
pub fn target_state(uhat: &[f64], s: f64, x_err: f64, kf: &KernelFunctions) -> Vec<f64> {
    let n = uhat.len();
    let dx = s / (n.max(2) - 1) as f64;
    let terms = kf.phi_neg_terms();
    let coef = kf.gains.beta_bar / kf.alpha_s();
    (0..n)
        .map(|i| {
            let m = n - i;
            let integral = if m < 2 {
                0.0
            } else {
                let w = exp_product_weights(&terms, 0.0, (m - 1) as f64 * dx, m);
                w.iter().zip(&uhat[i..]).map(|(w, u)| w * u).sum()
            };
            let x = i as f64 * dx;
            uhat[i] - coef * integral - kf.phi(x - s) * x_err
        })
        .collect()
}

/// Closed-loop functional `V̂ = ½‖ŵ e^{−γx}‖²_{H1} + p ½ X²`, `p = c α e^{−2γ s_r}/(16 β̄² s_r)`.
pub fn v_hat(obs: SolidProfile<'_>, ss: &SteadyState, kf: &KernelFunctions) -> f64 {
    let n = obs.values.len();
    let dx = obs.s / (n.max(2) - 1) as f64;
    let k_s = kf.k_s();
    let uhat: Vec<f64> = obs.values.iter().enumerate().map(|(i, v)| -k_s * (v - ss.solid(i as f64 * dx).0)).collect();
    let x_err = obs.s - ss.setpoint;
    let w = target_state(&uhat, obs.s, x_err, kf);
    let g = &kf.gains;
    let p = g.c * kf.alpha_s() * (-2.0 * g.gamma * ss.setpoint).exp() / (16.0 * g.beta_bar * g.beta_bar * ss.setpoint);
    weighted_h1_energy(&w, obs.s, g.gamma) + p * 0.5 * x_err * x_err
}

/// One point of a Lyapunov trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPoint {
    pub t: f64,
    pub v_tilde: f64,
    pub v_hat: f64,
}

fn lyapunov_point(snap: &Snapshot, ss: &SteadyState, kf: &KernelFunctions, k_s: f64) -> Result<LyapunovPoint> {
    let plant = SolidProfile { values: &snap.ts, s: snap.s };
    let obs = SolidProfile { values: &snap.that, s: snap.s_obs };
    Ok(LyapunovPoint { t: snap.t, v_tilde: v_tilde(plant, obs, kf.gains.gamma, k_s)?, v_hat: v_hat(obs, ss, kf) })
}

/// `Ṽ` and `V̂` at every profile snapshot of a run.
pub fn lyapunov_trace(run: &RunRecord) -> Result<Vec<LyapunovPoint>> {
    if run.snapshots.is_empty() {
        return Err(Error::Missing("the run has no profile snapshots".into()));
    }
    let setup = run.config.setup()?;
    run.snapshots
        .iter()
        .map(|s| lyapunov_point(s, &setup.steady, &setup.kernel, setup.material.k_s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::synthesize_kernel;
    use crate::params::{MaterialParams, ProcessParams};
    use crate::steady_state::solve_steady_state;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn state(ts: Vec<f64>, tl: Vec<f64>) -> PlantState {
        PlantState { ts, tl, s: 0.05, t: 0.0 }
    }

    #[test]
    fn melting_state_is_valid_with_zero_margins() {
        let v = validity_check(&state(vec![135.0; 21], vec![135.0; 21]), 135.0, 0.0);
        assert_eq!((v.solid_margin, v.liquid_margin), (0.0, 0.0));
        assert!(v.solid_ok && v.liquid_ok);
    }

    #[test]
    fn overheated_solid_node_fails() {
        let mut ts = vec![130.0; 21];
        ts[7] = 136.0;
        let v = validity_check(&state(ts, vec![140.0; 21]), 135.0, 1e-3);
        assert_eq!(v.solid_margin, -1.0);
        assert!(!v.solid_ok && v.liquid_ok);
    }

    #[test]
    fn h1_norm_of_zero_deviation_and_sine() {
        let r: Vec<f64> = (0..11).map(|i| i as f64).collect();
        assert_eq!(h1_norm(&r, &r, 0.1).unwrap(), 0.0);
        assert!(matches!(h1_norm(&r, &r[1..], 0.1), Err(Error::Alignment(_))));
        let s = 0.04;
        let exact = (s / 2.0 * (1.0 + (PI / s).powi(2))).sqrt();
        let mut prev = f64::INFINITY;
        for n in [41usize, 81, 161] {
            let v: Vec<f64> = (0..n).map(|i| (PI * i as f64 / (n - 1) as f64).sin()).collect();
            let e = (h1_norm(&v, &vec![0.0; n], s / (n - 1) as f64).unwrap() - exact).abs();
            assert!(e < prev / 3.5);
            prev = e;
        }
    }

    proptest! {
        #[test]
        fn h1_triangle_inequality(a in prop::collection::vec(-5.0f64..5.0, 17), b in prop::collection::vec(-5.0f64..5.0, 17), c in prop::collection::vec(-5.0f64..5.0, 17)) {
            let dx = 0.01;
            let ac = h1_norm(&a, &c, dx).unwrap();
            let ab = h1_norm(&a, &b, dx).unwrap();
            let bc = h1_norm(&b, &c, dx).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }

    #[test]
    fn exact_exponential_rate() {
        let s: Vec<(f64, f64)> = (0..200).map(|i| (i as f64 * 0.01, 4.0 * (-3.0 * i as f64 * 0.01).exp())).collect();
        let fit = fit_decay_rate(&s, 0.1, Some(2.0)).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-10);
        assert!((fit.ratio.unwrap() - 1.5).abs() < 1e-10);
        assert!(fit.conclusive());
        assert!(fit.t0 >= 0.199 && fit.t1 == 1.99);
    }

    #[test]
    fn constant_series_has_zero_rate() {
        let s: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 2.5)).collect();
        let fit = fit_decay_rate(&s, 0.1, None).unwrap();
        assert!(fit.rate.abs() < 1e-14);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn non_positive_norms_are_rejected() {
        let s = vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)];
        assert!(matches!(fit_decay_rate(&s, 0.0, None), Err(Error::Fit(_))));
        // a zero inside the skipped transient is fine
        let s = vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.25), (10.0, 1e-3)];
        assert!(fit_decay_rate(&s, 0.1, None).is_ok());
        assert!(fit_decay_rate(&[], 0.1, None).is_err());
    }

    #[test]
    fn report_tracks_worst_margins() {
        let eps = EpsGrid::default();
        let mut r = InvariantReport::new(eps, true);
        let ok = Margins { valid_solid: 1.0, valid_liquid: 2.0, sdot_nonneg: 1e-6, s_in_band: 0.01, z_positive: 5.0, underestimate: 0.5 };
        r.push(0.0, &ok);
        assert!(r.all_passed());
        r.push(3.0, &Margins { valid_solid: -0.5 * eps.temperature, ..ok });
        assert!(r.validity_passed());
        r.push(4.0, &Margins { z_positive: -1.0, ..ok });
        assert!(r.validity_passed() && !r.positivity_passed() && !r.all_passed());
        assert_eq!(r.worst_time(Flag::ZPositive), 4.0);
        assert_eq!(r.worst_time(Flag::ValidSolid), 3.0);
        r.positivity_applies = false;
        assert!(r.all_passed());
        assert!(r.to_text().contains("not claimed"));
        assert_eq!("z_positive".parse::<Flag>().unwrap(), Flag::ZPositive);
    }

    #[test]
    fn decay_bounds() {
        let a = 2.061e-7;
        let obs = observer_decay_bound(a, 0.05, 0.0, 0.1);
        assert!((obs - 2.0 * (0.0025 / (4.0 * a) + a / 0.04)).abs() < 1e-9 * obs);
        assert_eq!(closed_loop_decay_bound(a, 0.05, 0.0, 0.07, 5.0), 5.0);
        let slow = closed_loop_decay_bound(a, 0.0, 0.0, 0.07, 5.0);
        assert!((slow - a / (16.0 * 0.07)).abs() < 1e-20);
    }

    fn kernel() -> (SteadyState, KernelFunctions) {
        let m = MaterialParams::hdpe();
        let p = ProcessParams::hdpe_slow();
        let ss = solve_steady_state(&m, &p).unwrap();
        let kf = synthesize_kernel(&m, &p, &ss, 0.2).unwrap();
        (ss, kf)
    }

    #[test]
    fn functionals_vanish_at_equilibrium() {
        let (ss, kf) = kernel();
        let n = 101;
        let s = ss.setpoint;
        let v: Vec<f64> = (0..n).map(|i| ss.solid(s * i as f64 / (n - 1) as f64).0).collect();
        let p = SolidProfile { values: &v, s };
        assert_eq!(v_tilde(p, p, kf.gains.gamma, 0.373).unwrap(), 0.0);
        assert!(v_hat(p, &ss, &kf).abs() < 1e-20);
    }

    #[test]
    fn weighted_energy_matches_closed_form() {
        // v = 1 − x/s: z = v e^{−γx}, z_x = (−1/s − γ v) e^{−γx}
        let (s, gamma) = (0.05, 40.0);
        let exact = {
            let m = 20_000;
            let h = s / m as f64;
            (0..m)
                .map(|k| {
                    let x = (k as f64 + 0.5) * h;
                    let v = 1.0 - x / s;
                    let e = (-2.0 * gamma * x).exp();
                    0.5 * (v * v + (1.0 / s + gamma * v).powi(2)) * e * h
                })
                .sum::<f64>()
        };
        let mut prev = f64::INFINITY;
        for n in [41usize, 81, 161] {
            let v: Vec<f64> = (0..n).map(|i| 1.0 - i as f64 / (n - 1) as f64).collect();
            let e = (weighted_h1_energy(&v, s, gamma) - exact).abs() / exact;
            assert!(e < prev / 3.0, "n = {n}: {e}");
            prev = e;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn target_state_matches_direct_quadrature() {
        let (ss, kf) = kernel();
        let n = 201;
        let s = 0.05;
        let uhat: Vec<f64> = (0..n).map(|i| 3.0 * (1.0 - (i as f64 / (n - 1) as f64).powi(2))).collect();
        let w = target_state(&uhat, s, -0.02, &kf);
        // direct fine trapezoid on the piecewise-linear interpolant at one node
        let i = 60;
        let dx = s / (n - 1) as f64;
        let x = i as f64 * dx;
        let m = 200_000;
        let h = (s - x) / m as f64;
        let interp = |y: f64| {
            let p = y / dx;
            let j = (p.floor() as usize).min(n - 2);
            let th = p - j as f64;
            uhat[j] * (1.0 - th) + uhat[j + 1] * th
        };
        let integral: f64 = (0..=m)
            .map(|k| {
                let y = x + k as f64 * h;
                let wk = if k == 0 || k == m { 0.5 } else { 1.0 };
                wk * kf.phi(x - y) * interp(y) * h
            })
            .sum();
        let want = uhat[i] - kf.gains.beta_bar / kf.alpha_s() * integral - kf.phi(x - s) * -0.02;
        assert!((w[i] - want).abs() < 1e-6 * want.abs().max(1.0), "{} vs {want}", w[i]);
        let _ = ss;
    }
}
