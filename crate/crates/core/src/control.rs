//! Gain kernel synthesis and the boundary heat laws: observer-based
//! backstepping, its full-state counterpart, and a PI baseline.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::SolidProfile;
use crate::params::{derive_diffusivities, ControllerGains, MaterialParams, ProcessParams};
use crate::plant::Measurements;
use crate::quadrature::{exp_product_weights, ExpTerm};
use crate::steady_state::SteadyState;

/// Shape of the kernel `φ`, fixed by the sign of the discriminant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelRegime {
    /// Two real exponents `d1 > d2`.
    Distinct,
    /// `D = 0`: `φ ∝ x e^{μ x}`.
    Repeated,
    /// `D < 0`: `φ ∝ e^{μ x} sin(ω x)/ω`.
    Oscillatory { omega: f64 },
}

/// The kernel `φ` solving `α φ'' − b̄ φ' − a φ = 0`, `φ(0) = 0`, `φ'(0) = c/β̄`,
/// with `a = A − β̄ b C/α + h_s`, and the derived gain functions `f` and `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFunctions {
    pub gains: ControllerGains,
    pub regime: KernelRegime,
    t_melt: f64,
    k_s: f64,
    alpha_s: f64,
    h_s: f64,
    b: f64,
}

pub fn synthesize_kernel(m: &MaterialParams, p: &ProcessParams, ss: &SteadyState, c: f64) -> Result<KernelFunctions> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Gain(format!("control gain c must be finite and > 0, got {c}")));
    }
    let d = derive_diffusivities(m)?;
    let alpha = d.alpha_s;
    let b = p.screw_speed;
    let beta = m.beta_bar();
    let c_lin = m.k_s * (ss.p3 * ss.q3 + ss.p4 * ss.q4);
    let a_lin = beta
        * (m.k_s * (ss.p3 * ss.q3 * ss.q3 + ss.p4 * ss.q4 * ss.q4)
            - m.k_l * (ss.p1() * ss.q1 * ss.q1 + ss.p2 * ss.q2 * ss.q2));
    let b_bar = b + beta * c_lin;
    let a_eff = a_lin - beta * b * c_lin / alpha + d.h_s;
    let disc = b_bar * b_bar + 4.0 * alpha * a_eff;
    let mu = b_bar / (2.0 * alpha);
    let (regime, d1, d2) = if disc > 0.0 {
        let nu = disc.sqrt() / (2.0 * alpha);
        // the smaller-magnitude root from the product −a/α, avoiding cancellation
        let prod = -a_eff / alpha;
        if mu >= 0.0 {
            let d1 = mu + nu;
            (KernelRegime::Distinct, d1, prod / d1)
        } else {
            let d2 = mu - nu;
            (KernelRegime::Distinct, prod / d2, d2)
        }
    } else if disc == 0.0 {
        (KernelRegime::Repeated, mu, mu)
    } else {
        (KernelRegime::Oscillatory { omega: (-disc).sqrt() / (2.0 * alpha) }, mu, mu)
    };
    let gains = ControllerGains {
        c,
        gamma: b / (2.0 * alpha),
        beta_bar: beta,
        c_lin,
        a_lin,
        b_bar,
        discriminant: disc,
        d1,
        d2,
    };
    Ok(KernelFunctions { gains, regime, t_melt: m.t_melt, k_s: m.k_s, alpha_s: alpha, h_s: d.h_s, b })
}

impl KernelFunctions {
    pub fn t_melt(&self) -> f64 {
        self.t_melt
    }

    pub fn k_s(&self) -> f64 {
        self.k_s
    }

    pub fn alpha_s(&self) -> f64 {
        self.alpha_s
    }

    fn scale(&self) -> f64 {
        self.gains.c / self.gains.beta_bar
    }

    /// `(φ, φ', φ'')` at `x`.
    pub fn phi_all(&self, x: f64) -> (f64, f64, f64) {
        let (d1, d2) = (self.gains.d1, self.gains.d2);
        let k = self.scale();
        match self.regime {
            KernelRegime::Distinct if d1 - d2 > 1e-3 * d1.abs().max(d2.abs()) => {
                let w = d1 - d2;
                if x <= 0.0 {
                    let e2 = k * (d2 * x).exp() / w;
                    let r = (w * x).exp();
                    (e2 * (w * x).exp_m1(), e2 * (d1 * r - d2), e2 * (d1 * d1 * r - d2 * d2))
                } else {
                    let e1 = k * (d1 * x).exp() / w;
                    let r = (-w * x).exp();
                    (-e1 * (-w * x).exp_m1(), e1 * (d1 - d2 * r), e1 * (d1 * d1 - d2 * d2 * r))
                }
            }
            KernelRegime::Distinct | KernelRegime::Repeated => {
                // E = (e^{d1 x} − e^{d2 x})/(d1 − d2) for nearly equal exponents
                let w = d1 - d2;
                let (e, e2) = if x <= 0.0 {
                    let e2 = (d2 * x).exp();
                    let ratio = if w == 0.0 { x } else { (w * x).exp_m1() / w };
                    (e2 * ratio, e2)
                } else {
                    let e1 = (d1 * x).exp();
                    let ratio = if w == 0.0 { x } else { -(-w * x).exp_m1() / w };
                    (e1 * ratio, (d2 * x).exp())
                };
                (k * e, k * (d1 * e + e2), k * (d1 * d1 * e + (d1 + d2) * e2))
            }
            KernelRegime::Oscillatory { omega } => {
                let mu = d1;
                let ex = (mu * x).exp();
                let (sn, cs) = (omega * x).sin_cos();
                let s = sn / omega;
                (k * ex * s, k * ex * (mu * s + cs), k * ex * ((mu * mu - omega * omega) * s + 2.0 * mu * cs))
            }
        }
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.phi_all(x).0
    }

    pub fn dphi(&self, x: f64) -> f64 {
        self.phi_all(x).1
    }

    /// `f(x) = φ'(−x) − γ φ(−x)`.
    pub fn f(&self, x: f64) -> f64 {
        let (p, dp, _) = self.phi_all(-x);
        dp - self.gains.gamma * p
    }

    /// `f'(x) = −φ''(−x) + γ φ'(−x)`.
    pub fn df(&self, x: f64) -> f64 {
        let (_, dp, ddp) = self.phi_all(-x);
        -ddp + self.gains.gamma * dp
    }

    /// Exponential form of `f` for two real exponents.
    pub fn f_closed_form(&self, x: f64) -> Option<f64> {
        if self.regime != KernelRegime::Distinct {
            return None;
        }
        let (d1, d2, g) = (self.gains.d1, self.gains.d2, self.gains.gamma);
        Some(self.scale() / (d1 - d2) * ((d1 - g) * (-d1 * x).exp() - (d2 - g) * (-d2 * x).exp()))
    }

    /// `f` as a sum of exponential terms, for product integration.
    pub fn f_terms(&self) -> Vec<ExpTerm> {
        let (d1, d2, g) = (self.gains.d1, self.gains.d2, self.gains.gamma);
        let k = self.scale();
        let re = |x: f64| Complex64::new(x, 0.0);
        match self.regime {
            KernelRegime::Distinct => vec![
                ExpTerm { a: re(k * (d1 - g) / (d1 - d2)), b: re(0.0), lambda: re(d1) },
                ExpTerm { a: re(-k * (d2 - g) / (d1 - d2)), b: re(0.0), lambda: re(d2) },
            ],
            KernelRegime::Repeated => vec![ExpTerm { a: re(k), b: re(k * (g - d1)), lambda: re(d1) }],
            KernelRegime::Oscillatory { omega } => {
                let z1 = Complex64::new(d1, omega);
                // the conjugate pair collapses to twice the real part of one term
                let a = 2.0 * k * (z1 - g) / Complex64::new(0.0, 2.0 * omega);
                vec![ExpTerm { a, b: re(0.0), lambda: z1 }]
            }
        }
    }

    /// `z ↦ φ(−z)` as exponential terms.
    pub fn phi_neg_terms(&self) -> Vec<ExpTerm> {
        let (d1, d2) = (self.gains.d1, self.gains.d2);
        let k = self.scale();
        let re = |x: f64| Complex64::new(x, 0.0);
        match self.regime {
            KernelRegime::Distinct if d1 - d2 > 1e-3 * d1.abs().max(d2.abs()) => {
                let w = d1 - d2;
                vec![
                    ExpTerm { a: re(k / w), b: re(0.0), lambda: re(d1) },
                    ExpTerm { a: re(-k / w), b: re(0.0), lambda: re(d2) },
                ]
            }
            KernelRegime::Distinct | KernelRegime::Repeated => {
                let mu = 0.5 * (d1 + d2);
                vec![ExpTerm { a: re(0.0), b: re(-k), lambda: re(mu) }]
            }
            KernelRegime::Oscillatory { omega } => {
                vec![ExpTerm { a: Complex64::new(0.0, k / omega), b: re(0.0), lambda: Complex64::new(d1, -omega) }]
            }
        }
    }

    /// Weights `W_i` with `Σ W_i v_i ≈ ∫₀^{s} f v` for `n` uniform nodes on `[0, s]`.
    pub fn f_weights(&self, s: f64, n: usize) -> Vec<f64> {
        exp_product_weights(&self.f_terms(), 0.0, s, n)
    }

    /// `g(x) = φ'(x) − (β̄ C/α) φ(x)`.
    pub fn g(&self, x: f64) -> f64 {
        let (p, dp, _) = self.phi_all(x);
        dp - self.gains.beta_bar * self.gains.c_lin / self.alpha_s * p
    }

    /// Coefficient `a` of the kernel equation.
    pub fn reaction(&self) -> f64 {
        self.gains.a_lin - self.gains.beta_bar * self.b * self.gains.c_lin / self.alpha_s + self.h_s
    }

    /// Residual of the kernel equation at `x` and the size of its largest term.
    pub fn ode_residual(&self, x: f64) -> (f64, f64) {
        let (p, dp, ddp) = self.phi_all(x);
        let terms = [self.alpha_s * ddp, -self.gains.b_bar * dp, -self.reaction() * p];
        (terms.iter().sum(), terms.iter().fold(0.0f64, |a, t| a.max(t.abs())))
    }
}

/// `∫₀^{s} f(x) (T(x) − T_s,eq(x)) dx` with `T` linear between nodes.
fn weighted_deviation(kf: &KernelFunctions, ss: &SteadyState, prof: SolidProfile<'_>) -> f64 {
    let n = prof.values.len();
    let w = kf.f_weights(prof.s, n);
    let dx = prof.s / (n.max(2) - 1) as f64;
    w.iter()
        .zip(prof.values)
        .enumerate()
        .map(|(i, (w, v))| w * (v - ss.solid(i as f64 * dx).0))
        .sum()
}

/// Observer-based boundary heat `q_f`.
pub fn output_feedback_qf(kf: &KernelFunctions, ss: &SteadyState, meas: &Measurements, obs: SolidProfile<'_>) -> f64 {
    let g = &kf.gains;
    let integral = weighted_deviation(kf, ss, obs);
    ss.q_f_star - g.gamma * kf.k_s * (meas.y2 - ss.solid(0.0).0) - g.beta_bar * kf.k_s / kf.alpha_s * integral
        + kf.f(meas.y1) * (meas.y1 - ss.setpoint)
}

/// Full-state law `U = −γ u(0) − (β̄/α) ∫ f u − f(s) X`, `u = −k_s (T_s − T_s,eq)`; `q_f = q_f* − U`.
pub fn full_state_feedback_u(kf: &KernelFunctions, ss: &SteadyState, ts: SolidProfile<'_>) -> f64 {
    let g = &kf.gains;
    let u0 = -kf.k_s * (ts.values[0] - ss.solid(0.0).0);
    let int_u = -kf.k_s * weighted_deviation(kf, ss, ts);
    -g.gamma * u0 - g.beta_bar / kf.alpha_s * int_u - kf.f(ts.s) * (ts.s - ss.setpoint)
}

/// `Z = −(β̄/α) ∫₀^{s} f û − f(s) X` with `û = −k_s (T̂ − T_s,eq)` on the observer grid.
pub fn control_z(kf: &KernelFunctions, ss: &SteadyState, obs: SolidProfile<'_>, meas: &Measurements) -> f64 {
    let int_uhat = -kf.k_s * weighted_deviation(kf, ss, obs);
    -kf.gains.beta_bar / kf.alpha_s * int_uhat - kf.f(meas.y1) * (meas.y1 - ss.setpoint)
}

/// Running trapezoidal integral of the interface error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PiState {
    pub integral: f64,
    /// Time and error of the previous sample.
    pub last: Option<(f64, f64)>,
}

/// `q_f = q_f* + K_P (s − s_r) + K_I ∫ (s − s_r) dτ`, accumulating the integral up to `t`.
pub fn pi_control(meas: &Measurements, t: f64, state: PiState, kp: f64, ki: f64, q_f_star: f64, setpoint: f64) -> (f64, PiState) {
    let e = meas.y1 - setpoint;
    let integral = match state.last {
        Some((t0, e0)) => state.integral + 0.5 * (e0 + e) * (t - t0),
        None => state.integral,
    };
    let next = PiState { integral, last: Some((t, e)) };
    (q_f_star + kp * e + ki * integral, next)
}

/// Which boundary heat law drives the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    OutputFeedback,
    FullState,
    Pi,
    OpenLoop,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::OutputFeedback => "output_feedback",
            ControllerKind::FullState => "full_state",
            ControllerKind::Pi => "pi",
            ControllerKind::OpenLoop => "open_loop",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "output_feedback" => Ok(ControllerKind::OutputFeedback),
            "full_state" => Ok(ControllerKind::FullState),
            "pi" => Ok(ControllerKind::Pi),
            "open_loop" => Ok(ControllerKind::OpenLoop),
            other => Err(Error::Config(format!(
                "unknown controller '{other}' (expected output_feedback, full_state, pi or open_loop)"
            ))),
        }
    }
}

/// Optional actuator limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub min: f64,
    pub max: f64,
}

impl Default for Saturation {
    fn default() -> Self {
        Saturation { min: f64::NEG_INFINITY, max: f64::INFINITY }
    }
}

impl Saturation {
    pub fn apply(&self, q: f64) -> f64 {
        q.clamp(self.min, self.max)
    }

    pub fn is_active(&self) -> bool {
        self.min.is_finite() || self.max.is_finite()
    }
}
