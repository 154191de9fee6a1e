//! Linearly implicit second-order Rosenbrock stepping with an embedded
//! third-order error estimate and a continuous extension.
//!
//! The method is L-stable, so step sizes are limited by accuracy only. Each
//! step needs one factorisation of `W = I − h d J`; systems may supply the
//! Jacobian either densely or as tridiagonal plus a handful of rank-one terms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const D: f64 = 0.292_893_218_813_452_5; // 1/(2 + √2)
const E32: f64 = 7.414_213_562_373_095; // 6 + √2

/// Tolerances and step bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { abs_tol: 1e-8, rel_tol: 1e-6, dt_init: 1e-4, dt_min: 1e-12, dt_max: 5.0 }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Config(format!("tolerances must be > 0, got abs {} rel {}", self.abs_tol, self.rel_tol)));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::Config(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        Ok(())
    }
}

/// `T + Σ u_k v_kᵀ` with `T` tridiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredJacobian {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub terms: Vec<(Vec<f64>, Vec<f64>)>,
}

impl StructuredJacobian {
    pub fn zeros(n: usize) -> Self {
        StructuredJacobian { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n], terms: Vec::new() }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i > 0 {
                m[(i, i - 1)] = self.lower[i];
            }
            if i + 1 < n {
                m[(i, i + 1)] = self.upper[i];
            }
        }
        for (u, v) in &self.terms {
            for i in 0..n {
                if u[i] != 0.0 {
                    for j in 0..n {
                        m[(i, j)] += u[i] * v[j];
                    }
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Jacobian {
    Dense(DMatrix<f64>),
    Structured(StructuredJacobian),
}

/// Factorised `I − γ J`.
enum Factored {
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Structured {
        lower: Vec<f64>,
        upper_mod: Vec<f64>,
        pivots: Vec<f64>,
        z: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        small: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    },
}

fn thomas_solve(lower: &[f64], upper_mod: &[f64], pivots: &[f64], b: &mut [f64]) {
    let n = b.len();
    b[0] /= pivots[0];
    for i in 1..n {
        b[i] = (b[i] - lower[i] * b[i - 1]) / pivots[i];
    }
    for i in (0..n - 1).rev() {
        b[i] -= upper_mod[i] * b[i + 1];
    }
}

impl Factored {
    fn new(jac: &Jacobian, gamma: f64) -> Result<Self> {
        match jac {
            Jacobian::Dense(j) => {
                let n = j.nrows();
                let w = DMatrix::identity(n, n) - j * gamma;
                let lu = w.lu();
                if !lu.is_invertible() {
                    return Err(Error::NonFinite("singular iteration matrix".into()));
                }
                Ok(Factored::Dense(lu))
            }
            Jacobian::Structured(s) => {
                let n = s.diag.len();
                let lower: Vec<f64> = s.lower.iter().map(|l| -gamma * l).collect();
                let mut upper_mod = vec![0.0; n];
                let mut pivots = vec![0.0; n];
                for i in 0..n {
                    let b = 1.0 - gamma * s.diag[i];
                    let m = if i == 0 { b } else { b - lower[i] * upper_mod[i - 1] };
                    if m == 0.0 || !m.is_finite() {
                        return Err(Error::NonFinite(format!("singular tridiagonal pivot at row {i}")));
                    }
                    pivots[i] = m;
                    if i + 1 < n {
                        upper_mod[i] = -gamma * s.upper[i] / m;
                    }
                }
                // Woodbury: (A − Ũ Vᵀ)⁻¹ = A⁻¹ + Z (I − Vᵀ Z)⁻¹ Vᵀ A⁻¹ with Z = A⁻¹ Ũ
                let r = s.terms.len();
                let mut z = Vec::with_capacity(r);
                let mut v = Vec::with_capacity(r);
                for (uk, vk) in &s.terms {
                    let mut col: Vec<f64> = uk.iter().map(|x| gamma * x).collect();
                    thomas_solve(&lower, &upper_mod, &pivots, &mut col);
                    z.push(col);
                    v.push(vk.clone());
                }
                let small = if r > 0 {
                    let mut m = DMatrix::identity(r, r);
                    for a in 0..r {
                        for b in 0..r {
                            m[(a, b)] -= dot(&v[a], &z[b]);
                        }
                    }
                    let lu = m.lu();
                    if !lu.is_invertible() {
                        return Err(Error::NonFinite("singular low-rank capacitance matrix".into()));
                    }
                    Some(lu)
                } else {
                    None
                };
                Ok(Factored::Structured { lower, upper_mod, pivots, z, v, small })
            }
        }
    }

    fn solve(&self, b: &mut [f64]) {
        match self {
            Factored::Dense(lu) => {
                let x = lu.solve(&DVector::from_column_slice(b)).expect("checked invertible");
                b.copy_from_slice(x.as_slice());
            }
            Factored::Structured { lower, upper_mod, pivots, z, v, small } => {
                thomas_solve(lower, upper_mod, pivots, b);
                if let Some(lu) = small {
                    let rhs = DVector::from_iterator(v.len(), v.iter().map(|vk| dot(vk, b)));
                    let y = lu.solve(&rhs).expect("checked invertible");
                    for (zk, yk) in z.iter().zip(y.iter()) {
                        for (bi, zi) in b.iter_mut().zip(zk) {
                            *bi += zi * yk;
                        }
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A first-order system `y' = f(t, y)` for the Rosenbrock stepper.
pub trait StiffSystem {
    fn dim(&self) -> usize;

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Jacobian `∂f/∂y` at `(t, y)`; `f0 = f(t, y)`. Defaults to dense forward differences.
    fn jacobian(&mut self, t: f64, y: &[f64], f0: &[f64]) -> Result<Jacobian> {
        dense_fd_jacobian(self, t, y, f0)
    }

    /// `∂f/∂t`; defaults to a forward difference. Autonomous systems return `false`.
    fn time_derivative(&mut self, t: f64, y: &[f64], f0: &[f64], out: &mut [f64]) -> Result<bool> {
        let dt = 1e-7 * t.abs().max(1.0);
        self.rhs(t + dt, y, out)?;
        for (o, f) in out.iter_mut().zip(f0) {
            *o = (*o - f) / dt;
        }
        Ok(true)
    }

    /// Components counted in the error norm (pinned nodes are excluded).
    fn error_mask(&self) -> Option<&[bool]> {
        None
    }
}

pub fn dense_fd_jacobian<S: StiffSystem + ?Sized>(sys: &mut S, t: f64, y: &[f64], f0: &[f64]) -> Result<Jacobian> {
    let n = y.len();
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    let mut j = DMatrix::zeros(n, n);
    for c in 0..n {
        let h = 1.5e-8 * y[c].abs().max(1e-3);
        yp[c] = y[c] + h;
        sys.rhs(t, &yp, &mut fp)?;
        yp[c] = y[c];
        for r in 0..n {
            j[(r, c)] = (fp[r] - f0[r]) / h;
        }
    }
    Ok(Jacobian::Dense(j))
}

/// One attempted step with its stage data, kept for dense output.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub y_new: Vec<f64>,
    /// Scaled max-norm of the local error estimate; accept when `<= 1`.
    pub err: f64,
    k1: Vec<f64>,
    k2: Vec<f64>,
    f_new: Vec<f64>,
}

impl StepResult {
    /// State at `t0 + θ h`, `θ ∈ [0, 1]`, from the continuous extension.
    pub fn interpolate(&self, y0: &[f64], h: f64, theta: f64, out: &mut [f64]) {
        let a = theta * (1.0 - theta) / (1.0 - 2.0 * D);
        let b = theta * (theta - 2.0 * D) / (1.0 - 2.0 * D);
        for i in 0..out.len() {
            out[i] = y0[i] + h * (a * self.k1[i] + b * self.k2[i]);
        }
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], ctl: &StepControl, mask: Option<&[bool]>) -> f64 {
    let mut m = 0.0f64;
    for i in 0..err.len() {
        if mask.is_some_and(|mk| !mk[i]) {
            continue;
        }
        let sc = ctl.abs_tol + ctl.rel_tol * y0[i].abs().max(y1[i].abs());
        let e = (err[i] / sc).abs();
        if e.is_nan() {
            return f64::INFINITY;
        }
        m = m.max(e);
    }
    m
}

/// Attempt one step of size `h` from `(t, y)` with `f0 = f(t, y)` and Jacobian `jac`.
pub fn step<S: StiffSystem + ?Sized>(
    sys: &mut S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    jac: &Jacobian,
    dfdt: Option<&[f64]>,
    h: f64,
    ctl: &StepControl,
) -> Result<StepResult> {
    let n = y.len();
    let w = Factored::new(jac, h * D)?;
    let hd = h * D;
    let mut k1: Vec<f64> = (0..n).map(|i| f0[i] + dfdt.map_or(0.0, |ft| hd * ft[i])).collect();
    w.solve(&mut k1);
    let y_half: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k1[i]).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t + 0.5 * h, &y_half, &mut f1)?;
    let mut k2: Vec<f64> = (0..n).map(|i| f1[i] - k1[i]).collect();
    w.solve(&mut k2);
    for i in 0..n {
        k2[i] += k1[i];
    }
    let y_new: Vec<f64> = (0..n).map(|i| y[i] + h * k2[i]).collect();
    let mut f_new = vec![0.0; n];
    sys.rhs(t + h, &y_new, &mut f_new)?;
    let mut k3: Vec<f64> = (0..n)
        .map(|i| f_new[i] - E32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]) + dfdt.map_or(0.0, |ft| hd * ft[i]))
        .collect();
    w.solve(&mut k3);
    let est: Vec<f64> = (0..n).map(|i| h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i])).collect();
    let err = error_norm(&est, y, &y_new, ctl, sys.error_mask());
    Ok(StepResult { y_new, err, k1, k2, f_new })
}

/// What the driver should do after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Counters from an adaptive integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub last_dt: f64,
}

/// An accepted step handed to the output callback.
pub struct Accepted<'a> {
    pub t0: f64,
    pub h: f64,
    pub y0: &'a [f64],
    pub result: &'a StepResult,
}

impl Accepted<'_> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn y1(&self) -> &[f64] {
        &self.result.y_new
    }

    pub fn state_at(&self, t: f64, out: &mut [f64]) {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        self.result.interpolate(self.y0, self.h, theta, out);
    }
}

/// Adaptive integration from `t0` to `t_end`.
///
/// After each accepted step `on_step` may inspect the step and adjust the
/// state in place (for example to resample a grid); returning [`Flow::Stop`]
/// ends the run early.
pub fn integrate<S, F>(sys: &mut S, t0: f64, y0: &[f64], t_end: f64, ctl: &StepControl, mut on_step: F) -> Result<(f64, Vec<f64>, IntegrationStats)>
where
    S: StiffSystem + ?Sized,
    F: FnMut(&mut S, &Accepted<'_>, &mut Vec<f64>) -> Result<Flow>,
{
    ctl.validate()?;
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Config(format!("state has {} entries, system expects {n}", y0.len())));
    }
    let mut stats = IntegrationStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f0 = vec![0.0; n];
    sys.rhs(t, &y, &mut f0)?;
    stats.rhs_evals += 1;
    let mut h = ctl.dt_init.min(ctl.dt_max);
    let mut ft = vec![0.0; n];
    while t < t_end {
        let last = t + h >= t_end * (1.0 - 1e-14) || t + h >= t_end - 1e-14 * t_end.abs().max(1.0);
        if last {
            h = t_end - t;
        }
        let jac = sys.jacobian(t, &y, &f0)?;
        let has_ft = sys.time_derivative(t, &y, &f0, &mut ft)?;
        let res = loop {
            let attempt = step(sys, t, &y, &f0, &jac, has_ft.then_some(&ft[..]), h, ctl);
            stats.rhs_evals += 2;
            // a trial stage may leave the admissible region; that is a rejection
            // unless the step cannot shrink any further
            let (err, cause) = match attempt {
                Ok(r) if r.err <= 1.0 && r.y_new.iter().all(|v| v.is_finite()) => break r,
                Ok(r) => (r.err, None),
                Err(e @ (Error::NonFinite(_) | Error::DegenerateDomain { .. })) => (f64::INFINITY, Some(e)),
                Err(e) => return Err(e),
            };
            stats.rejected += 1;
            if h <= ctl.dt_min * (1.0 + 1e-12) {
                return Err(cause.unwrap_or(Error::Stiffness { t, dt_min: ctl.dt_min, err }));
            }
            let shrink = if err.is_finite() { (0.8 * err.powf(-1.0 / 3.0)).clamp(0.1, 0.5) } else { 0.25 };
            h = (h * shrink).max(ctl.dt_min);
        };
        stats.accepted += 1;
        stats.last_dt = h;
        let y_old = std::mem::replace(&mut y, res.y_new.clone());
        let t_old = t;
        t = if last { t_end } else { t + h };
        f0.copy_from_slice(&res.f_new);
        let acc = Accepted { t0: t_old, h, y0: &y_old, result: &res };
        let before = y.clone();
        let flow = on_step(sys, &acc, &mut y)?;
        if y != before {
            sys.rhs(t, &y, &mut f0)?;
            stats.rhs_evals += 1;
        }
        if flow == Flow::Stop {
            break;
        }
        let grow = if res.err > 0.0 { (0.8 * res.err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) } else { 5.0 };
        h = (h * grow).clamp(ctl.dt_min, ctl.dt_max);
    }
    Ok((t, y, stats))
}

/// Fixed step sizes, no error control; for convergence studies.
pub fn integrate_fixed<S: StiffSystem + ?Sized>(sys: &mut S, t0: f64, y0: &[f64], t_end: f64, steps: usize) -> Result<Vec<f64>> {
    let n = sys.dim();
    let h = (t_end - t0) / steps as f64;
    let ctl = StepControl { abs_tol: 1.0, rel_tol: 1.0, dt_init: h, dt_min: h, dt_max: h };
    let mut y = y0.to_vec();
    let mut f0 = vec![0.0; n];
    let mut ft = vec![0.0; n];
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        sys.rhs(t, &y, &mut f0)?;
        let jac = sys.jacobian(t, &y, &f0)?;
        let has_ft = sys.time_derivative(t, &y, &f0, &mut ft)?;
        y = step(sys, t, &y, &f0, &jac, has_ft.then_some(&ft[..]), h, &ctl)?.y_new;
    }
    Ok(y)
}
