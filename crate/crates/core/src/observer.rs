//! Copy-of-plant estimator for the solid temperature on the measured domain
//! `(0, Y1)`, driven by the inlet temperature through a Robin injection
//! `T̂_x(0) = −q_f/k_s − γ (Y2 − T̂(0))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{resample_profile, solid_stencil, Bc, GridMap, Physics, SolidProfile};
use crate::plant::Measurements;
use crate::quadrature::h1_norm_sq;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    /// Estimated solid temperatures on `x = ξ y1`.
    pub that: Vec<f64>,
    /// Length of the estimator domain.
    pub y1: f64,
    pub t: f64,
}

impl ObserverState {
    pub fn profile(&self) -> SolidProfile<'_> {
        SolidProfile { values: &self.that, s: self.y1 }
    }
}

/// Inlet condition of the estimator in ξ units.
pub fn observer_inlet(y1: f64, y2: f64, q_f: f64, gamma: f64, k_s: f64) -> Bc {
    Bc::Flux { g0: y1 * (-q_f / k_s - gamma * y2), g1: y1 * gamma }
}

/// Nodal derivatives of the estimate; the domain moves at `domain_rate`.
pub fn observer_rhs(
    obs: SolidProfile<'_>,
    meas: &Measurements,
    domain_rate: f64,
    q_f: f64,
    gamma: f64,
    ph: &Physics,
    out: &mut [f64],
) -> Result<()> {
    let n = obs.values.len();
    if out.len() != n {
        return Err(Error::Grid(format!("output has {} entries for {n} nodes", out.len())));
    }
    let inlet = observer_inlet(obs.s, meas.y2, q_f, gamma, ph.k_s);
    solid_stencil(n, obs.s, domain_rate, inlet, ph)?.apply(obs.values, out);
    Ok(())
}

/// `ũ = T_s − T̂_s` on the plant grid; the estimate is resampled when the grids differ.
pub fn estimation_error(plant: SolidProfile<'_>, obs: SolidProfile<'_>) -> Result<Vec<f64>> {
    let n = plant.values.len();
    if n < 2 || obs.values.len() < 2 {
        return Err(Error::Grid("need at least 2 nodes per profile".into()));
    }
    let cell = plant.s / (n - 1) as f64;
    if (plant.s - obs.s).abs() > cell * (1.0 + 1e-12) {
        return Err(Error::Alignment(format!(
            "estimator domain {} m and plant domain {} m differ by more than one cell ({cell:.3e} m)",
            obs.s, plant.s
        )));
    }
    let aligned = if obs.values.len() == n && obs.s == plant.s {
        obs.values.to_vec()
    } else {
        resample_profile(obs.values, GridMap { start: 0.0, end: obs.s }, GridMap { start: 0.0, end: plant.s }, n, true)?
    };
    Ok(plant.values.iter().zip(&aligned).map(|(a, b)| a - b).collect())
}

/// `(‖ũ‖_{L2}, ‖ũ‖_{H1})` over the plant domain.
pub fn estimation_error_norms(plant: SolidProfile<'_>, obs: SolidProfile<'_>) -> Result<(f64, f64)> {
    let err = estimation_error(plant, obs)?;
    let dx = plant.s / (err.len() - 1) as f64;
    let (l2, d2) = h1_norm_sq(&err, dx);
    Ok((l2.sqrt(), (l2 + d2).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::immobilized_rhs_solid;
    use crate::params::{MaterialParams, ProcessParams};
    use std::f64::consts::PI;

    fn physics() -> Physics {
        Physics::new(&MaterialParams::hdpe(), &ProcessParams::hdpe_slow(), None).unwrap()
    }

    #[test]
    fn exact_estimate_follows_the_plant() {
        let ph = physics();
        let s = 0.05;
        let n = 41;
        let ts: Vec<f64> = (0..n).map(|i| 100.0 + 35.0 * (i as f64 / 40.0).powi(2)).collect();
        let meas = Measurements { y1: s, y2: ts[0] };
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        immobilized_rhs_solid(SolidProfile { values: &ts, s }, 1e-5, -300.0, &ph, &mut a).unwrap();
        observer_rhs(SolidProfile { values: &ts, s }, &meas, 1e-5, -300.0, 4000.0, &ph, &mut b).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn cold_estimate_is_warmed_at_the_inlet() {
        let ph = physics();
        let s = 0.05;
        let n = 41;
        let that = vec![120.0; n];
        let meas = Measurements { y1: s, y2: 125.0 };
        let (mut with, mut without) = (vec![0.0; n], vec![0.0; n]);
        observer_rhs(SolidProfile { values: &that, s }, &meas, 0.0, 0.0, 4000.0, &ph, &mut with).unwrap();
        observer_rhs(SolidProfile { values: &that, s }, &meas, 0.0, 0.0, 0.0, &ph, &mut without).unwrap();
        assert!(with[0] > without[0]);
        assert_eq!(&with[1..], &without[1..]);
    }

    #[test]
    fn zero_error_has_zero_norms() {
        let v: Vec<f64> = (0..21).map(|i| 120.0 + i as f64).collect();
        let p = SolidProfile { values: &v, s: 0.04 };
        assert_eq!(estimation_error_norms(p, p).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn sine_error_norms_converge() {
        let s: f64 = 0.04;
        let exact_l2 = (s / 2.0).sqrt();
        let exact_h1 = (s / 2.0 + (PI / s).powi(2) * s / 2.0).sqrt();
        let mut prev = f64::INFINITY;
        for n in [41usize, 81, 161] {
            let ts: Vec<f64> = (0..n).map(|i| 130.0 + (PI * i as f64 / (n - 1) as f64).sin()).collect();
            let that = vec![130.0; n];
            let (l2, h1) = estimation_error_norms(SolidProfile { values: &ts, s }, SolidProfile { values: &that, s }).unwrap();
            let e = (l2 - exact_l2).abs() / exact_l2 + (h1 - exact_h1).abs() / exact_h1;
            assert!(e < prev / 3.5, "n = {n}: {e}");
            prev = e;
        }
    }

    #[test]
    fn misaligned_domains() {
        let v = vec![130.0; 21];
        let plant = SolidProfile { values: &v, s: 0.04 };
        let far = SolidProfile { values: &v, s: 0.045 };
        assert!(matches!(estimation_error_norms(plant, far), Err(Error::Alignment(_))));
        // within one cell and on a different grid: resampled
        let w: Vec<f64> = (0..31).map(|i| 130.0 - 0.1 * i as f64).collect();
        let near = SolidProfile { values: &w, s: 0.0401 };
        let err = estimation_error(plant, near).unwrap();
        assert_eq!(err.len(), 21);
        assert_eq!(err[20], 130.0 - w[30]);
    }
}
