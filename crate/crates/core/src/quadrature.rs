//! Composite rules on uniform grids mapped onto a physical interval.

use num_complex::Complex64;

/// Trapezoid rule of `g(x_i, v_i)` over nodes `x_i = x0 + i (x1 - x0)/(n - 1)`.
pub fn trapezoid_mapped(values: &[f64], x0: f64, x1: f64, mut g: impl FnMut(f64, f64) -> f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let dx = (x1 - x0) / (n - 1) as f64;
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += w * g(x0 + i as f64 * dx, v);
    }
    acc * dx
}

/// Trapezoid weights for `n` uniform nodes spanning a length `len`.
pub fn trapezoid_weights(n: usize, len: f64) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let dx = len / (n - 1) as f64;
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * dx } else { dx })
        .collect()
}

/// Squared H1 norm `∫ e² + ∫ e'²` of nodal data on a uniform grid of spacing `dx`.
///
/// Values use the trapezoid rule; the derivative is the cell-wise difference
/// quotient integrated with the midpoint rule.
pub fn h1_norm_sq(err: &[f64], dx: f64) -> (f64, f64) {
    let n = err.len();
    if n < 2 || dx <= 0.0 {
        return (0.0, 0.0);
    }
    let mut l2 = 0.0;
    for (i, e) in err.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        l2 += w * e * e;
    }
    l2 *= dx;
    let mut d2 = 0.0;
    for w in err.windows(2) {
        let d = (w[1] - w[0]) / dx;
        d2 += d * d;
    }
    d2 *= dx;
    (l2, d2)
}

/// One term `(a + b x) e^{−λ x}` of an exponential-polynomial weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub a: Complex64,
    pub b: Complex64,
    pub lambda: Complex64,
}

/// `m_j(z) = ∫₀¹ t^j e^{−z t} dt` for `j = 0, 1, 2`.
fn exp_moments(z: Complex64) -> [Complex64; 3] {
    if z.norm() < 0.5 {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        let mut term = Complex64::new(1.0, 0.0);
        for k in 0..24 {
            for (j, o) in out.iter_mut().enumerate() {
                *o += term / (k + j + 1) as f64;
            }
            term *= -z / (k + 1) as f64;
        }
        return out;
    }
    let e = (-z).exp();
    let m0 = (1.0 - e) / z;
    let m1 = (m0 - e) / z;
    let m2 = (2.0 * m1 - e) / z;
    [m0, m1, m2]
}

/// Nodal weights `W_i` with `Σ W_i v_i = ∫ w(x) v(x) dx` exactly for the
/// piecewise-linear interpolant `v` of `n` uniform nodes on `[x0, x1]`, where
/// `w(x) = Re Σ (a + b x) e^{−λ x}`.
///
/// Unlike the plain trapezoid rule this stays accurate when `w` has a layer
/// much thinner than the grid spacing.
pub fn exp_product_weights(terms: &[ExpTerm], x0: f64, x1: f64, n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    let h = (x1 - x0) / (n - 1) as f64;
    for t in terms {
        let [m0, m1, m2] = exp_moments(t.lambda * h);
        // M_j / h^j with M_j = ∫₀^h τ^j e^{−λτ} dτ
        let (k0, k1, k2) = (m0 * h, m1 * h, m2 * h * h);
        for i in 0..n - 1 {
            let xi = x0 + i as f64 * h;
            let e = (-t.lambda * xi).exp();
            let amp = t.a + t.b * xi;
            w[i] += (e * (amp * (k0 - k1) + t.b * (k1 * h - k2))).re;
            w[i + 1] += (e * (amp * k1 + t.b * k2)).re;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_exact_for_linear() {
        let v: Vec<f64> = (0..11).map(|i| 2.0 + 3.0 * i as f64 / 10.0).collect();
        let got = trapezoid_mapped(&v, 0.0, 2.0, |_, v| v);
        // ∫_0^2 (2 + 1.5 x) dx = 4 + 3
        assert!((got - 7.0).abs() < 1e-13);
        let w = trapezoid_weights(11, 2.0);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn h1_of_sine_converges() {
        let s = 0.5;
        let exact_l2 = s / 2.0;
        let exact_d2 = (std::f64::consts::PI / s).powi(2) * s / 2.0;
        let mut prev = f64::INFINITY;
        for n in [51usize, 101, 201] {
            let dx = s / (n - 1) as f64;
            let e: Vec<f64> = (0..n)
                .map(|i| (std::f64::consts::PI * i as f64 * dx / s).sin())
                .collect();
            let (l2, d2) = h1_norm_sq(&e, dx);
            let err = (l2 - exact_l2).abs() + (d2 - exact_d2).abs() / exact_d2;
            assert!(err < prev / 3.5, "n = {n}: {err} vs {prev}");
            prev = err;
        }
    }
    #[test]
    fn product_weights_match_trapezoid_for_constant_weight() {
        let one = ExpTerm { a: 1.0.into(), b: 0.0.into(), lambda: 0.0.into() };
        let w = exp_product_weights(&[one], 0.0, 2.0, 11);
        for (a, b) in w.iter().zip(trapezoid_weights(11, 2.0)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn product_weights_resolve_thin_layer() {
        // ∫₀¹ e^{−500x} (1 + x) dx with only 11 nodes: exact for linear v
        let t = ExpTerm { a: 1.0.into(), b: 0.0.into(), lambda: 500.0.into() };
        let w = exp_product_weights(&[t], 0.0, 1.0, 11);
        let got: f64 = w.iter().enumerate().map(|(i, w)| w * (1.0 + i as f64 / 10.0)).sum();
        let l = 500.0f64;
        let exact = (1.0 - (-l).exp()) / l + (1.0 - (-l).exp() * (1.0 + l)) / (l * l);
        assert!((got - exact).abs() < 1e-13, "{got} vs {exact}");
    }

    #[test]
    fn product_weights_linear_and_oscillatory_terms() {
        // w(x) = x e^{−3x} cos(4x) = Re x e^{−(3+4i)x}, v = 2 − x
        let t = ExpTerm { a: 0.0.into(), b: 1.0.into(), lambda: Complex64::new(3.0, 4.0) };
        let f = |x: f64| x * (-3.0 * x).exp() * (4.0 * x).cos() * (2.0 - x);
        // fine Simpson reference
        let m = 20_000;
        let hh = 1.5 / m as f64;
        let mut reference = f(0.0) + f(1.5);
        for i in 1..m {
            reference += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * hh);
        }
        reference *= hh / 3.0;
        let w = exp_product_weights(&[t], 0.0, 1.5, 7);
        let got: f64 = w.iter().enumerate().map(|(i, w)| w * (2.0 - 0.25 * i as f64)).sum();
        assert!((got - reference).abs() < 1e-10, "{got} vs {reference}");
    }
}
