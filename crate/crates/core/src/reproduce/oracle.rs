//! Reference values computed by routes independent of the production code:
//! direct quadrature of the convolution integral and the closed-form
//! dispersion relation of the Yee scheme.

use std::f64::consts::PI;

// 15-point Kronrod nodes on [0, 1] with the embedded 7-point Gauss rule.
const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * XK[i]) + f(c + h * XK[i]);
        k += WK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod: bisect the interval with the largest
/// error estimate until the total error is below `rel_tol·|integral|`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..5000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            break;
        }
        let worst = (0..parts.len()).max_by(|&x, &y| parts[x].2 .1.total_cmp(&parts[y].2 .1)).unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
    parts.iter().map(|p| p.2 .0).sum()
}

/// `∫₀^∞ e^{-s/τ} g(t - s; σ) ds` with `g` the unit-area Gaussian.
pub fn convolved_exponential(t: f64, tau: f64, sigma: f64) -> f64 {
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    // the integrand is a Gaussian in s centred at t - σ²/τ, cut at s = 0
    let centre = t - sigma * sigma / tau;
    let lo = (centre - 40.0 * sigma).max(0.0);
    let hi = centre.max(0.0) + 40.0 * sigma;
    let f = |s: f64| norm * (-s / tau - (t - s) * (t - s) / (2.0 * sigma * sigma)).exp();
    // split at the peak so the adaptive rule sees it
    let peak = centre.clamp(lo, hi);
    let mut sum = 0.0;
    if peak > lo {
        sum += integrate(f, lo, peak, 1e-13);
    }
    if hi > peak {
        sum += integrate(f, peak, hi, 1e-13);
    }
    sum
}

/// Frequency of a plane wave of wavenumber `k` (rad/cell) travelling at
/// `angle` to the x axis on the unit-cell Yee grid with step `dt`:
/// `sin²(ω dt/2)/dt² = sin²(kx/2) + sin²(ky/2)`.
pub fn discrete_omega(k: f64, angle: f64, dt: f64) -> f64 {
    let (kx, ky) = (k * angle.cos(), k * angle.sin());
    let s = ((0.5 * kx).sin().powi(2) + (0.5 * ky).sin().powi(2)).sqrt();
    2.0 / dt * (dt * s).asin()
}

/// Inverse of [`discrete_omega`] by bisection on `k ∈ (0, π]`.
pub fn discrete_wavenumber(omega: f64, angle: f64, dt: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if discrete_omega(mid, angle, dt) < omega {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_of_known_integrals() {
        let v = integrate(|x: f64| x.sin(), 0.0, PI, 1e-14);
        assert!((v - 2.0).abs() < 1e-13);
        let v = integrate(|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-14);
        assert!((v - PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn convolution_limits() {
        // narrow Gaussian far from the pulse: exponential shifted by σ²/2τ²
        let (s, tau) = (1e-4, 0.5);
        let v = convolved_exponential(1.0, tau, s);
        let exact = (s * s / (2.0 * tau * tau) - 1.0 / tau).exp();
        assert!((v / exact - 1.0).abs() < 1e-10, "{v} {exact}");
        // total area τ
        let area = integrate(|t| convolved_exponential(t, 0.7, 0.05), -1.0, 40.0, 1e-12);
        assert!((area - 0.7).abs() < 1e-9);
    }

    #[test]
    fn dispersion_small_k_is_light_line() {
        let w = discrete_omega(1e-4, 0.3, 0.5);
        assert!((w / 1e-4 - 1.0).abs() < 1e-8);
        let k = discrete_wavenumber(0.3, 0.7, 0.5);
        assert!((discrete_omega(k, 0.7, 0.5) - 0.3).abs() < 1e-14);
    }
}
