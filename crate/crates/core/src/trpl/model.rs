//! Exponential decay convolved with a Gaussian instrument response.
//!
//! One component with unit peak amplitude, time measured from the
//! excitation:
//!
//! `k(t) = ½·exp(σ²/2τ² − t/τ)·erfc((σ² − tτ)/(√2στ)) = exp(σ²/2τ² − t/τ)·Φ(t/σ − σ/τ)`
//!
//! so `k → e^{−t/τ}·H(t)` as `σ → 0` and `∫k = τ`. Its antiderivative is
//! `G(t) = τ·(Φ(t/σ) − k(t))`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::special::{erfc, erfcx, norm_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayComponent {
    /// Peak-scale amplitude (counts per bin).
    pub amplitude: f64,
    /// Lifetime (ns).
    pub lifetime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayModelParams {
    /// Fast component first.
    pub components: Vec<DecayComponent>,
    /// IRF standard deviation (ns).
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Counts per bin.
    #[serde(default)]
    pub baseline: f64,
    /// Time origin (ns).
    #[serde(default)]
    pub t0: f64,
}

/// `√2·σ = 70 ps`.
pub const DEFAULT_SIGMA_NS: f64 = 0.070 * FRAC_1_SQRT_2;

fn default_sigma() -> f64 {
    DEFAULT_SIGMA_NS
}

impl DecayModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.components.len() > 2 {
            return Err(invalid(format!("1 or 2 decay components supported, got {}", self.components.len())));
        }
        for c in &self.components {
            if !(c.lifetime > 0.0 && c.lifetime.is_finite()) {
                return Err(invalid(format!("lifetime must be positive, got {}", c.lifetime)));
            }
            if !(c.amplitude >= 0.0 && c.amplitude.is_finite()) {
                return Err(invalid(format!("amplitude must be non-negative, got {}", c.amplitude)));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma must be non-negative"));
        }
        if !(self.baseline >= 0.0) {
            return Err(invalid("baseline must be non-negative"));
        }
        if !self.t0.is_finite() {
            return Err(invalid("t0 must be finite"));
        }
        Ok(())
    }

    /// Sort components by lifetime, fast first.
    pub fn canonicalize(&mut self) {
        self.components.sort_by(|a, b| a.lifetime.total_cmp(&b.lifetime));
    }

    /// `Σ a_i τ_i`: the integral of the decay over all time.
    pub fn area(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude * c.lifetime).sum()
    }
}

/// Unit-amplitude convolved kernel at time `t` after the origin.
pub fn kernel(t: f64, tau: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return if t > 0.0 {
            (-t / tau).exp()
        } else if t == 0.0 {
            0.5
        } else {
            0.0
        };
    }
    let u = (sigma / tau - t / sigma) * FRAC_1_SQRT_2;
    if u >= 0.0 {
        // exp(σ²/2τ² − t/τ) = exp(u² − t²/2σ²): fold exp(u²) into erfcx
        let z = t / sigma;
        0.5 * (-0.5 * z * z).exp() * erfcx(u)
    } else {
        0.5 * (0.5 * (sigma / tau).powi(2) - t / tau).exp() * erfc(u)
    }
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `I(t) = baseline + Σ a_i·k(t − t0; τ_i, σ)`.
pub fn decay_model(t: f64, params: &DecayModelParams) -> f64 {
    let s: f64 = params
        .components
        .iter()
        .map(|c| c.amplitude * kernel(t - params.t0, c.lifetime, params.sigma))
        .sum();
    params.baseline + s
}

/// Antiderivative `G(t)` of the unit kernel and its partials in τ and σ.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Primitive {
    pub value: f64,
    pub kernel: f64,
    pub d_tau: f64,
    pub d_sigma: f64,
}

pub(crate) fn primitive(t: f64, tau: f64, sigma: f64) -> Primitive {
    let k = kernel(t, tau, sigma);
    if sigma == 0.0 {
        let step = if t > 0.0 { 1.0 } else if t == 0.0 { 0.5 } else { 0.0 };
        return Primitive {
            value: tau * (step - k),
            kernel: k,
            d_tau: step - k * (1.0 + t / tau),
            d_sigma: 0.0,
        };
    }
    let z = t / sigma;
    let cdf = norm_cdf(z);
    let pdf = norm_pdf(z);
    Primitive {
        value: tau * (cdf - k),
        kernel: k,
        d_tau: cdf - k * (1.0 + t / tau - (sigma / tau).powi(2)) - sigma / tau * pdf,
        d_sigma: pdf - k * sigma / tau,
    }
}

/// Mean of the unit kernel over `[t1, t2]`.
pub fn kernel_bin_mean(t1: f64, t2: f64, tau: f64, sigma: f64) -> f64 {
    (primitive(t2, tau, sigma).value - primitive(t1, tau, sigma).value) / (t2 - t1)
}

/// Expected counts in `[t1, t2)` for amplitudes in counts per bin: the
/// bin mean of the model.
pub fn expected_bin(t1: f64, t2: f64, params: &DecayModelParams) -> f64 {
    let s: f64 = params
        .components
        .iter()
        .map(|c| c.amplitude * kernel_bin_mean(t1 - params.t0, t2 - params.t0, c.lifetime, params.sigma))
        .sum();
    params.baseline + s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(a: f64, tau: f64, sigma: f64) -> DecayModelParams {
        DecayModelParams {
            components: vec![DecayComponent { amplitude: a, lifetime: tau }],
            sigma,
            baseline: 0.0,
            t0: 0.0,
        }
    }

    #[test]
    fn vanishing_irf_is_pure_exponential() {
        let tau = 2.14;
        let p = single(3.0, tau, 1e-6 * tau);
        for &t in &[0.01, 0.1, 1.0, 2.14, 5.0, 20.0] {
            let want = 3.0 * (-t / tau).exp();
            assert!((decay_model(t, &p) / want - 1.0).abs() < 1e-9, "t={t}");
        }
        assert_eq!(decay_model(-0.01, &p), 0.0);
    }

    #[test]
    fn far_past_is_baseline() {
        let mut p = single(5.0, 0.2, 0.0495);
        p.baseline = 1.25;
        assert_eq!(decay_model(-50.0, &p), 1.25);
        assert_eq!(decay_model(-1e6, &p), 1.25);
    }

    #[test]
    fn no_overflow_for_tiny_lifetimes() {
        for &t in &[-1.0, -0.1, 0.0, 0.05, 0.2, 1.0] {
            let v = kernel(t, 0.0005, 0.05);
            assert!(v.is_finite() && v >= 0.0);
        }
        // τ ≪ σ: the kernel tends to τ·Gaussian(t)
        let (tau, s) = (1e-4, 0.05);
        let g = tau * norm_pdf(0.0) / s;
        assert!((kernel(0.0, tau, s) / g - 1.0).abs() < 1e-2);
    }

    #[test]
    fn integral_and_continuity() {
        let (tau, s) = (0.77, 0.0495);
        let total = primitive(60.0, tau, s).value - primitive(-5.0, tau, s).value;
        assert!((total / tau - 1.0).abs() < 1e-12);
        // branch switch at u = 0, i.e. t = σ²/τ
        let t = s * s / tau;
        let (a, b) = (kernel(t * (1.0 - 1e-12), tau, s), kernel(t * (1.0 + 1e-12), tau, s));
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn primitive_derivatives_match_finite_differences() {
        for &(t, tau, s) in &[(0.3, 0.2, 0.0495), (-0.05, 2.14, 0.0495), (1.5, 0.07, 0.03), (0.0, 0.77, 0.1)] {
            let p = primitive(t, tau, s);
            let h = 1e-6;
            let dt = (primitive(t, tau + h, s).value - primitive(t, tau - h, s).value) / (2.0 * h);
            let ds = (primitive(t, tau, s + h).value - primitive(t, tau, s - h).value) / (2.0 * h);
            let dk = (primitive(t + h, tau, s).value - primitive(t - h, tau, s).value) / (2.0 * h);
            assert!((p.d_tau - dt).abs() < 1e-7, "{t} {tau} {s}: {} vs {dt}", p.d_tau);
            assert!((p.d_sigma - ds).abs() < 1e-7, "{} vs {ds}", p.d_sigma);
            assert!((p.kernel - dk).abs() < 1e-7);
        }
    }

    #[test]
    fn canonical_order() {
        let mut p = DecayModelParams {
            components: vec![
                DecayComponent { amplitude: 1.0, lifetime: 2.0 },
                DecayComponent { amplitude: 3.0, lifetime: 0.2 },
            ],
            sigma: DEFAULT_SIGMA_NS,
            baseline: 0.0,
            t0: 0.0,
        };
        p.canonicalize();
        assert_eq!(p.components[0].lifetime, 0.2);
        assert!((p.area() - 2.6).abs() < 1e-12);
        assert!((DEFAULT_SIGMA_NS - 0.049497).abs() < 1e-6);
    }
}
