//! Graded conductivity profiles for the split-field absorber.
//!
//! `σ(d) = σ_max·(d/L)^m` with depth `d` into a layer of `L` cells and
//! `σ_max = -(m+1)·ln(R) / (2L)` in normalized units (cell = 1, c = 1,
//! vacuum impedance 1), which gives normal-incidence round-trip
//! reflection `R` for a continuous layer backed by a perfect conductor.

pub const GRADING_ORDER: i32 = 3;

pub fn sigma_max(cells: usize, reflection: f64) -> f64 {
    -(GRADING_ORDER as f64 + 1.0) * reflection.ln() / (2.0 * cells as f64)
}

/// Update coefficients along one axis of length `n` cells.
///
/// `half = true` samples at `k + ½` (cell centers), otherwise at integer
/// edges `k`. Returns `(a, b)` with `a = (1 - σdt/2)/(1 + σdt/2)` and
/// `b = dt/(1 + σdt/2)`; outside the layer `a = 1`, `b = dt`.
pub fn coefficients(n: usize, cells: usize, reflection: f64, dt: f64, half: bool) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![1.0; n];
    let mut b = vec![dt; n];
    if cells == 0 {
        return (a, b);
    }
    let smax = sigma_max(cells, reflection);
    let l = cells as f64;
    let outer = n as f64 - l;
    for k in 0..n {
        let p = k as f64 + if half { 0.5 } else { 0.0 };
        let depth = (l - p).max(p - outer).max(0.0);
        if depth > 0.0 {
            let sigma = smax * (depth / l).powi(GRADING_ORDER);
            let denom = 1.0 + sigma * dt / 2.0;
            a[k] = (1.0 - sigma * dt / 2.0) / denom;
            b[k] = dt / denom;
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grading_is_symmetric_and_cubic() {
        let (a, b) = coefficients(40, 8, 1e-6, 0.5, true);
        for k in 0..40 {
            assert!((a[k] - a[39 - k]).abs() < 1e-15);
            assert!((b[k] - b[39 - k]).abs() < 1e-15);
        }
        assert!(a[8..32].iter().all(|&v| v == 1.0));
        assert!(a[0] < a[1] && a[1] < a[7] && a[7] < 1.0);
        // half-integer depth 0.5 at the inner edge: σ = σmax/8³
        let s = sigma_max(8, 1e-6) * (0.5f64 / 8.0).powi(3);
        assert!((a[7] - (1.0 - s * 0.25) / (1.0 + s * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn edge_samples() {
        let (a, _) = coefficients(20, 4, 1e-6, 0.5, false);
        // integer positions: depth 4 at k = 0, depth 0 at k = 4 and k = 16
        assert!(a[0] < a[1]);
        assert_eq!(a[4], 1.0);
        assert_eq!(a[16], 1.0);
        assert!(a[17] < 1.0);
    }
}
