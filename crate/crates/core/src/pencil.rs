//! Matrix-pencil estimation of complex exponentials `x[n] = Σ c_k z_kⁿ`.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// One term `amplitude · poleⁿ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    pub pole: Complex64,
    pub amplitude: Complex64,
}

/// Fit `x` with complex exponentials. The model order is the number of
/// Hankel singular values above `threshold` times the largest, capped at
/// `max_order` and at the pencil size. All-zero input gives an empty
/// list.
pub fn matrix_pencil(x: &[Complex64], max_order: usize, threshold: f64) -> Result<Vec<Exponential>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("matrix pencil needs at least 3 samples, got {n}")));
    }
    if x.iter().all(|v| v.norm() == 0.0) || max_order == 0 {
        return Ok(Vec::new());
    }
    // pencil parameter near N/3 is the usual noise/accuracy compromise
    let l = (n / 3).max(1);
    let rows = n - l;
    let hankel = DMatrix::from_fn(rows, l + 1, |r, c| x[r + c]);
    let svd = hankel.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed in matrix pencil".into()))?;
    let s = &svd.singular_values;
    // nalgebra sorts singular values in decreasing order
    let s0 = s[0];
    if !(s0 > 0.0) || !s0.is_finite() {
        return Ok(Vec::new());
    }
    let order = s
        .iter()
        .take_while(|&&v| v > threshold * s0)
        .count()
        .min(max_order)
        .min(l);
    if order == 0 {
        return Ok(Vec::new());
    }

    // rows of v_t span the signal row space [1, z, z², …]; shifting the
    // columns multiplies by the poles
    let v = v_t.rows(0, order).transpose();
    let v1 = v.rows(0, l).into_owned();
    let v2 = v.rows(1, l).into_owned();
    let a = v1
        .svd(true, true)
        .solve(&v2, 1e-300)
        .map_err(|e| Error::Numerical(format!("pencil solve: {e}")))?;
    let schur = Schur::try_new(a, 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("pencil eigenvalues did not converge".into()))?;
    let (_, t) = schur.unpack();
    let poles: Vec<Complex64> = (0..order).map(|k| t[(k, k)]).collect();
    let amps = vandermonde_fit(x, &poles)?;
    Ok(poles
        .into_iter()
        .zip(amps)
        .map(|(pole, amplitude)| Exponential { pole, amplitude })
        .collect())
}

/// Least-squares amplitudes for known poles. Columns of growing poles are
/// anchored at the last sample so nothing overflows.
pub fn vandermonde_fit(x: &[Complex64], poles: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = x.len();
    let last = (n - 1) as i32;
    let anchor: Vec<i32> = poles.iter().map(|p| if p.norm() > 1.0 { last } else { 0 }).collect();
    let z = DMatrix::from_fn(n, poles.len(), |r, k| poles[k].powi(r as i32 - anchor[k]));
    let b = DVector::from_column_slice(x);
    let c = z
        .svd(true, true)
        .solve(&b, 1e-300)
        .map_err(|e| Error::Numerical(format!("amplitude solve: {e}")))?;
    Ok(c.iter()
        .zip(poles.iter().zip(&anchor))
        .map(|(&c, (&p, &a))| c * p.powi(-a))
        .collect())
}
