//! Damped Gauss–Newton (Levenberg–Marquardt) least squares.
//!
//! Small dense problems only: the normal matrix is formed explicitly and
//! solved by Cholesky. Damping is Marquardt-scaled, `(JᵀJ + λ·diag(JᵀJ))`,
//! with λ starting at 1e-3, multiplied by 10 after a rejected step and
//! divided by 10 after an accepted one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// A residual vector `r(p)` to be minimized in the 2-norm.
///
/// Weighting is the problem's business: return `(data - model) / sigma`.
pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, params: &[f64], out: &mut [f64]);

    fn param_name(&self, index: usize) -> String {
        format!("p{index}")
    }

    /// Clamp a trial point back into the feasible set (bounds).
    fn project(&self, _params: &mut [f64]) {}

    /// Jacobian `∂r_k/∂p_i`, row k, column i. Central differences by default.
    fn jacobian(&self, params: &[f64], jac: &mut DMatrix<f64>) {
        let m = self.n_residuals();
        let mut p = params.to_vec();
        let mut plus = vec![0.0; m];
        let mut minus = vec![0.0; m];
        for i in 0..params.len() {
            let h = 1e-6 * params[i].abs().max(1e-6);
            p[i] = params[i] + h;
            self.residuals(&p, &mut plus);
            p[i] = params[i] - h;
            self.residuals(&p, &mut minus);
            p[i] = params[i];
            for k in 0..m {
                jac[(k, i)] = (plus[k] - minus[k]) / (2.0 * h);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Converged once every `|Δp_i| / (|p_i| + 1e-10)` drops below this.
    pub xtol: f64,
    pub max_iterations: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
            xtol: 1e-8,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// `(JᵀJ)⁻¹ · χ²_red` at the optimum, undamped; infinite on the
    /// diagonal for parameters the residuals do not depend on.
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_DAMPING: f64 = 1e20;
// Reciprocal condition number (of the correlation matrix) below which the
// normal matrix counts as singular.
const RCOND_SINGULAR: f64 = 1e-14;

pub fn minimize<P: Problem>(problem: &P, initial: &[f64], opts: &LmOptions) -> Result<LmReport> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    if initial.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} initial parameters, got {}",
            initial.len()
        )));
    }
    if m < n {
        return Err(Error::InvalidInput(format!(
            "{m} residuals cannot determine {n} parameters"
        )));
    }

    let mut p = initial.to_vec();
    problem.project(&mut p);
    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::Numerical("non-finite residuals at the initial point".into()));
    }

    let mut jac = DMatrix::zeros(m, n);
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        problem.jacobian(&p, &mut jac);
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let gradient = &jt * DVector::from_column_slice(&r);
        let diag_floor = normal.diagonal().max() * 1e-15;

        loop {
            let mut damped = normal.clone();
            for i in 0..n {
                let d = normal[(i, i)].max(diag_floor).max(f64::MIN_POSITIVE);
                damped[(i, i)] += lambda * d;
            }
            let step = match damped.cholesky() {
                Some(chol) => chol.solve(&(-&gradient)),
                None => {
                    lambda *= opts.damping_up;
                    if lambda > MAX_DAMPING {
                        let (a, b) = degenerate_pair(&normal);
                        return Err(singular(problem, a, b));
                    }
                    continue;
                }
            };

            for i in 0..n {
                trial[i] = p[i] + step[i];
            }
            problem.project(&mut trial);
            let small = (0..n).all(|i| (trial[i] - p[i]).abs() <= opts.xtol * (p[i].abs() + 1e-10));
            problem.residuals(&trial, &mut r_trial);
            let trial_cost = sum_sq(&r_trial);

            if trial_cost.is_finite() && trial_cost <= cost {
                std::mem::swap(&mut p, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                lambda = (lambda / opts.damping_down).max(1e-15);
                if small {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            // A rejected step that is already below tolerance means we sit
            // at the minimum to working precision.
            if small {
                converged = true;
                break 'outer;
            }
            lambda *= opts.damping_up;
            if lambda > MAX_DAMPING {
                break 'outer;
            }
        }
    }

    problem.jacobian(&p, &mut jac);
    let normal = jac.transpose() * &jac;
    let inverse = invert_normal(problem, &normal)?;
    let dof = (m - n).max(1) as f64;
    let reduced_chi2 = cost / dof;
    let covariance = inverse * reduced_chi2;
    let std_errors = (0..n).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();

    Ok(LmReport {
        params: p,
        covariance,
        std_errors,
        chi2: cost,
        reduced_chi2,
        iterations,
        converged,
    })
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn singular<P: Problem>(problem: &P, a: usize, b: usize) -> Error {
    Error::SingularNormalMatrix {
        first: problem.param_name(a),
        second: problem.param_name(b),
    }
}

/// Invert the undamped normal matrix, naming the most correlated parameter
/// pair when it is numerically singular. A parameter with no sensitivity
/// at all (typically one whose only coupling was zeroed by a bound) is
/// left out and gets infinite variance.
fn invert_normal<P: Problem>(problem: &P, normal: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = normal.nrows();
    if (0..n).any(|i| !normal[(i, i)].is_finite() || normal[(i, i)] < 0.0) {
        return Err(Error::Numerical("non-finite normal matrix".into()));
    }
    let live: Vec<usize> = (0..n).filter(|&i| normal[(i, i)] > 0.0).collect();
    if live.is_empty() {
        return Err(singular(problem, 0, 0));
    }
    let m = live.len();
    let diag: Vec<f64> = live.iter().map(|&i| normal[(i, i)]).collect();
    let corr = DMatrix::from_fn(m, m, |a, b| normal[(live[a], live[b])] / (diag[a] * diag[b]).sqrt());
    let eig = SymmetricEigen::new(corr.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let fail = || {
        let (a, b) = degenerate_pair(normal);
        singular(problem, a, b)
    };
    if !(min > RCOND_SINGULAR * max) {
        return Err(fail());
    }
    let corr_inv = corr.cholesky().map(|c| c.inverse()).ok_or_else(fail)?;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        if normal[(i, i)] == 0.0 {
            out[(i, i)] = f64::INFINITY;
        }
    }
    for a in 0..m {
        for b in 0..m {
            out[(live[a], live[b])] = corr_inv[(a, b)] / (diag[a] * diag[b]).sqrt();
        }
    }
    Ok(out)
}

/// Parameter pair with the largest |correlation| in the normal matrix.
fn degenerate_pair(normal: &DMatrix<f64>) -> (usize, usize) {
    let n = normal.nrows();
    let mut best = (0, n.min(2) - 1);
    let mut best_corr = -1.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let c = normal[(i, j)].abs() / (normal[(i, i)] * normal[(j, j)]).sqrt();
            if c > best_corr && c.is_finite() {
                best_corr = c;
                best = (i, j);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a·exp(-x/b) + c
    struct ExpDecay {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl Problem for ExpDecay {
        fn n_params(&self) -> usize {
            3
        }
        fn n_residuals(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (k, (&x, &y)) in self.x.iter().zip(&self.y).enumerate() {
                out[k] = y - (p[0] * (-x / p[1]).exp() + p[2]);
            }
        }
    }

    #[test]
    fn recovers_noiseless_exponential() {
        let x: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|&x| 3.0 * (-x / 1.7).exp() + 0.25).collect();
        let prob = ExpDecay { x, y };
        let rep = minimize(&prob, &[1.0, 0.5, 0.0], &LmOptions::default()).unwrap();
        assert!(rep.converged);
        for (got, want) in rep.params.iter().zip([3.0, 1.7, 0.25]) {
            assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
        }
        assert!(rep.reduced_chi2 < 1e-20);
    }

    /// Two parameters that only ever appear as a sum.
    struct Degenerate;

    impl Problem for Degenerate {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            5
        }
        fn param_name(&self, i: usize) -> String {
            ["alpha", "beta"][i].to_string()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (k, o) in out.iter_mut().enumerate() {
                *o = (k as f64) * (p[0] + p[1]) - 2.0 * k as f64;
            }
        }
    }

    #[test]
    fn singular_normal_matrix_names_pair() {
        let err = minimize(&Degenerate, &[0.3, 0.1], &LmOptions::default()).unwrap_err();
        match err {
            Error::SingularNormalMatrix { first, second } => {
                assert_eq!((first.as_str(), second.as_str()), ("alpha", "beta"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    /// `p[1]` only matters through `p[0]·p[1]`, and `p[0]` is held ≥ 0 at
    /// a point where the data want it at zero.
    struct Dead;

    impl Problem for Dead {
        fn n_params(&self) -> usize {
            3
        }
        fn n_residuals(&self) -> usize {
            6
        }
        fn project(&self, p: &mut [f64]) {
            p[0] = p[0].max(0.0);
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (k, o) in out.iter_mut().enumerate() {
                let x = k as f64;
                let bump = 1.0 + x.cos();
                *o = (1.0 + 0.5 * x - 0.2 * bump) - (p[2] * (1.0 + 0.5 * x) + p[0] * bump * (0.1 * x * p[1]).exp());
            }
        }
    }

    #[test]
    fn insensitive_parameter_gets_infinite_error() {
        let rep = minimize(&Dead, &[0.0, 0.7, 0.3], &LmOptions::default()).unwrap();
        assert_eq!(rep.params[0], 0.0);
        assert!(rep.std_errors[1].is_infinite() || rep.std_errors[1].is_nan());
        assert!(rep.std_errors[2].is_finite());
    }
}
