//! Weighted least-squares fit of the convolved multi-exponential to a
//! photon histogram.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lsq::{self, LmOptions, Problem};

use super::histogram::DecayHistogram;
use super::model::{primitive, DecayComponent, DecayModelParams, DEFAULT_SIGMA_NS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum SigmaMode {
    /// IRF width held at this value (ns).
    Fixed(f64),
    Free,
}

impl Default for SigmaMode {
    fn default() -> Self {
        SigmaMode::Fixed(DEFAULT_SIGMA_NS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayParamErrors {
    pub amplitudes: Vec<f64>,
    pub lifetimes: Vec<f64>,
    pub baseline: f64,
    pub t0: f64,
    /// `None` when sigma was held fixed.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub params: DecayModelParams,
    pub std_errors: DecayParamErrors,
    /// Order given by `parameter_names`.
    pub covariance: Vec<Vec<f64>>,
    pub parameter_names: Vec<String>,
    pub reduced_chi2: f64,
    pub n_iterations: usize,
    pub converged: bool,
}

struct HistogramProblem<'a> {
    hist: &'a DecayHistogram,
    n: usize,
    fixed_sigma: Option<f64>,
    /// `1/√max(c, 1)`.
    weight: Vec<f64>,
}

// parameter layout: a_0..a_{n-1}, τ_0..τ_{n-1}, baseline, t0, [σ]
impl HistogramProblem<'_> {
    fn sigma(&self, p: &[f64]) -> f64 {
        self.fixed_sigma.unwrap_or_else(|| p[2 * self.n + 2])
    }

    fn unpack(&self, p: &[f64]) -> DecayModelParams {
        DecayModelParams {
            components: (0..self.n)
                .map(|i| DecayComponent { amplitude: p[i], lifetime: p[self.n + i] })
                .collect(),
            sigma: self.sigma(p),
            baseline: p[2 * self.n],
            t0: p[2 * self.n + 1],
        }
    }
}

impl Problem for HistogramProblem<'_> {
    fn n_params(&self) -> usize {
        2 * self.n + 2 + usize::from(self.fixed_sigma.is_none())
    }

    fn n_residuals(&self) -> usize {
        self.hist.counts.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let h = self.hist;
        let w = h.bin_width;
        let (sigma, t0) = (self.sigma(p), p[2 * self.n + 1]);
        let mut lower: Vec<f64> = (0..self.n).map(|i| primitive(h.t_start - t0, p[self.n + i], sigma).value).collect();
        for (k, &c) in h.counts.iter().enumerate() {
            let t2 = h.bin_start(k + 1) - t0;
            let mut m = p[2 * self.n];
            for (i, lo) in lower.iter_mut().enumerate() {
                let up = primitive(t2, p[self.n + i], sigma).value;
                m += p[i] * (up - *lo) / w;
                *lo = up;
            }
            out[k] = (c as f64 - m) * self.weight[k];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let h = self.hist;
        let n = self.n;
        let w = h.bin_width;
        let (sigma, t0) = (self.sigma(p), p[2 * n + 1]);
        let free_sigma = self.fixed_sigma.is_none();
        let mut lower: Vec<_> = (0..n).map(|i| primitive(h.t_start - t0, p[n + i], sigma)).collect();
        for k in 0..h.counts.len() {
            let t2 = h.bin_start(k + 1) - t0;
            let s = -self.weight[k] / w;
            let mut d_t0 = 0.0;
            let mut d_sigma = 0.0;
            for (i, lo) in lower.iter_mut().enumerate() {
                let up = primitive(t2, p[n + i], sigma);
                jac[(k, i)] = s * (up.value - lo.value);
                jac[(k, n + i)] = s * p[i] * (up.d_tau - lo.d_tau);
                d_t0 -= p[i] * (up.kernel - lo.kernel);
                d_sigma += p[i] * (up.d_sigma - lo.d_sigma);
                *lo = up;
            }
            jac[(k, 2 * n)] = -self.weight[k];
            jac[(k, 2 * n + 1)] = s * d_t0;
            if free_sigma {
                jac[(k, 2 * n + 2)] = s * d_sigma;
            }
        }
    }

    fn param_name(&self, i: usize) -> String {
        let n = self.n;
        match i {
            i if i < n => format!("amplitude_{i}"),
            i if i < 2 * n => format!("lifetime_{}", i - n),
            i if i == 2 * n => "baseline".into(),
            i if i == 2 * n + 1 => "t0".into(),
            _ => "sigma".into(),
        }
    }

    fn project(&self, p: &mut [f64]) {
        let n = self.n;
        for v in &mut p[..n] {
            *v = v.max(0.0);
        }
        for v in &mut p[n..2 * n] {
            *v = v.max(MIN_LIFETIME);
        }
        p[2 * n] = p[2 * n].max(0.0);
        if self.fixed_sigma.is_none() {
            p[2 * n + 2] = p[2 * n + 2].max(MIN_SIGMA);
        }
    }
}

const MIN_LIFETIME: f64 = 1e-4;
const MIN_SIGMA: f64 = 1e-5;

/// Fit `n_components` exponentials. `init` overrides the automatic start
/// (its sigma is ignored when `sigma_mode` is fixed).
pub fn fit_decay(
    hist: &DecayHistogram,
    n_components: usize,
    sigma_mode: SigmaMode,
    init: Option<&DecayModelParams>,
) -> Result<DecayFit> {
    if !(1..=2).contains(&n_components) {
        return Err(invalid(format!("1 or 2 components supported, got {n_components}")));
    }
    if hist.counts.is_empty() || hist.total_counts == 0 {
        return Err(invalid("histogram is empty"));
    }
    let fixed_sigma = match sigma_mode {
        SigmaMode::Fixed(s) if s >= 0.0 => Some(s),
        SigmaMode::Fixed(s) => return Err(invalid(format!("sigma must be non-negative, got {s}"))),
        SigmaMode::Free => None,
    };
    let start = match init {
        Some(p) => {
            p.validate()?;
            if p.components.len() != n_components {
                return Err(invalid("initial guess has the wrong number of components"));
            }
            p.clone()
        }
        None => initial_guess(hist, n_components, fixed_sigma.unwrap_or(DEFAULT_SIGMA_NS))?,
    };
    let problem = HistogramProblem {
        hist,
        n: n_components,
        fixed_sigma,
        weight: hist.counts.iter().map(|&c| 1.0 / (c.max(1) as f64).sqrt()).collect(),
    };
    let mut p0: Vec<f64> = start.components.iter().map(|c| c.amplitude).collect();
    p0.extend(start.components.iter().map(|c| c.lifetime));
    p0.push(start.baseline);
    p0.push(start.t0);
    if fixed_sigma.is_none() {
        p0.push(start.sigma.max(MIN_SIGMA));
    }
    let rep = lsq::minimize(&problem, &p0, &LmOptions::default())?;

    // canonical order: fast first, permuting the covariance alongside
    let n = n_components;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rep.params[n + a].total_cmp(&rep.params[n + b]));
    let np = rep.params.len();
    let mut perm: Vec<usize> = order.clone();
    perm.extend(order.iter().map(|&i| n + i));
    perm.extend(2 * n..np);
    let params = problem.unpack(&perm.iter().map(|&i| rep.params[i]).collect::<Vec<_>>());
    let se: Vec<f64> = perm.iter().map(|&i| rep.std_errors[i]).collect();
    let covariance = perm
        .iter()
        .map(|&r| perm.iter().map(|&c| rep.covariance[(r, c)]).collect())
        .collect();
    Ok(DecayFit {
        std_errors: DecayParamErrors {
            amplitudes: se[..n].to_vec(),
            lifetimes: se[n..2 * n].to_vec(),
            baseline: se[2 * n],
            t0: se[2 * n + 1],
            sigma: fixed_sigma.is_none().then(|| se[2 * n + 2]),
        },
        params,
        covariance,
        parameter_names: (0..np).map(|i| problem.param_name(i)).collect(),
        reduced_chi2: rep.reduced_chi2,
        n_iterations: rep.iterations,
        converged: rep.converged,
    })
}

/// Weighted `(slope, intercept)` of `ln y` against `t`, weights `y`.
fn log_line(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let (mut sw, mut st, mut sl, mut stt, mut stl) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, y) in pts {
        let l = y.ln();
        sw += y;
        st += y * t;
        sl += y * l;
        stt += y * t * t;
        stl += y * t * l;
    }
    let det = sw * stt - st * st;
    if !(det > 0.0) {
        return None;
    }
    let slope = (sw * stl - st * sl) / det;
    Some((slope, (sl - slope * st) / sw))
}

/// Tail fit on log-counts for the long lifetime, the same on the
/// remainder for the fast one, baseline from the bins before the pulse;
/// amplitudes and baseline then solved linearly.
pub fn initial_guess(hist: &DecayHistogram, n: usize, sigma: f64) -> Result<DecayModelParams> {
    let w = hist.bin_width;
    let centers: Vec<f64> = (0..hist.counts.len()).map(|k| hist.bin_start(k) + 0.5 * w).collect();
    let c: Vec<f64> = hist.counts.iter().map(|&v| v as f64).collect();
    let kp = (0..c.len()).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap();
    let tp = centers[kp];
    let guard = (5.0 * sigma).max(0.3);
    let pre: Vec<f64> = (0..c.len()).filter(|&k| centers[k] < tp - guard).map(|k| c[k]).collect();
    let baseline = if pre.is_empty() {
        c.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        pre.iter().sum::<f64>() / pre.len() as f64
    };
    let t0 = tp;
    let y: Vec<f64> = c.iter().map(|v| v - baseline).collect();
    let floor = 10.0f64.max(3.0 * baseline.max(1.0).sqrt());
    let after = |k: usize| centers[k] > tp + 3.0 * sigma;

    let tail_fit = |lo: f64, decades: f64| -> Option<(f64, f64)> {
        let pts: Vec<(f64, f64)> = (kp..c.len())
            .filter(|&k| after(k) && y[k] >= lo && y[k] <= lo * 10f64.powf(decades))
            .map(|k| (centers[k], y[k]))
            .collect();
        log_line(&pts)
    };
    let (slope, icpt) = tail_fit(floor, 1.0)
        .filter(|(s, _)| *s < 0.0)
        .or_else(|| tail_fit(floor, 2.0).filter(|(s, _)| *s < 0.0))
        .or_else(|| tail_fit(1.0, 10.0).filter(|(s, _)| *s < 0.0))
        .ok_or_else(|| Error::NoDecay("no decaying tail above the baseline".into()))?;
    let tau_l = (-1.0 / slope).max(MIN_LIFETIME);
    let amp_l = (icpt + slope * t0).exp();

    let mut taus = vec![tau_l];
    if n == 2 {
        let rest: Vec<(f64, f64)> = (kp..c.len())
            .filter(|&k| centers[k] > tp + 2.0 * sigma)
            .map(|k| (centers[k], y[k] - amp_l * (-(centers[k] - t0) / tau_l).exp()))
            .take_while(|&(_, r)| r >= floor)
            .collect();
        let tau_f = log_line(&rest)
            .map(|(s, _)| -1.0 / s)
            .filter(|&t| t > MIN_LIFETIME && t < 0.8 * tau_l)
            .unwrap_or(tau_l / 5.0);
        taus.insert(0, tau_f);
    }

    // linear amplitudes and baseline at fixed lifetimes
    let cols = n + 1;
    let mut a = DMatrix::zeros(c.len(), cols);
    let mut b = DVector::zeros(c.len());
    for k in 0..c.len() {
        let wt = 1.0 / c[k].max(1.0).sqrt();
        let t1 = hist.bin_start(k) - t0;
        for (i, &tau) in taus.iter().enumerate() {
            a[(k, i)] = wt * (primitive(t1 + w, tau, sigma).value - primitive(t1, tau, sigma).value) / w;
        }
        a[(k, n)] = wt;
        b[k] = wt * c[k];
    }
    let sol = a.svd(true, true).solve(&b, 1e-12).map_err(|e| Error::Numerical(e.to_string()))?;
    let components = taus
        .iter()
        .enumerate()
        .map(|(i, &tau)| DecayComponent { amplitude: sol[i].max(0.0), lifetime: tau })
        .collect();
    Ok(DecayModelParams {
        components,
        sigma,
        baseline: sol[n].max(0.0),
        t0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lifetime {
    Fast,
    Long,
}

impl std::str::FromStr for Lifetime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Lifetime::Fast),
            "long" => Ok(Lifetime::Long),
            other => Err(invalid(format!("unknown lifetime component `{other}` (fast|long)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRatio {
    pub ratio: f64,
    pub std_error: f64,
}

/// `τ_ref/τ_cav` with independent-error propagation.
pub fn ratio_with_error(tau_ref: f64, err_ref: f64, tau_cav: f64, err_cav: f64) -> Result<LifetimeRatio> {
    if !(tau_ref > 0.0 && tau_cav > 0.0) {
        return Err(invalid("lifetimes must be positive"));
    }
    let ratio = tau_ref / tau_cav;
    let std_error = ratio * ((err_ref / tau_ref).powi(2) + (err_cav / tau_cav).powi(2)).sqrt();
    Ok(LifetimeRatio { ratio, std_error })
}

fn pick(fit: &DecayFit, which: Lifetime, label: &str) -> Result<(f64, f64)> {
    let n = fit.params.components.len();
    let idx = match (which, n) {
        (Lifetime::Long, n) if n >= 1 => n - 1,
        (Lifetime::Fast, 2) => 0,
        _ => {
            return Err(Error::MissingComponent(format!(
                "{label} fit has {n} component(s), no {which:?} lifetime"
            )))
        }
    };
    Ok((fit.params.components[idx].lifetime, fit.std_errors.lifetimes[idx]))
}

pub fn lifetime_ratio(fit_ref: &DecayFit, fit_cav: &DecayFit, which: Lifetime) -> Result<LifetimeRatio> {
    let (tr, sr) = pick(fit_ref, which, "reference")?;
    let (tc, sc) = pick(fit_cav, which, "cavity")?;
    ratio_with_error(tr, sr, tc, sc)
}
