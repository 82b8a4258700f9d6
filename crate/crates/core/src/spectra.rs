//! Lorentzian line fits, interferogram-envelope linewidths and two-segment
//! threshold detection on light-in/light-out curves.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::read_csv_columns;
use crate::lsq::{self, LmOptions, Problem};

pub const DEFAULT_RESOLUTION_NM: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelength: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Instrument FWHM (nm).
    pub resolution: f64,
}

impl Spectrum {
    pub fn new(wavelength: Vec<f64>, intensity: Vec<f64>, resolution: f64) -> Result<Self> {
        if wavelength.len() != intensity.len() || wavelength.len() < 8 {
            return Err(invalid("spectrum needs matching arrays of at least 8 points"));
        }
        if wavelength.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("wavelengths must be strictly increasing"));
        }
        if intensity.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(invalid("intensities must be finite and non-negative"));
        }
        if !(resolution > 0.0) {
            return Err(invalid("resolution must be positive"));
        }
        Ok(Self { wavelength, intensity, resolution })
    }

    /// CSV `wavelength_nm,intensity`.
    pub fn read_csv(path: &Path, resolution: f64) -> Result<Self> {
        let (header, mut cols) = read_csv_columns(path, 2, 2)?;
        expect_header(&header, &["wavelength_nm", "intensity"])?;
        let intensity = cols.pop().unwrap();
        Self::new(cols.pop().unwrap(), intensity, resolution)
    }
}

fn expect_header(got: &[String], want: &[&str]) -> Result<()> {
    if got.iter().zip(want).any(|(g, w)| g != w) {
        return Err(Error::Format(format!("expected CSV header {}, got {}", want.join(","), got.join(","))));
    }
    Ok(())
}

/// Plain Lorentzian `offset + amplitude·(Γ/2)²/((x−x₀)² + (Γ/2)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianCurve {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Standard errors in the same order.
    pub std_errors: [f64; 4],
}

pub fn lorentzian(x: f64, center: f64, fwhm: f64, amplitude: f64, offset: f64) -> f64 {
    let h = 0.5 * fwhm;
    offset + amplitude * h * h / ((x - center) * (x - center) + h * h)
}

struct LorentzProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

impl Problem for LorentzProblem<'_> {
    fn n_params(&self) -> usize {
        4
    }
    fn n_residuals(&self) -> usize {
        self.x.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (k, (&x, &y)) in self.x.iter().zip(self.y).enumerate() {
            out[k] = y - lorentzian(x, p[0], p[1], p[2], p[3]);
        }
    }
    fn param_name(&self, i: usize) -> String {
        ["center", "fwhm", "amplitude", "offset"][i].into()
    }
    fn project(&self, p: &mut [f64]) {
        p[1] = p[1].abs().max(1e-12);
    }
}

/// Least-squares Lorentzian through `(x, y)`. The abscissa is recentred on
/// the peak and scaled by the half-maximum width estimate internally so
/// that narrow lines far from zero fit to full precision.
pub fn fit_lorentzian_curve(x: &[f64], y: &[f64]) -> Result<LorentzianCurve> {
    if x.len() != y.len() || x.len() < 5 {
        return Err(invalid("Lorentzian fit needs at least 5 matching points"));
    }
    let peak = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
    let floor = y.iter().copied().fold(f64::INFINITY, f64::min);
    let height = y[peak] - floor;
    if !(height > 0.0) {
        return Err(Error::NoPeak("flat data".into()));
    }
    let half = floor + 0.5 * height;
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = peak;
        for k in range {
            if y[k] <= half {
                let t = (y[prev] - half) / (y[prev] - y[k]);
                return Some(x[prev] + t * (x[k] - x[prev]));
            }
            prev = k;
        }
        None
    };
    let left = cross(&mut (0..peak).rev());
    let right = cross(&mut (peak + 1..y.len()));
    let width = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (x[peak] - l),
        (None, Some(r)) => 2.0 * (r - x[peak]),
        (None, None) => 0.5 * (x[x.len() - 1] - x[0]),
    }
    .max(f64::MIN_POSITIVE);

    let x0 = x[peak];
    let xs: Vec<f64> = x.iter().map(|&v| (v - x0) / width).collect();
    let ys: Vec<f64> = y.iter().map(|&v| v / y[peak].abs()).collect();
    let problem = LorentzProblem { x: &xs, y: &ys };
    let init = [0.0, 1.0, height / y[peak].abs(), floor / y[peak].abs()];
    let rep = lsq::minimize(&problem, &init, &LmOptions { xtol: 1e-14, ..Default::default() })?;
    let p = &rep.params;
    let ys_scale = y[peak].abs();
    let se = &rep.std_errors;
    Ok(LorentzianCurve {
        center: x0 + p[0] * width,
        fwhm: p[1] * width,
        amplitude: p[2] * ys_scale,
        offset: p[3] * ys_scale,
        std_errors: [se[0] * width, se[1] * width, se[2] * ys_scale, se[3] * ys_scale],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub lambda0: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// (lambda0, fwhm, amplitude, offset).
    pub std_errors: [f64; 4],
    /// `max(Γ − resolution, 0)`.
    pub deconvolved_fwhm: f64,
    pub resolution_limited: bool,
    pub warnings: Vec<String>,
}

pub fn fit_lorentzian(spec: &Spectrum) -> Result<LorentzianFit> {
    let mut sorted = spec.intensity.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let max = sorted[sorted.len() - 1];
    if !(max > 0.0 && max >= 3.0 * median) {
        return Err(Error::NoPeak(format!("maximum {max} is below 3× the median {median}")));
    }
    let c = fit_lorentzian_curve(&spec.wavelength, &spec.intensity)?;
    let mut warnings = Vec::new();
    let resolution_limited = c.fwhm < 2.0 * spec.resolution;
    if resolution_limited {
        warnings.push(format!(
            "fitted FWHM {:.4} nm is below twice the {:.3} nm resolution; line is resolution-limited",
            c.fwhm, spec.resolution
        ));
    }
    Ok(LorentzianFit {
        lambda0: c.center,
        fwhm: c.fwhm,
        amplitude: c.amplitude,
        offset: c.offset,
        std_errors: c.std_errors,
        deconvolved_fwhm: (c.fwhm - spec.resolution).max(0.0),
        resolution_limited,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferogram {
    /// Path difference (mm).
    pub delay: Vec<f64>,
    pub contrast: Vec<f64>,
}

impl Interferogram {
    pub fn new(delay: Vec<f64>, contrast: Vec<f64>) -> Result<Self> {
        if delay.len() != contrast.len() {
            return Err(invalid("delay and contrast lengths differ"));
        }
        if delay.first().is_some_and(|&d| d < 0.0) || delay.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("delays must be non-negative and increasing"));
        }
        if contrast.iter().any(|c| !c.is_finite()) {
            return Err(invalid("contrast must be finite"));
        }
        Ok(Self { delay, contrast })
    }

    /// CSV `delay_mm,contrast`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let (header, mut cols) = read_csv_columns(path, 2, 2)?;
        expect_header(&header, &["delay_mm", "contrast"])?;
        let contrast = cols.pop().unwrap();
        Self::new(cols.pop().unwrap(), contrast)
    }
}

const NM_PER_MM: f64 = 1e6;

/// Field-autocorrelation envelope of a Lorentzian line,
/// `exp(−π·fwhm·delay/λ0²)`.
pub fn interferogram_model(delay_mm: f64, lambda0: f64, fwhm: f64) -> f64 {
    (-PI * fwhm * delay_mm * NM_PER_MM / (lambda0 * lambda0)).exp()
}

/// Path difference at which the envelope falls to 1/e (mm).
pub fn coherence_length_mm(lambda0: f64, fwhm: f64) -> f64 {
    lambda0 * lambda0 / (PI * fwhm) / NM_PER_MM
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferogramFit {
    pub fwhm: f64,
    pub std_error: f64,
    pub visibility: f64,
    pub lambda0: f64,
    pub q: f64,
    pub reduced_chi2: f64,
}

struct EnvelopeProblem<'a> {
    ifg: &'a Interferogram,
    /// `π·delay/λ0²` in 1/nm.
    scale: Vec<f64>,
}

impl Problem for EnvelopeProblem<'_> {
    fn n_params(&self) -> usize {
        2
    }
    fn n_residuals(&self) -> usize {
        self.scale.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (k, (&s, &c)) in self.scale.iter().zip(&self.ifg.contrast).enumerate() {
            let m = p[0] * (-p[1] * s).exp();
            // multiplicative noise: relative residuals
            out[k] = (c - m) / m;
        }
    }
    fn param_name(&self, i: usize) -> String {
        ["visibility", "fwhm"][i].into()
    }
    fn project(&self, p: &mut [f64]) {
        p[0] = p[0].clamp(1e-12, 1.0);
        p[1] = p[1].max(0.0);
    }
}

pub fn fit_interferogram(ifg: &Interferogram, lambda0: f64) -> Result<InterferogramFit> {
    if ifg.delay.len() < 8 {
        return Err(invalid("interferogram fit needs at least 8 points"));
    }
    if !(lambda0 > 0.0) {
        return Err(invalid("lambda0 must be positive"));
    }
    let scale: Vec<f64> = ifg.delay.iter().map(|&d| PI * d * NM_PER_MM / (lambda0 * lambda0)).collect();
    // log-linear start on the positive points
    let pts: Vec<(f64, f64)> = scale
        .iter()
        .zip(&ifg.contrast)
        .filter(|(_, &c)| c > 0.0)
        .map(|(&s, &c)| (s, c.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::NoDecay("fewer than 3 positive contrast values".into()));
    }
    let (slope, intercept) = line_fit(&pts);
    let span = scale[scale.len() - 1] - scale[0];
    // an envelope that drops by less than 1% over the whole scan carries no
    // linewidth information
    if !(-slope * span > 0.01) {
        return Err(Error::NoDecay(format!(
            "contrast does not decay over the scanned delays (log slope {slope:.3e})"
        )));
    }
    let problem = EnvelopeProblem { ifg, scale };
    let rep = lsq::minimize(&problem, &[intercept.exp().min(1.0), -slope], &LmOptions::default())?;
    let fwhm = rep.params[1];
    if !(fwhm > 0.0) {
        return Err(Error::NoDecay("fitted linewidth is zero".into()));
    }
    if !rep.converged {
        return Err(Error::Numerical("interferogram fit did not converge".into()));
    }
    Ok(InterferogramFit {
        fwhm,
        std_error: rep.std_errors[1],
        visibility: rep.params[0],
        lambda0,
        q: lambda0 / fwhm,
        reduced_chi2: rep.reduced_chi2,
    })
}

/// Least-squares `(slope, intercept)`.
fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LLCurve {
    /// Pump power (µW).
    pub pump_power: Vec<f64>,
    pub output_intensity: Vec<f64>,
    /// Emission linewidth (nm), if measured.
    pub linewidth: Option<Vec<f64>>,
}

impl LLCurve {
    pub fn new(pump_power: Vec<f64>, output_intensity: Vec<f64>, linewidth: Option<Vec<f64>>) -> Result<Self> {
        if pump_power.len() != output_intensity.len() || linewidth.as_ref().is_some_and(|l| l.len() != pump_power.len()) {
            return Err(invalid("L-L columns differ in length"));
        }
        if pump_power.first().is_some_and(|&p| !(p > 0.0)) || pump_power.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("pump powers must be positive and strictly increasing"));
        }
        Ok(Self { pump_power, output_intensity, linewidth })
    }

    /// CSV `power_uW,intensity[,linewidth_nm]`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let (header, mut cols) = read_csv_columns(path, 2, 3)?;
        expect_header(&header, &["power_uW", "intensity", "linewidth_nm"][..header.len()])?;
        let linewidth = (cols.len() == 3).then(|| cols.pop().unwrap());
        let intensity = cols.pop().unwrap();
        Self::new(cols.pop().unwrap(), intensity, linewidth)
    }
}

/// Continuous two-segment line fit with its breakpoint on a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    pub breakpoint: f64,
    pub slope_below: f64,
    pub slope_above: f64,
    pub slope_below_err: f64,
    pub slope_above_err: f64,
    pub sse: f64,
}

/// Exhaustive search over interior samples; each segment keeps at least
/// three points, the breakpoint counting for both.
pub fn fit_hinge(x: &[f64], y: &[f64]) -> Result<Hinge> {
    let n = x.len();
    if n != y.len() {
        return Err(invalid("hinge fit: length mismatch"));
    }
    if n < 5 {
        return Err(invalid(format!("two segments of 3 points need at least 5 samples, got {n}")));
    }
    let mut best: Option<Hinge> = None;
    for b in 2..=n - 3 {
        let xb = x[b];
        let design = DMatrix::from_fn(n, 3, |k, c| match c {
            0 => 1.0,
            1 => (x[k] - xb).min(0.0),
            _ => (x[k] - xb).max(0.0),
        });
        let rhs = DVector::from_column_slice(y);
        let normal = design.transpose() * &design;
        let Some(inv) = normal.clone().try_inverse() else { continue };
        let coef = &inv * design.transpose() * &rhs;
        let resid = &rhs - &design * &coef;
        let sse = resid.norm_squared();
        let s2 = if n > 3 { sse / (n - 3) as f64 } else { 0.0 };
        let h = Hinge {
            breakpoint: xb,
            slope_below: coef[1],
            slope_above: coef[2],
            slope_below_err: (s2 * inv[(1, 1)]).sqrt(),
            slope_above_err: (s2 * inv[(2, 2)]).sqrt(),
            sse,
        };
        if best.is_none_or(|bst| sse < bst.sse) {
            best = Some(h);
        }
    }
    best.ok_or_else(|| Error::Numerical("no admissible breakpoint".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// Breakpoint of the log–log L-L fit (µW).
    pub threshold_power: f64,
    pub slope_below: f64,
    pub slope_above: f64,
    pub slope_below_err: f64,
    pub slope_above_err: f64,
    /// Larger over smaller slope magnitude.
    pub slope_ratio: f64,
    /// False when the slope ratio stays below 1.5.
    pub threshold_detected: bool,
    /// Breakpoint of log(linewidth) against power (µW).
    pub linewidth_kink: Option<f64>,
}

pub const MIN_SLOPE_RATIO: f64 = 1.5;

pub fn threshold_analysis(ll: &LLCurve) -> Result<ThresholdReport> {
    if ll.pump_power.len() < 6 {
        return Err(invalid("threshold analysis needs at least 6 points"));
    }
    if ll.output_intensity.iter().any(|&v| !(v > 0.0)) {
        return Err(invalid("output intensities must be positive for a log–log fit"));
    }
    let lx: Vec<f64> = ll.pump_power.iter().map(|p| p.ln()).collect();
    let ly: Vec<f64> = ll.output_intensity.iter().map(|v| v.ln()).collect();
    let h = fit_hinge(&lx, &ly)?;
    let (a, b) = (h.slope_below.abs(), h.slope_above.abs());
    let slope_ratio = if a.min(b) > 0.0 { a.max(b) / a.min(b) } else { f64::INFINITY };
    let linewidth_kink = match &ll.linewidth {
        Some(lw) => {
            if lw.iter().any(|&v| !(v > 0.0)) {
                return Err(invalid("linewidths must be positive"));
            }
            let lly: Vec<f64> = lw.iter().map(|v| v.ln()).collect();
            Some(fit_hinge(&ll.pump_power, &lly)?.breakpoint)
        }
        None => None,
    };
    Ok(ThresholdReport {
        threshold_power: h.breakpoint.exp(),
        slope_below: h.slope_below,
        slope_above: h.slope_above,
        slope_below_err: h.slope_below_err,
        slope_above_err: h.slope_above_err,
        slope_ratio,
        threshold_detected: slope_ratio >= MIN_SLOPE_RATIO,
        linewidth_kink,
    })
}
