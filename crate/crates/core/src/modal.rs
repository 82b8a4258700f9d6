//! Resonance extraction from ringdowns and mode metrics from accumulated
//! fields.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fdtd::TimeSeries;
use crate::geometry::{CellWindow, PermittivityGrid};
use crate::pencil::{matrix_pencil, Exponential};

/// Relative singular-value cut for the model order.
pub const SV_THRESHOLD: f64 = 1e-8;
/// Decimated samples handed to the pencil; longer records are truncated.
const PENCIL_SAMPLES: usize = 600;
/// Direct (unfiltered) pencil input limit.
const DIRECT_SAMPLES: usize = 1000;
/// Stopband attenuation of the band-selection filter (dB).
const STOPBAND_DB: f64 = 160.0;

/// A damped oscillation `A·e^{-γt}·cos(2πft + φ)` with `Q = πf/γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    /// Normalized frequency (`a/λ`).
    pub frequency: f64,
    pub wavelength_nm: f64,
    pub q: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceSearch {
    /// Normalized frequency interval searched.
    pub band: (f64, f64),
    pub max_modes: usize,
    /// Period the normalized frequency refers to (nm).
    pub period_nm: f64,
}

impl Default for ResonanceSearch {
    fn default() -> Self {
        Self {
            band: (0.2, 0.35),
            max_modes: 4,
            period_nm: 410.0,
        }
    }
}

pub fn q_from_linewidth(lambda0: f64, fwhm: f64) -> Result<f64> {
    if !(lambda0 > 0.0 && fwhm > 0.0 && lambda0.is_finite()) {
        return Err(invalid(format!("wavelength and linewidth must be positive, got ({lambda0}, {fwhm})")));
    }
    if fwhm >= lambda0 {
        return Err(invalid(format!("linewidth {fwhm} must be smaller than the wavelength {lambda0}")));
    }
    Ok(lambda0 / fwhm)
}

/// Harmonic inversion of the post-turn-off part of one probe record.
/// Phases refer to the first post-turn-off sample.
pub fn find_resonances(series: &TimeSeries, probe: usize, search: &ResonanceSearch) -> Result<Vec<Resonance>> {
    if probe >= series.samples.len() {
        return Err(invalid(format!("probe {probe} not in series with {} probes", series.samples.len())));
    }
    find_resonances_in(series.post_turn_off(probe), series.dt, search)
}

/// Harmonic inversion of a uniformly sampled real signal, `t = k·dt`.
///
/// The band is shifted to zero frequency, low-pass filtered and decimated
/// before the pencil; filtering maps each exponential onto an exponential
/// with the same pole, so the estimate stays exact on noiseless input and
/// the filter response is divided back out of the amplitudes.
pub fn find_resonances_in(samples: &[f64], dt: f64, search: &ResonanceSearch) -> Result<Vec<Resonance>> {
    let (lo, hi) = search.band;
    let nyquist = 0.5 / dt;
    if !(dt > 0.0) {
        return Err(invalid("sample spacing must be positive"));
    }
    if !(lo > 0.0 && hi > lo && hi < nyquist) {
        return Err(invalid(format!("band ({lo}, {hi}) must lie inside (0, {nyquist})")));
    }
    if search.max_modes == 0 {
        return Err(invalid("max_modes must be at least 1"));
    }
    if samples.len() < 4 * search.max_modes || samples.len() < 8 {
        return Err(invalid(format!(
            "{} samples are too few for {} modes",
            samples.len(),
            search.max_modes
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite sample in signal".into()));
    }
    if !(search.period_nm > 0.0) {
        return Err(invalid("period_nm must be positive"));
    }

    let fs = 1.0 / dt;
    let width = hi - lo;
    let decim = (fs / (2.5 * width)).floor() as usize;
    let center = 0.5 * (lo + hi);
    let filt = (decim >= 2).then(|| BandFilter::new(center * dt, width * dt, decim));
    let usable = filt
        .as_ref()
        .map_or(0, |f| samples.len().saturating_sub(f.taps.len() - 1).div_ceil(decim));

    let mut found: Vec<(f64, f64, Complex64)> = Vec::new(); // (f, γ, complex amplitude)
    if let (Some(f), true) = (filt.as_ref(), usable >= 4 * search.max_modes.max(4)) {
        let y = f.apply(samples, PENCIL_SAMPLES);
        for Exponential { pole, amplitude } in matrix_pencil(&y, y.len(), SV_THRESHOLD)? {
            if let Some((w, nu)) = f.root(pole) {
                let freq = (center * dt + nu) * fs;
                let gamma = -w.norm().ln() * fs;
                let a = amplitude / (f.response(w) * w.powi(f.first_output() as i32));
                found.push((freq, gamma, a));
            }
        }
    } else {
        let n = samples.len().min(DIRECT_SAMPLES);
        let x: Vec<Complex64> = samples[..n].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for Exponential { pole, amplitude } in matrix_pencil(&x, n, SV_THRESHOLD)? {
            let freq = pole.arg() / (2.0 * PI) * fs;
            let gamma = -pole.norm().ln() * fs;
            found.push((freq, gamma, amplitude));
        }
    }

    let mut out: Vec<Resonance> = found
        .into_iter()
        .filter(|&(f, g, a)| f >= lo && f <= hi && g > 0.0 && a.norm() > 0.0)
        .map(|(f, g, a)| Resonance {
            frequency: f,
            wavelength_nm: search.period_nm / f,
            q: PI * f / g,
            amplitude: 2.0 * a.norm(),
            phase: a.arg(),
        })
        .collect();
    out.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    out.truncate(search.max_modes);
    Ok(out)
}

/// Demodulating Kaiser-windowed low-pass FIR followed by decimation.
struct BandFilter {
    /// Band center in cycles per sample.
    shift: f64,
    taps: Vec<f64>,
    decim: usize,
}

impl BandFilter {
    /// `center`, `width` in cycles/sample. Passband ±width/2, stopband
    /// from the decimated Nyquist frequency.
    fn new(center: f64, width: f64, decim: usize) -> Self {
        let pass = 0.5 * width;
        let stop = 0.5 / decim as f64;
        let transition = stop - pass;
        let cutoff = 0.5 * (pass + stop);
        let beta = 0.1102 * (STOPBAND_DB - 8.7);
        let mut len = ((STOPBAND_DB - 8.0) / (2.285 * 2.0 * PI * transition)).ceil() as usize + 1;
        len |= 1;
        let mid = (len - 1) as f64 / 2.0;
        let i0b = bessel_i0(beta);
        let mut taps: Vec<f64> = (0..len)
            .map(|m| {
                let k = m as f64 - mid;
                let r = k / mid;
                let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
                let sinc = if k == 0.0 { 1.0 } else { (2.0 * PI * cutoff * k).sin() / (2.0 * PI * cutoff * k) };
                2.0 * cutoff * sinc * w
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Self { shift: center, taps, decim }
    }

    fn first_output(&self) -> usize {
        self.taps.len() - 1
    }

    /// Filtered, decimated samples at `n = L-1, L-1+D, …`.
    fn apply(&self, x: &[f64], max_out: usize) -> Vec<Complex64> {
        let n0 = self.first_output();
        let mut out = Vec::new();
        let mut n = n0;
        while n < x.len() && out.len() < max_out {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, &h) in self.taps.iter().enumerate() {
                let k = n - m;
                let ph = -2.0 * PI * self.shift * k as f64;
                acc += h * x[k] * Complex64::new(ph.cos(), ph.sin());
            }
            out.push(acc);
            n += self.decim;
        }
        out
    }

    /// `Σ h[m] w^{-m}`.
    fn response(&self, w: Complex64) -> Complex64 {
        let inv = w.inv();
        let mut p = Complex64::new(1.0, 0.0);
        let mut s = Complex64::new(0.0, 0.0);
        for &h in &self.taps {
            s += h * p;
            p *= inv;
        }
        s
    }

    /// Undo decimation: the D-th root of `pole` nearest zero frequency,
    /// with its frequency offset in cycles/sample.
    fn root(&self, pole: Complex64) -> Option<(Complex64, f64)> {
        if pole.norm() == 0.0 {
            return None;
        }
        let d = self.decim as f64;
        let nu = pole.arg() / (2.0 * PI * d);
        let w = Complex64::from_polar(pole.norm().powf(1.0 / d), 2.0 * PI * nu);
        Some((w, nu))
    }
}

fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Cross-check estimator: Lorentzian fit to the zero-padded power
/// spectrum peak inside `band`. Returns `(frequency, Q)`. Meaningful only
/// if the record has decayed to negligible amplitude.
pub fn q_from_power_spectrum(samples: &[f64], dt: f64, band: (f64, f64)) -> Result<(f64, f64)> {
    if samples.len() < 16 {
        return Err(invalid("power spectrum needs at least 16 samples"));
    }
    let n = (samples.len() * 8).next_power_of_two();
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    let k_lo = (band.0 / df).ceil().max(1.0) as usize;
    let k_hi = ((band.1 / df).floor() as usize).min(n / 2 - 1);
    if k_hi <= k_lo + 4 {
        return Err(invalid("band too narrow for the spectral resolution"));
    }
    let power: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm_sqr()).collect();
    let peak = (k_lo..=k_hi)
        .max_by(|&a, &b| power[a].total_cmp(&power[b]))
        .unwrap();
    if power[peak] == 0.0 {
        return Err(Error::NoPeak("zero power in band".into()));
    }
    let half = power[peak] / 2.0;
    let mut left = peak;
    while left > 0 && power[left] > half {
        left -= 1;
    }
    let mut right = peak;
    while right + 1 < power.len() && power[right] > half {
        right += 1;
    }
    let hw = ((right - left) / 2).max(2);
    let a = peak.saturating_sub(4 * hw).max(1);
    let b = (peak + 4 * hw).min(power.len() - 1);
    let f: Vec<f64> = (a..=b).map(|k| k as f64 * df).collect();
    let p: Vec<f64> = power[a..=b].iter().map(|v| v / power[peak]).collect();
    let fit = crate::spectra::fit_lorentzian_curve(&f, &p)?;
    Ok((fit.center, fit.center / fit.fwhm))
}

/// Complex in-plane field at cell centers, with the grid it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub origin: (f64, f64),
    pub pml_cells: usize,
    pub slab_window: Option<CellWindow>,
    /// Dielectric fraction of each cell, 0 in air and 1 in the slab.
    pub slab_fraction: Vec<f64>,
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
}

impl ModeField {
    /// From accumulators on the staggered Yee locations: Ex averaged along
    /// y and Ey along x onto cell centers (wall values are zero).
    pub fn from_staggered(grid: &PermittivityGrid, ex: &[Complex64], ey: &[Complex64]) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let zero = Complex64::new(0.0, 0.0);
        let mut cx = vec![zero; nx * ny];
        let mut cy = vec![zero; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let up = if j + 1 < ny { ex[k + nx] } else { zero };
                let right = if i + 1 < nx { ey[k + 1] } else { zero };
                cx[k] = 0.5 * (ex[k] + up);
                cy[k] = 0.5 * (ey[k] + right);
            }
        }
        Self::from_cell_centers(grid, cx, cy)
    }

    pub fn from_cell_centers(grid: &PermittivityGrid, ex: Vec<Complex64>, ey: Vec<Complex64>) -> Self {
        assert_eq!(ex.len(), grid.nx * grid.ny);
        assert_eq!(ey.len(), grid.nx * grid.ny);
        let e_max = grid.eps_max();
        let slab_fraction = grid
            .eps
            .iter()
            .map(|&e| if e_max > 1.0 { ((e - 1.0) / (e_max - 1.0)).clamp(0.0, 1.0) } else { 1.0 })
            .collect();
        Self {
            nx: grid.nx,
            ny: grid.ny,
            dx: grid.dx,
            origin: grid.origin,
            pml_cells: grid.pml_cells,
            slab_window: grid.slab_window,
            slab_fraction,
            ex,
            ey,
        }
    }

    pub fn intensity(&self, k: usize) -> f64 {
        self.ex[k].norm_sqr() + self.ey[k].norm_sqr()
    }

    fn interior(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let p = self.pml_cells;
        (p..self.ny - p).flat_map(move |j| (p..self.nx - p).map(move |i| (i, j)))
    }

    /// Writes `<stem>_{ex,ey}_{re,im}.pgr` (with sidecars) into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        for (name, comp) in [("ex", &self.ex), ("ey", &self.ey)] {
            for (part, f) in [("re", (|c: &Complex64| c.re) as fn(&Complex64) -> f64), ("im", |c| c.im)] {
                let grid = PermittivityGrid {
                    nx: self.nx,
                    ny: self.ny,
                    dx: self.dx,
                    origin: self.origin,
                    n_slab: 1.0,
                    eps: comp.iter().map(f).collect(),
                    pml_cells: self.pml_cells,
                    slab_window: self.slab_window,
                };
                grid.save(&dir.join(format!("{stem}_{name}_{part}.pgr")))?;
            }
        }
        Ok(())
    }
}

impl ModeField {
    /// Reads what [`ModeField::save`] wrote; `grid` is the permittivity
    /// grid the mode was computed on.
    pub fn load(dir: &Path, stem: &str, grid: &PermittivityGrid) -> Result<Self> {
        let mut parts = Vec::with_capacity(4);
        for name in ["ex_re", "ex_im", "ey_re", "ey_im"] {
            let g = PermittivityGrid::load(&dir.join(format!("{stem}_{name}.pgr")))?;
            if (g.nx, g.ny) != (grid.nx, grid.ny) {
                return Err(invalid(format!(
                    "mode component {name} is {}×{}, permittivity grid is {}×{}",
                    g.nx, g.ny, grid.nx, grid.ny
                )));
            }
            parts.push(g.eps);
        }
        let join = |re: &[f64], im: &[f64]| re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        Ok(Self::from_cell_centers(grid, join(&parts[0], &parts[1]), join(&parts[2], &parts[3])))
    }
}

/// The resonance with the largest amplitude at the end of the record,
/// over all probes, with its probe index. Heavily damped poles can carry
/// large initial amplitudes; what is left ringing at the end is the mode.
pub fn late_dominant(series: &TimeSeries, search: &ResonanceSearch) -> Result<Option<(usize, Resonance)>> {
    if series.samples.is_empty() {
        return Ok(None);
    }
    let t_end = series.post_turn_off(0).len() as f64 * series.dt;
    let mut best: Option<(f64, usize, Resonance)> = None;
    for p in 0..series.samples.len() {
        for r in find_resonances(series, p, search)? {
            let late = r.amplitude * (-PI * r.frequency / r.q * t_end).exp();
            if best.as_ref().is_none_or(|b| late > b.0) {
                best = Some((late, p, r));
            }
        }
    }
    Ok(best.map(|(_, p, r)| (p, r)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub v_eff_normalized: f64,
    pub v_eff_physical: f64,
    pub eta_spatial: f64,
    pub max_position: (usize, usize),
}

/// `V = h_eff·Σ ε|E|² dx² / max ε|E|²` over the non-absorbing region, in
/// nm³ and in units of `(λ/n)³`; the spatial factor comes along.
pub fn mode_volume(
    mode: &ModeField,
    eps: &PermittivityGrid,
    h_eff: f64,
    lambda0: f64,
    n_slab: f64,
) -> Result<ModeMetrics> {
    if eps.nx != mode.nx || eps.ny != mode.ny {
        return Err(invalid(format!(
            "mode field {}×{} and permittivity grid {}×{} differ",
            mode.nx, mode.ny, eps.nx, eps.ny
        )));
    }
    if !(h_eff > 0.0 && lambda0 > 0.0 && n_slab >= 1.0) {
        return Err(invalid("h_eff, lambda0 must be positive and n_slab ≥ 1"));
    }
    let mut sum = 0.0;
    let mut best = (0.0, (0, 0));
    for (i, j) in mode.interior() {
        let k = j * mode.nx + i;
        let u = eps.eps[k] * mode.intensity(k);
        sum += u;
        if u > best.0 {
            best = (u, (i, j));
        }
    }
    if !(best.0 > 0.0) {
        return Err(Error::ZeroField);
    }
    if !sum.is_finite() {
        return Err(Error::Numerical("non-finite mode field".into()));
    }
    let v_eff_physical = h_eff * sum * mode.dx * mode.dx / best.0;
    Ok(ModeMetrics {
        v_eff_normalized: v_eff_physical / (lambda0 / n_slab).powi(3),
        v_eff_physical,
        eta_spatial: spatial_factor(mode)?,
        max_position: best.1,
    })
}

/// `Σ|E|⁴ / (max|E|² · Σ|E|²)` over the slab: cells inside the slab
/// window, outside the absorber, weighted by their dielectric fraction
/// (the emitters sit in the membrane material, not in the holes).
pub fn spatial_factor(mode: &ModeField) -> Result<f64> {
    let window = mode.slab_window;
    let mut s2 = 0.0;
    let mut s4 = 0.0;
    let mut max = 0.0f64;
    for (i, j) in mode.interior() {
        if window.is_some_and(|w| !w.contains(i, j)) {
            continue;
        }
        let k = j * mode.nx + i;
        let w = mode.slab_fraction[k];
        if w <= 0.0 {
            continue;
        }
        let e2 = mode.intensity(k);
        s2 += w * e2;
        s4 += w * e2 * e2;
        max = max.max(e2);
    }
    if !(max > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok(s4 / (max * s2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn damped(terms: &[(f64, f64, f64, f64)], dt: f64, n: usize) -> Vec<f64> {
        // (f, Q, A, φ)
        (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                terms
                    .iter()
                    .map(|&(f, q, a, p)| a * (-PI * f / q * t).exp() * (2.0 * PI * f * t + p).cos())
                    .sum()
            })
            .collect()
    }

    fn search(band: (f64, f64), m: usize) -> ResonanceSearch {
        ResonanceSearch { band, max_modes: m, period_nm: 410.0 }
    }

    #[test]
    fn single_damped_sinusoid() {
        let x = damped(&[(0.26, 1000.0, 1.0, 0.3)], 0.03125, 8192);
        let r = find_resonances_in(&x, 0.03125, &search((0.2, 0.32), 3)).unwrap();
        assert_eq!(r.len(), 1, "{r:?}");
        assert!((r[0].frequency / 0.26 - 1.0).abs() < 1e-6);
        assert!((r[0].q / 1000.0 - 1.0).abs() < 1e-3);
        assert!((r[0].amplitude - 1.0).abs() < 1e-6);
        assert!((r[0].phase - 0.3).abs() < 1e-6);
        assert!((r[0].wavelength_nm - 410.0 / 0.26).abs() < 1e-3);
    }

    #[test]
    fn two_sinusoids_five_linewidths_apart() {
        let (f1, q) = (0.26, 2000.0);
        let f2 = f1 + 5.0 * f1 / q;
        let x = damped(&[(f1, q, 1.0, 0.0), (f2, q, 0.6, 1.0)], 0.03125, 8192);
        let r = find_resonances_in(&x, 0.03125, &search((0.2, 0.32), 4)).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].amplitude - 1.0).abs() < 0.01 && (r[1].amplitude - 0.6).abs() < 0.006);
        assert!((r[0].frequency - f1).abs() < 1e-9 && (r[1].frequency - f2).abs() < 1e-9);
    }

    #[test]
    fn short_signal_uses_direct_pencil() {
        let dt = 0.5;
        let x = damped(&[(0.3, 50.0, 2.0, -0.4)], dt, 200);
        let r = find_resonances_in(&x, dt, &search((0.1, 0.9), 2)).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].frequency - 0.3).abs() < 1e-10);
        assert!((r[0].q - 50.0).abs() < 1e-7);
        assert!((r[0].amplitude - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_signal_and_bad_inputs() {
        let z = vec![0.0; 500];
        assert!(find_resonances_in(&z, 0.03, &search((0.2, 0.3), 2)).unwrap().is_empty());
        assert!(find_resonances_in(&z[..6], 0.03, &search((0.2, 0.3), 2)).is_err());
        assert!(find_resonances_in(&z, 0.03, &search((0.2, 17.0), 2)).is_err());
        assert!(find_resonances_in(&z, 0.03, &search((0.3, 0.2), 2)).is_err());
    }

    #[test]
    fn out_of_band_modes_ignored() {
        let x = damped(&[(0.26, 500.0, 1.0, 0.0), (0.4, 500.0, 5.0, 0.0)], 0.03125, 6000);
        let r = find_resonances_in(&x, 0.03125, &search((0.22, 0.3), 2)).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].frequency - 0.26).abs() < 1e-9);
    }

    #[test]
    fn linewidth_examples() {
        assert!((q_from_linewidth(1538.0, 0.03495).unwrap() - 44006.0).abs() < 1.0);
        assert!((q_from_linewidth(1538.0, 3.0).unwrap() - 512.67).abs() < 0.01);
        assert_eq!(q_from_linewidth(1538.0, 1538.0 / 44000.0).unwrap(), 44000.0);
        assert!(q_from_linewidth(1538.0, 1538.0).is_err());
        assert!(q_from_linewidth(1538.0, 0.0).is_err());
    }

    #[test]
    fn power_spectrum_q_matches_pencil() {
        for &q in &[100.0, 1000.0, 10000.0] {
            let f = 0.26;
            let dt = 1.0 / (4.3 * f);
            let n = (25.0 * q / (PI * f) / dt) as usize;
            let x = damped(&[(f, q, 1.0, 0.2)], dt, n);
            let band = (0.2, 0.32);
            let (_, q_fft) = q_from_power_spectrum(&x, dt, band).unwrap();
            let r = find_resonances_in(&x, dt, &search(band, 2)).unwrap();
            assert!((q_fft / r[0].q - 1.0).abs() < 0.01, "Q {q}: fft {q_fft} pencil {}", r[0].q);
        }
    }

    fn flat_grid(n: usize, dx: f64) -> PermittivityGrid {
        PermittivityGrid::uniform(n, n, dx, 1.0)
    }

    fn gaussian_mode(grid: &PermittivityGrid, w: f64, scale: Complex64) -> ModeField {
        let mut ex = vec![Complex64::new(0.0, 0.0); grid.nx * grid.ny];
        let mut ey = ex.clone();
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                let a = (-(x * x + y * y) / (2.0 * w * w)).exp();
                ex[j * grid.nx + i] = scale * 0.6 * a;
                ey[j * grid.nx + i] = scale * Complex64::new(0.0, 0.8) * a;
            }
        }
        ModeField::from_cell_centers(grid, ex, ey)
    }

    #[test]
    fn gaussian_mode_volume_and_spatial_factor() {
        let w = 20.0;
        let g = flat_grid(201, 1.0);
        let mode = gaussian_mode(&g, w, Complex64::new(1.0, 0.0));
        let m = mode_volume(&mode, &g, 250.0, 1538.0, 1.0).unwrap();
        assert!((m.v_eff_physical / (PI * w * w * 250.0) - 1.0).abs() < 0.01);
        assert!((m.eta_spatial - 0.5).abs() < 0.005);
        assert_eq!(m.max_position, (100, 100));
    }

    #[test]
    fn flat_field_identities() {
        let mut g = flat_grid(30, 2.0);
        g.eps.iter_mut().for_each(|e| *e = 4.0);
        g.n_slab = 2.0;
        let c = vec![Complex64::new(0.3, -0.4); 900];
        let mode = ModeField::from_cell_centers(&g, c.clone(), c);
        let m = mode_volume(&mode, &g, 100.0, 1000.0, 2.0).unwrap();
        assert!((m.v_eff_physical - 900.0 * 4.0 * 100.0).abs() < 1e-6);
        assert_eq!(m.eta_spatial, 1.0);
    }

    #[test]
    fn zero_field_rejected() {
        let g = flat_grid(10, 1.0);
        let z = vec![Complex64::new(0.0, 0.0); 100];
        let mode = ModeField::from_cell_centers(&g, z.clone(), z);
        assert!(matches!(spatial_factor(&mode), Err(Error::ZeroField)));
        assert!(matches!(mode_volume(&mode, &g, 1.0, 1.0, 1.0), Err(Error::ZeroField)));
    }

    #[test]
    fn staggered_interpolation() {
        let g = flat_grid(4, 1.0);
        let ex: Vec<Complex64> = (0..16).map(|k| Complex64::new(k as f64, 0.0)).collect();
        let ey: Vec<Complex64> = (0..16).map(|k| Complex64::new(0.0, k as f64)).collect();
        let m = ModeField::from_staggered(&g, &ex, &ey);
        assert_eq!(m.ex[5], Complex64::new(0.5 * (5.0 + 9.0), 0.0));
        assert_eq!(m.ex[13], Complex64::new(0.5 * 13.0, 0.0));
        assert_eq!(m.ey[5], Complex64::new(0.0, 0.5 * (5.0 + 6.0)));
        assert_eq!(m.ey[7], Complex64::new(0.0, 0.5 * 7.0));
    }

    #[test]
    fn mode_field_export() {
        let dir = tempfile::tempdir().unwrap();
        let g = flat_grid(6, 1.0);
        let mode = gaussian_mode(&g, 2.0, Complex64::new(1.0, 1.0));
        mode.save(dir.path(), "mode").unwrap();
        let back = PermittivityGrid::load(&dir.path().join("mode_ey_im.pgr")).unwrap();
        let want: Vec<f64> = mode.ey.iter().map(|c| c.im).collect();
        assert_eq!(back.eps, want);
        assert_eq!(ModeField::load(dir.path(), "mode", &g).unwrap(), mode);
        assert!(ModeField::load(dir.path(), "mode", &flat_grid(5, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn metrics_scale_invariant(re in -5.0f64..5.0, im in -5.0f64..5.0, h in 1.0f64..1000.0) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let g = flat_grid(41, 1.0);
            let a = gaussian_mode(&g, 5.0, Complex64::new(1.0, 0.0));
            let b = gaussian_mode(&g, 5.0, Complex64::new(re, im));
            let ma = mode_volume(&a, &g, h, 1000.0, 1.0).unwrap();
            let mb = mode_volume(&b, &g, h, 1000.0, 1.0).unwrap();
            let m2 = mode_volume(&b, &g, 2.0 * h, 1000.0, 1.0).unwrap();
            prop_assert!((ma.eta_spatial / mb.eta_spatial - 1.0).abs() < 1e-12);
            prop_assert!((ma.v_eff_physical / mb.v_eff_physical - 1.0).abs() < 1e-12);
            prop_assert!((m2.v_eff_physical / mb.v_eff_physical - 2.0).abs() < 1e-12);
        }
    }
}
