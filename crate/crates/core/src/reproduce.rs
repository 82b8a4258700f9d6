//! End-to-end checks of the whole chain against known numbers and
//! independent oracles, one report per check. Used by the acceptance test
//! target and by the `reproduce-paper` command.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::exec::Backend;
use crate::fdtd::{self, Boundary, Component, DipoleSource, Probe, SimulationConfig, Solver};
use crate::geometry::{build_lattice, rasterize_with, CavityDesign, PermittivityGrid, RasterOptions};
use crate::modal::{self, ModeMetrics, Resonance, ResonanceSearch};
use crate::purcell;
use crate::spectra::{self, Interferogram, LLCurve};
use crate::trpl::{self, DecayComponent, DecayModelParams, Lifetime, SigmaMode, SynthesisOptions};

pub mod oracle;

/// Reference numbers quoted by the experiment.
pub mod reference {
    pub const Q_CAV: f64 = 44_000.0;
    pub const LAMBDA_NM: f64 = 1538.0;
    pub const V_EFF: f64 = 1.2;
    pub const ETA_SPATIAL: f64 = 0.17;
    pub const DIPOLE_FACTOR: f64 = 0.5;
    pub const F_MEASURED: f64 = 2.7;
    pub const DENOMINATOR: f64 = 186.0;
    pub const Q_EM: f64 = 500.0;
    pub const LINEWIDTH_EM_NM: f64 = 3.0;
    pub const THRESHOLD_UW: f64 = 385.0;
    /// (τ, ±) in ns: reference long, cavity long, reference fast, cavity fast.
    pub const TAU_REF_LONG: (f64, f64) = (2.14, 0.28);
    pub const TAU_CAV_LONG: (f64, f64) = (0.77, 0.06);
    pub const TAU_REF_FAST: (f64, f64) = (0.20, 0.02);
    pub const TAU_CAV_FAST: (f64, f64) = (0.07, 0.03);
    pub const RATIO_LONG: f64 = 2.8;
    pub const RATIO_FAST: f64 = 2.6;
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub summary: String,
    pub details: Vec<String>,
    /// Named results, for the comparison table.
    pub values: Vec<(String, f64)>,
    /// Wall time; left out of serialized reports to keep them reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.summary,
            self.seconds
        )
    }
}

struct Checks {
    ok: bool,
    details: Vec<String>,
    values: Vec<(String, f64)>,
}

impl Checks {
    fn new() -> Self {
        Self { ok: true, details: Vec::new(), values: Vec::new() }
    }

    fn value(&mut self, name: &str, v: f64) {
        self.values.push((name.into(), v));
    }

    fn check(&mut self, pass: bool, what: impl Into<String>) {
        let what = what.into();
        self.details.push(format!("{} {what}", if pass { "ok  " } else { "FAIL" }));
        self.ok &= pass;
    }

    fn note(&mut self, what: impl Into<String>) {
        self.details.push(format!("     {}", what.into()));
    }

    fn finish(self, id: u32, title: &str, summary: String, start: Instant) -> CriterionReport {
        CriterionReport {
            id,
            title: title.into(),
            passed: self.ok,
            summary,
            details: self.details,
            values: self.values,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// 1: the ensemble enhancement chain and its emergent denominator.
pub fn purcell_closure() -> Result<CriterionReport> {
    use reference::*;
    let start = Instant::now();
    let mut c = Checks::new();
    let f_p = purcell::purcell_max(Q_EM, V_EFF)?;
    let f = purcell::ensemble_enhancement(f_p, DIPOLE_FACTOR, ETA_SPATIAL)?;
    let d = purcell::enhancement_denominator(V_EFF, DIPOLE_FACTOR, ETA_SPATIAL)?;
    c.check((2.65..=2.73).contains(&f), format!("F = {f:.4} in [2.65, 2.73] (measured {F_MEASURED})"));
    c.check((185.5..=186.2).contains(&d), format!("denominator {d:.3} in [185.5, 186.2] (quoted {DENOMINATOR})"));
    c.check(rel(f, Q_EM / d) < 1e-12, "F = Q_em / denominator");
    c.note(format!("F_p = {f_p:.3}, F_p/2 = {:.3}", 0.5 * f_p));
    c.value("f_ensemble", f);
    c.value("denominator", d);
    Ok(c.finish(1, "Purcell closure", format!("F = {f:.3}, F = Q_em/{d:.2}"), start))
}

/// 2: Q ↔ linewidth identities.
pub fn q_linewidth_identities() -> Result<CriterionReport> {
    use reference::*;
    let start = Instant::now();
    let mut c = Checks::new();
    let q = modal::q_from_linewidth(LAMBDA_NM, LAMBDA_NM / Q_CAV)?;
    let dl = purcell::emitter_linewidth(Q_EM, LAMBDA_NM)?;
    c.check(q == Q_CAV, format!("q_from_linewidth(1538, 1538/44000) = {q} (exactly 44000)"));
    c.check((dl - 3.076).abs() < 5e-4, format!("emitter linewidth {dl:.4} nm = 3.076 nm"));
    c.check((dl - LINEWIDTH_EM_NM).abs() < 0.5, "of the order of 3 nm");
    c.value("emitter_linewidth_nm", dl);
    Ok(c.finish(2, "Q/linewidth identities", format!("Q = {q}, δλ_em = {dl:.3} nm"), start))
}

/// 3: the convolved decay kernel against adaptive quadrature.
pub fn kernel_oracle(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut c = Checks::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut worst_case = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let sigma = 10f64.powf(rng.random_range(-2.0..-0.7));
        let tau = sigma * 10f64.powf(rng.random_range(-1.0..3.0));
        let t = rng.random_range(-4.0 * sigma..8.0 * tau + 4.0 * sigma);
        let want = oracle::convolved_exponential(t, tau, sigma);
        let got = trpl::kernel(t, tau, sigma);
        let e = rel(got, want);
        if !(e <= worst) {
            worst = e;
            worst_case = (t, tau, sigma);
        }
    }
    c.check(worst < 1e-6, format!("max relative error {worst:.2e} over 1000 cases (< 1e-6)"));
    c.note(format!("worst at t = {:.4}, τ = {:.4}, σ = {:.4}", worst_case.0, worst_case.1, worst_case.2));

    let mut overflow = 0;
    let mut worst_small = 0.0f64;
    let sigma = 0.0495;
    for k in 0..200 {
        let tau = 0.01 * sigma;
        let t = -5.0 * sigma + k as f64 * 0.1 * sigma;
        let v = trpl::kernel(t, tau, sigma);
        if !v.is_finite() || v < 0.0 {
            overflow += 1;
            continue;
        }
        let want = oracle::convolved_exponential(t, tau, sigma);
        if want > 1e-280 {
            worst_small = worst_small.max(rel(v, want));
        }
    }
    c.check(overflow == 0, format!("{overflow} non-finite values at τ/σ = 0.01"));
    c.value("kernel_max_rel_error", worst.max(worst_small));
    c.check(worst_small < 1e-6, format!("max relative error {worst_small:.2e} at τ/σ = 0.01"));
    Ok(c.finish(3, "decay kernel oracle", format!("max rel. error {:.1e}, {overflow} overflows", worst.max(worst_small)), start))
}

fn table_params(tau_fast: f64, tau_long: f64, n_photons: f64, bin: f64) -> DecayModelParams {
    // amplitudes 3:1 (fast:long), scaled so the expected photon total is n
    let unit = 3.0 * tau_fast + tau_long;
    let a = n_photons * bin / unit;
    DecayModelParams {
        components: vec![
            DecayComponent { amplitude: 3.0 * a, lifetime: tau_fast },
            DecayComponent { amplitude: a, lifetime: tau_long },
        ],
        sigma: trpl::DEFAULT_SIGMA_NS,
        baseline: 0.0,
        t0: 0.0,
    }
}

/// 4: synthesize and refit the decay-time table.
pub fn table_round_trip(seed: u64) -> Result<CriterionReport> {
    use reference::*;
    let start = Instant::now();
    let mut c = Checks::new();
    let opts = SynthesisOptions { n_photons: 1_000_000, seed, ..Default::default() };
    let mut fits = Vec::new();
    for (label, fast, long) in [("reference", TAU_REF_FAST.0, TAU_REF_LONG.0), ("cavity", TAU_CAV_FAST.0, TAU_CAV_LONG.0)] {
        let truth = table_params(fast, long, opts.n_photons as f64, opts.bin_width);
        let hist = trpl::simulate_histogram(&truth, &SynthesisOptions { seed: seed + fits.len() as u64, ..opts.clone() })?;
        let fit = trpl::fit_decay(&hist, 2, SigmaMode::Fixed(trpl::DEFAULT_SIGMA_NS), None)?;
        let (tf, tl) = (fit.params.components[0].lifetime, fit.params.components[1].lifetime);
        let (sf, sl) = (fit.std_errors.lifetimes[0], fit.std_errors.lifetimes[1]);
        c.check(rel(tf, fast) < 0.05, format!("{label} fast τ = {tf:.4} ± {sf:.4} ns (truth {fast}, 5%)"));
        c.check(rel(tl, long) < 0.03, format!("{label} long τ = {tl:.4} ± {sl:.4} ns (truth {long}, 3%)"));
        c.note(format!("{label}: reduced χ² {:.3}, {} iterations", fit.reduced_chi2, fit.n_iterations));
        c.value(&format!("tau_fast_{label}"), tf);
        c.value(&format!("tau_long_{label}"), tl);
        fits.push(fit);
    }
    let long = trpl::lifetime_ratio(&fits[0], &fits[1], Lifetime::Long)?;
    let fast = trpl::lifetime_ratio(&fits[0], &fits[1], Lifetime::Fast)?;
    let table_long = trpl::ratio_with_error(TAU_REF_LONG.0, TAU_REF_LONG.1, TAU_CAV_LONG.0, TAU_CAV_LONG.1)?;
    let table_fast = trpl::ratio_with_error(TAU_REF_FAST.0, TAU_REF_FAST.1, TAU_CAV_FAST.0, TAU_CAV_FAST.1)?;
    c.check(
        (table_long.ratio - 2.78).abs() < 0.005 && (table_long.std_error - 0.42).abs() < 0.005,
        format!("table long ratio {:.3} ± {:.3} (2.78 ± 0.42; quoted {RATIO_LONG} ± 0.6)", table_long.ratio, table_long.std_error),
    );
    c.check(
        (long.ratio - 2.78).abs() <= table_long.std_error,
        format!("fitted long ratio {:.3} ± {:.3} within ±{:.2} of 2.78", long.ratio, long.std_error, table_long.std_error),
    );
    c.value("ratio_long", long.ratio);
    c.value("ratio_long_err", long.std_error);
    c.value("ratio_fast", fast.ratio);
    c.note(format!(
        "fitted fast ratio {:.3} ± {:.3}; table fast ratio {:.2} ± {:.2} (quoted {RATIO_FAST} ± 0.3, not reproducible from rounded values)",
        fast.ratio, fast.std_error, table_fast.ratio, table_fast.std_error
    ));
    Ok(c.finish(4, "decay-table round trip", format!("long ratio {:.3} ± {:.3}", long.ratio, long.std_error), start))
}

/// Envelope samples with multiplicative Gaussian noise.
pub fn synthetic_interferogram(fwhm: f64, lambda0: f64, noise: f64, n: usize, max_delay_mm: f64, seed: u64) -> Interferogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delay: Vec<f64> = (0..n).map(|k| max_delay_mm * k as f64 / (n - 1) as f64).collect();
    let contrast = delay
        .iter()
        .map(|&d| {
            let z: f64 = rng.sample(StandardNormal);
            spectra::interferogram_model(d, lambda0, fwhm) * (1.0 + noise * z)
        })
        .collect();
    Interferogram { delay, contrast }
}

/// 5: interferogram envelope round trip.
pub fn interferogram_round_trip(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut c = Checks::new();
    let (l0, fwhm) = (reference::LAMBDA_NM, 0.035);
    let len = spectra::coherence_length_mm(l0, fwhm);
    c.check(rel(len, 21.5) < 0.01, format!("1/e delay {len:.3} mm (21.5 mm ± 1%)"));
    let single = spectra::fit_interferogram(&synthetic_interferogram(fwhm, l0, 0.05, 50, 3.0 * len, seed), l0)?;
    c.check(
        rel(single.fwhm, fwhm) < 0.02,
        format!("5% noise, 50 points: FWHM {:.5} ± {:.5} nm ({:.2}% off, < 2%)", single.fwhm, single.std_error, 100.0 * rel(single.fwhm, fwhm)),
    );
    let errors: Vec<f64> = (1..=200)
        .map(|s| spectra::fit_interferogram(&synthetic_interferogram(fwhm, l0, 0.05, 50, 3.0 * len, seed + s), l0).map(|f| f.fwhm / fwhm - 1.0))
        .collect::<Result<_>>()?;
    let rms = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    let worst = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    c.check(rms < 0.02, format!("rms FWHM error {:.2}% over 200 noise realizations (< 2%)", 100.0 * rms));
    c.note(format!("largest single error {:.2}%", 100.0 * worst));
    let exact = spectra::fit_interferogram(&synthetic_interferogram(0.0349, l0, 0.0, 50, 3.0 * len, seed), l0)?;
    c.check(rel(exact.fwhm, 0.0349) < 1e-9, format!("noiseless round trip FWHM {:.10} nm", exact.fwhm));
    c.note(format!("Q from the 0.0349 nm line: {:.0}", exact.q));
    c.value("coherence_delay_mm", len);
    c.value("q_from_interferogram", exact.q);
    Ok(c.finish(5, "interferogram round trip", format!("1/e delay {len:.2} mm, FWHM error {:.2}%, rms {:.2}%", 100.0 * rel(single.fwhm, fwhm), 100.0 * rms), start))
}

/// L-L curve with slope 1 below and `slope_above` above `threshold`, and
/// a linewidth falling exponentially until the threshold, flat after.
pub fn synthetic_ll(powers: &[f64], threshold: f64, slope_above: f64) -> LLCurve {
    let out = powers
        .iter()
        .map(|&p| if p <= threshold { p } else { threshold * (p / threshold).powf(slope_above) })
        .collect();
    let lw = powers.iter().map(|&p| 2.0 * (-p.min(threshold) / 200.0).exp()).collect();
    LLCurve { pump_power: powers.to_vec(), output_intensity: out, linewidth: Some(lw) }
}

/// 6: threshold and linewidth-kink detection.
pub fn threshold_detection() -> Result<CriterionReport> {
    let start = Instant::now();
    let mut c = Checks::new();
    let th = reference::THRESHOLD_UW;
    let mut worst = 0.0f64;
    let mut first_threshold = f64::NAN;
    for (spacing, offset, slope) in [(35.0, 0.0, 3.0), (20.0, 5.0, 2.0), (50.0, 35.0, 5.0)] {
        let powers: Vec<f64> = (0..40).map(|k| th - offset - 8.0 * spacing + k as f64 * spacing).filter(|&p| p > 0.0).collect();
        let r = spectra::threshold_analysis(&synthetic_ll(&powers, th, slope))?;
        if first_threshold.is_nan() {
            first_threshold = r.threshold_power;
        }
        let e1 = (r.threshold_power - th).abs();
        let e2 = (r.linewidth_kink.unwrap() - th).abs();
        c.check(
            e1 <= spacing && e2 <= spacing && r.threshold_detected,
            format!(
                "spacing {spacing} µW: threshold {:.1} µW, linewidth kink {:.1} µW, slopes {:.2}/{:.2}",
                r.threshold_power,
                r.linewidth_kink.unwrap(),
                r.slope_below,
                r.slope_above
            ),
        );
        worst = worst.max(e1 / spacing).max(e2 / spacing);
    }
    let powers: Vec<f64> = (1..=20).map(|k| 40.0 * k as f64).collect();
    let linear = LLCurve { output_intensity: powers.iter().map(|p| 0.3 * p).collect(), pump_power: powers, linewidth: None };
    let r = spectra::threshold_analysis(&linear)?;
    c.value("threshold_uW", first_threshold);
    c.check(!r.threshold_detected, format!("linear data: slope ratio {:.3}, no threshold flagged", r.slope_ratio));
    Ok(c.finish(6, "threshold detection", format!("worst breakpoint error {worst:.2} sample spacings"), start))
}

/// 8: harmonic inversion on noiseless damped sinusoids of order 1 to 4.
pub fn harmonic_inversion_oracle(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut c = Checks::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 0.03125;
    let band = (0.2, 0.32);
    let (mut worst_f, mut worst_q) = (0.0f64, 0.0f64);
    for order in 1..=4 {
        for _ in 0..5 {
            // well-separated modes inside the band
            let mut modes: Vec<(f64, f64, f64, f64)> = Vec::new();
            while modes.len() < order {
                let f = rng.random_range(0.21..0.31);
                if modes.iter().any(|m| (m.0 - f).abs() < 0.004) {
                    continue;
                }
                let q = 10f64.powf(rng.random_range(2.0..4.0));
                modes.push((f, q, rng.random_range(0.2..2.0), rng.random_range(-PI..PI)));
            }
            let x: Vec<f64> = (0..8192)
                .map(|k| {
                    let t = k as f64 * dt;
                    modes.iter().map(|&(f, q, a, p)| a * (-PI * f / q * t).exp() * (2.0 * PI * f * t + p).cos()).sum()
                })
                .collect();
            let found = modal::find_resonances_in(&x, dt, &ResonanceSearch { band, max_modes: order, period_nm: 410.0 })?;
            let mut matched = found.len() == order;
            for m in &modes {
                match found.iter().min_by(|a, b| (a.frequency - m.0).abs().total_cmp(&(b.frequency - m.0).abs())) {
                    Some(r) => {
                        worst_f = worst_f.max(rel(r.frequency, m.0));
                        worst_q = worst_q.max(rel(r.q, m.1));
                    }
                    None => matched = false,
                }
            }
            if !matched {
                c.check(false, format!("order {order}: found {} modes", found.len()));
            }
        }
    }
    c.value("pencil_max_freq_error", worst_f);
    c.value("pencil_max_q_error", worst_q);
    c.check(worst_f < 1e-9, format!("worst relative frequency error {worst_f:.2e} (< 1e-9)"));
    c.check(worst_q < 1e-3, format!("worst relative Q error {worst_q:.2e} (< 0.1%)"));
    Ok(c.finish(8, "harmonic inversion oracle", format!("f error {worst_f:.1e}, Q error {worst_q:.1e}"), start))
}

/// Knobs for the FDTD checks; the defaults are what the acceptance suite
/// runs.
#[derive(Debug, Clone)]
pub struct FdtdCheckOptions {
    pub design: CavityDesign,
    /// Ascending; the first is the base resolution.
    pub resolutions: Vec<usize>,
    /// Ringdown length at 16 cells per period, scaled with resolution.
    pub steps_at_16: usize,
    pub source_frequency: f64,
    pub source_bandwidth: f64,
    pub band: (f64, f64),
    pub h_eff_nm: f64,
    pub backend: Backend,
}

impl Default for FdtdCheckOptions {
    fn default() -> Self {
        Self {
            design: CavityDesign::default(),
            resolutions: vec![16, 24, 32],
            steps_at_16: 24_000,
            source_frequency: 0.27,
            source_bandwidth: 0.1,
            band: (0.22, 0.32),
            h_eff_nm: 250.0,
            backend: Backend::default(),
        }
    }
}

/// Phase velocity of a y-invariant wave launched by a line of currents,
/// measured between two probes, against the discrete dispersion relation.
pub fn vacuum_dispersion(cells_per_wavelength: f64, courant: f64) -> Result<(f64, f64)> {
    let (nx, ny) = (900, 3);
    let grid = PermittivityGrid::uniform(nx, ny, 1.0, 1.0);
    let mut s = Solver::new(&grid, courant, 0, 1e-6, Backend::Sequential)?;
    let dt = s.dt();
    let omega = oracle::discrete_omega(2.0 * PI / cells_per_wavelength, 0.0, dt);
    // the wall echo co-propagates with the direct wave; an odd number of
    // quarter wavelengths keeps the two from cancelling
    let src = (5.25 * cells_per_wavelength).round() as usize;
    let (p1, p2) = (src + 200, src + 300);
    let period = 2.0 * PI / omega;
    let ramp = 5.0 * period;
    // lock-in window: after the ramped front passed both probes, before
    // the far-wall echo returns
    let t_on = (p2 - src) as f64 * 1.2 + ramp;
    let t_off = (2 * nx - src - p2) as f64 * 0.95;
    let n_periods = ((t_off - t_on) / period).floor();
    let t_end = t_on + n_periods * period;
    let (mut a1, mut a2) = (num_complex::Complex64::new(0.0, 0.0), num_complex::Complex64::new(0.0, 0.0));
    let mut currents = vec![(Component::Ey, src, 0, 0.0); ny];
    let mut step = 0usize;
    loop {
        let t_half = (step as f64 + 0.5) * dt;
        let env = if t_half < ramp { 0.5 * (1.0 - (PI * t_half / ramp).cos()) } else { 1.0 };
        let j = env * (omega * t_half).sin();
        for (row, c) in currents.iter_mut().enumerate() {
            *c = (Component::Ey, src, row, j);
        }
        s.step(&currents);
        step += 1;
        let t = s.time();
        if t > t_end {
            break;
        }
        if t >= t_on {
            let w = num_complex::Complex64::from_polar(dt, -omega * t);
            a1 += w * s.field(Component::Ey, p1, 1);
            a2 += w * s.field(Component::Ey, p2, 1);
        }
    }
    let dphi = (a1 / a2).arg().rem_euclid(2.0 * PI);
    // the probes are several wavelengths apart: add whole turns
    let k_guess = 2.0 * PI / cells_per_wavelength;
    let turns = ((k_guess * (p2 - p1) as f64 - dphi) / (2.0 * PI)).round();
    let k_measured = (dphi + 2.0 * PI * turns) / (p2 - p1) as f64;
    let v_measured = omega / k_measured;
    let k_oracle = oracle::discrete_wavenumber(omega, 0.0, dt);
    Ok((v_measured, omega / k_oracle))
}

/// Relative drift of the leapfrog energy per 1000 steps, reflecting
/// walls, source off.
pub fn energy_drift(backend: Backend) -> Result<f64> {
    let design = CavityDesign { n_rows: 3, n_mirror_periods: 2, ..Default::default() };
    let grid = rasterize_with(&build_lattice(&design)?, &design, &RasterOptions { resolution: 8, pml_cells: 0, ..Default::default() }, backend)?;
    let mut s = Solver::new(&grid, 0.5, 0, 1e-6, backend)?;
    let (i, j) = (grid.nx / 2, grid.ny / 2);
    for n in 0..200 {
        let t = (n as f64 + 0.5) * s.dt();
        let v = (0.3 * t).sin() * (-((t - 30.0) / 10.0).powi(2)).exp();
        s.step(&[(Component::Ey, i, j, v), (Component::Ex, i + 3, j + 2, 0.5 * v)]);
    }
    let e0 = s.conserved_energy();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        for _ in 0..1000 {
            s.step(&[]);
        }
        worst = worst.max(rel(s.conserved_energy(), e0));
    }
    Ok(worst)
}

/// Field energy left in a vacuum box after a dipole pulse has left
/// through the absorber, relative to its peak.
pub fn pml_residual(backend: Backend) -> Result<f64> {
    let mut grid = PermittivityGrid::uniform(200, 201, 410.0 / 16.0, 1.0);
    grid.pml_cells = 16;
    let src = DipoleSource::at_center(&grid, 0.3, 0.2);
    let mut s = Solver::new(&grid, 0.5, 16, 1e-6, backend)?;
    let cells_per_period = 16.0;
    let f = src.center_frequency / cells_per_period;
    let width = (2.0 * 2f64.ln()).sqrt() / (PI * src.bandwidth / cells_per_period);
    let t0 = 5.0 * width;
    let mut peak = 0.0f64;
    let total_steps = 6000;
    for n in 0..total_steps {
        let t = (n as f64 + 0.5) * s.dt();
        let j = if t < 2.0 * t0 { (2.0 * PI * f * (t - t0)).sin() * (-(t - t0).powi(2) / (2.0 * width * width)).exp() } else { 0.0 };
        s.step(&[(Component::Ey, src.i, src.j, j)]);
        peak = peak.max(s.field_energy());
    }
    Ok(s.field_energy() / peak)
}

/// Probes around the cavity center for `res` cells per period: off-axis
/// and off-center so no mode sits on a node at all of them.
pub fn cavity_probes(grid: &PermittivityGrid, res: usize) -> Vec<Probe> {
    let (ci, cj) = (grid.nx / 2, grid.ny / 2);
    vec![
        Probe { i: ci + 1, j: cj, component: Component::Ey },
        Probe { i: ci + 2 * res, j: cj + 1, component: Component::Ey },
        Probe { i: ci + res / 3, j: cj + res / 4, component: Component::Ex },
        Probe { i: ci + 1, j: cj + 2, component: Component::Hz },
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct CavityRun {
    pub resolution: usize,
    pub resonance: Option<Resonance>,
    pub metrics: Option<ModeMetrics>,
    pub seconds: f64,
}

/// Ringdown (and, with `snapshot`, the mode metrics) of one design.
pub fn cavity_run(
    design: &CavityDesign,
    res: usize,
    opts: &FdtdCheckOptions,
    snapshot: Option<f64>,
) -> Result<CavityRun> {
    let start = Instant::now();
    let grid = rasterize_with(&build_lattice(design)?, design, &RasterOptions { resolution: res, ..Default::default() }, opts.backend)?;
    let src = DipoleSource::at_center(&grid, opts.source_frequency, opts.source_bandwidth);
    let cfg = SimulationConfig {
        n_steps: opts.steps_at_16 * res / 16,
        probes: cavity_probes(&grid, res),
        snapshot_frequency: snapshot,
        period_nm: design.a_m,
        boundary: Boundary::Pml,
        ..Default::default()
    };
    let run = fdtd::ringdown_with(&grid, &cfg, &src, opts.backend)?;
    let search = ResonanceSearch { band: opts.band, max_modes: 24, period_nm: design.a_m };
    let resonance = modal::late_dominant(&run.series, &search)?.map(|(_, r)| r);
    let metrics = match (&run.mode, snapshot) {
        (Some(mode), Some(f)) => Some(modal::mode_volume(mode, &grid, opts.h_eff_nm, design.a_m / f, design.n_slab)?),
        _ => None,
    };
    Ok(CavityRun { resolution: res, resonance, metrics, seconds: start.elapsed().as_secs_f64() })
}

/// 7: FDTD validity: dispersion, conservation, absorption, cavity
/// localization and refinement behaviour of the mode metrics.
pub fn fdtd_validity(opts: &FdtdCheckOptions) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut c = Checks::new();

    let (v, v_oracle) = vacuum_dispersion(20.0, 0.5)?;
    c.check(rel(v, v_oracle) < 0.005, format!("(a) phase velocity {v:.6} vs discrete relation {v_oracle:.6} at 20 cells/λ ({:.1e})", rel(v, v_oracle)));
    c.note(format!("continuum light speed differs from the measurement by {:.1e}", rel(v, 1.0)));
    let drift = energy_drift(opts.backend)?;
    c.check(drift < 1e-10, format!("(b) energy drift {drift:.1e} per 1000 steps, reflecting walls"));
    let residual = pml_residual(opts.backend)?;
    c.check(residual < 1e-6, format!("(c) absorber residual {residual:.1e} of peak energy"));

    let base = opts.resolutions[0];
    let cavity = cavity_run(&opts.design, base, opts, None)?;
    let control = cavity_run(&opts.design.uniform_w1(), base, opts, None)?;
    let (Some(cav), Some(ctl)) = (cavity.resonance, control.resonance) else {
        c.check(false, "(d) no resonance found in the cavity or control ringdown");
        return Ok(c.finish(7, "FDTD validity", "no resonance".into(), start));
    };
    c.check(
        cav.q >= 10.0 * ctl.q,
        format!("(d) cavity Q {:.0} at a/λ = {:.5} vs uniform-W1 Q {:.0} at {:.5}: ratio {:.1} (≥ 10)", cav.q, cav.frequency, ctl.q, ctl.frequency, cav.q / ctl.q),
    );
    c.value("q_cavity", cav.q);
    c.value("q_control", ctl.q);
    c.value("q_ratio", cav.q / ctl.q);
    c.note(format!("cavity mode wavelength {:.1} nm for a_m = {} nm (design target {} nm)", cav.wavelength_nm, opts.design.a_m, opts.design.lambda_target));

    let mut runs = Vec::new();
    let mut guess = cav.frequency;
    for &res in &opts.resolutions {
        let r = cavity_run(&opts.design, res, opts, Some(guess))?;
        if let Some(x) = r.resonance {
            guess = x.frequency;
        }
        runs.push(r);
    }
    let mut freqs = Vec::new();
    let mut v_eff = Vec::new();
    let mut eta = Vec::new();
    for r in &runs {
        match (r.resonance, r.metrics) {
            (Some(x), Some(m)) => {
                c.note(format!(
                    "res {:>2}: a/λ {:.6}, Q {:.0}, V_eff {:.4} (λ/n)³, eta {:.4}, peak ε|E|² at cell {:?} ({:.0} s)",
                    r.resolution, x.frequency, x.q, m.v_eff_normalized, m.eta_spatial, m.max_position, r.seconds
                ));
                freqs.push(x.frequency);
                v_eff.push(m.v_eff_normalized);
                eta.push(m.eta_spatial);
            }
            _ => c.check(false, format!("res {}: no resonance or mode field", r.resolution)),
        }
    }
    if let (Some(f), Some(v), Some(e)) = (freqs.last(), v_eff.last(), eta.last()) {
        c.value("frequency", *f);
        c.value("wavelength_nm", opts.design.a_m / f);
        c.value("v_eff", *v);
        c.value("eta_spatial", *e);
    }
    if freqs.len() == runs.len() && freqs.len() >= 2 {
        let (first, last) = (freqs[0], freqs[freqs.len() - 1]);
        c.check(rel(last, first) < 0.005, format!("(d) frequency shift {:.3}% between resolutions {} and {} (< 0.5%)", 100.0 * rel(last, first), runs[0].resolution, runs[runs.len() - 1].resolution));
    }
    if let (Some(v), Some(e)) = (v_eff.last(), eta.last()) {
        c.check(
            v_eff.iter().all(|v| (0.3..=5.0).contains(v)),
            format!("(e) V_eff {v:.3} (λ/n)³ in [0.3, 5] at every resolution (experiment: {})", reference::V_EFF),
        );
        c.check(
            eta.iter().all(|e| *e > 0.0 && *e < 1.0),
            format!("(e) eta_spatial {e:.3} in (0, 1) at every resolution (experiment: {})", reference::ETA_SPATIAL),
        );
    }
    if v_eff.len() == runs.len() && runs.len() >= 3 {
        for (name, xs) in [("V_eff", &v_eff), ("eta_spatial", &eta)] {
            c.check(converging(xs), format!("(e) {name} converging: {}", describe(xs)));
        }
    } else {
        c.check(false, format!("(e) convergence needs mode fields at 3 or more resolutions, got {}", v_eff.len()));
    }
    let summary = format!(
        "Q ratio {:.1}, a/λ {:.5}, V_eff {:.2}, eta {:.2}",
        cav.q / ctl.q,
        cav.frequency,
        v_eff.last().copied().unwrap_or(f64::NAN),
        eta.last().copied().unwrap_or(f64::NAN)
    );
    Ok(c.finish(7, "FDTD validity", summary, start))
}

/// Successive changes shrink and the last one is below 10%.
fn converging(xs: &[f64]) -> bool {
    let d: Vec<f64> = xs.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let shrinking = d.windows(2).all(|w| w[1] < w[0]);
    let last = xs.len() >= 2 && rel(xs[xs.len() - 1], xs[xs.len() - 2]) < 0.1;
    shrinking && last
}

fn describe(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" → ")
}

/// Every check in order.
pub fn run_all(fdtd: &FdtdCheckOptions, seed: u64) -> Vec<Result<CriterionReport>> {
    vec![
        purcell_closure(),
        q_linewidth_identities(),
        kernel_oracle(seed),
        table_round_trip(seed),
        interferogram_round_trip(seed),
        threshold_detection(),
        fdtd_validity(fdtd),
        harmonic_inversion_oracle(seed),
    ]
}

/// One line of the side-by-side table.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub reference: String,
    pub computed: String,
    pub note: String,
}

/// Reference numbers next to what the checks produced.
pub fn comparison_table(reports: &[CriterionReport]) -> Vec<Comparison> {
    use reference::*;
    let find = |name: &str| reports.iter().flat_map(|r| &r.values).find(|(n, _)| n == name).map(|(_, v)| *v);
    let show = |v: Option<f64>, digits: usize| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.digits$}"));
    let row = |quantity: &str, reference: String, computed: String, note: &str| Comparison {
        quantity: quantity.into(),
        reference,
        computed,
        note: note.into(),
    };
    vec![
        row("ensemble enhancement F", format!("{F_MEASURED}"), show(find("f_ensemble"), 3), "Q_em 500, V 1.2, 0.5, 0.17"),
        row("F = Q_em / D, D", format!("{DENOMINATOR}"), show(find("denominator"), 2), "emerges from the chain"),
        row("emitter linewidth (nm)", format!("{LINEWIDTH_EM_NM}"), show(find("emitter_linewidth_nm"), 3), "λ/Q_em"),
        row("1/e interferogram delay (mm)", "21.5".into(), show(find("coherence_delay_mm"), 2), "0.035 nm line"),
        row("Q from 0.0349 nm line", format!("{Q_CAV}"), show(find("q_from_interferogram"), 0), ""),
        row("lasing threshold (µW)", format!("{THRESHOLD_UW}"), show(find("threshold_uW"), 1), "synthetic L-L"),
        row("τ_long ratio", format!("{RATIO_LONG} ± 0.6"), show(find("ratio_long"), 3), "synthetic table round trip"),
        row("τ_fast ratio", format!("{RATIO_FAST} ± 0.3"), show(find("ratio_fast"), 3), "table values give 2.86 ± 1.26"),
        row("cavity wavelength (nm)", format!("{LAMBDA_NM}"), show(find("wavelength_nm"), 1), "2D effective-index model"),
        row("cavity Q", format!("{Q_CAV}"), show(find("q_cavity"), 0), "2D: no vertical loss"),
        row("cavity / uniform-W1 Q", "-".into(), show(find("q_ratio"), 1), ""),
        row("V_eff ((λ/n)³)", format!("{V_EFF}"), show(find("v_eff"), 3), "finest resolution"),
        row("eta_spatial", format!("{ETA_SPATIAL}"), show(find("eta_spatial"), 3), "finest resolution"),
    ]
}
