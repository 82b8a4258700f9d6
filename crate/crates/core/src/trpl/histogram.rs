//! Photon-arrival histograms and their Monte Carlo synthesis.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Backend;
use crate::io::{fmt_f64, read_csv_columns};

use super::model::DecayModelParams;

/// 80 MHz excitation.
pub const DEFAULT_REP_PERIOD_NS: f64 = 12.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayHistogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub t_start: f64,
    pub rep_period: f64,
    pub total_counts: u64,
}

impl DecayHistogram {
    pub fn from_counts(counts: Vec<u64>, bin_width: f64, t_start: f64, rep_period: f64) -> Result<Self> {
        if !(bin_width > 0.0) || !(rep_period > 0.0) {
            return Err(invalid("bin width and repetition period must be positive"));
        }
        Ok(Self {
            bin_width,
            total_counts: counts.iter().sum(),
            counts,
            t_start,
            rep_period,
        })
    }

    pub fn bin_start(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.bin_width
    }

    /// CSV `bin_start_ns,counts`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut s = String::from("bin_start_ns,counts\n");
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(s, "{},{c}", fmt_f64(self.bin_start(k))).unwrap();
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    /// Bin width from the first two rows; the repetition period defaults
    /// to the span of the file.
    pub fn read_csv(path: &Path, rep_period: Option<f64>) -> Result<Self> {
        let (header, cols) = read_csv_columns(path, 2, 2)?;
        if header[0] != "bin_start_ns" || header[1] != "counts" {
            return Err(Error::Format(format!("expected header bin_start_ns,counts, got {}", header.join(","))));
        }
        let (starts, raw) = (&cols[0], &cols[1]);
        if starts.len() < 2 {
            return Err(Error::Format("histogram needs at least two bins".into()));
        }
        let width = starts[1] - starts[0];
        let tol = 1e-6 * width.abs();
        for (k, s) in starts.iter().enumerate() {
            if ((starts[0] + k as f64 * width) - s).abs() > tol.max(1e-12) {
                return Err(Error::Format(format!("bin {k} breaks the uniform spacing")));
            }
        }
        let mut counts = Vec::with_capacity(raw.len());
        for &c in raw {
            if !(c >= 0.0 && c.fract() == 0.0) {
                return Err(Error::Format(format!("counts must be non-negative integers, got {c}")));
            }
            counts.push(c as u64);
        }
        let period = rep_period.unwrap_or(width * counts.len() as f64);
        Self::from_counts(counts, width, starts[0], period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisOptions {
    pub n_photons: u64,
    /// Dark counts per second.
    pub dark_rate: f64,
    /// Seconds.
    pub acquisition_time: f64,
    /// ns.
    pub bin_width: f64,
    /// ns.
    pub rep_period: f64,
    /// Histogram window start (ns).
    pub t_start: f64,
    /// Fold arrivals beyond the window back by the repetition period.
    pub wrap: bool,
    pub seed: u64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            n_photons: 1_000_000,
            dark_rate: 0.0,
            acquisition_time: 0.0,
            bin_width: 0.01,
            rep_period: DEFAULT_REP_PERIOD_NS,
            t_start: -1.0,
            wrap: false,
            seed: 0,
        }
    }
}

const CHUNK: u64 = 1 << 16;
// streams below this carry photon chunks; the dark-count stream sits above
const DARK_STREAM: u64 = u64::MAX;

/// Monte Carlo histogram: component `i` with probability `a_iτ_i/Σa_jτ_j`,
/// exponential delay, Gaussian jitter, then uniform dark counts with a
/// Poisson total. Photons are drawn in fixed chunks with one ChaCha stream
/// each, so the result depends on the seed only, not on the backend.
pub fn simulate_histogram(params: &DecayModelParams, opts: &SynthesisOptions) -> Result<DecayHistogram> {
    simulate_histogram_with(params, opts, Backend::default())
}

pub fn simulate_histogram_with(
    params: &DecayModelParams,
    opts: &SynthesisOptions,
    backend: Backend,
) -> Result<DecayHistogram> {
    params.validate()?;
    if !(opts.bin_width > 0.0 && opts.rep_period > 0.0) {
        return Err(invalid("bin width and repetition period must be positive"));
    }
    if !(opts.dark_rate >= 0.0 && opts.acquisition_time >= 0.0) {
        return Err(invalid("dark rate and acquisition time must be non-negative"));
    }
    let n_bins = (opts.rep_period / opts.bin_width).round() as usize;
    if n_bins == 0 {
        return Err(invalid("bin width exceeds the repetition period"));
    }
    let window = n_bins as f64 * opts.bin_width;
    let area = params.area();
    if opts.n_photons > 0 && !(area > 0.0) {
        return Err(invalid("all decay amplitudes are zero"));
    }
    let weights: Vec<f64> = params.components.iter().map(|c| c.amplitude * c.lifetime / area).collect();
    let exps: Vec<Exp<f64>> = params
        .components
        .iter()
        .map(|c| Exp::new(1.0 / c.lifetime).expect("positive lifetime"))
        .collect();
    let jitter = Normal::new(0.0, params.sigma).map_err(|e| invalid(e.to_string()))?;

    let bin_of = |t: f64| -> Option<usize> {
        let mut x = t - opts.t_start;
        if opts.wrap {
            x = x.rem_euclid(window);
        }
        if !(0.0..window).contains(&x) {
            return None;
        }
        Some(((x / opts.bin_width) as usize).min(n_bins - 1))
    };

    let n_chunks = opts.n_photons.div_ceil(CHUNK) as usize;
    let partial = backend.map(n_chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(c as u64);
        let start = c as u64 * CHUNK;
        let len = CHUNK.min(opts.n_photons - start);
        let mut hits = Vec::with_capacity(len as usize);
        for _ in 0..len {
            let u: f64 = rng.random();
            let mut i = 0;
            let mut acc = weights[0];
            while u >= acc && i + 1 < weights.len() {
                i += 1;
                acc += weights[i];
            }
            let t = params.t0 + exps[i].sample(&mut rng) + jitter.sample(&mut rng);
            if let Some(b) = bin_of(t) {
                hits.push(b as u32);
            }
        }
        hits
    });
    let mut counts = vec![0u64; n_bins];
    for hits in partial {
        for b in hits {
            counts[b as usize] += 1;
        }
    }

    let mean_dark = opts.dark_rate * opts.acquisition_time;
    if mean_dark > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(DARK_STREAM);
        let n_dark = Poisson::new(mean_dark).map_err(|e| invalid(e.to_string()))?.sample(&mut rng) as u64;
        for _ in 0..n_dark {
            let b = rng.random_range(0..n_bins);
            counts[b] += 1;
        }
    }
    DecayHistogram::from_counts(counts, opts.bin_width, opts.t_start, opts.rep_period)
}

#[cfg(test)]
mod tests {
    use super::super::model::{kernel_bin_mean, DecayComponent};
    use super::*;

    fn single(tau: f64) -> DecayModelParams {
        DecayModelParams {
            components: vec![DecayComponent { amplitude: 1.0, lifetime: tau }],
            sigma: super::super::model::DEFAULT_SIGMA_NS,
            baseline: 0.0,
            t0: 0.0,
        }
    }

    #[test]
    fn empty_run_is_all_zero() {
        let opts = SynthesisOptions { n_photons: 0, ..Default::default() };
        let h = simulate_histogram(&single(2.14), &opts).unwrap();
        assert_eq!(h.total_counts, 0);
        assert_eq!(h.counts.len(), 1250);
    }

    #[test]
    fn dark_counts_only() {
        let opts = SynthesisOptions {
            n_photons: 0,
            dark_rate: 30.0,
            acquisition_time: 100.0,
            ..Default::default()
        };
        let totals: Vec<f64> = (0..40)
            .map(|s| simulate_histogram(&single(2.14), &SynthesisOptions { seed: s, ..opts.clone() }).unwrap().total_counts as f64)
            .collect();
        let mean = totals.iter().sum::<f64>() / 40.0;
        let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 39.0;
        // mean within 4 standard errors, variance within a factor 2 of Poisson
        assert!((mean - 3000.0).abs() < 4.0 * (3000.0f64 / 40.0).sqrt(), "{mean}");
        assert!(var > 1500.0 && var < 6000.0, "{var}");
    }

    #[test]
    fn deterministic_and_backend_independent() {
        let opts = SynthesisOptions { n_photons: 200_000, seed: 42, ..Default::default() };
        let a = simulate_histogram_with(&single(0.77), &opts, Backend::Sequential).unwrap();
        let b = simulate_histogram_with(&single(0.77), &opts, Backend::default()).unwrap();
        assert_eq!(a, b);
        let c = simulate_histogram(&single(0.77), &SynthesisOptions { seed: 43, ..opts }).unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn matches_binned_model() {
        let tau = 2.14;
        let n = 1_000_000u64;
        let opts = SynthesisOptions { n_photons: n, seed: 5, ..Default::default() };
        let p = single(tau);
        let h = simulate_histogram(&p, &opts).unwrap();
        let mut inside = 0;
        for (k, &c) in h.counts.iter().enumerate() {
            let t1 = h.bin_start(k);
            let expect = n as f64 / tau * kernel_bin_mean(t1, t1 + h.bin_width, tau, p.sigma) * h.bin_width;
            if (c as f64 - expect).abs() <= 5.0 * expect.sqrt().max(1.0) {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.99 * h.counts.len() as f64, "{inside}");
    }

    #[test]
    fn wrap_keeps_every_photon() {
        let opts = SynthesisOptions { n_photons: 50_000, wrap: true, seed: 1, ..Default::default() };
        let h = simulate_histogram(&single(5.0), &opts).unwrap();
        assert_eq!(h.total_counts, 50_000);
        let unwrapped = simulate_histogram(&single(5.0), &SynthesisOptions { wrap: false, ..opts }).unwrap();
        assert!(unwrapped.total_counts < 50_000);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let h = DecayHistogram::from_counts(vec![0, 5, 17, 3], 0.01, -0.5, 0.04).unwrap();
        let path = dir.path().join("h.csv");
        h.write_csv(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("bin_start_ns,counts\n"));
        let back = DecayHistogram::read_csv(&path, None).unwrap();
        assert_eq!(back.counts, h.counts);
        assert!((back.bin_width - 0.01).abs() < 1e-15);
        assert_eq!(back.t_start, -0.5);
    }
}
