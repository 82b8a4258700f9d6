use purcell_core::reproduce::oracle;
use purcell_core::trpl::{
    self, decay_model, expected_bin, fit_decay, lifetime_ratio, simulate_histogram, DecayComponent,
    DecayHistogram, DecayModelParams, Lifetime, SigmaMode, SynthesisOptions, DEFAULT_SIGMA_NS,
};

fn params(components: &[(f64, f64)]) -> DecayModelParams {
    DecayModelParams {
        components: components.iter().map(|&(amplitude, lifetime)| DecayComponent { amplitude, lifetime }).collect(),
        sigma: DEFAULT_SIGMA_NS,
        baseline: 0.0,
        t0: 0.0,
    }
}

/// Expected counts rounded to integers; at this scale the rounding is a
/// 1e-10 perturbation.
fn noiseless(p: &DecayModelParams, bin: f64) -> DecayHistogram {
    let n = (12.5 / bin).round() as usize;
    let counts = (0..n)
        .map(|k| {
            let t1 = -1.0 + k as f64 * bin;
            expected_bin(t1, t1 + bin, p).round() as u64
        })
        .collect();
    DecayHistogram::from_counts(counts, bin, -1.0, 12.5).unwrap()
}

#[test]
fn kernel_matches_quadrature_at_reference_times() {
    for t in [-0.2, 0.0, 0.5, 2.14, 5.0] {
        let got = decay_model(t, &params(&[(1.0, 2.14)]));
        let want = oracle::convolved_exponential(t, 2.14, DEFAULT_SIGMA_NS);
        assert!(((got - want) / want).abs() < 1e-6, "t = {t}: {got} vs {want}");
    }
}

#[test]
fn model_integrates_to_amplitude_times_lifetime() {
    let p = params(&[(3.0, 0.2), (1.0, 2.14)]);
    let area = oracle::integrate(|t| decay_model(t, &p), -1.0, 60.0, 1e-12);
    assert!((area / (3.0 * 0.2 + 2.14) - 1.0).abs() < 1e-3);
    assert!((-200..2000).all(|k| decay_model(k as f64 * 0.03, &p) >= 0.0));
}

#[test]
fn noiseless_curve_recovered_exactly() {
    let truth = DecayModelParams { baseline: 2.0, t0: 0.013, ..params(&[(3e9, 0.2), (1e9, 2.14)]) };
    let fit = fit_decay(&noiseless(&truth, 0.01), 2, SigmaMode::Fixed(DEFAULT_SIGMA_NS), None).unwrap();
    assert!(fit.converged);
    for (got, want) in fit.params.components.iter().zip(&truth.components) {
        assert!((got.lifetime / want.lifetime - 1.0).abs() < 1e-6, "{got:?} vs {want:?}");
        assert!((got.amplitude / want.amplitude - 1.0).abs() < 1e-6, "{got:?} vs {want:?}");
    }
    assert!((fit.params.t0 - truth.t0).abs() < 1e-6);
    assert!(fit.reduced_chi2 < 1e-3);
}

#[test]
fn free_sigma_recovered_on_noiseless_curve() {
    let truth = DecayModelParams { sigma: 0.06, ..params(&[(1e9, 0.5)]) };
    let fit = fit_decay(&noiseless(&truth, 0.01), 1, SigmaMode::Free, None).unwrap();
    assert!((fit.params.sigma / 0.06 - 1.0).abs() < 1e-5);
    assert!((fit.params.components[0].lifetime / 0.5 - 1.0).abs() < 1e-6);
    assert!(fit.std_errors.sigma.is_some());
}

#[test]
fn covariance_is_symmetric_with_matching_errors() {
    let truth = params(&[(3.0, 0.2), (1.0, 2.14)]);
    let hist = simulate_histogram(&truth, &SynthesisOptions { seed: 3, ..Default::default() }).unwrap();
    let fit = fit_decay(&hist, 2, SigmaMode::Fixed(DEFAULT_SIGMA_NS), None).unwrap();
    let c = &fit.covariance;
    for i in 0..c.len() {
        for j in 0..c.len() {
            assert!((c[i][j] - c[j][i]).abs() <= 1e-12 * (c[i][i] * c[j][j]).sqrt());
        }
    }
    assert!((fit.std_errors.lifetimes[1] - c[3][3].sqrt()).abs() < 1e-15);
    assert_eq!(fit.parameter_names.len(), c.len());
}

#[test]
fn two_components_on_single_exponential_data() {
    let truth = params(&[(1.0, 1.0)]);
    let hist = simulate_histogram(&truth, &SynthesisOptions { seed: 11, ..Default::default() }).unwrap();
    let fit = fit_decay(&hist, 2, SigmaMode::Fixed(DEFAULT_SIGMA_NS), None).unwrap();
    let (c, e) = (&fit.params.components, &fit.std_errors);
    let coincide = (c[0].lifetime - c[1].lifetime).abs() <= 3.0 * (e.lifetimes[0] + e.lifetimes[1]);
    let vanishes = (0..2).any(|i| c[i].amplitude <= 3.0 * e.amplitudes[i]);
    assert!(coincide || vanishes, "{fit:?}");
    let dominant = c.iter().max_by(|a, b| a.amplitude.total_cmp(&b.amplitude)).unwrap();
    assert!((dominant.lifetime - 1.0).abs() < 0.02);
}

#[test]
fn long_lifetime_estimator_is_consistent() {
    let truth = params(&[(3.0, 0.2), (1.0, 2.14)]);
    let (mut taus, mut errs) = (Vec::new(), Vec::new());
    for seed in 0..100 {
        let hist = simulate_histogram(&truth, &SynthesisOptions { seed: 1000 + seed, ..Default::default() }).unwrap();
        let fit = fit_decay(&hist, 2, SigmaMode::Fixed(DEFAULT_SIGMA_NS), None).unwrap();
        taus.push(fit.params.components[1].lifetime);
        errs.push(fit.std_errors.lifetimes[1]);
    }
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let sd = (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let reported = errs.iter().sum::<f64>() / n;
    assert!((mean / 2.14 - 1.0).abs() < 0.01, "mean {mean}");
    assert!(sd / reported < 2.0 && reported / sd < 2.0, "empirical {sd} vs reported {reported}");
}

#[test]
fn ratio_invariant_under_amplitude_rescaling() {
    let base = |scale: f64, taus: (f64, f64)| {
        let hist = noiseless(&params(&[(3e8 * scale, taus.0), (1e8 * scale, taus.1)]), 0.01);
        fit_decay(&hist, 2, SigmaMode::Fixed(DEFAULT_SIGMA_NS), None).unwrap()
    };
    let r1 = lifetime_ratio(&base(1.0, (0.2, 2.14)), &base(1.0, (0.07, 0.77)), Lifetime::Long).unwrap();
    let r2 = lifetime_ratio(&base(7.0, (0.2, 2.14)), &base(7.0, (0.07, 0.77)), Lifetime::Long).unwrap();
    assert!((r1.ratio - r2.ratio).abs() < 1e-6 * r1.ratio);
    assert!((r1.ratio - 2.14 / 0.77).abs() < 1e-5);
}

#[test]
fn ratio_propagation_examples() {
    let r = trpl::ratio_with_error(2.14, 0.28, 0.77, 0.06).unwrap();
    assert!((r.ratio - 2.779).abs() < 1e-3 && (r.std_error - 0.42).abs() < 5e-3);
    let r = trpl::ratio_with_error(0.20, 0.02, 0.07, 0.03).unwrap();
    assert!((r.ratio - 2.857).abs() < 1e-3 && (r.std_error - 1.26).abs() < 5e-3);
    let r = trpl::ratio_with_error(1.3, 0.0, 1.3, 0.0).unwrap();
    assert_eq!((r.ratio, r.std_error), (1.0, 0.0));
}

#[test]
fn missing_component_is_an_error() {
    let one = fit_decay(&noiseless(&params(&[(1e8, 1.0)]), 0.01), 1, SigmaMode::Fixed(DEFAULT_SIGMA_NS), None).unwrap();
    assert!(lifetime_ratio(&one, &one, Lifetime::Long).is_ok());
    assert!(lifetime_ratio(&one, &one, Lifetime::Fast).is_err());
}
