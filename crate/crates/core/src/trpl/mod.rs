//! Time-resolved photoluminescence: IRF-convolved decay model, photon
//! histogram synthesis and weighted decay fits.

mod fit;
mod histogram;
mod model;

pub use fit::{
    fit_decay, initial_guess, lifetime_ratio, ratio_with_error, DecayFit, DecayParamErrors, Lifetime,
    LifetimeRatio, SigmaMode,
};
pub use histogram::{
    simulate_histogram, simulate_histogram_with, DecayHistogram, SynthesisOptions, DEFAULT_REP_PERIOD_NS,
};
pub use model::{
    decay_model, expected_bin, kernel, kernel_bin_mean, DecayComponent, DecayModelParams, DEFAULT_SIGMA_NS,
};
