//! The TOML run configuration. Every section is optional and falls back to
//! the library defaults; unknown keys are rejected. Commands write the
//! resolved document, flag overrides included, next to their outputs.

use std::path::{Path, PathBuf};

use purcell_core::fdtd::SimulationConfig;
use purcell_core::geometry::{CavityDesign, RasterOptions};
use purcell_core::purcell::PurcellInputs;
use purcell_core::spectra::DEFAULT_RESOLUTION_NM;
use purcell_core::trpl::{DecayComponent, DecayModelParams, SigmaMode, SynthesisOptions, DEFAULT_SIGMA_NS};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RESOLVED_NAME: &str = "config.resolved.toml";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds every stochastic step.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub design: CavityDesign,
    pub raster: RasterOptions,
    pub simulation: SimulationConfig,
    pub source: SourceConfig,
    pub analysis: AnalysisConfig,
    pub decay: DecayConfig,
    pub purcell: PurcellInputs,
    pub spectra: SpectraConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Normalized (`a_m/λ`).
    pub center_frequency: f64,
    pub bandwidth: f64,
    pub amplitude: f64,
    pub polarization: (f64, f64),
    /// Cell `(i, j)`; the grid center when absent.
    pub position: Option<(usize, usize)>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self { center_frequency: 0.27, bandwidth: 0.1, amplitude: 1.0, polarization: (0.0, 1.0), position: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Normalized frequency band searched for resonances.
    pub band: (f64, f64),
    pub max_modes: usize,
    /// Effective membrane height for mode volumes (nm).
    pub h_eff_nm: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { band: (0.22, 0.32), max_modes: 24, h_eff_nm: 250.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    /// Model used by `simulate-decay`.
    pub model: DecayModelParams,
    /// `seed` here is replaced by the top-level seed.
    pub synthesis: SynthesisOptions,
    pub components: usize,
    pub sigma: SigmaMode,
    /// Repetition period assumed when reading histograms (ns); the file
    /// span when absent.
    pub rep_period_ns: Option<f64>,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            model: DecayModelParams {
                components: vec![
                    DecayComponent { amplitude: 3.0, lifetime: 0.20 },
                    DecayComponent { amplitude: 1.0, lifetime: 2.14 },
                ],
                sigma: DEFAULT_SIGMA_NS,
                baseline: 0.0,
                t0: 0.0,
            },
            synthesis: SynthesisOptions::default(),
            components: 2,
            sigma: SigmaMode::default(),
            rep_period_ns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectraConfig {
    pub resolution_nm: f64,
    /// Center wavelength for interferogram fits (nm).
    pub wavelength_nm: f64,
}

impl Default for SpectraConfig {
    fn default() -> Self {
        Self { resolution_nm: DEFAULT_RESOLUTION_NM, wavelength_nm: 1538.0 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::write(dir.join(RESOLVED_NAME), self.to_toml())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig { seed: 9, output_dir: Some("out".into()), ..Default::default() };
        let text = cfg.to_toml();
        assert_eq!(RunConfig::parse(&text).unwrap().to_toml(), text);
    }

    #[test]
    fn partial_document_keeps_defaults() {
        let cfg = RunConfig::parse("seed = 4\n[design]\na_c = 450.0\n[decay.sigma]\nmode = \"free\"\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.design.a_c, 450.0);
        assert_eq!(cfg.design.a_m, 410.0);
        assert_eq!(cfg.decay.sigma, SigmaMode::Free);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("sed = 1\n").is_err());
        let err = RunConfig::parse("[design]\nradius = 0.3\n").unwrap_err();
        assert!(err.contains("radius"), "{err}");
    }
}
