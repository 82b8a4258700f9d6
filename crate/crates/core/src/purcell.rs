//! Spontaneous-emission enhancement chain: maximal Purcell factor, ensemble
//! averaging over dipole orientation and in-plane position, and the
//! inversions used to go from a measured enhancement back to the emitter
//! linewidth.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Ensemble averaging over random in-plane dipole orientation.
pub const DEFAULT_DIPOLE_FACTOR: f64 = 0.5;
/// Spatial averaging factor of the reference cavity mode.
pub const DEFAULT_ETA_SPATIAL: f64 = 0.17;

/// `3/(4π²)`.
pub fn purcell_prefactor() -> f64 {
    3.0 / (4.0 * PI * PI)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1], got {v}")))
    }
}

/// Maximal Purcell factor `F_p = 3/(4π²) · Q / V`, with `V` in `(λ/n)³`.
pub fn purcell_max(q: f64, v_eff_normalized: f64) -> Result<f64> {
    positive("q", q)?;
    positive("v_eff_normalized", v_eff_normalized)?;
    Ok(purcell_prefactor() * q / v_eff_normalized)
}

/// Ensemble enhancement `F = dipole_factor · eta_spatial · F_p`.
pub fn ensemble_enhancement(f_p: f64, dipole_factor: f64, eta_spatial: f64) -> Result<f64> {
    positive("f_p", f_p)?;
    unit_interval("dipole_factor", dipole_factor)?;
    unit_interval("eta_spatial", eta_spatial)?;
    Ok(dipole_factor * eta_spatial * f_p)
}

/// The constant `D` in `F = Q_em / D`: `1 / (dipole · eta · 3/(4π² V))`.
pub fn enhancement_denominator(v_eff_normalized: f64, dipole_factor: f64, eta_spatial: f64) -> Result<f64> {
    positive("v_eff_normalized", v_eff_normalized)?;
    unit_interval("dipole_factor", dipole_factor)?;
    unit_interval("eta_spatial", eta_spatial)?;
    Ok(1.0 / (dipole_factor * eta_spatial * purcell_prefactor() / v_eff_normalized))
}

/// Emitter quality factor that produces the ensemble enhancement `f_ensemble`.
pub fn invert_for_q_em(f_ensemble: f64, v_eff_normalized: f64, dipole_factor: f64, eta_spatial: f64) -> Result<f64> {
    positive("f_ensemble", f_ensemble)?;
    positive("dipole_factor", dipole_factor)?;
    positive("eta_spatial", eta_spatial)?;
    positive("v_eff_normalized", v_eff_normalized)?;
    Ok(f_ensemble / (dipole_factor * eta_spatial * purcell_prefactor() / v_eff_normalized))
}

/// Homogeneous emitter linewidth `λ/Q_em`, same length unit as `lambda0`.
pub fn emitter_linewidth(q_em: f64, lambda0: f64) -> Result<f64> {
    positive("q_em", q_em)?;
    positive("lambda0", lambda0)?;
    Ok(lambda0 / q_em)
}

/// Which quality factor enters the Purcell formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QConvention {
    /// The emitter linewidth dominates: use `Q_em` alone.
    #[default]
    EmitterLimited,
    /// `(1/Q_cav + 1/Q_em)⁻¹`.
    Harmonic,
}

impl FromStr for QConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emitter-limited" => Ok(QConvention::EmitterLimited),
            "harmonic" => Ok(QConvention::Harmonic),
            other => Err(invalid(format!(
                "unknown Q convention `{other}` (expected emitter-limited or harmonic)"
            ))),
        }
    }
}

pub fn effective_q(q_cav: f64, q_em: f64, convention: QConvention) -> Result<f64> {
    positive("q_cav", q_cav)?;
    positive("q_em", q_em)?;
    Ok(match convention {
        QConvention::EmitterLimited => q_em,
        QConvention::Harmonic => 1.0 / (1.0 / q_cav + 1.0 / q_em),
    })
}

/// Inputs for [`PurcellReport::assemble`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PurcellInputs {
    pub q_em: f64,
    pub q_cav: f64,
    pub v_eff_normalized: f64,
    pub lambda0: f64,
    #[serde(default = "default_dipole")]
    pub dipole_factor: f64,
    #[serde(default = "default_eta")]
    pub eta_spatial: f64,
    #[serde(default)]
    pub convention: QConvention,
}

fn default_dipole() -> f64 {
    DEFAULT_DIPOLE_FACTOR
}
fn default_eta() -> f64 {
    DEFAULT_ETA_SPATIAL
}

impl Default for PurcellInputs {
    fn default() -> Self {
        Self {
            q_em: 500.0,
            q_cav: 44_000.0,
            v_eff_normalized: 1.2,
            lambda0: 1538.0,
            dipole_factor: DEFAULT_DIPOLE_FACTOR,
            eta_spatial: DEFAULT_ETA_SPATIAL,
            convention: QConvention::EmitterLimited,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurcellReport {
    pub f_p: f64,
    pub f_ensemble: f64,
    pub q_em: f64,
    pub q_cav: f64,
    pub q_used: f64,
    pub v_eff_normalized: f64,
    pub dipole_factor: f64,
    pub eta_spatial: f64,
    pub lambda0: f64,
    pub delta_lambda_em: f64,
    /// `dipole_factor · F_p`: the orientation-averaged ceiling for an
    /// ideally placed emitter. Reported next to `f_p` because either can
    /// be meant by a quoted "maximum enhancement".
    pub f_p_orientation_averaged: f64,
    /// `F = q_used / denominator`.
    pub denominator: f64,
}

impl PurcellReport {
    pub fn assemble(inputs: &PurcellInputs) -> Result<Self> {
        let q_used = effective_q(inputs.q_cav, inputs.q_em, inputs.convention)?;
        let f_p = purcell_max(q_used, inputs.v_eff_normalized)?;
        let f_ensemble = ensemble_enhancement(f_p, inputs.dipole_factor, inputs.eta_spatial)?;
        Ok(Self {
            f_p,
            f_ensemble,
            q_em: inputs.q_em,
            q_cav: inputs.q_cav,
            q_used,
            v_eff_normalized: inputs.v_eff_normalized,
            dipole_factor: inputs.dipole_factor,
            eta_spatial: inputs.eta_spatial,
            lambda0: inputs.lambda0,
            delta_lambda_em: emitter_linewidth(inputs.q_em, inputs.lambda0)?,
            f_p_orientation_averaged: inputs.dipole_factor * f_p,
            denominator: enhancement_denominator(inputs.v_eff_normalized, inputs.dipole_factor, inputs.eta_spatial)?,
        })
    }
}
