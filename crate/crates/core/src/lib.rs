//! Desk-scale simulation and analysis chain for Purcell enhancement in
//! photonic-crystal double-heterostructure cavities.
//!
//! The pipeline runs cavity geometry → 2D FDTD → resonance and mode
//! extraction → Purcell-factor calculus, alongside the measurement side:
//! IRF-convolved decay fitting, Lorentzian/interferogram linewidths and
//! lasing-threshold detection.
//!
//! Data-parallel inner loops (FDTD row updates, rasterization, Monte Carlo
//! photon synthesis) go through [`exec::Backend`]; the `parallel` feature
//! enables the rayon backend, otherwise everything runs sequentially with
//! bit-identical results.

pub mod error;
pub mod exec;
pub mod fdtd;
pub mod geometry;
pub mod io;
pub mod json;
pub mod lsq;
pub mod modal;
pub mod pencil;
pub mod purcell;
pub mod reproduce;
pub mod special;
pub mod spectra;
pub mod trpl;

pub use error::{Error, Result};
pub use exec::Backend;
