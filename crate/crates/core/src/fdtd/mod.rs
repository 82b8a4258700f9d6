//! 2D TE finite-difference time-domain solver with a graded split-field
//! absorber, Gaussian-pulse dipole sources, point probes and narrowband
//! running-DFT field accumulation.
//!
//! Units: one cell is the length unit and the vacuum speed of light is 1,
//! so the time step equals the Courant factor. Reported times and
//! frequencies are rescaled to the lattice period (`a_m/c` and `a_m/λ`).

mod pml;
mod solver;

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use solver::{Component, Solver};

use crate::error::{invalid, Error, Result};
use crate::exec::Backend;
use crate::geometry::PermittivityGrid;
use crate::modal::ModeField;

/// Field pick-up point on the staggered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub i: usize,
    pub j: usize,
    pub component: Component,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Graded absorber of `pml_cells` on every side.
    #[default]
    Pml,
    /// Perfect-conductor walls; for conservation checks.
    Reflecting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// `c·dt/dx`; the 2D stability limit is `1/√2`.
    pub courant: f64,
    /// Time steps after the source turns off.
    pub n_steps: usize,
    pub pml_cells: usize,
    pub pml_reflection_target: f64,
    pub boundary: Boundary,
    pub probes: Vec<Probe>,
    /// Normalized frequency (`a_m/λ`) of the running-DFT field, if any.
    pub snapshot_frequency: Option<f64>,
    /// Lattice period the normalized units refer to (nm).
    pub period_nm: f64,
    /// Keep every n-th Hz frame (debugging only; memory hungry).
    pub dump_hz_every: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            courant: 0.5,
            n_steps: 20_000,
            pml_cells: 16,
            pml_reflection_target: 1e-6,
            boundary: Boundary::Pml,
            probes: Vec::new(),
            snapshot_frequency: None,
            period_nm: 410.0,
            dump_hz_every: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.courant > 0.0 && self.courant <= std::f64::consts::FRAC_1_SQRT_2) {
            return Err(invalid(format!("courant must lie in (0, 1/√2], got {}", self.courant)));
        }
        if self.boundary == Boundary::Pml && self.pml_cells < 8 {
            return Err(invalid(format!("pml_cells must be at least 8, got {}", self.pml_cells)));
        }
        if !(self.pml_reflection_target > 0.0 && self.pml_reflection_target < 1.0) {
            return Err(invalid("pml_reflection_target must lie in (0, 1)"));
        }
        if !(self.period_nm > 0.0) {
            return Err(invalid("period_nm must be positive"));
        }
        if let Some(f) = self.snapshot_frequency {
            if !(f > 0.0) {
                return Err(invalid("snapshot_frequency must be positive"));
            }
        }
        Ok(())
    }

    fn absorber_cells(&self) -> usize {
        match self.boundary {
            Boundary::Pml => self.pml_cells,
            Boundary::Reflecting => 0,
        }
    }
}

/// Gaussian-modulated sine current with an explicit turn-off.
///
/// `J(t) = A·sin(2πf(t - t₀))·exp(-(t - t₀)²/2w²)` for `t < 2t₀`, zero
/// after; `w` follows from the spectral FWHM and `t₀ = 5w`. The sine
/// carrier makes the pulse odd about `t₀`, so no static charge is left
/// behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipoleSource {
    pub i: usize,
    pub j: usize,
    /// In-plane unit vector.
    pub polarization: (f64, f64),
    /// Normalized (`a_m/λ`).
    pub center_frequency: f64,
    /// Normalized spectral FWHM.
    pub bandwidth: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl DipoleSource {
    /// y-polarized source on the `Ey` node closest to the grid center.
    pub fn at_center(grid: &PermittivityGrid, center_frequency: f64, bandwidth: f64) -> Self {
        Self {
            i: grid.nx / 2,
            j: grid.ny / 2,
            polarization: (0.0, 1.0),
            center_frequency,
            bandwidth,
            amplitude: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (px, py) = self.polarization;
        if ((px * px + py * py).sqrt() - 1.0).abs() > 1e-9 {
            return Err(invalid("source polarization must be a unit vector"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(invalid("source bandwidth must be positive"));
        }
        if !(self.center_frequency > 0.0) {
            return Err(invalid("source center frequency must be positive"));
        }
        Ok(())
    }
}

/// Source waveform in solver units.
#[derive(Debug, Clone, Copy)]
struct Pulse {
    freq: f64,
    width: f64,
    t0: f64,
    amplitude: f64,
}

impl Pulse {
    fn new(src: &DipoleSource, cells_per_period: f64) -> Self {
        let freq = src.center_frequency / cells_per_period;
        let fwhm = src.bandwidth / cells_per_period;
        let width = (2.0 * 2f64.ln()).sqrt() / (PI * fwhm);
        Self {
            freq,
            width,
            t0: 5.0 * width,
            amplitude: src.amplitude,
        }
    }

    fn off_time(&self) -> f64 {
        2.0 * self.t0
    }

    fn value(&self, t: f64) -> f64 {
        if t >= self.off_time() {
            return 0.0;
        }
        let s = t - self.t0;
        self.amplitude * (2.0 * PI * self.freq * s).sin() * (-s * s / (2.0 * self.width * self.width)).exp()
    }
}

/// Probe records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    /// Time step in units of `a_m/c`.
    pub dt: f64,
    /// `samples[p][k]`: probe `p` at recorded step `first_step + k`.
    pub samples: Vec<Vec<f64>>,
    /// Step index of the first stored sample (time `(first_step+1)·dt`).
    pub first_step: usize,
    /// First step after which the source is identically zero.
    pub source_off_step: usize,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples of probe `p` recorded at or after the source turn-off.
    pub fn post_turn_off(&self, p: usize) -> &[f64] {
        let skip = self.source_off_step.saturating_sub(self.first_step).min(self.len());
        &self.samples[p][skip..]
    }

    /// CSV: `step,t_normalized,probe_0,probe_1,...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut s = String::from("step,t_normalized");
        for p in 0..self.samples.len() {
            write!(s, ",probe_{p}").unwrap();
        }
        s.push('\n');
        for k in 0..self.len() {
            let step = self.first_step + k;
            write!(s, "{step},{}", crate::io::fmt_f64((step + 1) as f64 * self.dt)).unwrap();
            for p in &self.samples {
                write!(s, ",{}", crate::io::fmt_f64(p[k])).unwrap();
            }
            s.push('\n');
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io::with_path(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty time series".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "step" || cols[1] != "t_normalized" {
            return Err(Error::Format("time series header must be step,t_normalized,probe_0,...".into()));
        }
        let n_probes = cols.len() - 2;
        let mut steps = Vec::new();
        let mut times = Vec::new();
        let mut samples = vec![Vec::new(); n_probes];
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Format(format!("bad time-series row: {line}")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad number `{s}`")));
            steps.push(num(f[0])? as usize);
            times.push(num(f[1])?);
            for p in 0..n_probes {
                samples[p].push(num(f[p + 2])?);
            }
        }
        if steps.len() < 2 {
            return Err(Error::Format("time series needs at least two rows".into()));
        }
        let dt = (times[1] - times[0]) / (steps[1] - steps[0]) as f64;
        Ok(Self {
            dt,
            samples,
            first_step: steps[0],
            source_off_step: steps[0],
        })
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct FdtdRun {
    pub series: TimeSeries,
    /// Running DFT of (Ex, Ey) at `snapshot_frequency`, interpolated to
    /// cell centers.
    pub mode: Option<ModeField>,
    pub hz_frames: Vec<Vec<f64>>,
    /// Largest |field| seen at the instability checks.
    pub peak_field: f64,
}

const INSTABILITY_FACTOR: f64 = 1e12;
const CHECK_EVERY: usize = 64;

fn check_inside(grid: &PermittivityGrid, cfg: &SimulationConfig, i: usize, j: usize, what: &str) -> Result<()> {
    let p = cfg.absorber_cells();
    if i < p.max(1) || j < p.max(1) || i >= grid.nx - p || j >= grid.ny - p {
        return Err(invalid(format!(
            "{what} at ({i}, {j}) lies outside the non-absorbing region of the {}×{} grid",
            grid.nx, grid.ny
        )));
    }
    Ok(())
}

/// Run the source pulse to completion and then `config.n_steps` further
/// steps, recording every probe at every step.
pub fn run_fdtd(grid: &PermittivityGrid, config: &SimulationConfig, source: &DipoleSource) -> Result<FdtdRun> {
    run_fdtd_with(grid, config, source, Backend::default())
}

pub fn run_fdtd_with(
    grid: &PermittivityGrid,
    config: &SimulationConfig,
    source: &DipoleSource,
    backend: Backend,
) -> Result<FdtdRun> {
    run_inner(grid, config, source, backend, 0)
}

/// Like [`run_fdtd`], but the returned series holds only samples from the
/// source turn-off onward: the free decay.
pub fn ringdown(grid: &PermittivityGrid, config: &SimulationConfig, source: &DipoleSource) -> Result<FdtdRun> {
    ringdown_with(grid, config, source, Backend::default())
}

pub fn ringdown_with(
    grid: &PermittivityGrid,
    config: &SimulationConfig,
    source: &DipoleSource,
    backend: Backend,
) -> Result<FdtdRun> {
    run_inner(grid, config, source, backend, usize::MAX)
}

fn run_inner(
    grid: &PermittivityGrid,
    config: &SimulationConfig,
    source: &DipoleSource,
    backend: Backend,
    record_from: usize,
) -> Result<FdtdRun> {
    config.validate()?;
    source.validate()?;
    check_inside(grid, config, source.i, source.j, "source")?;
    for p in &config.probes {
        if p.i >= grid.nx || p.j >= grid.ny {
            return Err(invalid(format!("probe ({}, {}) outside the grid", p.i, p.j)));
        }
    }

    let cells_per_period = config.period_nm / grid.dx;
    let mut solver = Solver::new(
        grid,
        config.courant,
        config.absorber_cells(),
        config.pml_reflection_target,
        backend,
    )?;
    let dt = solver.dt();
    let pulse = Pulse::new(source, cells_per_period);
    let off_step = (pulse.off_time() / dt).ceil() as usize;
    let total = off_step + config.n_steps;
    let record_from = if record_from == usize::MAX { off_step } else { record_from };
    let limit = INSTABILITY_FACTOR * source.amplitude.abs();

    let mut samples = vec![Vec::with_capacity(total - record_from); config.probes.len()];
    let n = grid.nx * grid.ny;
    let mut dft = config.snapshot_frequency.map(|f| {
        let omega = 2.0 * PI * f / cells_per_period;
        // ≥ 10 samples per period of the accumulated frequency
        let stride = ((2.0 * PI / omega) / (10.0 * dt)).floor().max(1.0) as usize;
        (omega, stride, vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); n])
    });
    let mut hz_frames = Vec::new();
    let mut peak_field = 0.0f64;
    let (px, py) = source.polarization;

    for step in 0..total {
        let t_half = (step as f64 + 0.5) * dt;
        let j_src = pulse.value(t_half);
        let mut currents = [(Component::Ex, source.i, source.j, 0.0); 2];
        currents[0].3 = px * j_src;
        currents[1] = (Component::Ey, source.i, source.j, py * j_src);
        solver.step(&currents);

        if step >= record_from {
            for (p, probe) in config.probes.iter().enumerate() {
                samples[p].push(solver.field(probe.component, probe.i, probe.j));
            }
        }
        if let Some((omega, stride, ax, ay)) = dft.as_mut() {
            if step >= off_step && (step - off_step).is_multiple_of(*stride) {
                let t = solver.time();
                let phasor = Complex64::from_polar(*stride as f64 * dt, -*omega * t);
                solver.accumulate_dft(ax, ay, phasor);
            }
        }
        if let Some(every) = config.dump_hz_every {
            if every > 0 && step % every == 0 {
                hz_frames.push(solver.hz.clone());
            }
        }
        if step % CHECK_EVERY == CHECK_EVERY - 1 || step + 1 == total {
            let m = solver.max_abs();
            peak_field = peak_field.max(m);
            if !m.is_finite() || m > limit {
                return Err(Error::Unstable {
                    step,
                    magnitude: m,
                    limit,
                });
            }
        }
    }

    let mode = dft.map(|(_, _, ax, ay)| ModeField::from_staggered(grid, &ax, &ay));
    Ok(FdtdRun {
        series: TimeSeries {
            dt: dt / cells_per_period,
            samples,
            first_step: record_from,
            source_off_step: off_step,
        },
        mode,
        hz_frames,
        peak_field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vacuum(n: usize) -> PermittivityGrid {
        let mut g = PermittivityGrid::uniform(n, n, 410.0 / 16.0, 1.0);
        g.pml_cells = 16;
        g
    }

    fn cfg(n_steps: usize, probes: Vec<Probe>) -> SimulationConfig {
        SimulationConfig {
            n_steps,
            probes,
            ..Default::default()
        }
    }

    #[test]
    fn pulse_is_odd_and_turns_off() {
        let src = DipoleSource { i: 0, j: 0, polarization: (0.0, 1.0), center_frequency: 0.27, bandwidth: 0.1, amplitude: 2.0 };
        let p = Pulse::new(&src, 16.0);
        for k in 1..35 {
            let s = k as f64 * p.width / 7.0;
            assert!((p.value(p.t0 + s) + p.value(p.t0 - s)).abs() < 1e-9);
        }
        assert_eq!(p.value(p.off_time()), 0.0);
        assert_eq!(p.value(p.off_time() + 3.0), 0.0);
    }

    #[test]
    fn zero_amplitude_source_gives_zero_probes() {
        let g = vacuum(60);
        let mut src = DipoleSource::at_center(&g, 0.27, 0.1);
        src.amplitude = 0.0;
        let probes = vec![
            Probe { i: 30, j: 30, component: Component::Ey },
            Probe { i: 25, j: 33, component: Component::Hz },
        ];
        let run = run_fdtd(&g, &cfg(200, probes), &src).unwrap();
        assert!(run.series.samples.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn source_in_absorber_rejected() {
        let g = vacuum(60);
        let mut src = DipoleSource::at_center(&g, 0.27, 0.1);
        src.i = 3;
        let err = ringdown(&g, &cfg(10, vec![]), &src).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    }

    #[test]
    fn config_bounds() {
        assert!(SimulationConfig { courant: 0.75, ..Default::default() }.validate().is_err());
        assert!(SimulationConfig { pml_cells: 4, ..Default::default() }.validate().is_err());
        assert!(SimulationConfig { pml_cells: 4, boundary: Boundary::Reflecting, ..Default::default() }
            .validate()
            .is_ok());
    }

    #[test]
    fn ringdown_keeps_only_free_decay() {
        let g = vacuum(60);
        let src = DipoleSource::at_center(&g, 0.27, 0.2);
        let probes = vec![Probe { i: 34, j: 30, component: Component::Ey }];
        let full = run_fdtd(&g, &cfg(300, probes.clone()), &src).unwrap();
        let rd = ringdown(&g, &cfg(300, probes), &src).unwrap();
        assert_eq!(rd.series.len(), 300);
        assert_eq!(rd.series.first_step, rd.series.source_off_step);
        assert_eq!(rd.series.samples[0], full.series.post_turn_off(0));
    }

    #[test]
    fn sequential_and_parallel_bit_identical() {
        let g = vacuum(64);
        let src = DipoleSource::at_center(&g, 0.27, 0.2);
        let probes = vec![Probe { i: 40, j: 36, component: Component::Ey }];
        let mut c = cfg(200, probes);
        c.snapshot_frequency = Some(0.27);
        let a = run_fdtd_with(&g, &c, &src, Backend::Sequential).unwrap();
        let b = run_fdtd_with(&g, &c, &src, Backend::default()).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.mode.unwrap().ey, b.mode.unwrap().ey);
    }

    #[test]
    fn instability_detected() {
        // courant above the bound can only be reached by bypassing validation
        let g = vacuum(40);
        let mut s = Solver::new(&g, 0.7, 0, 1e-6, Backend::Sequential).unwrap();
        s.ey[20 * 40 + 20] = 1.0;
        // force an unstable update by scaling dt past the limit
        s.dt = 1.2;
        for _ in 0..400 {
            s.step(&[]);
        }
        assert!(s.max_abs() > 1e12 || !s.max_abs().is_finite());
    }

    #[test]
    fn time_series_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ts = TimeSeries {
            dt: 0.03125,
            samples: vec![vec![0.5, -1.25, 3.0], vec![1e-300, 2.0, 0.1]],
            first_step: 10,
            source_off_step: 10,
        };
        let path = dir.path().join("ts.csv");
        ts.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,t_normalized,probe_0,probe_1\n10,"));
        assert_eq!(TimeSeries::read_csv(&path).unwrap(), ts);
    }
}
