use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use purcell_core::fdtd::{self, DipoleSource, TimeSeries};
use purcell_core::geometry::{build_lattice, rasterize_with, PermittivityGrid};
use purcell_core::modal::{self, ModeField, ResonanceSearch};
use purcell_core::purcell::{PurcellReport, QConvention};
use purcell_core::reproduce::{self, FdtdCheckOptions};
use purcell_core::spectra::{self, Interferogram, LLCurve, Spectrum};
use purcell_core::trpl::{self, DecayHistogram, SigmaMode};
use purcell_core::{json, Backend};
use serde::Serialize;

use crate::config::RunConfig;
use crate::svg::{Plot, Style};
use crate::{CliError, Global, OUTPUT_DIR_ENV};

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub backend: Backend,
}

impl Context {
    pub fn new(g: &Global) -> Result<Self, CliError> {
        let mut cfg = match &g.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = g.seed {
            cfg.seed = seed;
        }
        let out = g
            .output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("purcell-out"));
        cfg.output_dir = Some(out.clone());
        Ok(Self { cfg, out, backend: backend_for(g.threads)? })
    }

    /// Creates the output directory and writes the resolved config into it.
    fn prepare(&self) -> Result<&Path, CliError> {
        fs::create_dir_all(&self.out)?;
        self.cfg.write_resolved(&self.out)?;
        Ok(&self.out)
    }

    fn report<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = json::to_string(value)?;
        fs::write(self.out.join(name), &text)?;
        print!("{text}");
        Ok(())
    }
}

fn backend_for(threads: Option<usize>) -> Result<Backend, CliError> {
    match threads {
        Some(0) => Err(CliError::Input("--threads must be at least 1".into())),
        Some(1) => Ok(Backend::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            // a second initialization only fails when a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(Backend::default())
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Err(CliError::Input("built without the `parallel` feature; use --threads 1".into())),
        None => Ok(Backend::default()),
    }
}

fn svg(path: &Path, plot: Plot) -> Result<(), CliError> {
    fs::write(path, plot.render())?;
    Ok(())
}

fn rasterized(ctx: &Context) -> Result<(purcell_core::geometry::HoleList, PermittivityGrid), CliError> {
    let cfg = &ctx.cfg;
    let holes = build_lattice(&cfg.design)?;
    let raster = purcell_core::geometry::RasterOptions { pml_cells: cfg.simulation.pml_cells, ..cfg.raster };
    let grid = rasterize_with(&holes, &cfg.design, &raster, ctx.backend)?;
    Ok((holes, grid))
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    /// Cells per lattice period (overrides the config).
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Serialize)]
struct DesignSummary {
    n_holes: usize,
    nx: usize,
    ny: usize,
    dx_nm: f64,
    grid_file: String,
    holes_file: String,
}

pub fn design(mut ctx: Context, args: DesignArgs) -> Result<(), CliError> {
    if let Some(r) = args.resolution {
        ctx.cfg.raster.resolution = r;
    }
    let out = ctx.prepare()?.to_path_buf();
    let (holes, grid) = rasterized(&ctx)?;
    json::write_file(&out.join("holes.json"), &holes)?;
    grid.save(&out.join("eps.pgr"))?;
    ctx.report(
        "design.json",
        &DesignSummary {
            n_holes: holes.holes.len(),
            nx: grid.nx,
            ny: grid.ny,
            dx_nm: grid.dx,
            grid_file: "eps.pgr".into(),
            holes_file: "holes.json".into(),
        },
    )
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Time steps after the source turns off.
    #[arg(long)]
    steps: Option<usize>,
    /// Cells per lattice period.
    #[arg(long)]
    resolution: Option<usize>,
    /// Accumulate the mode field at this normalized frequency (a/λ) and
    /// report its metrics.
    #[arg(long)]
    snapshot_frequency: Option<f64>,
    /// Use the uniform W1 waveguide (no stretched periods) as a control.
    #[arg(long)]
    control: bool,
}

#[derive(Serialize)]
struct SimulationReport {
    nx: usize,
    ny: usize,
    dx_nm: f64,
    dt: f64,
    samples: usize,
    source_off_step: usize,
    peak_field: f64,
    dominant: Option<modal::Resonance>,
    dominant_probe: Option<usize>,
    per_probe: Vec<Vec<modal::Resonance>>,
    mode_metrics: Option<modal::ModeMetrics>,
}

pub fn simulate(mut ctx: Context, args: SimulateArgs) -> Result<(), CliError> {
    let cfg = &mut ctx.cfg;
    if let Some(n) = args.steps {
        cfg.simulation.n_steps = n;
    }
    if let Some(r) = args.resolution {
        cfg.raster.resolution = r;
    }
    if args.snapshot_frequency.is_some() {
        cfg.simulation.snapshot_frequency = args.snapshot_frequency;
    }
    if args.control {
        cfg.design = cfg.design.uniform_w1();
    }
    cfg.simulation.period_nm = cfg.design.a_m;
    let out = ctx.prepare()?.to_path_buf();
    let cfg = &ctx.cfg;
    let (_, grid) = rasterized(&ctx)?;
    grid.save(&out.join("eps.pgr"))?;
    let s = &cfg.source;
    let (ci, cj) = s.position.unwrap_or((grid.nx / 2, grid.ny / 2));
    let source = DipoleSource {
        i: ci,
        j: cj,
        polarization: s.polarization,
        center_frequency: s.center_frequency,
        bandwidth: s.bandwidth,
        amplitude: s.amplitude,
    };
    let mut sim = cfg.simulation.clone();
    if sim.probes.is_empty() {
        sim.probes = reproduce::cavity_probes(&grid, cfg.raster.resolution);
    }
    let run = fdtd::ringdown_with(&grid, &sim, &source, ctx.backend)?;
    run.series.write_csv(&out.join("timeseries.csv"))?;
    let search = search_for(cfg);
    let per_probe = (0..run.series.samples.len())
        .map(|p| modal::find_resonances(&run.series, p, &search))
        .collect::<Result<Vec<_>, _>>()?;
    let dominant = modal::late_dominant(&run.series, &search)?;
    let mut mode_metrics = None;
    if let (Some(mode), Some(f)) = (&run.mode, sim.snapshot_frequency) {
        mode.save(&out, "mode")?;
        mode_metrics = Some(modal::mode_volume(mode, &grid, cfg.analysis.h_eff_nm, cfg.design.a_m / f, cfg.design.n_slab)?);
    }
    let t: Vec<f64> = (0..run.series.len()).map(|k| k as f64 * run.series.dt).collect();
    svg(&out.join("ringdown.svg"), Plot::new("Probe ringdown", "t (a/c)", "field").with("probe 0", &t, &run.series.samples[0], Style::Line))?;
    ctx.report(
        "simulation.json",
        &SimulationReport {
            nx: grid.nx,
            ny: grid.ny,
            dx_nm: grid.dx,
            dt: run.series.dt,
            samples: run.series.len(),
            source_off_step: run.series.source_off_step,
            peak_field: run.peak_field,
            dominant: dominant.map(|d| d.1),
            dominant_probe: dominant.map(|d| d.0),
            per_probe,
            mode_metrics,
        },
    )
}

fn search_for(cfg: &RunConfig) -> ResonanceSearch {
    ResonanceSearch { band: cfg.analysis.band, max_modes: cfg.analysis.max_modes, period_nm: cfg.design.a_m }
}

#[derive(Args, Debug)]
pub struct ResonancesArgs {
    /// CSV written by `simulate`.
    series: PathBuf,
    /// Only this probe column (all by default).
    #[arg(long)]
    probe: Option<usize>,
    /// Normalized frequency band, `LO HI`.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    band: Option<Vec<f64>>,
    #[arg(long)]
    max_modes: Option<usize>,
    /// Lattice period the normalized frequencies refer to (nm).
    #[arg(long)]
    period_nm: Option<f64>,
}

#[derive(Serialize)]
struct ResonanceReport {
    dominant: Option<modal::Resonance>,
    dominant_probe: Option<usize>,
    per_probe: Vec<Vec<modal::Resonance>>,
}

pub fn resonances(mut ctx: Context, args: ResonancesArgs) -> Result<(), CliError> {
    if let Some(b) = &args.band {
        ctx.cfg.analysis.band = (b[0], b[1]);
    }
    if let Some(m) = args.max_modes {
        ctx.cfg.analysis.max_modes = m;
    }
    if let Some(p) = args.period_nm {
        ctx.cfg.design.a_m = p;
    }
    ctx.prepare()?;
    let mut series = TimeSeries::read_csv(&args.series)?;
    if let Some(p) = args.probe {
        if p >= series.samples.len() {
            return Err(CliError::Input(format!("probe {p} not in a file with {} probes", series.samples.len())));
        }
        series.samples = vec![series.samples.swap_remove(p)];
    }
    let search = search_for(&ctx.cfg);
    let per_probe = (0..series.samples.len())
        .map(|p| modal::find_resonances(&series, p, &search))
        .collect::<Result<Vec<_>, _>>()?;
    let dominant = modal::late_dominant(&series, &search)?;
    ctx.report(
        "resonances.json",
        &ResonanceReport {
            dominant: dominant.map(|d| d.1),
            dominant_probe: dominant.map(|d| args.probe.unwrap_or(d.0)),
            per_probe,
        },
    )
}

#[derive(Args, Debug)]
pub struct ModeMetricsArgs {
    /// Permittivity grid the mode was computed on.
    #[arg(long)]
    eps: PathBuf,
    /// Directory holding `<stem>_{ex,ey}_{re,im}.pgr`.
    #[arg(long)]
    mode_dir: PathBuf,
    #[arg(long, default_value = "mode")]
    stem: String,
    /// Vacuum wavelength of the mode (nm).
    #[arg(long)]
    wavelength_nm: f64,
    #[arg(long)]
    h_eff_nm: Option<f64>,
}

pub fn mode_metrics(mut ctx: Context, args: ModeMetricsArgs) -> Result<(), CliError> {
    if let Some(h) = args.h_eff_nm {
        ctx.cfg.analysis.h_eff_nm = h;
    }
    ctx.prepare()?;
    let grid = PermittivityGrid::load(&args.eps)?;
    let mode = ModeField::load(&args.mode_dir, &args.stem, &grid)?;
    let m = modal::mode_volume(&mode, &grid, ctx.cfg.analysis.h_eff_nm, args.wavelength_nm, grid.n_slab)?;
    ctx.report("mode_metrics.json", &m)
}

#[derive(Args, Debug)]
pub struct PurcellArgs {
    /// Emitter quality factor λ/δλ_em.
    #[arg(long)]
    q_em: Option<f64>,
    /// Cavity quality factor.
    #[arg(long)]
    q_cav: Option<f64>,
    /// Mode volume in (λ/n)³.
    #[arg(long)]
    v_eff: Option<f64>,
    /// Orientation factor.
    #[arg(long)]
    dipole: Option<f64>,
    /// Spatial-overlap factor.
    #[arg(long)]
    spatial: Option<f64>,
    #[arg(long)]
    wavelength_nm: Option<f64>,
    /// `emitter-limited` or `harmonic`.
    #[arg(long)]
    convention: Option<QConvention>,
}

pub fn purcell(mut ctx: Context, a: PurcellArgs) -> Result<(), CliError> {
    let p = &mut ctx.cfg.purcell;
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut p.q_em, a.q_em);
    set(&mut p.q_cav, a.q_cav);
    set(&mut p.v_eff_normalized, a.v_eff);
    set(&mut p.dipole_factor, a.dipole);
    set(&mut p.eta_spatial, a.spatial);
    set(&mut p.lambda0, a.wavelength_nm);
    if let Some(c) = a.convention {
        p.convention = c;
    }
    ctx.prepare()?;
    let report = PurcellReport::assemble(&ctx.cfg.purcell)?;
    ctx.report("purcell.json", &report)
}

#[derive(Args, Debug)]
pub struct FitDecayArgs {
    /// CSV `bin_start_ns,counts`.
    histogram: PathBuf,
    /// 1 or 2.
    #[arg(long)]
    components: Option<usize>,
    /// IRF standard deviation held fixed (ps).
    #[arg(long, conflicts_with = "free_sigma")]
    sigma_ps: Option<f64>,
    /// Fit the IRF width too.
    #[arg(long)]
    free_sigma: bool,
    /// Repetition period (ns); the file span by default.
    #[arg(long)]
    rep_period_ns: Option<f64>,
}

pub fn fit_decay(mut ctx: Context, a: FitDecayArgs) -> Result<(), CliError> {
    let d = &mut ctx.cfg.decay;
    if let Some(n) = a.components {
        d.components = n;
    }
    if let Some(s) = a.sigma_ps {
        d.sigma = SigmaMode::Fixed(s * 1e-3);
    }
    if a.free_sigma {
        d.sigma = SigmaMode::Free;
    }
    if a.rep_period_ns.is_some() {
        d.rep_period_ns = a.rep_period_ns;
    }
    let out = ctx.prepare()?.to_path_buf();
    let d = &ctx.cfg.decay;
    let hist = DecayHistogram::read_csv(&a.histogram, d.rep_period_ns)?;
    let fit = trpl::fit_decay(&hist, d.components, d.sigma, None)?;
    if !fit.converged {
        eprintln!("purcell: warning: decay fit stopped before converging");
    }
    let t: Vec<f64> = (0..hist.counts.len()).map(|k| hist.bin_start(k) + 0.5 * hist.bin_width).collect();
    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let model: Vec<f64> = (0..hist.counts.len())
        .map(|k| trpl::expected_bin(hist.bin_start(k), hist.bin_start(k + 1), &fit.params))
        .collect();
    svg(
        &out.join("decay.svg"),
        Plot::new("Photoluminescence decay", "t (ns)", "counts")
            .log_axes(false, true)
            .with("data", &t, &counts, Style::Points)
            .with("fit", &t, &model, Style::Line),
    )?;
    ctx.report("decay_fit.json", &fit)
}

#[derive(Args, Debug)]
pub struct SimulateDecayArgs {
    #[arg(long)]
    photons: Option<u64>,
    /// Dark counts per second.
    #[arg(long)]
    dark_rate: Option<f64>,
    /// Acquisition time for dark counts (s).
    #[arg(long)]
    acquisition_s: Option<f64>,
    /// Fold late photons back by the repetition period.
    #[arg(long)]
    wrap: bool,
}

pub fn simulate_decay(mut ctx: Context, a: SimulateDecayArgs) -> Result<(), CliError> {
    let seed = ctx.cfg.seed;
    let s = &mut ctx.cfg.decay.synthesis;
    s.seed = seed;
    if let Some(n) = a.photons {
        s.n_photons = n;
    }
    if let Some(r) = a.dark_rate {
        s.dark_rate = r;
    }
    if let Some(t) = a.acquisition_s {
        s.acquisition_time = t;
    }
    if a.wrap {
        s.wrap = true;
    }
    let out = ctx.prepare()?.to_path_buf();
    let d = &ctx.cfg.decay;
    let hist = trpl::simulate_histogram_with(&d.model, &d.synthesis, ctx.backend)?;
    hist.write_csv(&out.join("histogram.csv"))?;
    let t: Vec<f64> = (0..hist.counts.len()).map(|k| hist.bin_start(k) + 0.5 * hist.bin_width).collect();
    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    svg(&out.join("histogram.svg"), Plot::new("Synthetic decay", "t (ns)", "counts").log_axes(false, true).with("counts", &t, &counts, Style::Points))?;
    #[derive(Serialize)]
    struct Summary {
        histogram_file: &'static str,
        bins: usize,
        total_counts: u64,
        bin_width_ns: f64,
        seed: u64,
    }
    ctx.report(
        "simulate_decay.json",
        &Summary { histogram_file: "histogram.csv", bins: hist.counts.len(), total_counts: hist.total_counts, bin_width_ns: hist.bin_width, seed },
    )
}

#[derive(Args, Debug)]
pub struct FitSpectrumArgs {
    /// CSV `wavelength_nm,intensity`.
    spectrum: PathBuf,
    /// Spectrometer resolution (nm).
    #[arg(long)]
    resolution_nm: Option<f64>,
}

pub fn fit_spectrum(mut ctx: Context, a: FitSpectrumArgs) -> Result<(), CliError> {
    if let Some(r) = a.resolution_nm {
        ctx.cfg.spectra.resolution_nm = r;
    }
    let out = ctx.prepare()?.to_path_buf();
    let spec = Spectrum::read_csv(&a.spectrum, ctx.cfg.spectra.resolution_nm)?;
    let fit = spectra::fit_lorentzian(&spec)?;
    for w in &fit.warnings {
        eprintln!("purcell: warning: {w}");
    }
    let model: Vec<f64> = spec.wavelength.iter().map(|&x| spectra::lorentzian(x, fit.lambda0, fit.fwhm, fit.amplitude, fit.offset)).collect();
    svg(
        &out.join("spectrum.svg"),
        Plot::new("Emission spectrum", "wavelength (nm)", "intensity")
            .with("data", &spec.wavelength, &spec.intensity, Style::Points)
            .with("Lorentzian", &spec.wavelength, &model, Style::Line),
    )?;
    ctx.report("spectrum_fit.json", &fit)
}

#[derive(Args, Debug)]
pub struct FitInterferogramArgs {
    /// CSV `delay_mm,contrast`.
    interferogram: PathBuf,
    /// Center wavelength (nm).
    #[arg(long)]
    wavelength_nm: Option<f64>,
}

pub fn fit_interferogram(mut ctx: Context, a: FitInterferogramArgs) -> Result<(), CliError> {
    if let Some(l) = a.wavelength_nm {
        ctx.cfg.spectra.wavelength_nm = l;
    }
    let out = ctx.prepare()?.to_path_buf();
    let ifg = Interferogram::read_csv(&a.interferogram)?;
    let fit = spectra::fit_interferogram(&ifg, ctx.cfg.spectra.wavelength_nm)?;
    let model: Vec<f64> = ifg.delay.iter().map(|&d| fit.visibility * spectra::interferogram_model(d, fit.lambda0, fit.fwhm)).collect();
    svg(
        &out.join("interferogram.svg"),
        Plot::new("Interferogram envelope", "delay (mm)", "contrast")
            .with("data", &ifg.delay, &ifg.contrast, Style::Points)
            .with("fit", &ifg.delay, &model, Style::Line),
    )?;
    ctx.report("interferogram_fit.json", &fit)
}

#[derive(Args, Debug)]
pub struct ThresholdArgs {
    /// CSV `power_uW,intensity[,linewidth_nm]`.
    ll: PathBuf,
}

pub fn threshold(ctx: Context, a: ThresholdArgs) -> Result<(), CliError> {
    let out = ctx.prepare()?.to_path_buf();
    let ll = LLCurve::read_csv(&a.ll)?;
    let r = spectra::threshold_analysis(&ll)?;
    svg(
        &out.join("light_light.svg"),
        Plot::new("Output versus pump", "pump (µW)", "intensity").log_axes(true, true).with("data", &ll.pump_power, &ll.output_intensity, Style::Points),
    )?;
    ctx.report("threshold.json", &r)
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// FDTD resolutions (cells per period), ascending.
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 24, 32])]
    resolutions: Vec<usize>,
    /// Ringdown length at 16 cells per period.
    #[arg(long, default_value_t = 24_000)]
    steps: usize,
}

pub fn reproduce(ctx: Context, a: ReproduceArgs) -> Result<(), CliError> {
    if a.resolutions.is_empty() || a.resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Input("--resolutions must be ascending".into()));
    }
    let out = ctx.prepare()?.to_path_buf();
    let fdtd = FdtdCheckOptions {
        design: ctx.cfg.design.clone(),
        resolutions: a.resolutions,
        steps_at_16: a.steps,
        backend: ctx.backend,
        ..Default::default()
    };
    let mut reports = Vec::new();
    for r in reproduce::run_all(&fdtd, ctx.cfg.seed) {
        let r = r?;
        println!("{r}");
        for d in &r.details {
            println!("    {d}");
        }
        reports.push(r);
    }
    let table = reproduce::comparison_table(&reports);
    println!("\n{:<30} {:>14} {:>14}  note", "quantity", "reference", "computed");
    for row in &table {
        println!("{:<30} {:>14} {:>14}  {}", row.quantity, row.reference, row.computed, row.note);
    }
    #[derive(Serialize)]
    struct Full<'a> {
        criteria: &'a [reproduce::CriterionReport],
        comparison: &'a [reproduce::Comparison],
    }
    json::write_file(&out.join("reproduce.json"), &Full { criteria: &reports, comparison: &table })?;
    let failed: Vec<u32> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("criteria {failed:?} failed")))
    }
}
