//! Double-heterostructure photonic-crystal cavity: hole lattice and its
//! rasterization to a relative-permittivity grid.
//!
//! The crystal is a hexagonal lattice of air holes with one row missing
//! along x (the W1 waveguide). Along x the lattice period is `a_c` over the
//! two central periods and `a_m` everywhere else; the transverse row
//! spacing stays `a_m·√3/2`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Backend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityDesign {
    /// Mirror lattice period (nm).
    pub a_m: f64,
    /// Cavity lattice period over the two central periods (nm).
    pub a_c: f64,
    /// Hole radius in units of `a_m`.
    pub r_over_a: f64,
    /// Hole rows on each side of the waveguide.
    pub n_rows: usize,
    /// Mirror periods on each side of the stretched region.
    pub n_mirror_periods: usize,
    /// Effective slab index of the 2D model.
    pub n_slab: f64,
    /// Design wavelength used for reporting (nm).
    pub lambda_target: f64,
}

impl Default for CavityDesign {
    fn default() -> Self {
        Self {
            a_m: 410.0,
            a_c: 440.0,
            r_over_a: 0.293,
            n_rows: 7,
            n_mirror_periods: 10,
            n_slab: 2.7,
            lambda_target: 1538.0,
        }
    }
}

impl CavityDesign {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_m > 0.0 && self.a_m.is_finite()) {
            return Err(invalid(format!("a_m must be positive, got {}", self.a_m)));
        }
        if !(self.a_c >= self.a_m && self.a_c.is_finite()) {
            return Err(invalid(format!(
                "a_c ({}) must be at least a_m ({})",
                self.a_c, self.a_m
            )));
        }
        if !(self.r_over_a > 0.0 && self.r_over_a < 0.5) {
            return Err(invalid(format!("r_over_a must lie in (0, 0.5), got {}", self.r_over_a)));
        }
        if self.n_rows < 1 {
            return Err(invalid("n_rows must be at least 1"));
        }
        if !(self.n_slab > 1.0) {
            return Err(invalid(format!("n_slab must exceed 1, got {}", self.n_slab)));
        }
        if !(self.lambda_target > 0.0) {
            return Err(invalid("lambda_target must be positive"));
        }
        Ok(())
    }

    pub fn hole_radius(&self) -> f64 {
        self.r_over_a * self.a_m
    }

    pub fn row_spacing(&self) -> f64 {
        self.a_m * 3f64.sqrt() / 2.0
    }

    /// The same crystal without the stretched region (`a_c = a_m`).
    pub fn uniform_w1(&self) -> Self {
        Self {
            a_c: self.a_m,
            ..self.clone()
        }
    }

    /// Longitudinal position of lattice coordinate `u` (in periods) under
    /// the stretch: `a_c` per period for `|u| ≤ 1`, `a_m` beyond.
    fn longitudinal(&self, u: f64) -> f64 {
        let s = u.abs();
        let x = if s <= 1.0 {
            self.a_c * s
        } else {
            self.a_c + (s - 1.0) * self.a_m
        };
        x.copysign(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Axis-aligned rectangle in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleList {
    pub holes: Vec<Hole>,
    /// Extent of the dielectric slab that hosts the holes.
    pub bounding_box: BoundingBox,
}

impl HoleList {
    /// Brute-force pairwise overlap check.
    pub fn check_overlaps(&self) -> Result<()> {
        const TOL: f64 = 1e-9;
        for (i, a) in self.holes.iter().enumerate() {
            for (j, b) in self.holes.iter().enumerate().skip(i + 1) {
                let d = (a.x - b.x).hypot(a.y - b.y);
                let min = a.radius + b.radius;
                if d < min - TOL {
                    return Err(Error::HoleOverlap {
                        first: i,
                        second: j,
                        distance: d,
                        min_distance: min,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Lay out the hole pattern of `design`.
///
/// Rows sit at `y = m·a_m·√3/2` for `0 < |m| ≤ n_rows`; odd rows are offset
/// by half a period. Each row spans lattice coordinates `|u| ≤ U + ½` with
/// `U = 1 + n_mirror_periods`. Holes are generated for `x, y ≥ 0` and
/// mirrored, so both reflection symmetries hold exactly.
pub fn build_lattice(design: &CavityDesign) -> Result<HoleList> {
    design.validate()?;
    let radius = design.hole_radius();
    let h = design.row_spacing();
    let half_extent = 1 + design.n_mirror_periods;

    let mut holes = Vec::new();
    for m in 1..=design.n_rows {
        let y = m as f64 * h;
        let odd = m % 2 == 1;
        // lattice coordinates u >= 0, doubled to stay integral
        let twice_u: Vec<usize> = if odd {
            (0..=half_extent).map(|k| 2 * k + 1).collect()
        } else {
            (0..=half_extent).map(|k| 2 * k).collect()
        };
        for &tu in &twice_u {
            let x = design.longitudinal(tu as f64 / 2.0);
            for sy in [y, -y] {
                holes.push(Hole { x, y: sy, radius });
                if tu != 0 {
                    holes.push(Hole { x: -x, y: sy, radius });
                }
            }
        }
    }
    holes.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));

    let x_edge = design.a_c + half_extent as f64 * design.a_m;
    let y_edge = (design.n_rows as f64 + 0.5) * h;
    let list = HoleList {
        holes,
        bounding_box: BoundingBox {
            x_min: -x_edge,
            x_max: x_edge,
            y_min: -y_edge,
            y_max: y_edge,
        },
    };
    list.check_overlaps()?;
    Ok(list)
}

/// Grid layout options for [`rasterize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RasterOptions {
    /// Cells per `a_m`.
    pub resolution: usize,
    /// Air between the slab edge and the absorber, in units of `a_m`.
    pub air_margin: f64,
    /// Absorber allowance added outside the air margin, in cells.
    pub pml_cells: usize,
    /// Sub-samples per axis for cells cut by a material boundary.
    pub supersample: usize,
}

impl Default for RasterOptions {
    fn default() -> Self {
        Self {
            resolution: 16,
            air_margin: 1.0,
            pml_cells: 16,
            supersample: 16,
        }
    }
}

/// Cell-index rectangle `[i0, i1) × [j0, j1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellWindow {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl CellWindow {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.i0 && i < self.i1 && j >= self.j0 && j < self.j1
    }
}

/// Relative permittivity on a uniform square grid, row-major (`j` rows of
/// `nx` cells).
#[derive(Debug, Clone, PartialEq)]
pub struct PermittivityGrid {
    pub nx: usize,
    pub ny: usize,
    /// Cell size (nm).
    pub dx: f64,
    /// Center of cell (0, 0) (nm).
    pub origin: (f64, f64),
    pub n_slab: f64,
    pub eps: Vec<f64>,
    /// Cells reserved for the absorbing layer on every side.
    pub pml_cells: usize,
    /// Cells covered by the slab (the emitter plane); `None` means the
    /// whole grid.
    pub slab_window: Option<CellWindow>,
}

impl PermittivityGrid {
    pub fn uniform(nx: usize, ny: usize, dx: f64, eps: f64) -> Self {
        Self {
            nx,
            ny,
            dx,
            origin: (-(nx as f64 - 1.0) * dx / 2.0, -(ny as f64 - 1.0) * dx / 2.0),
            n_slab: eps.sqrt().max(1.0),
            eps: vec![eps; nx * ny],
            pml_cells: 0,
            slab_window: None,
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.eps[self.index(i, j)]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.origin.0 + i as f64 * self.dx, self.origin.1 + j as f64 * self.dx)
    }

    /// Cell containing the physical point `(x, y)`.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.origin.0) / self.dx + 0.5).floor();
        let fj = ((y - self.origin.1) / self.dx + 0.5).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn eps_max(&self) -> f64 {
        self.n_slab * self.n_slab
    }

    /// Area-weighted air fraction inside a physical rectangle, counting
    /// partially covered cells by their overlap area.
    pub fn air_fraction_in(&self, region: &BoundingBox) -> f64 {
        let eps_max = self.eps_max();
        let half = self.dx / 2.0;
        let mut air = 0.0;
        let mut area = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (cx, cy) = self.cell_center(i, j);
                let ox = overlap(cx - half, cx + half, region.x_min, region.x_max);
                let oy = overlap(cy - half, cy + half, region.y_min, region.y_max);
                let w = ox * oy;
                if w > 0.0 {
                    air += w * (eps_max - self.get(i, j)) / (eps_max - 1.0);
                    area += w;
                }
            }
        }
        air / area
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Rasterize `holes` onto a grid at `opts.resolution` cells per `a_m`.
///
/// Cells cut by a hole edge or the slab edge are area-averaged over
/// `supersample²` sub-points. The grid is centered on the cavity with an
/// even cell count along x and an odd one along y, so `(0, 0)` is a cell
/// edge in x and a cell center in y: exactly where the `Ey` component of
/// the staggered FDTD grid lives.
pub fn rasterize(holes: &HoleList, design: &CavityDesign, opts: &RasterOptions) -> Result<PermittivityGrid> {
    rasterize_with(holes, design, opts, Backend::default())
}

pub fn rasterize_with(
    holes: &HoleList,
    design: &CavityDesign,
    opts: &RasterOptions,
    backend: Backend,
) -> Result<PermittivityGrid> {
    design.validate()?;
    if opts.resolution < 8 {
        return Err(invalid(format!("resolution must be at least 8, got {}", opts.resolution)));
    }
    if opts.supersample < 4 {
        return Err(invalid("supersample must be at least 4 per axis"));
    }
    if !(opts.air_margin >= 0.0) {
        return Err(invalid("air_margin must be non-negative"));
    }
    let dx = design.a_m / opts.resolution as f64;
    let bb = holes.bounding_box;
    let pad = opts.air_margin * design.a_m + opts.pml_cells as f64 * dx;
    let half_w = bb.x_max.abs().max(bb.x_min.abs()) + pad;
    let half_h = bb.y_max.abs().max(bb.y_min.abs()) + pad;
    let nx = 2 * (half_w / dx).ceil() as usize;
    let ny = 2 * (half_h / dx).ceil() as usize + 1;
    let origin = (-(nx as f64 - 1.0) * dx / 2.0, -(ny as f64 - 1.0) * dx / 2.0);
    let eps_slab = design.n_slab * design.n_slab;

    let mut eps = vec![0.0; nx * ny];
    let sub = opts.supersample;
    let half = dx / 2.0;
    let half_diag = half * std::f64::consts::SQRT_2;
    let r_max = holes.holes.iter().map(|h| h.radius).fold(0.0, f64::max);

    backend.for_each_row(&mut eps, nx, |j, row| {
        let cy = origin.1 + j as f64 * dx;
        let near: Vec<&Hole> = holes
            .holes
            .iter()
            .filter(|h| (h.y - cy).abs() <= r_max + half_diag)
            .collect();
        for (i, cell) in row.iter_mut().enumerate() {
            let cx = origin.0 + i as f64 * dx;
            *cell = cell_permittivity(cx, cy, half, half_diag, &near, &bb, sub, eps_slab);
        }
    });

    let to_cell = |x: f64, o: f64| ((x - o) / dx + 0.5).floor().max(0.0) as usize;
    let slab_window = CellWindow {
        i0: to_cell(bb.x_min, origin.0),
        i1: (to_cell(bb.x_max, origin.0) + 1).min(nx),
        j0: to_cell(bb.y_min, origin.1),
        j1: (to_cell(bb.y_max, origin.1) + 1).min(ny),
    };

    Ok(PermittivityGrid {
        nx,
        ny,
        dx,
        origin,
        n_slab: design.n_slab,
        eps,
        pml_cells: opts.pml_cells,
        slab_window: Some(slab_window),
    })
}

#[derive(PartialEq)]
enum Cover {
    Air,
    Slab,
    Mixed,
}

#[allow(clippy::too_many_arguments)]
fn cell_permittivity(
    cx: f64,
    cy: f64,
    half: f64,
    half_diag: f64,
    near: &[&Hole],
    bb: &BoundingBox,
    sub: usize,
    eps_slab: f64,
) -> f64 {
    // slab rectangle first
    let slab = if cx - half >= bb.x_min && cx + half <= bb.x_max && cy - half >= bb.y_min && cy + half <= bb.y_max {
        Cover::Slab
    } else if cx + half <= bb.x_min || cx - half >= bb.x_max || cy + half <= bb.y_min || cy - half >= bb.y_max {
        Cover::Air
    } else {
        Cover::Mixed
    };
    if slab == Cover::Air {
        return 1.0;
    }

    let mut cutting: Vec<&Hole> = Vec::new();
    for h in near {
        let d = (h.x - cx).hypot(h.y - cy);
        if d + half_diag <= h.radius {
            return 1.0;
        }
        if d - half_diag < h.radius {
            cutting.push(h);
        }
    }
    if slab == Cover::Slab && cutting.is_empty() {
        return eps_slab;
    }

    let step = 2.0 * half / sub as f64;
    let mut air = 0usize;
    for sj in 0..sub {
        let y = cy - half + (sj as f64 + 0.5) * step;
        for si in 0..sub {
            let x = cx - half + (si as f64 + 0.5) * step;
            let in_hole = cutting.iter().any(|h| {
                let (ddx, ddy) = (x - h.x, y - h.y);
                ddx * ddx + ddy * ddy < h.radius * h.radius
            });
            if in_hole || !bb.contains(x, y) {
                air += 1;
            }
        }
    }
    let frac = air as f64 / (sub * sub) as f64;
    eps_slab - (eps_slab - 1.0) * frac
}
