//! Yee-grid leapfrog for 2D TE fields (Ex, Ey, Hz) in normalized units.
//!
//! Layout on an `nx × ny` cell grid, rows indexed by `j`:
//! - `Hz[j][i]` at `(i+½, j+½)` (cell centers),
//! - `Ex[j][i]` at `(i+½, j)`, `Ex[0][·] = 0` (wall at y = 0),
//! - `Ey[j][i]` at `(i, j+½)`, `Ey[·][0] = 0` (wall at x = 0).
//!
//! Tangential E vanishes on the outer boundary, so with the absorber
//! switched off the box is a perfect-conductor cavity.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Backend;
use crate::geometry::PermittivityGrid;

use super::pml;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Ex,
    Ey,
    Hz,
}

pub struct Solver {
    pub(crate) nx: usize,
    pub(crate) ny: usize,
    pub(crate) dt: f64,
    pub(crate) ex: Vec<f64>,
    pub(crate) ey: Vec<f64>,
    pub(crate) hz: Vec<f64>,
    /// (Hzx, Hzy) split parts, only meaningful inside the absorber.
    hsplit: Vec<[f64; 2]>,
    inv_eps_x: Vec<f64>,
    inv_eps_y: Vec<f64>,
    pml: usize,
    ahx: Vec<f64>,
    bhx: Vec<f64>,
    ahy: Vec<f64>,
    bhy: Vec<f64>,
    aex: Vec<f64>,
    bex: Vec<f64>,
    aey: Vec<f64>,
    bey: Vec<f64>,
    steps_done: usize,
    backend: Backend,
}

impl Solver {
    /// `pml_cells = 0` gives reflecting walls.
    pub fn new(grid: &PermittivityGrid, courant: f64, pml_cells: usize, reflection: f64, backend: Backend) -> Result<Self> {
        let (nx, ny) = (grid.nx, grid.ny);
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidInput("grid must be at least 2×2".into()));
        }
        if !(courant > 0.0 && courant <= std::f64::consts::FRAC_1_SQRT_2) {
            return Err(Error::InvalidInput(format!(
                "courant factor {courant} outside (0, 1/√2]"
            )));
        }
        if pml_cells > 0 && (2 * pml_cells >= nx || 2 * pml_cells >= ny) {
            return Err(Error::InvalidInput("absorber thicker than half the grid".into()));
        }
        if grid.eps.iter().any(|&e| !(e >= 1.0 && e.is_finite())) {
            return Err(Error::InvalidInput("permittivity must be finite and ≥ 1".into()));
        }
        let dt = courant;
        let n = nx * ny;
        let mut inv_eps_x = vec![1.0; n];
        let mut inv_eps_y = vec![1.0; n];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if j > 0 {
                    inv_eps_x[k] = 2.0 / (grid.eps[k - nx] + grid.eps[k]);
                }
                if i > 0 {
                    inv_eps_y[k] = 2.0 / (grid.eps[k - 1] + grid.eps[k]);
                }
            }
        }
        let (ahx, bhx) = pml::coefficients(nx, pml_cells, reflection, dt, true);
        let (ahy, bhy) = pml::coefficients(ny, pml_cells, reflection, dt, true);
        let (aex, bex) = pml::coefficients(nx, pml_cells, reflection, dt, false);
        let (aey, bey) = pml::coefficients(ny, pml_cells, reflection, dt, false);
        Ok(Self {
            nx,
            ny,
            dt,
            ex: vec![0.0; n],
            ey: vec![0.0; n],
            hz: vec![0.0; n],
            hsplit: vec![[0.0; 2]; n],
            inv_eps_x,
            inv_eps_y,
            pml: pml_cells,
            ahx,
            bhx,
            ahy,
            bhy,
            aex,
            bex,
            aey,
            bey,
            steps_done: 0,
            backend,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// Time of the E fields currently stored.
    pub fn time(&self) -> f64 {
        self.steps_done as f64 * self.dt
    }

    pub fn field(&self, c: Component, i: usize, j: usize) -> f64 {
        let k = j * self.nx + i;
        match c {
            Component::Ex => self.ex[k],
            Component::Ey => self.ey[k],
            Component::Hz => self.hz[k],
        }
    }

    fn update_h(&mut self) {
        let (nx, ny, pml, dt) = (self.nx, self.ny, self.pml, self.dt);
        let ex = &self.ex;
        let ey = &self.ey;
        let (ahx, bhx, ahy, bhy) = (&self.ahx, &self.bhx, &self.ahy, &self.bhy);
        self.backend.for_each_row2(&mut self.hz, &mut self.hsplit, nx, |j, hz, hs| {
            let ey_row = &ey[j * nx..(j + 1) * nx];
            let ex_row = &ex[j * nx..(j + 1) * nx];
            let ex_up = if j + 1 < ny { Some(&ex[(j + 1) * nx..(j + 2) * nx]) } else { None };
            let dex = |i: usize| ex_up.map_or(0.0, |r| r[i]) - ex_row[i];
            let dey = |i: usize| if i + 1 < nx { ey_row[i + 1] } else { 0.0 } - ey_row[i];
            let split = |i: usize, hz: &mut [f64], hs: &mut [[f64; 2]]| {
                let s = &mut hs[i];
                s[0] = ahx[i] * s[0] - bhx[i] * dey(i);
                s[1] = ahy[j] * s[1] + bhy[j] * dex(i);
                hz[i] = s[0] + s[1];
            };
            if pml > 0 && (j < pml || j >= ny - pml) {
                for i in 0..nx {
                    split(i, hz, hs);
                }
                return;
            }
            for i in 0..pml {
                split(i, hz, hs);
            }
            let hi = nx - pml;
            // interior: plain update, last column handled by `dey`
            let inner_end = hi.min(nx - 1);
            match ex_up {
                Some(up) => {
                    for i in pml..inner_end {
                        hz[i] -= dt * ((ey_row[i + 1] - ey_row[i]) - (up[i] - ex_row[i]));
                    }
                }
                None => {
                    for i in pml..inner_end {
                        hz[i] -= dt * ((ey_row[i + 1] - ey_row[i]) + ex_row[i]);
                    }
                }
            }
            for i in inner_end..hi {
                hz[i] -= dt * (dey(i) - dex(i));
            }
            for i in hi..nx {
                split(i, hz, hs);
            }
        });
    }

    fn update_e(&mut self) {
        let nx = self.nx;
        let hz = &self.hz;
        let (iex, iey) = (&self.inv_eps_x, &self.inv_eps_y);
        let (aex, bex, aey, bey) = (&self.aex, &self.bex, &self.aey, &self.bey);
        self.backend.for_each_row2(&mut self.ex, &mut self.ey, nx, |j, ex, ey| {
            let base = j * nx;
            let h = &hz[base..base + nx];
            if j > 0 {
                let h_dn = &hz[base - nx..base];
                let (a, b) = (aey[j], bey[j]);
                let ie = &iex[base..base + nx];
                for i in 0..nx {
                    ex[i] = a * ex[i] + b * ie[i] * (h[i] - h_dn[i]);
                }
            }
            let ie = &iey[base..base + nx];
            for i in 1..nx {
                ey[i] = aex[i] * ey[i] - bex[i] * ie[i] * (h[i] - h[i - 1]);
            }
        });
    }

    /// Advance one full step: H to `t + dt/2`, then E to `t + dt` with the
    /// current densities `currents` (evaluated at `t + dt/2`) injected.
    pub fn step(&mut self, currents: &[(Component, usize, usize, f64)]) {
        self.update_h();
        self.update_e();
        for &(c, i, j, value) in currents {
            let k = j * self.nx + i;
            match c {
                Component::Ex => self.ex[k] -= self.dt * self.inv_eps_x[k] * value,
                Component::Ey => self.ey[k] -= self.dt * self.inv_eps_y[k] * value,
                Component::Hz => self.hz[k] -= self.dt * value,
            }
        }
        self.steps_done += 1;
    }

    pub fn max_abs(&self) -> f64 {
        self.ex
            .iter()
            .chain(&self.ey)
            .chain(&self.hz)
            .fold(0.0f64, |m, &v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) })
    }

    /// Energy in the leapfrog-invariant form
    /// `½Σ ε|E^n|² + ½Σ H^{n-½}·H^{n+½}`, exactly conserved without
    /// absorber or sources (up to roundoff).
    pub fn conserved_energy(&self) -> f64 {
        let (nx, ny, dt) = (self.nx, self.ny, self.dt);
        let mut e = 0.0;
        for k in 0..nx * ny {
            e += self.ex[k] * self.ex[k] / self.inv_eps_x[k] + self.ey[k] * self.ey[k] / self.inv_eps_y[k];
        }
        let mut h = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let ey_r = if i + 1 < nx { self.ey[k + 1] } else { 0.0 };
                let ex_u = if j + 1 < ny { self.ex[k + nx] } else { 0.0 };
                let next = self.hz[k] - dt * ((ey_r - self.ey[k]) - (ex_u - self.ex[k]));
                h += self.hz[k] * next;
            }
        }
        0.5 * (e + h)
    }

    /// Instantaneous `½Σ ε|E|² + ½Σ Hz²` (E and H half a step apart).
    pub fn field_energy(&self) -> f64 {
        let mut s = 0.0;
        for k in 0..self.nx * self.ny {
            s += self.ex[k] * self.ex[k] / self.inv_eps_x[k]
                + self.ey[k] * self.ey[k] / self.inv_eps_y[k]
                + self.hz[k] * self.hz[k];
        }
        0.5 * s
    }

    /// Add `E·phasor·weight` to running Fourier sums.
    pub(crate) fn accumulate_dft(&self, acc_x: &mut [Complex64], acc_y: &mut [Complex64], phasor: Complex64) {
        let nx = self.nx;
        let (ex, ey) = (&self.ex, &self.ey);
        self.backend.for_each_row2(acc_x, acc_y, nx, |j, ax, ay| {
            let base = j * nx;
            for i in 0..nx {
                ax[i] += phasor * ex[base + i];
                ay[i] += phasor * ey[base + i];
            }
        });
    }
}
