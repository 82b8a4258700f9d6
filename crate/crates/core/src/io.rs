//! File formats: the `PGR1` binary grid layout with its text sidecar, and
//! the small CSV tables used for histograms, spectra and time series.
//!
//! `PGR1` layout: 16-byte header (`b"PGR1"`, `nx: u32 LE`, `ny: u32 LE`,
//! 4 reserved zero bytes) followed by `nx·ny` little-endian `f64` in
//! row-major order (x fastest).

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{CellWindow, PermittivityGrid};

pub const PGR_MAGIC: &[u8; 4] = b"PGR1";

pub fn write_pgr<W: Write>(mut w: W, nx: usize, ny: usize, data: &[f64]) -> Result<()> {
    if data.len() != nx * ny {
        return Err(Error::Format(format!(
            "grid data has {} values, expected {nx}×{ny}",
            data.len()
        )));
    }
    let nx32 = u32::try_from(nx).map_err(|_| Error::Format("nx exceeds u32".into()))?;
    let ny32 = u32::try_from(ny).map_err(|_| Error::Format("ny exceeds u32".into()))?;
    let mut buf = Vec::with_capacity(16 + 8 * data.len());
    buf.extend_from_slice(PGR_MAGIC);
    buf.extend_from_slice(&nx32.to_le_bytes());
    buf.extend_from_slice(&ny32.to_le_bytes());
    buf.extend_from_slice(&[0u8; 4]);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_pgr<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != PGR_MAGIC {
        return Err(Error::Format("bad magic, expected PGR1".into()));
    }
    let nx = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let ny = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != 8 * nx * ny {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {} for {nx}×{ny}",
            body.len(),
            8 * nx * ny
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((nx, ny, data))
}

/// Sidecar path for a grid file: `grid.pgr` → `grid.pgr.meta`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

impl PermittivityGrid {
    /// Write `path` (binary) and its `.meta` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_pgr(fs::File::create(path)?, self.nx, self.ny, &self.eps)?;
        fs::write(sidecar_path(path), self.sidecar_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (nx, ny, eps) = read_pgr(BufReader::new(fs::File::open(path).map_err(|e| with_path(path, e))?))?;
        let meta = {
            let side = sidecar_path(path);
            fs::read_to_string(&side).map_err(|e| with_path(&side, e))?
        };
        let mut grid = PermittivityGrid {
            nx,
            ny,
            dx: 0.0,
            origin: (0.0, 0.0),
            n_slab: 1.0,
            eps,
            pml_cells: 0,
            slab_window: None,
        };
        let mut seen_dx = false;
        for line in meta.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("sidecar line without `=`: {line}")))?;
            let value = value.trim();
            let num = |v: &str| -> Result<f64> {
                v.parse().map_err(|_| Error::Format(format!("bad number `{v}` in sidecar")))
            };
            match key.trim() {
                "dx" => {
                    grid.dx = num(value)?;
                    seen_dx = true;
                }
                "origin_x" => grid.origin.0 = num(value)?,
                "origin_y" => grid.origin.1 = num(value)?,
                "n_slab" => grid.n_slab = num(value)?,
                "pml_cells" => grid.pml_cells = num(value)? as usize,
                "slab_window" => {
                    let v: Vec<usize> = value
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad window `{value}`"))))
                        .collect::<Result<_>>()?;
                    if v.len() != 4 {
                        return Err(Error::Format(format!("slab_window needs 4 values: {value}")));
                    }
                    grid.slab_window = Some(CellWindow { i0: v[0], i1: v[1], j0: v[2], j1: v[3] });
                }
                other => return Err(Error::Format(format!("unknown sidecar key `{other}`"))),
            }
        }
        if !seen_dx {
            return Err(Error::Format("sidecar is missing dx".into()));
        }
        Ok(grid)
    }

    fn sidecar_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "dx = {:.17e}", self.dx).unwrap();
        writeln!(s, "origin_x = {:.17e}", self.origin.0).unwrap();
        writeln!(s, "origin_y = {:.17e}", self.origin.1).unwrap();
        writeln!(s, "n_slab = {:.17e}", self.n_slab).unwrap();
        writeln!(s, "pml_cells = {}", self.pml_cells).unwrap();
        if let Some(w) = self.slab_window {
            writeln!(s, "slab_window = {} {} {} {}", w.i0, w.i1, w.j0, w.j1).unwrap();
        }
        s
    }
}

/// Read a numeric CSV with a header line. Returns one `Vec` per column;
/// rows must have between `min_cols` and `max_cols` fields.
pub(crate) fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_csv_columns(path: &Path, min_cols: usize, max_cols: usize) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let reader = BufReader::new(fs::File::open(path).map_err(|e| with_path(path, e))?);
    let mut lines = reader.lines();
    let header: Vec<String> = match lines.next() {
        Some(line) => line?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::Format(format!("{}: empty file", path.display()))),
    };
    if header.len() < min_cols || header.len() > max_cols {
        return Err(Error::Format(format!(
            "{}: expected {min_cols}..={max_cols} columns, header has {}",
            path.display(),
            header.len()
        )));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Format(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                lineno + 2,
                header.len(),
                fields.len()
            )));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::Format(format!("{}:{}: bad number `{}`", path.display(), lineno + 2, f.trim()))
            })?;
            cols[c].push(v);
        }
    }
    Ok((header, cols))
}

/// Write columns as CSV with `{:.17e}` floats.
pub fn write_csv_columns(path: &Path, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    let n = cols.first().map_or(0, |c| c.len());
    if cols.iter().any(|c| c.len() != n) || header.len() != cols.len() {
        return Err(Error::Format("ragged CSV columns".into()));
    }
    let mut s = header.join(",");
    s.push('\n');
    for k in 0..n {
        for (c, col) in cols.iter().enumerate() {
            if c > 0 {
                s.push(',');
            }
            write!(s, "{}", fmt_f64(col[k])).unwrap();
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_pgr(&mut buf, 3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 8);
        assert_eq!(&buf[0..4], b"PGR1");
        assert_eq!(&buf[4..8], &[3, 0, 0, 0]);
        assert_eq!(&buf[8..12], &[2, 0, 0, 0]);
        assert_eq!(&buf[12..16], &[0, 0, 0, 0]);
        assert_eq!(&buf[16 + 5 * 8..], &6.5f64.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic_and_size() {
        let mut buf = Vec::new();
        write_pgr(&mut buf, 2, 2, &[0.0; 4]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_pgr(&bad[..]).is_err());
        assert!(read_pgr(&buf[..buf.len() - 1]).is_err());
        assert!(write_pgr(Vec::new(), 2, 3, &[0.0; 4]).is_err());
    }

    #[test]
    fn grid_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = PermittivityGrid::uniform(4, 3, 25.625, 7.29);
        g.eps[5] = 1.0;
        g.pml_cells = 1;
        g.slab_window = Some(CellWindow { i0: 1, i1: 3, j0: 0, j1: 3 });
        let path = dir.path().join("eps.pgr");
        g.save(&path).unwrap();
        assert_eq!(PermittivityGrid::load(&path).unwrap(), g);
    }

    proptest! {
        #[test]
        fn pgr_round_trip(nx in 1usize..8, ny in 1usize..8, seed in any::<u64>()) {
            let data: Vec<f64> = (0..nx * ny).map(|k| (seed.wrapping_mul(k as u64 + 1) as f64).sqrt() - 3.5).collect();
            let mut buf = Vec::new();
            write_pgr(&mut buf, nx, ny, &data).unwrap();
            let (rx, ry, back) = read_pgr(&buf[..]).unwrap();
            prop_assert_eq!((rx, ry), (nx, ny));
            prop_assert_eq!(back, data);
        }

        #[test]
        fn fmt_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
