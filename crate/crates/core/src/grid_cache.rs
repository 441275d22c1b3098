//! Content-addressed cache of plane-sweep sampling grids.
//!
//! The projection matrix is constant per image, so the grids for a
//! `(P, grid, bins)` triple are computed once and shared. Entries live in
//! memory and, when a directory is configured, on disk as flat binary files.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use sha2::{Digest, Sha256};

use crate::geometry::{AltitudeBins, BevGrid, PlaneSweepGrids, ProjectionMatrix, SamplingGrid};

/// Environment variable naming the on-disk cache directory.
pub const CACHE_DIR_ENV: &str = "AERIALBEV_CACHE_DIR";

const MAGIC: &[u8; 8] = b"ABVGRID1";

/// Hex SHA-256 over the exact bit patterns of the inputs.
pub fn grid_key(p: &ProjectionMatrix, grid: &BevGrid, bins: &AltitudeBins) -> String {
    let mut h = Sha256::new();
    for v in p.to_row_major() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update((grid.x_cells as u64).to_le_bytes());
    h.update((grid.y_cells as u64).to_le_bytes());
    h.update(grid.resolution_m.to_bits().to_le_bytes());
    h.update(grid.origin_xy[0].to_bits().to_le_bytes());
    h.update(grid.origin_xy[1].to_bits().to_le_bytes());
    h.update((bins.len() as u64).to_le_bytes());
    for c in bins.centers() {
        h.update(c.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Thread-safe grid cache: concurrent reads, exclusive inserts.
#[derive(Debug, Default)]
pub struct SamplingGridCache {
    entries: RwLock<HashMap<String, Arc<PlaneSweepGrids>>>,
    dir: Option<PathBuf>,
}

impl SamplingGridCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            entries: RwLock::default(),
            dir: Some(dir.into()),
        }
    }

    /// Uses `AERIALBEV_CACHE_DIR` when set, memory only otherwise.
    pub fn from_env() -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::with_dir(PathBuf::from(d)),
            _ => Self::in_memory(),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("grid cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(&self, p: &ProjectionMatrix, grid: &BevGrid, bins: &AltitudeBins) -> Arc<PlaneSweepGrids> {
        let key = grid_key(p, grid, bins);
        if let Some(hit) = self.entries.read().expect("grid cache poisoned").get(&key) {
            return Arc::clone(hit);
        }
        let computed = self
            .load_from_disk(&key, grid, bins)
            .unwrap_or_else(|| {
                let g = PlaneSweepGrids::compute(p, grid, bins);
                if let Some(dir) = &self.dir {
                    if let Err(e) = write_grids(&dir.join(format!("{key}.grid")), &g) {
                        log::warn!("could not persist sampling grid {key}: {e}");
                    }
                }
                g
            });
        let mut w = self.entries.write().expect("grid cache poisoned");
        Arc::clone(w.entry(key).or_insert_with(|| Arc::new(computed)))
    }

    fn load_from_disk(&self, key: &str, grid: &BevGrid, bins: &AltitudeBins) -> Option<PlaneSweepGrids> {
        let path = self.dir.as_ref()?.join(format!("{key}.grid"));
        let g = read_grids(&path).ok()?;
        let matches = g.x_cells == grid.x_cells
            && g.y_cells == grid.y_cells
            && g.planes.len() == bins.len()
            && g.planes
                .iter()
                .zip(bins.centers())
                .all(|(p, c)| p.altitude_m.to_bits() == c.to_bits());
        matches.then_some(g)
    }
}

fn write_grids(path: &Path, g: &PlaneSweepGrids) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let cells = g.x_cells * g.y_cells;
    let mut buf = Vec::with_capacity(32 + g.planes.len() * (8 + cells * 17));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(g.x_cells as u64).to_le_bytes());
    buf.extend_from_slice(&(g.y_cells as u64).to_le_bytes());
    buf.extend_from_slice(&(g.planes.len() as u64).to_le_bytes());
    for plane in &g.planes {
        buf.extend_from_slice(&plane.altitude_m.to_le_bytes());
        for (uv, &ok) in plane.uv.iter().zip(&plane.valid) {
            buf.extend_from_slice(&uv[0].to_le_bytes());
            buf.extend_from_slice(&uv[1].to_le_bytes());
            buf.push(ok as u8);
        }
    }
    // Write-then-rename so concurrent readers never see a partial file.
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)
}

fn read_grids(path: &Path) -> io::Result<PlaneSweepGrids> {
    let bytes = fs::read(path)?;
    let bad = || io::Error::new(io::ErrorKind::InvalidData, "corrupt grid cache file");
    if bytes.len() < 32 || &bytes[..8] != MAGIC {
        return Err(bad());
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (xc, yc, nz) = (u64_at(8), u64_at(16), u64_at(24));
    let cells = xc.checked_mul(yc).ok_or_else(bad)?;
    let need = nz
        .checked_mul(8 + cells * 17)
        .and_then(|n| n.checked_add(32))
        .ok_or_else(bad)?;
    if bytes.len() != need {
        return Err(bad());
    }
    let mut o = 32;
    let mut planes = Vec::with_capacity(nz);
    for _ in 0..nz {
        let altitude_m = f64_at(o);
        o += 8;
        let mut uv = Vec::with_capacity(cells);
        let mut valid = Vec::with_capacity(cells);
        for _ in 0..cells {
            uv.push([f64_at(o), f64_at(o + 8)]);
            valid.push(bytes[o + 16] != 0);
            o += 17;
        }
        planes.push(SamplingGrid {
            x_cells: xc,
            y_cells: yc,
            altitude_m,
            uv,
            valid,
        });
    }
    Ok(PlaneSweepGrids {
        x_cells: xc,
        y_cells: yc,
        planes,
    })
}
