//! Training targets: Gaussian heatmaps, regression targets and the
//! objectness mask with per-cell altitude labels.

use crate::detector::boxes::{canonical_angle, BevObject, RvBox};
use crate::geometry::{AltitudeBins, BevGrid};
use crate::raster::Raster;
use crate::scalar::Real;

/// Minimum IoU a box shifted by the radius must keep with the original.
pub const MIN_OVERLAP: f64 = 0.3;

/// The CenterNet radius rule for a `height × width` box, in cells.
///
/// This reproduces the reference formula as published, including its
/// halving in place of `2a` in the quadratic roots.
pub fn gaussian_radius(height: f64, width: f64, min_overlap: f64) -> f64 {
    let (h, w, m) = (height, width, min_overlap);
    let b1 = h + w;
    let c1 = w * h * (1.0 - m) / (1.0 + m);
    let r1 = (b1 + (b1 * b1 - 4.0 * c1).sqrt()) / 2.0;
    let b2 = 2.0 * (h + w);
    let c2 = (1.0 - m) * w * h;
    let r2 = (b2 + (b2 * b2 - 16.0 * c2).sqrt()) / 2.0;
    let a3 = 4.0 * m;
    let b3 = -2.0 * m * (h + w);
    let c3 = (m - 1.0) * w * h;
    let r3 = (b3 + (b3 * b3 - 4.0 * a3 * c3).sqrt()) / 2.0;
    r1.min(r2).min(r3)
}

/// Integer splat radius (never negative).
pub fn splat_radius(height: f64, width: f64) -> usize {
    gaussian_radius(height, width, MIN_OVERLAP).max(0.0) as usize
}

/// Draws `exp(-d²/2σ²)` with `σ = (2r+1)/6` into one channel, keeping the
/// elementwise maximum.
pub fn draw_gaussian<T: Real>(heat: &mut Raster<T>, channel: usize, row: usize, col: usize, radius: usize) {
    let sigma = (2 * radius + 1) as f64 / 6.0;
    let (rows, cols, _) = heat.shape();
    let r0 = row.saturating_sub(radius);
    let r1 = (row + radius).min(rows - 1);
    let c0 = col.saturating_sub(radius);
    let c1 = (col + radius).min(cols - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let dy = r as f64 - row as f64;
            let dx = c as f64 - col as f64;
            let g = T::of((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
            let i = heat.index(r, c, channel);
            let d = heat.data_mut();
            if g > d[i] {
                d[i] = g;
            }
        }
    }
}

/// Supervision at one object's center cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenterTarget {
    pub row: usize,
    pub col: usize,
    pub class_id: usize,
    /// Sub-cell residual (along columns, along rows).
    pub offset: [f64; 2],
    pub size: [f64; 2],
    /// `(sin θ, cos θ)` of the canonical angle; BEV only.
    pub angle: Option<[f64; 2]>,
    pub altitude_bin: usize,
    pub altitude_m: f64,
}

/// Rendered targets for one raster.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetMaps<T> {
    pub heatmap: Raster<T>,
    pub centers: Vec<CenterTarget>,
    /// Objectness mask, row-major over cells.
    pub mask: Vec<bool>,
    /// Altitude bin per cell, meaningful where `mask` is set.
    pub altitude_bin: Vec<usize>,
    /// Continuous altitude per cell, meaningful where `mask` is set.
    pub altitude_m: Vec<f64>,
    /// Objects that could not be placed on the raster.
    pub skipped: usize,
}

impl<T: Real> TargetMaps<T> {
    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// BEV targets. Objects whose center falls outside the grid get no peak
/// and are counted in `skipped`; their in-grid footprint still enters the
/// mask. Where footprints overlap the higher object labels the cell.
pub fn render_targets<T: Real>(
    objects: &[BevObject],
    grid: &BevGrid,
    bins: &AltitudeBins,
    num_classes: usize,
) -> TargetMaps<T> {
    let (rows, cols) = (grid.y_cells, grid.x_cells);
    let mut heatmap = Raster::zeros(rows, cols, num_classes);
    let mut centers = Vec::new();
    let mut mask = vec![false; rows * cols];
    let mut altitude_bin = vec![0; rows * cols];
    let mut altitude_m = vec![0.0; rows * cols];
    let mut skipped = 0;

    let mut order: Vec<usize> = (0..objects.len()).collect();
    order.sort_by(|&a, &b| objects[a].altitude_m.total_cmp(&objects[b].altitude_m));
    for &k in &order {
        let o = &objects[k];
        let bin = bins.assign(o.altitude_m);
        let painted = paint_footprint(o, grid, bin, &mut mask, &mut altitude_bin, &mut altitude_m);

        let Some((col, row)) = grid.cell_of(o.x, o.y).filter(|_| o.class_id < num_classes) else {
            skipped += 1;
            continue;
        };
        if !painted {
            // Footprint smaller than a cell: supervise the center cell.
            let i = row * cols + col;
            mask[i] = true;
            altitude_bin[i] = bin;
            altitude_m[i] = o.altitude_m;
        }
        let [fx, fy] = grid.world_to_cell(o.x, o.y);
        let radius = splat_radius(o.l / grid.resolution_m, o.w / grid.resolution_m);
        draw_gaussian(&mut heatmap, o.class_id, row, col, radius);
        let theta = canonical_angle(o.theta);
        centers.push(CenterTarget {
            row,
            col,
            class_id: o.class_id,
            offset: [fx - col as f64, fy - row as f64],
            size: [o.w, o.l],
            angle: Some([theta.sin(), theta.cos()]),
            altitude_bin: bin,
            altitude_m: o.altitude_m,
        });
    }
    TargetMaps {
        heatmap,
        centers,
        mask,
        altitude_bin,
        altitude_m,
        skipped,
    }
}

fn paint_footprint(
    o: &BevObject,
    grid: &BevGrid,
    bin: usize,
    mask: &mut [bool],
    altitude_bin: &mut [usize],
    altitude_m: &mut [f64],
) -> bool {
    let corners = o.corners();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for [x, y] in corners {
        let [cx, cy] = grid.world_to_cell(x, y);
        x0 = x0.min(cx);
        y0 = y0.min(cy);
        x1 = x1.max(cx);
        y1 = y1.max(cy);
    }
    let c0 = x0.ceil().max(0.0) as usize;
    let r0 = y0.ceil().max(0.0) as usize;
    let c1 = x1.floor().min(grid.x_cells as f64 - 1.0);
    let r1 = y1.floor().min(grid.y_cells as f64 - 1.0);
    if c1 < 0.0 || r1 < 0.0 {
        return false;
    }
    let mut any = false;
    for r in r0..=r1 as usize {
        for c in c0..=c1 as usize {
            let [wx, wy] = grid.cell_center(c, r);
            if o.contains(wx, wy) {
                let i = r * grid.x_cells + c;
                mask[i] = true;
                altitude_bin[i] = bin;
                altitude_m[i] = o.altitude_m;
                any = true;
            }
        }
    }
    any
}

/// RV targets on a feature raster of the given stride. Sizes stay in
/// image pixels; centers and offsets are in feature cells.
pub fn render_rv_targets<T: Real>(
    boxes: &[RvBox],
    rows: usize,
    cols: usize,
    stride: usize,
    num_classes: usize,
) -> TargetMaps<T> {
    let s = stride as f64;
    let mut heatmap = Raster::zeros(rows, cols, num_classes);
    let mut centers = Vec::new();
    let mut skipped = 0;
    for b in boxes {
        let (fu, fv) = (b.cu / s, b.cv / s);
        let (col, row) = ((fu + 0.5).floor(), (fv + 0.5).floor());
        if col < 0.0 || row < 0.0 || col >= cols as f64 || row >= rows as f64 || b.class_id >= num_classes {
            skipped += 1;
            continue;
        }
        let (row, col) = (row as usize, col as usize);
        draw_gaussian(&mut heatmap, b.class_id, row, col, splat_radius(b.bh / s, b.bw / s));
        centers.push(CenterTarget {
            row,
            col,
            class_id: b.class_id,
            offset: [fu - col as f64, fv - row as f64],
            size: [b.bw, b.bh],
            angle: None,
            altitude_bin: 0,
            altitude_m: 0.0,
        });
    }
    TargetMaps {
        heatmap,
        centers,
        mask: vec![false; rows * cols],
        altitude_bin: vec![0; rows * cols],
        altitude_m: vec![0.0; rows * cols],
        skipped,
    }
}
