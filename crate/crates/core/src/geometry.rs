//! Camera projection, BEV grid layout and differentiable plane-sweep warping.
//!
//! Conventions:
//! - World frame is metric with `z` up; altitude planes are `z = const`.
//! - Image coordinates `(u, v)` are (column, row) with pixel centers on
//!   integers.
//! - BEV cell `(ix, iy)` has its center at `origin_xy + resolution_m * (ix, iy)`.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::raster::Raster;
use crate::scalar::Real;

/// Points whose projective depth does not exceed this are rejected.
pub const EPSILON_DEPTH: f64 = 1e-6;

pub type Mat3 = [[f64; 3]; 3];

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse by adjugate; `None` when singular.
pub fn inv3(m: &Mat3) -> Option<Mat3> {
    let det = det3(m);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut r = [[0.0; 3]; 3];
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    Some(r)
}

pub fn mat3_vec(m: &Mat3, x: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
        m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
        m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2],
    ]
}

/// Result of projecting a world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// A 3×4 camera matrix mapping homogeneous world points to pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 12]", into = "[f64; 12]")]
pub struct ProjectionMatrix {
    rows: [[f64; 4]; 3],
}

impl TryFrom<[f64; 12]> for ProjectionMatrix {
    type Error = CoreError;

    fn try_from(v: [f64; 12]) -> Result<Self> {
        Self::from_row_major(&v)
    }
}

impl From<ProjectionMatrix> for [f64; 12] {
    fn from(p: ProjectionMatrix) -> Self {
        p.to_row_major()
    }
}

impl ProjectionMatrix {
    /// Validates finiteness and a non-singular left 3×3 block.
    pub fn new(rows: [[f64; 4]; 3]) -> Result<Self> {
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::invalid("projection matrix", "non-finite entry"));
        }
        let left = [
            [rows[0][0], rows[0][1], rows[0][2]],
            [rows[1][0], rows[1][1], rows[1][2]],
            [rows[2][0], rows[2][1], rows[2][2]],
        ];
        let scale = left
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let det = det3(&left);
        if scale == 0.0 || det.abs() <= 1e-12 * scale.powi(3) {
            return Err(CoreError::invalid(
                "projection matrix",
                format!("left 3x3 block is singular (det = {det:e})"),
            ));
        }
        Ok(Self { rows })
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(CoreError::invalid(
                "projection matrix",
                format!("expected 12 values, got {}", v.len()),
            ));
        }
        let mut rows = [[0.0; 4]; 3];
        for (i, x) in v.iter().enumerate() {
            rows[i / 4][i % 4] = *x;
        }
        Self::new(rows)
    }

    pub fn to_row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rows[i / 4][i % 4];
        }
        out
    }

    #[inline]
    pub fn rows(&self) -> &[[f64; 4]; 3] {
        &self.rows
    }

    /// Homogeneous product `P · [x, y, z, 1]ᵀ` without the divide.
    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rows;
        let f = |i: usize| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + r[i][3];
        [f(0), f(1), f(2)]
    }

    /// Perspective projection of a world point.
    pub fn project(&self, p: [f64; 3]) -> Result<ImagePoint> {
        let [a, b, depth] = self.apply(p);
        if !(depth > EPSILON_DEPTH) {
            return Err(CoreError::DegenerateProjection {
                depth,
                epsilon: EPSILON_DEPTH,
            });
        }
        Ok(ImagePoint {
            u: a / depth,
            v: b / depth,
            depth,
        })
    }

    /// Projection into a raster whose pixel `k` is centered on image pixel
    /// `k * stride` (the sampling of stride-2 padded 3×3 convolutions).
    pub fn for_stride(&self, stride: usize) -> Self {
        self.scaled(1.0 / stride as f64)
    }

    /// Projection into a raster resampled by `scale` (raster = image * scale).
    pub fn scaled(&self, scale: f64) -> Self {
        let mut rows = self.rows;
        for v in rows[..2].iter_mut().flatten() {
            *v *= scale;
        }
        Self { rows }
    }

    /// Homography taking `(x, y, 1)` on the plane `z = a·x + b·y + c` to
    /// homogeneous image coordinates.
    pub fn plane_homography(&self, a: f64, b: f64, c: f64) -> Mat3 {
        let r = &self.rows;
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            h[i][0] = r[i][0] + a * r[i][2];
            h[i][1] = r[i][1] + b * r[i][2];
            h[i][2] = r[i][3] + c * r[i][2];
        }
        h
    }

    /// Intersect the viewing ray of pixel `(u, v)` with the plane `z = altitude`.
    pub fn backproject_to_plane(&self, u: f64, v: f64, altitude: f64) -> Option<[f64; 2]> {
        let h = self.plane_homography(0.0, 0.0, altitude);
        let inv = inv3(&h)?;
        let w = mat3_vec(&inv, [u, v, 1.0]);
        if w[2].abs() < 1e-300 {
            return None;
        }
        let xy = [w[0] / w[2], w[1] / w[2]];
        // Reject intersections behind the camera.
        self.project([xy[0], xy[1], altitude]).ok().map(|_| xy)
    }
}

/// Metric BEV grid on the ground plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BevGrid {
    pub x_cells: usize,
    pub y_cells: usize,
    pub resolution_m: f64,
    /// World coordinates of the center of cell `(0, 0)`.
    pub origin_xy: [f64; 2],
}

impl Default for BevGrid {
    fn default() -> Self {
        Self {
            x_cells: 128,
            y_cells: 96,
            resolution_m: 0.25,
            origin_xy: [0.125, 0.125],
        }
    }
}

impl BevGrid {
    pub fn new(x_cells: usize, y_cells: usize, resolution_m: f64, origin_xy: [f64; 2]) -> Result<Self> {
        let g = Self {
            x_cells,
            y_cells,
            resolution_m,
            origin_xy,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid whose cells tile `[0, x_cells·res] × [0, y_cells·res]`.
    pub fn anchored_at_zero(x_cells: usize, y_cells: usize, resolution_m: f64) -> Result<Self> {
        Self::new(
            x_cells,
            y_cells,
            resolution_m,
            [0.5 * resolution_m, 0.5 * resolution_m],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_cells == 0 || self.y_cells == 0 {
            return Err(CoreError::invalid("bev grid", "cell counts must be >= 1"));
        }
        if !(self.resolution_m > 0.0) || !self.resolution_m.is_finite() {
            return Err(CoreError::invalid("bev grid", "resolution must be > 0"));
        }
        if !self.origin_xy.iter().all(|v| v.is_finite()) {
            return Err(CoreError::invalid("bev grid", "origin must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.x_cells * self.y_cells
    }

    #[inline]
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin_xy[0] + self.resolution_m * ix as f64,
            self.origin_xy[1] + self.resolution_m * iy as f64,
        ]
    }

    /// Continuous cell coordinates of a world point (cell centers on integers).
    #[inline]
    pub fn world_to_cell(&self, x: f64, y: f64) -> [f64; 2] {
        [
            (x - self.origin_xy[0]) / self.resolution_m,
            (y - self.origin_xy[1]) / self.resolution_m,
        ]
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let [fx, fy] = self.world_to_cell(x, y);
        let ix = (fx + 0.5).floor();
        let iy = (fy + 0.5).floor();
        if ix < 0.0 || iy < 0.0 || ix >= self.x_cells as f64 || iy >= self.y_cells as f64 {
            return None;
        }
        Some((ix as usize, iy as usize))
    }

    /// World-space extent `[xmin, ymin, xmax, ymax]` covered by the cells.
    pub fn extent(&self) -> [f64; 4] {
        let h = 0.5 * self.resolution_m;
        [
            self.origin_xy[0] - h,
            self.origin_xy[1] - h,
            self.origin_xy[0] + self.resolution_m * self.x_cells as f64 - h,
            self.origin_xy[1] + self.resolution_m * self.y_cells as f64 - h,
        ]
    }

    /// A grid with `factor`× finer cells covering the same extent.
    pub fn refined(&self, factor: usize) -> Self {
        let res = self.resolution_m / factor as f64;
        let ext = self.extent();
        Self {
            x_cells: self.x_cells * factor,
            y_cells: self.y_cells * factor,
            resolution_m: res,
            origin_xy: [ext[0] + 0.5 * res, ext[1] + 0.5 * res],
        }
    }
}

/// Ordered altitude-bin centers in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AltitudeBins {
    centers_m: Vec<f64>,
}

impl TryFrom<Vec<f64>> for AltitudeBins {
    type Error = CoreError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AltitudeBins> for Vec<f64> {
    fn from(b: AltitudeBins) -> Self {
        b.centers_m
    }
}

/// The nine default bin centers, in meters.
pub const DEFAULT_ALTITUDE_CENTERS: [f64; 9] = [-1.0, -0.5, 0.0, 0.5, 0.75, 1.0, 1.5, 2.0, 8.0];

impl Default for AltitudeBins {
    fn default() -> Self {
        Self {
            centers_m: DEFAULT_ALTITUDE_CENTERS.to_vec(),
        }
    }
}

impl AltitudeBins {
    pub fn new(centers_m: Vec<f64>) -> Result<Self> {
        if centers_m.is_empty() {
            return Err(CoreError::invalid("altitude bins", "need at least one center"));
        }
        if centers_m.iter().any(|c| !c.is_finite()) {
            return Err(CoreError::invalid("altitude bins", "non-finite center"));
        }
        if centers_m.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::invalid("altitude bins", "centers must be strictly increasing"));
        }
        Ok(Self { centers_m })
    }

    /// A single plane at `altitude_m`.
    pub fn single(altitude_m: f64) -> Self {
        Self {
            centers_m: vec![altitude_m],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.centers_m.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.centers_m.is_empty()
    }

    #[inline]
    pub fn centers(&self) -> &[f64] {
        &self.centers_m
    }

    /// Nearest center; ties go to the lower index, out-of-range values clamp.
    pub fn assign(&self, altitude_m: f64) -> usize {
        let mut best = 0;
        let mut best_d = (altitude_m - self.centers_m[0]).abs();
        for (i, c) in self.centers_m.iter().enumerate().skip(1) {
            let d = (altitude_m - c).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Per-cell image coordinates of one altitude plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingGrid {
    pub x_cells: usize,
    pub y_cells: usize,
    pub altitude_m: f64,
    /// `(u, v)` per cell, indexed `iy * x_cells + ix`.
    pub uv: Vec<[f64; 2]>,
    /// `false` where the cell's world point is at or behind the camera plane.
    pub valid: Vec<bool>,
}

impl SamplingGrid {
    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> Option<[f64; 2]> {
        let i = iy * self.x_cells + ix;
        self.valid[i].then_some(self.uv[i])
    }
}

/// Projects every BEV cell center at `altitude_m` through `p`.
pub fn compute_sampling_grid(p: &ProjectionMatrix, grid: &BevGrid, altitude_m: f64) -> SamplingGrid {
    let n = grid.num_cells();
    let mut uv = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for iy in 0..grid.y_cells {
        for ix in 0..grid.x_cells {
            let [x, y] = grid.cell_center(ix, iy);
            match p.project([x, y, altitude_m]) {
                Ok(ip) => {
                    uv.push([ip.u, ip.v]);
                    valid.push(true);
                }
                Err(_) => {
                    uv.push([f64::NAN, f64::NAN]);
                    valid.push(false);
                }
            }
        }
    }
    SamplingGrid {
        x_cells: grid.x_cells,
        y_cells: grid.y_cells,
        altitude_m,
        uv,
        valid,
    }
}

/// Sampling grids for every altitude plane of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSweepGrids {
    pub x_cells: usize,
    pub y_cells: usize,
    pub planes: Vec<SamplingGrid>,
}

impl PlaneSweepGrids {
    pub fn compute(p: &ProjectionMatrix, grid: &BevGrid, bins: &AltitudeBins) -> Self {
        Self {
            x_cells: grid.x_cells,
            y_cells: grid.y_cells,
            planes: bins
                .centers()
                .iter()
                .map(|&z| compute_sampling_grid(p, grid, z))
                .collect(),
        }
    }

    #[inline]
    pub fn z_bins(&self) -> usize {
        self.planes.len()
    }
}

/// Bilinear footprint of one sample point: up to four in-bounds neighbors.
#[derive(Clone, Copy, Debug)]
pub struct Taps<T> {
    /// Pixel indices (`row * cols + col`) or `usize::MAX` when out of bounds.
    pub idx: [usize; 4],
    pub w: [T; 4],
    /// Fractional offsets used by the coordinate derivative.
    pub fx: T,
    pub fy: T,
}

pub const NO_TAP: usize = usize::MAX;

impl<T: Real> Taps<T> {
    /// Neighbors in order (x0,y0), (x1,y0), (x0,y1), (x1,y1).
    #[inline]
    pub fn new(rows: usize, cols: usize, u: T, v: T) -> Self {
        let x0f = u.floor();
        let y0f = v.floor();
        let fx = u - x0f;
        let fy = v - y0f;
        let one = T::one();
        let w = [
            (one - fx) * (one - fy),
            fx * (one - fy),
            (one - fx) * fy,
            fx * fy,
        ];
        let mut idx = [NO_TAP; 4];
        // Out-of-range coordinates (including NaN) leave every tap empty.
        if let (Some(x0), Some(y0)) = (x0f.to_i64(), y0f.to_i64()) {
            let corners = [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)];
            for (k, &(x, y)) in corners.iter().enumerate() {
                if x >= 0 && y >= 0 && (x as usize) < cols && (y as usize) < rows {
                    idx[k] = y as usize * cols + x as usize;
                }
            }
        }
        Self { idx, w, fx, fy }
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.idx.iter().all(|&i| i == NO_TAP)
    }

    /// `out += scale * sample(data)` over `channels`-wide pixels.
    #[inline]
    pub fn accumulate(&self, data: &[T], channels: usize, scale: T, out: &mut [T]) {
        for k in 0..4 {
            let i = self.idx[k];
            if i == NO_TAP {
                continue;
            }
            let w = self.w[k] * scale;
            let px = &data[i * channels..(i + 1) * channels];
            for (o, &x) in out.iter_mut().zip(px) {
                *o += w * x;
            }
        }
    }

    /// Transpose of [`Taps::accumulate`]: `grad_data += scale * w ⊗ grad`.
    #[inline]
    pub fn scatter(&self, grad: &[T], channels: usize, scale: T, grad_data: &mut [T]) {
        for k in 0..4 {
            let i = self.idx[k];
            if i == NO_TAP {
                continue;
            }
            let w = self.w[k] * scale;
            let px = &mut grad_data[i * channels..(i + 1) * channels];
            for (g, &x) in px.iter_mut().zip(grad) {
                *g += w * x;
            }
        }
    }

    /// Derivative of the sample of channel `ch` with respect to `(u, v)`.
    #[inline]
    pub fn coord_grad(&self, data: &[T], channels: usize, ch: usize) -> (T, T) {
        let val = |k: usize| {
            let i = self.idx[k];
            if i == NO_TAP {
                T::zero()
            } else {
                data[i * channels + ch]
            }
        };
        let (f00, f10, f01, f11) = (val(0), val(1), val(2), val(3));
        let one = T::one();
        let du = (one - self.fy) * (f10 - f00) + self.fy * (f11 - f01);
        let dv = (one - self.fx) * (f01 - f00) + self.fx * (f11 - f10);
        (du, dv)
    }
}

/// Bilinear interpolation at `(u, v)` with zero padding outside the raster.
pub fn bilinear_sample<T: Real>(raster: &Raster<T>, u: f64, v: f64) -> Vec<T> {
    let mut out = vec![T::zero(); raster.channels()];
    let taps = Taps::new(raster.rows(), raster.cols(), T::of(u), T::of(v));
    taps.accumulate(raster.data(), raster.channels(), T::one(), &mut out);
    out
}

/// Adjoint of [`bilinear_sample`] with respect to the raster values.
pub fn bilinear_sample_backward<T: Real>(grad_out: &[T], u: f64, v: f64, grad_raster: &mut Raster<T>) {
    let (rows, cols, ch) = grad_raster.shape();
    assert_eq!(grad_out.len(), ch);
    let taps = Taps::new(rows, cols, T::of(u), T::of(v));
    taps.scatter(grad_out, ch, T::one(), grad_raster.data_mut());
}

/// Derivative of `⟨grad_out, bilinear_sample(raster, u, v)⟩` w.r.t. `(u, v)`.
pub fn bilinear_sample_coord_grad<T: Real>(raster: &Raster<T>, grad_out: &[T], u: f64, v: f64) -> (T, T) {
    let taps = Taps::new(raster.rows(), raster.cols(), T::of(u), T::of(v));
    let mut du = T::zero();
    let mut dv = T::zero();
    for (ch, &g) in grad_out.iter().enumerate() {
        let (a, b) = taps.coord_grad(raster.data(), raster.channels(), ch);
        du += g * a;
        dv += g * b;
    }
    (du, dv)
}

/// Stacked per-altitude BEV features `G`, indexed `(iy, ix, z, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSweepVolume<T> {
    pub x_cells: usize,
    pub y_cells: usize,
    pub z_bins: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> PlaneSweepVolume<T> {
    pub fn zeros(x_cells: usize, y_cells: usize, z_bins: usize, channels: usize) -> Self {
        Self {
            x_cells,
            y_cells,
            z_bins,
            channels,
            data: vec![T::zero(); x_cells * y_cells * z_bins * channels],
        }
    }

    #[inline]
    pub fn offset(&self, ix: usize, iy: usize, z: usize) -> usize {
        ((iy * self.x_cells + ix) * self.z_bins + z) * self.channels
    }

    #[inline]
    pub fn feature(&self, ix: usize, iy: usize, z: usize) -> &[T] {
        let o = self.offset(ix, iy, z);
        &self.data[o..o + self.channels]
    }
}

/// Resamples `f_rv` onto every altitude plane of `grids`; invalid cells are zero.
///
/// `grids` must be expressed in the raster's own pixel coordinates (see
/// [`ProjectionMatrix::for_stride`]).
pub fn warp_plane_sweep<T: Real>(f_rv: &Raster<T>, grids: &PlaneSweepGrids) -> PlaneSweepVolume<T> {
    let z_bins = grids.z_bins();
    let c = f_rv.channels();
    let mut g = PlaneSweepVolume::zeros(grids.x_cells, grids.y_cells, z_bins, c);
    for (z, plane) in grids.planes.iter().enumerate() {
        for cell in 0..grids.x_cells * grids.y_cells {
            if !plane.valid[cell] {
                continue;
            }
            let [u, v] = plane.uv[cell];
            let taps = Taps::new(f_rv.rows(), f_rv.cols(), T::of(u), T::of(v));
            let o = (cell * z_bins + z) * c;
            taps.accumulate(f_rv.data(), c, T::one(), &mut g.data[o..o + c]);
        }
    }
    g
}

/// Adjoint of [`warp_plane_sweep`]: scatters `grad_g` back onto the RV raster.
pub fn warp_plane_sweep_backward<T: Real>(
    grad_g: &PlaneSweepVolume<T>,
    grids: &PlaneSweepGrids,
    rv_rows: usize,
    rv_cols: usize,
) -> Raster<T> {
    let z_bins = grids.z_bins();
    let c = grad_g.channels;
    let mut grad = Raster::zeros(rv_rows, rv_cols, c);
    for (z, plane) in grids.planes.iter().enumerate() {
        for cell in 0..grids.x_cells * grids.y_cells {
            if !plane.valid[cell] {
                continue;
            }
            let [u, v] = plane.uv[cell];
            let taps = Taps::new(rv_rows, rv_cols, T::of(u), T::of(v));
            let o = (cell * z_bins + z) * c;
            taps.scatter(&grad_g.data[o..o + c], c, T::one(), grad.data_mut());
        }
    }
    grad
}

/// Resamples a raster onto a single plane of a grid, producing a BEV raster
/// (`rows = y`, `cols = x`).
pub fn warp_to_plane<T: Real>(src: &Raster<T>, plane: &SamplingGrid) -> Raster<T> {
    let c = src.channels();
    let mut out = Raster::zeros(plane.y_cells, plane.x_cells, c);
    for cell in 0..plane.x_cells * plane.y_cells {
        if !plane.valid[cell] {
            continue;
        }
        let [u, v] = plane.uv[cell];
        let taps = Taps::new(src.rows(), src.cols(), T::of(u), T::of(v));
        taps.accumulate(src.data(), c, T::one(), &mut out.data_mut()[cell * c..(cell + 1) * c]);
    }
    out
}
