//! Geo-deformable transformation: altitude-weighted collapse of the plane
//! sweep, a coordinate-conditioned deformable convolution, and their
//! residual sum.

use rand::Rng;

use crate::altitude::AltitudeVolumeBev;
use crate::error::{CoreError, Result};
use crate::geometry::{warp_plane_sweep, warp_plane_sweep_backward, BevGrid, PlaneSweepGrids, PlaneSweepVolume, Taps};
use crate::nn::{Conv2d, ConvCache, Param, Parameterized};
use crate::raster::Raster;
use crate::scalar::{gemm, Layout, Real};

/// `F_g(x, y, :) = (1/Z) Σ_z G(x, y, z, :) · A(x, y, z)`.
pub fn collapse_weighted<T: Real>(g: &PlaneSweepVolume<T>, a_bev: &AltitudeVolumeBev<T>) -> Result<Raster<T>> {
    if a_bev.shape() != (g.y_cells, g.x_cells, g.z_bins) {
        return Err(CoreError::shape(format!(
            "collapse: volume is {}x{}x{} (y,x,z) but altitude is {:?}",
            g.y_cells,
            g.x_cells,
            g.z_bins,
            a_bev.shape()
        )));
    }
    let (z_bins, c) = (g.z_bins, g.channels);
    let inv_z = T::one() / T::of(z_bins as f64);
    let mut out = Raster::zeros(g.y_cells, g.x_cells, c);
    let a = a_bev.data();
    for (cell, dst) in out.data_mut().chunks_exact_mut(c).enumerate() {
        for z in 0..z_bins {
            let w = a[cell * z_bins + z];
            let src = &g.data[(cell * z_bins + z) * c..(cell * z_bins + z + 1) * c];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s * w;
            }
        }
        for d in dst.iter_mut() {
            *d *= inv_z;
        }
    }
    Ok(out)
}

/// Gradients of [`collapse_weighted`] with respect to `G` and `A`.
pub fn collapse_weighted_backward<T: Real>(
    g: &PlaneSweepVolume<T>,
    a_bev: &AltitudeVolumeBev<T>,
    grad_out: &Raster<T>,
) -> (PlaneSweepVolume<T>, AltitudeVolumeBev<T>) {
    let (z_bins, c) = (g.z_bins, g.channels);
    let inv_z = T::one() / T::of(z_bins as f64);
    let mut grad_g = PlaneSweepVolume::zeros(g.x_cells, g.y_cells, z_bins, c);
    let mut grad_a = Raster::zeros(g.y_cells, g.x_cells, z_bins);
    let a = a_bev.data();
    for (cell, go) in grad_out.data().chunks_exact(c).enumerate() {
        for z in 0..z_bins {
            let o = (cell * z_bins + z) * c;
            let w = a[cell * z_bins + z] * inv_z;
            let mut dot = T::zero();
            for ch in 0..c {
                grad_g.data[o + ch] = go[ch] * w;
                dot += go[ch] * g.data[o + ch];
            }
            grad_a.data_mut()[cell * z_bins + z] = dot * inv_z;
        }
    }
    (grad_g, grad_a)
}

/// Normalized `x` and `y` coordinate rasters stacked as 2 channels.
///
/// Channel 0 ramps from -1 to 1 along `x`, channel 1 along `y`; a
/// single-cell axis is 0.
pub fn coord_channels<T: Real>(grid: &BevGrid) -> Raster<T> {
    let ramp = |i: usize, n: usize| {
        if n <= 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (n - 1) as f64
        }
    };
    Raster::from_fn(grid.y_cells, grid.x_cells, 2, |iy, ix, ch| {
        T::of(if ch == 0 {
            ramp(ix, grid.x_cells)
        } else {
            ramp(iy, grid.y_cells)
        })
    })
}

/// Single 3×3 deformable convolution (offsets only, no modulation).
///
/// The offset predictor is an ordinary 3×3 convolution producing, for each
/// of the 9 taps `k = ky·3 + kx`, the pair `(Δu, Δv)` in channels `2k, 2k+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformableConv<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub offset: Conv2d<T>,
    pub in_ch: usize,
    pub out_ch: usize,
}

pub struct DeformCache<T> {
    input_shape: (usize, usize, usize),
    offset_cache: ConvCache<T>,
    offsets: Raster<T>,
    taps: Vec<Taps<T>>,
    cols: Vec<T>,
    input: Raster<T>,
}

const TAPS: usize = 9;

impl<T: Real> DeformableConv<T> {
    /// Small random kernel, zero bias, zero offset predictor.
    pub fn new<R: Rng + ?Sized>(name: &str, in_ch: usize, out_ch: usize, kernel_std: f64, rng: &mut R) -> Self {
        Self {
            weight: Param::normal(format!("{name}.weight"), vec![out_ch, 3, 3, in_ch], kernel_std, rng),
            bias: Param::zeros(format!("{name}.bias"), vec![out_ch]),
            offset: Conv2d::zeros(&format!("{name}.offset"), in_ch, 2 * TAPS, 3, 1),
            in_ch,
            out_ch,
        }
    }

    pub fn zeros(name: &str, in_ch: usize, out_ch: usize) -> Self {
        Self {
            weight: Param::zeros(format!("{name}.weight"), vec![out_ch, 3, 3, in_ch]),
            bias: Param::zeros(format!("{name}.bias"), vec![out_ch]),
            offset: Conv2d::zeros(&format!("{name}.offset"), in_ch, 2 * TAPS, 3, 1),
            in_ch,
            out_ch,
        }
    }

    pub fn forward(&self, input: &Raster<T>) -> Result<(Raster<T>, DeformCache<T>)> {
        let (h, w, c) = input.shape();
        if c != self.in_ch {
            return Err(CoreError::shape(format!(
                "deformable conv expects {} channels, got {c}",
                self.in_ch
            )));
        }
        let (offsets, offset_cache) = self.offset.forward(input)?;
        let plen = TAPS * c;
        let mut cols = vec![T::zero(); h * w * plen];
        let mut taps = Vec::with_capacity(h * w * TAPS);
        let off = offsets.data();
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                for k in 0..TAPS {
                    let (ky, kx) = (k / 3, k % 3);
                    let u = T::of((x + kx) as f64 - 1.0) + off[p * 2 * TAPS + 2 * k];
                    let v = T::of((y + ky) as f64 - 1.0) + off[p * 2 * TAPS + 2 * k + 1];
                    let t = Taps::new(h, w, u, v);
                    t.accumulate(input.data(), c, T::one(), &mut cols[p * plen + k * c..p * plen + (k + 1) * c]);
                    taps.push(t);
                }
            }
        }
        let mut out = vec![T::zero(); h * w * self.out_ch];
        for px in out.chunks_exact_mut(self.out_ch) {
            px.copy_from_slice(&self.bias.value);
        }
        gemm(
            h * w,
            plen,
            self.out_ch,
            T::one(),
            &cols,
            Layout::Normal,
            &self.weight.value,
            Layout::Transposed,
            T::one(),
            &mut out,
        );
        Ok((
            Raster::from_vec(h, w, self.out_ch, out)?,
            DeformCache {
                input_shape: (h, w, c),
                offset_cache,
                offsets,
                taps,
                cols,
                input: input.clone(),
            },
        ))
    }

    /// Accumulates kernel, bias and offset-predictor gradients; returns the
    /// input gradient (through both the sampling and the offset branch).
    pub fn backward(&mut self, cache: &DeformCache<T>, grad_out: &Raster<T>) -> Raster<T> {
        let (h, w, c) = cache.input_shape;
        let plen = TAPS * c;
        let g = grad_out.data();
        for px in g.chunks_exact(self.out_ch) {
            for (b, &v) in self.bias.grad.iter_mut().zip(px) {
                *b += v;
            }
        }
        gemm(
            self.out_ch,
            h * w,
            plen,
            T::one(),
            g,
            Layout::Transposed,
            &cache.cols,
            Layout::Normal,
            T::one(),
            &mut self.weight.grad,
        );
        let mut grad_cols = vec![T::zero(); h * w * plen];
        gemm(
            h * w,
            self.out_ch,
            plen,
            T::one(),
            g,
            Layout::Normal,
            &self.weight.value,
            Layout::Normal,
            T::zero(),
            &mut grad_cols,
        );
        let mut grad_in = Raster::zeros(h, w, c);
        let mut grad_off = Raster::zeros(h, w, 2 * TAPS);
        let data = cache.input.data();
        for p in 0..h * w {
            for k in 0..TAPS {
                let t = &cache.taps[p * TAPS + k];
                let gc = &grad_cols[p * plen + k * c..p * plen + (k + 1) * c];
                t.scatter(gc, c, T::one(), grad_in.data_mut());
                let mut du = T::zero();
                let mut dv = T::zero();
                for (ch, &gv) in gc.iter().enumerate() {
                    let (a, b) = t.coord_grad(data, c, ch);
                    du += gv * a;
                    dv += gv * b;
                }
                let go = grad_off.data_mut();
                go[p * 2 * TAPS + 2 * k] = du;
                go[p * 2 * TAPS + 2 * k + 1] = dv;
            }
        }
        let via_offsets = self.offset.backward(&cache.offset_cache, &grad_off);
        grad_in.add_assign(&via_offsets);
        grad_in
    }

    /// Offsets produced in the last forward pass.
    pub fn offsets(cache: &DeformCache<T>) -> &Raster<T> {
        &cache.offsets
    }
}

impl<T: Real> Parameterized<T> for DeformableConv<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.weight, &self.bias];
        v.extend(self.offset.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.weight, &mut self.bias];
        v.extend(self.offset.params_mut());
        v
    }
}

/// Intermediate values of the geo-deformable transform kept for backward.
pub struct GeoDeformCache<T> {
    pub volume: PlaneSweepVolume<T>,
    pub geometric: Raster<T>,
    deform: Option<DeformCache<T>>,
    rv_shape: (usize, usize),
}

/// `F_bev = F_g + DCN([F_g; X; Y])` with `F_g` the altitude-weighted collapse
/// of the plane sweep. With `dcn = None` the result is `F_g`.
pub fn geo_deformable_transform<T: Real>(
    f_rv: &Raster<T>,
    a_bev: &AltitudeVolumeBev<T>,
    grids: &PlaneSweepGrids,
    coords: &Raster<T>,
    dcn: Option<&DeformableConv<T>>,
) -> Result<(Raster<T>, GeoDeformCache<T>)> {
    let volume = warp_plane_sweep(f_rv, grids);
    let geometric = collapse_weighted(&volume, a_bev)?;
    let (out, deform) = match dcn {
        Some(d) => {
            let input = Raster::concat_channels(&[&geometric, coords])?;
            let (fd, cache) = d.forward(&input)?;
            let mut out = geometric.clone();
            out.add_assign(&fd);
            (out, Some(cache))
        }
        None => (geometric.clone(), None),
    };
    Ok((
        out,
        GeoDeformCache {
            volume,
            geometric,
            deform,
            rv_shape: (f_rv.rows(), f_rv.cols()),
        },
    ))
}

/// Returns `(grad F_rv, grad A_bev)` and accumulates DCN parameter gradients.
pub fn geo_deformable_transform_backward<T: Real>(
    cache: &GeoDeformCache<T>,
    a_bev: &AltitudeVolumeBev<T>,
    grids: &PlaneSweepGrids,
    dcn: Option<&mut DeformableConv<T>>,
    grad_out: &Raster<T>,
) -> (Raster<T>, AltitudeVolumeBev<T>) {
    let mut grad_g = grad_out.clone();
    if let (Some(d), Some(dc)) = (dcn, cache.deform.as_ref()) {
        let grad_in = d.backward(dc, grad_out);
        let c = grad_g.channels();
        let parts = grad_in.split_channels(&[c, 2]).expect("dcn input layout");
        grad_g.add_assign(&parts[0]);
    }
    let (grad_vol, grad_a) = collapse_weighted_backward(&cache.volume, a_bev, &grad_g);
    let grad_rv = warp_plane_sweep_backward(&grad_vol, grids, cache.rv_shape.0, cache.rv_shape.1);
    (grad_rv, grad_a)
}
