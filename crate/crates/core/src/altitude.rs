//! Categorical altitude estimation in the range view and its transfer to BEV.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{AltitudeBins, PlaneSweepGrids, Taps};
use crate::nn::{softmax_channels, softmax_channels_backward, sigmoid, Conv2d, ConvCache, Param, Parameterized};
use crate::raster::Raster;
use crate::scalar::Real;

/// Per-pixel altitude confidences, `H_R × W_R × Z`.
pub type AltitudeVolumeRv<T> = Raster<T>;

/// Per-cell altitude confidences, `Y × X × Z` (rows are `y` cells).
pub type AltitudeVolumeBev<T> = Raster<T>;

/// Nearest bin center, ties to the lower index, clamped at the ends.
pub fn assign_altitude_bin(altitude_m: f64, bins: &AltitudeBins) -> usize {
    bins.assign(altitude_m)
}

/// How the RV altitude head turns logits into confidences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AltitudeNormalization {
    /// Softmax over the bins: a distribution per pixel.
    #[default]
    Softmax,
    /// Independent sigmoid per bin.
    Sigmoid,
    /// One regressed altitude per pixel, spread linearly onto the two
    /// neighboring bin centers.
    Continuous,
}

/// The 1×1 convolution `C → Z` (or `C → 1` for the continuous variant).
#[derive(Clone, Debug, PartialEq)]
pub struct AltitudeHead<T> {
    pub conv: Conv2d<T>,
    pub normalization: AltitudeNormalization,
    pub centers: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AltitudeHeadCache<T> {
    conv: ConvCache<T>,
    logits: Raster<T>,
    out: Raster<T>,
}

impl<T: Real> AltitudeHead<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        channels: usize,
        bins: &AltitudeBins,
        normalization: AltitudeNormalization,
        rng: &mut R,
    ) -> Self {
        let out = match normalization {
            AltitudeNormalization::Continuous => 1,
            _ => bins.len(),
        };
        let mut conv = Conv2d::with_weight_std(name, channels, out, 1, 1, 0.01, rng);
        if normalization == AltitudeNormalization::Continuous {
            // Start at the ground plane.
            conv.bias.value[0] = T::zero();
        }
        Self {
            conv,
            normalization,
            centers: bins.centers().to_vec(),
        }
    }

    pub fn zeros(name: &str, channels: usize, bins: &AltitudeBins) -> Self {
        Self {
            conv: Conv2d::zeros(name, channels, bins.len(), 1, 1),
            normalization: AltitudeNormalization::Softmax,
            centers: bins.centers().to_vec(),
        }
    }

    pub fn z_bins(&self) -> usize {
        self.centers.len()
    }

    /// `A_rv`: per-pixel confidences over the bins.
    pub fn forward(&self, f_rv: &Raster<T>) -> Result<(AltitudeVolumeRv<T>, AltitudeHeadCache<T>)> {
        let (logits, conv) = self.conv.forward(f_rv)?;
        let out = match self.normalization {
            AltitudeNormalization::Softmax => softmax_channels(&logits),
            AltitudeNormalization::Sigmoid => logits.map(sigmoid),
            AltitudeNormalization::Continuous => soft_bin(&logits, &self.centers),
        };
        Ok((out.clone(), AltitudeHeadCache { conv, logits, out }))
    }

    pub fn backward(&mut self, cache: &AltitudeHeadCache<T>, grad_a: &Raster<T>) -> Raster<T> {
        let grad_logits = match self.normalization {
            AltitudeNormalization::Softmax => softmax_channels_backward(&cache.out, grad_a),
            AltitudeNormalization::Sigmoid => {
                let mut g = grad_a.clone();
                for (gv, &s) in g.data_mut().iter_mut().zip(cache.out.data()) {
                    *gv *= s * (T::one() - s);
                }
                g
            }
            AltitudeNormalization::Continuous => soft_bin_backward(&cache.logits, &self.centers, grad_a),
        };
        self.conv.backward(&cache.conv, &grad_logits)
    }

    /// Regressed altitude per pixel (continuous variant only).
    pub fn regressed_altitude(cache: &AltitudeHeadCache<T>) -> &Raster<T> {
        &cache.logits
    }
}

impl<T: Real> Parameterized<T> for AltitudeHead<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.conv.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.conv.params_mut()
    }
}

/// Position of `a` among the centers: `(lower index, weight of the upper bin)`.
fn bracket(a: f64, centers: &[f64]) -> (usize, f64, f64) {
    let z = centers.len();
    if z == 1 || a <= centers[0] {
        return (0, 0.0, 0.0);
    }
    if a >= centers[z - 1] {
        return (z - 1, 0.0, 0.0);
    }
    let i = centers.windows(2).position(|w| a < w[1]).unwrap_or(z - 2);
    let span = centers[i + 1] - centers[i];
    (i, (a - centers[i]) / span, 1.0 / span)
}

fn soft_bin<T: Real>(alt: &Raster<T>, centers: &[f64]) -> Raster<T> {
    let z = centers.len();
    let mut out = Raster::zeros(alt.rows(), alt.cols(), z);
    for (px, &a) in out.data_mut().chunks_exact_mut(z).zip(alt.data()) {
        let (i, t, _) = bracket(a.as_f64(), centers);
        px[i] = T::of(1.0 - t);
        if t > 0.0 {
            px[i + 1] = T::of(t);
        }
    }
    out
}

fn soft_bin_backward<T: Real>(alt: &Raster<T>, centers: &[f64], grad: &Raster<T>) -> Raster<T> {
    let z = centers.len();
    let mut out = Raster::zeros(alt.rows(), alt.cols(), 1);
    for ((o, &a), g) in out.data_mut().iter_mut().zip(alt.data()).zip(grad.data().chunks_exact(z)) {
        let (i, _, dt) = bracket(a.as_f64(), centers);
        if dt > 0.0 {
            *o = (g[i + 1] - g[i]) * T::of(dt);
        }
    }
    out
}

/// Samples channel `z` of `A_rv` on altitude plane `z`; invalid cells are zero.
pub fn transform_altitude_to_bev<T: Real>(a_rv: &AltitudeVolumeRv<T>, grids: &PlaneSweepGrids) -> Result<AltitudeVolumeBev<T>> {
    let z_bins = grids.z_bins();
    if a_rv.channels() != z_bins {
        return Err(CoreError::shape(format!(
            "altitude volume has {} bins, sweep has {z_bins}",
            a_rv.channels()
        )));
    }
    let mut out = Raster::zeros(grids.y_cells, grids.x_cells, z_bins);
    let (rows, cols) = (a_rv.rows(), a_rv.cols());
    let src = a_rv.data();
    for (z, plane) in grids.planes.iter().enumerate() {
        let dst = out.data_mut();
        for cell in 0..grids.x_cells * grids.y_cells {
            if !plane.valid[cell] {
                continue;
            }
            let [u, v] = plane.uv[cell];
            let taps = Taps::new(rows, cols, T::of(u), T::of(v));
            let mut acc = T::zero();
            for k in 0..4 {
                if taps.idx[k] != crate::geometry::NO_TAP {
                    acc += taps.w[k] * src[taps.idx[k] * z_bins + z];
                }
            }
            dst[cell * z_bins + z] = acc;
        }
    }
    Ok(out)
}

/// Adjoint of [`transform_altitude_to_bev`].
pub fn transform_altitude_to_bev_backward<T: Real>(
    grad_bev: &AltitudeVolumeBev<T>,
    grids: &PlaneSweepGrids,
    rv_rows: usize,
    rv_cols: usize,
) -> AltitudeVolumeRv<T> {
    let z_bins = grids.z_bins();
    let mut grad = Raster::zeros(rv_rows, rv_cols, z_bins);
    let g = grad_bev.data();
    for (z, plane) in grids.planes.iter().enumerate() {
        let dst = grad.data_mut();
        for cell in 0..grids.x_cells * grids.y_cells {
            if !plane.valid[cell] {
                continue;
            }
            let gv = g[cell * z_bins + z];
            if gv == T::zero() {
                continue;
            }
            let [u, v] = plane.uv[cell];
            let taps = Taps::new(rv_rows, rv_cols, T::of(u), T::of(v));
            for k in 0..4 {
                if taps.idx[k] != crate::geometry::NO_TAP {
                    dst[taps.idx[k] * z_bins + z] += taps.w[k] * gv;
                }
            }
        }
    }
    grad
}
