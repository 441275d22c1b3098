//! CenterNet-style dense prediction heads.

use rand::Rng;

use crate::error::Result;
use crate::nn::{relu, relu_backward, sigmoid_backward, sigmoid_raster, Conv2d, ConvCache, Param, Parameterized};
use crate::raster::Raster;
use crate::scalar::Real;

/// Initial heatmap logit: sigmoid(-2.19) ≈ 0.1, the usual focal-loss prior.
pub const HEAT_PRIOR_BIAS: f64 = -2.19;

/// Dense head outputs on one raster.
///
/// BEV: `size` is (w, l) in meters, `offset` is the sub-cell residual
/// (along columns, along rows) and `angle` is (sin θ, cos θ).
/// RV: `size` is (bw, bh) in image pixels and there is no angle.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutputs<T> {
    pub heatmap: Raster<T>,
    pub size: Raster<T>,
    pub offset: Raster<T>,
    pub angle: Option<Raster<T>>,
}

/// Loss gradients with respect to each [`HeadOutputs`] field
/// (heatmap gradient taken after the sigmoid).
#[derive(Clone, Debug)]
pub struct HeadGrads<T> {
    pub heatmap: Raster<T>,
    pub size: Raster<T>,
    pub offset: Raster<T>,
    pub angle: Option<Raster<T>>,
}

impl<T: Real> HeadGrads<T> {
    pub fn zeros_like(out: &HeadOutputs<T>) -> Self {
        let z = |r: &Raster<T>| Raster::zeros(r.rows(), r.cols(), r.channels());
        Self {
            heatmap: z(&out.heatmap),
            size: z(&out.size),
            offset: z(&out.offset),
            angle: out.angle.as_ref().map(z),
        }
    }
}

/// Shared 3×3 trunk followed by parallel 1×1 heads.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionHead<T> {
    pub trunk: Vec<Conv2d<T>>,
    pub heat: Conv2d<T>,
    pub size: Conv2d<T>,
    pub offset: Conv2d<T>,
    pub angle: Option<Conv2d<T>>,
}

pub struct HeadCache<T> {
    trunk: Vec<(ConvCache<T>, Raster<T>)>,
    heat: ConvCache<T>,
    size: ConvCache<T>,
    offset: ConvCache<T>,
    angle: Option<ConvCache<T>>,
    heatmap: Raster<T>,
}

impl<T: Real> DetectionHead<T> {
    /// `size_prior` seeds the size bias so regression starts near typical
    /// object dimensions.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        channels: usize,
        trunk_layers: usize,
        num_classes: usize,
        with_angle: bool,
        size_prior: [f64; 2],
        rng: &mut R,
    ) -> Self {
        let trunk = (0..trunk_layers)
            .map(|i| Conv2d::new(&format!("{name}.trunk{i}"), channels, channels, 3, 1, rng))
            .collect();
        let mut heat = Conv2d::with_weight_std(&format!("{name}.heat"), channels, num_classes, 1, 1, 0.01, rng);
        heat.bias.value.iter_mut().for_each(|b| *b = T::of(HEAT_PRIOR_BIAS));
        let mut size = Conv2d::with_weight_std(&format!("{name}.size"), channels, 2, 1, 1, 0.01, rng);
        size.bias.value = size_prior.iter().map(|&s| T::of(s)).collect();
        let offset = Conv2d::with_weight_std(&format!("{name}.offset"), channels, 2, 1, 1, 0.01, rng);
        let angle = with_angle.then(|| Conv2d::with_weight_std(&format!("{name}.angle"), channels, 2, 1, 1, 0.01, rng));
        Self {
            trunk,
            heat,
            size,
            offset,
            angle,
        }
    }

    pub fn zeros(name: &str, channels: usize, trunk_layers: usize, num_classes: usize, with_angle: bool) -> Self {
        Self {
            trunk: (0..trunk_layers)
                .map(|i| Conv2d::zeros(&format!("{name}.trunk{i}"), channels, channels, 3, 1))
                .collect(),
            heat: Conv2d::zeros(&format!("{name}.heat"), channels, num_classes, 1, 1),
            size: Conv2d::zeros(&format!("{name}.size"), channels, 2, 1, 1),
            offset: Conv2d::zeros(&format!("{name}.offset"), channels, 2, 1, 1),
            angle: with_angle.then(|| Conv2d::zeros(&format!("{name}.angle"), channels, 2, 1, 1)),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.heat.out_ch
    }

    pub fn forward(&self, feature: &Raster<T>) -> Result<(HeadOutputs<T>, HeadCache<T>)> {
        let mut x = feature.clone();
        let mut trunk = Vec::with_capacity(self.trunk.len());
        for conv in &self.trunk {
            let (y, c) = conv.forward(&x)?;
            x = relu(&y);
            trunk.push((c, x.clone()));
        }
        let (logits, heat) = self.heat.forward(&x)?;
        let heatmap = sigmoid_raster(&logits);
        let (size_out, size) = self.size.forward(&x)?;
        let (offset_out, offset) = self.offset.forward(&x)?;
        let (angle_out, angle) = match &self.angle {
            Some(a) => {
                let (o, c) = a.forward(&x)?;
                (Some(o), Some(c))
            }
            None => (None, None),
        };
        Ok((
            HeadOutputs {
                heatmap: heatmap.clone(),
                size: size_out,
                offset: offset_out,
                angle: angle_out,
            },
            HeadCache {
                trunk,
                heat,
                size,
                offset,
                angle,
                heatmap,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the feature gradient.
    pub fn backward(&mut self, cache: &HeadCache<T>, grads: &HeadGrads<T>) -> Raster<T> {
        let g_logits = sigmoid_backward(&cache.heatmap, &grads.heatmap);
        let mut g = self.heat.backward(&cache.heat, &g_logits);
        g.add_assign(&self.size.backward(&cache.size, &grads.size));
        g.add_assign(&self.offset.backward(&cache.offset, &grads.offset));
        if let (Some(a), Some(ac), Some(ga)) = (self.angle.as_mut(), cache.angle.as_ref(), grads.angle.as_ref()) {
            g.add_assign(&a.backward(ac, ga));
        }
        for (conv, (cc, out)) in self.trunk.iter_mut().zip(&cache.trunk).rev() {
            let gr = relu_backward(out, &g);
            g = conv.backward(cc, &gr);
        }
        g
    }
}

impl<T: Real> Parameterized<T> for DetectionHead<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for c in &self.trunk {
            v.extend(c.params());
        }
        v.extend(self.heat.params());
        v.extend(self.size.params());
        v.extend(self.offset.params());
        if let Some(a) = &self.angle {
            v.extend(a.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for c in &mut self.trunk {
            v.extend(c.params_mut());
        }
        v.extend(self.heat.params_mut());
        v.extend(self.size.params_mut());
        v.extend(self.offset.params_mut());
        if let Some(a) = &mut self.angle {
            v.extend(a.params_mut());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_gives_half_heatmap_and_zero_regression() {
        let h = DetectionHead::<f64>::zeros("bev", 4, 2, 3, true);
        let (out, _) = h.forward(&Raster::zeros(5, 6, 4)).unwrap();
        assert_eq!(out.heatmap.shape(), (5, 6, 3));
        assert!(out.heatmap.data().iter().all(|&v| v == 0.5));
        assert_eq!(out.size.shape(), (5, 6, 2));
        assert_eq!(out.offset.shape(), (5, 6, 2));
        let angle = out.angle.unwrap();
        assert_eq!(angle.shape(), (5, 6, 2));
        assert!(out.size.data().iter().chain(out.offset.data()).chain(angle.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn rv_head_has_no_angle() {
        let h = DetectionHead::<f32>::zeros("rv", 4, 1, 1, false);
        let (out, _) = h.forward(&Raster::zeros(3, 3, 4)).unwrap();
        assert!(out.angle.is_none());
        assert_eq!(h.params().len(), 8);
    }
}
