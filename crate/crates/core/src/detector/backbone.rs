//! Desk-scale strided convolutional encoder.
//!
//! Two stride-2 3×3 blocks bring the input to stride 4, `extra_blocks`
//! stride-1 3×3 blocks follow, and a 1×1 convolution fuses the stride-4
//! entry features with the deepest ones (the single skip connection).

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::nn::{relu, relu_backward, Conv2d, ConvCache, Param, Parameterized};
use crate::raster::Raster;
use crate::scalar::Real;

pub const BACKBONE_STRIDE: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Backbone<T> {
    pub stem: Conv2d<T>,
    pub down: Conv2d<T>,
    pub blocks: Vec<Conv2d<T>>,
    pub fuse: Conv2d<T>,
}

pub struct BackboneCache<T> {
    stem: (ConvCache<T>, Raster<T>),
    down: (ConvCache<T>, Raster<T>),
    blocks: Vec<(ConvCache<T>, Raster<T>)>,
    fuse: (ConvCache<T>, Raster<T>),
}

impl<T: Real> Backbone<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_ch: usize,
        stem_ch: usize,
        channels: usize,
        extra_blocks: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            stem: Conv2d::new(&format!("{name}.stem"), in_ch, stem_ch, 3, 2, rng),
            down: Conv2d::new(&format!("{name}.down"), stem_ch, channels, 3, 2, rng),
            blocks: (0..extra_blocks)
                .map(|i| Conv2d::new(&format!("{name}.block{i}"), channels, channels, 3, 1, rng))
                .collect(),
            fuse: Conv2d::new(&format!("{name}.fuse"), 2 * channels, channels, 1, 1, rng),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.fuse.out_ch
    }

    pub fn forward(&self, image: &Raster<T>) -> Result<(Raster<T>, BackboneCache<T>)> {
        let (h, w, _) = image.shape();
        if h % BACKBONE_STRIDE != 0 || w % BACKBONE_STRIDE != 0 {
            return Err(CoreError::shape(format!(
                "backbone input {h}x{w} is not divisible by stride {BACKBONE_STRIDE}"
            )));
        }
        let (s, sc) = self.stem.forward(image)?;
        let s = relu(&s);
        let (d, dc) = self.down.forward(&s)?;
        let d = relu(&d);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut x = d.clone();
        for b in &self.blocks {
            let (y, c) = b.forward(&x)?;
            let y = relu(&y);
            blocks.push((c, y.clone()));
            x = y;
        }
        let cat = Raster::concat_channels(&[&d, &x])?;
        let (f, fc) = self.fuse.forward(&cat)?;
        let f = relu(&f);
        Ok((
            f.clone(),
            BackboneCache {
                stem: (sc, s),
                down: (dc, d),
                blocks,
                fuse: (fc, f),
            },
        ))
    }

    /// Accumulates parameter gradients; returns the image gradient.
    pub fn backward(&mut self, cache: &BackboneCache<T>, grad_f: &Raster<T>) -> Raster<T> {
        let c = self.out_channels();
        let g = relu_backward(&cache.fuse.1, grad_f);
        let g_cat = self.fuse.backward(&cache.fuse.0, &g);
        let parts = g_cat.split_channels(&[c, c]).expect("fuse layout");
        let mut g_d = parts[0].clone();
        let mut g_x = parts[1].clone();
        for (b, (bc, out)) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let g = relu_backward(out, &g_x);
            g_x = b.backward(bc, &g);
        }
        // With no extra blocks the deepest features are the entry features.
        g_d.add_assign(&g_x);
        let g = relu_backward(&cache.down.1, &g_d);
        let g_s = self.down.backward(&cache.down.0, &g);
        let g = relu_backward(&cache.stem.1, &g_s);
        self.stem.backward(&cache.stem.0, &g)
    }
}

impl<T: Real> Parameterized<T> for Backbone<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.stem.params();
        v.extend(self.down.params());
        for b in &self.blocks {
            v.extend(b.params());
        }
        v.extend(self.fuse.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.stem.params_mut();
        v.extend(self.down.params_mut());
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v.extend(self.fuse.params_mut());
        v
    }
}
