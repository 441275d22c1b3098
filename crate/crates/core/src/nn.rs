//! Minimal layers with explicit forward/backward passes.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::raster::Raster;
use crate::scalar::{gemm, Layout, Real};

/// A named trainable array with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, v: T) -> Self {
        let mut p = Self::zeros(name, shape);
        p.value.iter_mut().for_each(|x| *x = v);
        p
    }

    /// Normal(0, std) initialization.
    pub fn normal<R: Rng + ?Sized>(name: impl Into<String>, shape: Vec<usize>, std: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(name, shape);
        let dist = Normal::new(0.0, std).expect("std must be finite and non-negative");
        for v in &mut p.value {
            *v = T::of(dist.sample(rng));
        }
        p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.value.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Anything owning trainable parameters.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Sets every parameter value to zero.
    fn zero_params(&mut self) {
        for p in self.params_mut() {
            p.value.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

/// Square-kernel 2D convolution over channel-last rasters.
///
/// Weights are laid out `[out][ky][kx][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Saved activations of a convolution.
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
    /// im2col matrix; `None` for 1×1 stride-1 convolutions, which reuse the input.
    cols: Option<Vec<T>>,
    input: Option<Raster<T>>,
}

impl<T: Real> Conv2d<T> {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = kernel * kernel * in_ch;
        let std = (2.0 / fan_in as f64).sqrt();
        Self::with_weight_std(name, in_ch, out_ch, kernel, stride, std, rng)
    }

    pub fn with_weight_std<R: Rng + ?Sized>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        Self {
            weight: Param::normal(
                format!("{name}.weight"),
                vec![out_ch, kernel, kernel, in_ch],
                std,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), vec![out_ch]),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad: kernel / 2,
        }
    }

    pub fn zeros(name: &str, in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        Self {
            weight: Param::zeros(format!("{name}.weight"), vec![out_ch, kernel, kernel, in_ch]),
            bias: Param::zeros(format!("{name}.bias"), vec![out_ch]),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad: kernel / 2,
        }
    }

    #[inline]
    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_ch
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    fn im2col(&self, input: &Raster<T>, oh: usize, ow: usize) -> Vec<T> {
        let (h, w, c) = input.shape();
        let k = self.kernel;
        let plen = self.patch_len();
        let mut cols = vec![T::zero(); oh * ow * plen];
        let data = input.data();
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &mut cols[(oy * ow + ox) * plen..(oy * ow + ox + 1) * plen];
                for ky in 0..k {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let src = (iy as usize * w + ix as usize) * c;
                        let dst = (ky * k + kx) * c;
                        row[dst..dst + c].copy_from_slice(&data[src..src + c]);
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T], in_shape: (usize, usize, usize), oh: usize, ow: usize) -> Raster<T> {
        let (h, w, c) = in_shape;
        let k = self.kernel;
        let plen = self.patch_len();
        let mut out = Raster::zeros(h, w, c);
        let data = out.data_mut();
        for oy in 0..oh {
            for ox in 0..ow {
                let row = &cols[(oy * ow + ox) * plen..(oy * ow + ox + 1) * plen];
                for ky in 0..k {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let dst = (iy as usize * w + ix as usize) * c;
                        let src = (ky * k + kx) * c;
                        for (d, &s) in data[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                            *d += s;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, input: &Raster<T>) -> Result<(Raster<T>, ConvCache<T>)> {
        let (h, w, c) = input.shape();
        if c != self.in_ch {
            return Err(CoreError::shape(format!(
                "conv {}: expected {} input channels, got {c}",
                self.weight.name, self.in_ch
            )));
        }
        let (oh, ow) = self.out_size(h, w);
        let mut out = vec![T::zero(); oh * ow * self.out_ch];
        for px in out.chunks_exact_mut(self.out_ch) {
            px.copy_from_slice(&self.bias.value);
        }
        let cache = if self.is_pointwise() {
            gemm(
                oh * ow,
                self.in_ch,
                self.out_ch,
                T::one(),
                input.data(),
                Layout::Normal,
                &self.weight.value,
                Layout::Transposed,
                T::one(),
                &mut out,
            );
            ConvCache {
                in_shape: (h, w, c),
                out_hw: (oh, ow),
                cols: None,
                input: Some(input.clone()),
            }
        } else {
            let cols = self.im2col(input, oh, ow);
            gemm(
                oh * ow,
                self.patch_len(),
                self.out_ch,
                T::one(),
                &cols,
                Layout::Normal,
                &self.weight.value,
                Layout::Transposed,
                T::one(),
                &mut out,
            );
            ConvCache {
                in_shape: (h, w, c),
                out_hw: (oh, ow),
                cols: Some(cols),
                input: None,
            }
        };
        Ok((Raster::from_vec(oh, ow, self.out_ch, out)?, cache))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &ConvCache<T>, grad_out: &Raster<T>) -> Raster<T> {
        let (oh, ow) = cache.out_hw;
        assert_eq!(grad_out.shape(), (oh, ow, self.out_ch), "conv backward: grad shape");
        let g = grad_out.data();
        for px in g.chunks_exact(self.out_ch) {
            for (b, &v) in self.bias.grad.iter_mut().zip(px) {
                *b += v;
            }
        }
        let m = oh * ow;
        let plen = self.patch_len();
        let cols: &[T] = match (&cache.cols, &cache.input) {
            (Some(c), _) => c,
            (None, Some(inp)) => inp.data(),
            _ => unreachable!("conv cache holds either columns or input"),
        };
        gemm(
            self.out_ch,
            m,
            plen,
            T::one(),
            g,
            Layout::Transposed,
            cols,
            Layout::Normal,
            T::one(),
            &mut self.weight.grad,
        );
        let mut grad_cols = vec![T::zero(); m * plen];
        gemm(
            m,
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
        if self.is_pointwise() {
            let (h, w, c) = cache.in_shape;
            Raster::from_vec(h, w, c, grad_cols).expect("pointwise grad shape")
        } else {
            self.col2im(&grad_cols, cache.in_shape, oh, ow)
        }
    }
}

impl<T: Real> Parameterized<T> for Conv2d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub fn relu<T: Real>(x: &Raster<T>) -> Raster<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its output.
pub fn relu_backward<T: Real>(out: &Raster<T>, grad: &Raster<T>) -> Raster<T> {
    let mut g = grad.clone();
    for (gv, &o) in g.data_mut().iter_mut().zip(out.data()) {
        if o <= T::zero() {
            *gv = T::zero();
        }
    }
    g
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn sigmoid_raster<T: Real>(x: &Raster<T>) -> Raster<T> {
    x.map(sigmoid)
}

/// Gradient of the sigmoid given its output `s`.
pub fn sigmoid_backward<T: Real>(s: &Raster<T>, grad: &Raster<T>) -> Raster<T> {
    let mut g = grad.clone();
    for (gv, &sv) in g.data_mut().iter_mut().zip(s.data()) {
        *gv *= sv * (T::one() - sv);
    }
    g
}

/// Softmax over the channel axis of every pixel.
pub fn softmax_channels<T: Real>(x: &Raster<T>) -> Raster<T> {
    let mut out = x.clone();
    let c = x.channels();
    for px in out.data_mut().chunks_exact_mut(c) {
        let m = px.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in px.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in px.iter_mut() {
            *v /= s;
        }
    }
    out
}

/// Gradient of the channel softmax given its output `p`.
pub fn softmax_channels_backward<T: Real>(p: &Raster<T>, grad: &Raster<T>) -> Raster<T> {
    let c = p.channels();
    let mut out = grad.clone();
    for (gpx, ppx) in out.data_mut().chunks_exact_mut(c).zip(p.data().chunks_exact(c)) {
        let dot: T = gpx.iter().zip(ppx).map(|(&g, &q)| g * q).sum();
        for (g, &q) in gpx.iter_mut().zip(ppx) {
            *g = q * (*g - dot);
        }
    }
    out
}
