//! Dense channel-last rasters.

use crate::error::{CoreError, Result};
use crate::scalar::Real;

/// A `rows × cols × channels` array stored row-major, channel-last.
///
/// RV rasters use `rows = image v`, `cols = image u`. BEV rasters use
/// `rows = y cell`, `cols = x cell`.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Raster<T> {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Self {
        Self::filled(rows, cols, channels, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, channels: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            channels,
            data: vec![value; rows * cols * channels],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(CoreError::shape(format!(
                "raster dimensions must be positive, got {rows}x{cols}x{channels}"
            )));
        }
        if data.len() != rows * cols * channels {
            return Err(CoreError::shape(format!(
                "raster {rows}x{cols}x{channels} needs {} values, got {}",
                rows * cols * channels,
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            channels,
            data,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols * channels);
        for r in 0..rows {
            for c in 0..cols {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self {
            rows,
            cols,
            channels,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize, ch: usize) -> usize {
        debug_assert!(r < self.rows && c < self.cols && ch < self.channels);
        (r * self.cols + c) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> T {
        self.data[self.index(r, c, ch)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: T) {
        let i = self.index(r, c, ch);
        self.data[i] = v;
    }

    /// Channel vector at one location.
    #[inline]
    pub fn pixel(&self, r: usize, c: usize) -> &[T] {
        let i = (r * self.cols + c) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, r: usize, c: usize) -> &mut [T] {
        let i = (r * self.cols + c) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other), "raster add: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    /// Concatenate along channels.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| CoreError::shape("concat of zero rasters"))?;
        let (rows, cols) = (first.rows, first.cols);
        if parts.iter().any(|p| p.rows != rows || p.cols != cols) {
            return Err(CoreError::shape("concat: spatial sizes differ"));
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(rows * cols * channels);
        for px in 0..rows * cols {
            for p in parts {
                data.extend_from_slice(&p.data[px * p.channels..(px + 1) * p.channels]);
            }
        }
        Ok(Self {
            rows,
            cols,
            channels,
            data,
        })
    }

    /// Split channels into consecutive groups of the given sizes.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        if sizes.iter().sum::<usize>() != self.channels {
            return Err(CoreError::shape("split: channel counts do not add up"));
        }
        let mut out: Vec<Self> = sizes
            .iter()
            .map(|&c| Self::zeros(self.rows, self.cols, c))
            .collect();
        for px in 0..self.rows * self.cols {
            let mut off = px * self.channels;
            for (o, &c) in out.iter_mut().zip(sizes) {
                o.data[px * c..(px + 1) * c].copy_from_slice(&self.data[off..off + c]);
                off += c;
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Raster<U> {
        Raster {
            rows: self.rows,
            cols: self.cols,
            channels: self.channels,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_restores_parts() {
        let a = Raster::<f64>::from_fn(2, 3, 2, |r, c, ch| (r * 100 + c * 10 + ch) as f64);
        let b = Raster::<f64>::from_fn(2, 3, 1, |r, c, _| -((r * 3 + c) as f64));
        let cat = Raster::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), (2, 3, 3));
        assert_eq!(cat.get(1, 2, 2), -5.0);
        let parts = cat.split_channels(&[2, 1]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(Raster::<f32>::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Raster::<f32>::from_vec(0, 2, 1, vec![]).is_err());
    }
}
