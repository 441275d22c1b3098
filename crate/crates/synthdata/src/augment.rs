//! Seeded appearance randomization for simulation-to-real transfer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aerialbev_core::Raster;

/// Brightness, contrast, saturation and hue jitter with ranges scaled by
/// `strength ∈ [0, 1]`, clipped to [0, 1]. Geometry is untouched.
pub fn color_augment(image: &Raster<f32>, seed: u64, strength: f64) -> Raster<f32> {
    let s = strength.clamp(0.0, 1.0);
    if s == 0.0 {
        return image.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let brightness = 1.0 + s * rng.random_range(-0.5..0.5);
    let contrast = 1.0 + s * rng.random_range(-0.5..0.5);
    let saturation = 1.0 + s * rng.random_range(-0.8..0.8);
    let hue = s * rng.random_range(-0.5..0.5) * std::f64::consts::PI;
    let (sh, ch) = hue.sin_cos();

    let luma = |p: &[f32]| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
    let n = (image.rows() * image.cols()).max(1) as f64;
    let mean: f64 = image.data().chunks_exact(3).map(luma).sum::<f64>() / n * brightness;

    let mut out = image.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        let mut rgb = [px[0] as f64 * brightness, px[1] as f64 * brightness, px[2] as f64 * brightness];
        for v in &mut rgb {
            *v = mean + (*v - mean) * contrast;
        }
        // Saturation and hue act on the chroma of YIQ.
        let y = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
        let i = 0.596 * rgb[0] - 0.274 * rgb[1] - 0.322 * rgb[2];
        let q = 0.211 * rgb[0] - 0.523 * rgb[1] + 0.312 * rgb[2];
        let (i, q) = (saturation * (i * ch - q * sh), saturation * (i * sh + q * ch));
        let r = y + 0.956 * i + 0.621 * q;
        let g = y - 0.272 * i - 0.647 * q;
        let b = y - 1.106 * i + 1.703 * q;
        px[0] = r.clamp(0.0, 1.0) as f32;
        px[1] = g.clamp(0.0, 1.0) as f32;
        px[2] = b.clamp(0.0, 1.0) as f32;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> Raster<f32> {
        Raster::from_fn(8, 10, 3, |r, c, ch| ((r * 13 + c * 7 + ch * 5) % 11) as f32 / 10.0)
    }

    #[test]
    fn zero_strength_is_identity() {
        assert_eq!(color_augment(&img(), 5, 0.0), img());
    }

    #[test]
    fn output_is_clipped() {
        for seed in 0..20 {
            let out = color_augment(&img(), seed, 1.0);
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let a = color_augment(&img(), 3, 0.8);
        assert_eq!(a, color_augment(&img(), 3, 0.8));
        let base = img();
        for seed in 0..10 {
            let o = color_augment(&base, seed, 0.8);
            let mad: f32 =
                o.data().iter().zip(a.data()).map(|(x, y)| (x - y).abs()).sum::<f32>() / o.data().len() as f32;
            if seed != 3 {
                assert!(mad > 0.0, "seed {seed}");
            }
        }
    }
}
