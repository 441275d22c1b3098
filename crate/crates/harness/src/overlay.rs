//! Debug overlays: boxes drawn over the image and over a ground-plane
//! resampling of it.

use std::path::Path;

use aerialbev_core::geometry::bilinear_sample;
use aerialbev_core::{AltitudeBins, BevBox, BevGrid, BevObject, ProjectionMatrix, Raster, RvBox};
use image::{Rgb, RgbImage};

use crate::{HarnessError, Result};

pub const GT_COLOR: [u8; 3] = [40, 230, 60];
pub const DET_COLOR: [u8; 3] = [240, 40, 40];
pub const FOOTPRINT_COLOR: [u8; 3] = [250, 210, 30];

/// Overlay pixels per BEV cell.
pub const BEV_SCALE: usize = 4;

fn to_rgb(image: &Raster<f32>) -> RgbImage {
    let (h, w, _) = image.shape();
    let bytes = image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    RgbImage::from_raw(w as u32, h as u32, bytes).expect("3-channel raster")
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

/// Bresenham segment, clipped per pixel.
pub fn draw_line(img: &mut RgbImage, a: [f64; 2], b: [f64; 2], c: [u8; 3]) {
    if !(a.iter().chain(&b).all(|v| v.is_finite() && v.abs() < 1e6)) {
        return;
    }
    let (mut x0, mut y0) = (a[0].round() as i64, a[1].round() as i64);
    let (x1, y1) = (b[0].round() as i64, b[1].round() as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

pub fn draw_polygon(img: &mut RgbImage, pts: &[[f64; 2]], c: [u8; 3]) {
    for i in 0..pts.len() {
        draw_line(img, pts[i], pts[(i + 1) % pts.len()], c);
    }
}

/// Marks the heading end of a footprint.
fn draw_heading(img: &mut RgbImage, pts: &[[f64; 2]; 4], center: [f64; 2], c: [u8; 3]) {
    let front = [(pts[1][0] + pts[2][0]) * 0.5, (pts[1][1] + pts[2][1]) * 0.5];
    draw_line(img, center, front, c);
}

/// RV image with image-space ground truth, image-space detections and the
/// image footprints of BEV detections at their altitude bin.
pub fn rv_overlay(
    image: &Raster<f32>,
    p: &ProjectionMatrix,
    bins: &AltitudeBins,
    gt: &[RvBox],
    rv_dets: &[RvBox],
    bev_dets: &[BevBox],
) -> RgbImage {
    let mut img = to_rgb(image);
    for b in gt {
        draw_polygon(&mut img, &b.corners(), GT_COLOR);
    }
    for b in rv_dets {
        draw_polygon(&mut img, &b.corners(), DET_COLOR);
    }
    for b in bev_dets {
        let z = bins.centers()[b.altitude_bin.min(bins.len() - 1)];
        let pts: Option<Vec<[f64; 2]>> = b
            .corners()
            .iter()
            .map(|c| p.project([c[0], c[1], z]).ok().map(|q| [q.u, q.v]))
            .collect();
        if let Some(pts) = pts {
            draw_polygon(&mut img, &pts, FOOTPRINT_COLOR);
        }
    }
    img
}

/// Ground-plane resampling of the image (z = 0) with BEV boxes.
pub fn bev_overlay(
    image: &Raster<f32>,
    p: &ProjectionMatrix,
    grid: &BevGrid,
    gt: &[BevObject],
    dets: &[BevBox],
) -> RgbImage {
    let s = BEV_SCALE;
    let (w, h) = (grid.x_cells * s, grid.y_cells * s);
    let ext = grid.extent();
    let px_m = grid.resolution_m / s as f64;
    let mut img = RgbImage::new(w as u32, h as u32);
    for row in 0..h {
        for col in 0..w {
            let x = ext[0] + (col as f64 + 0.5) * px_m;
            let y = ext[1] + (row as f64 + 0.5) * px_m;
            let c = match p.project([x, y, 0.0]) {
                Ok(q) => {
                    let v = bilinear_sample(image, q.u, q.v);
                    [v[0], v[1], v[2]].map(|t| (t.clamp(0.0, 1.0) * 200.0) as u8)
                }
                Err(_) => [0, 0, 0],
            };
            img.put_pixel(col as u32, row as u32, Rgb(c));
        }
    }
    let to_px = |q: [f64; 2]| [(q[0] - ext[0]) / px_m - 0.5, (q[1] - ext[1]) / px_m - 0.5];
    for g in gt {
        let pts = g.corners().map(to_px);
        draw_polygon(&mut img, &pts, GT_COLOR);
        draw_heading(&mut img, &pts, to_px([g.x, g.y]), GT_COLOR);
    }
    for d in dets {
        let pts = d.corners().map(to_px);
        draw_polygon(&mut img, &pts, DET_COLOR);
        draw_heading(&mut img, &pts, to_px([d.x, d.y]), DET_COLOR);
    }
    img
}

pub fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| HarnessError::Image {
        path: path.to_owned(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_endpoints_are_drawn() {
        let mut img = RgbImage::new(10, 10);
        draw_line(&mut img, [1.0, 1.0], [8.0, 5.0], [255, 0, 0]);
        assert_eq!(img.get_pixel(1, 1).0, [255, 0, 0]);
        assert_eq!(img.get_pixel(8, 5).0, [255, 0, 0]);
        draw_line(&mut img, [-50.0, 3.0], [50.0, 3.0], [0, 255, 0]);
        assert_eq!(img.get_pixel(0, 3).0, [0, 255, 0]);
    }
}
