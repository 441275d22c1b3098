//! Minimal painter's-algorithm renderer.
//!
//! Surfaces are drawn in ascending altitude: textured ground, raised
//! terrain patches, then vehicle roofs as flat quads at the vehicle's
//! altitude. Texture coordinates come from back-projecting each pixel onto
//! the surface plane, so the appearance is anchored to the world.

use aerialbev_core::detector::RvBox;
use aerialbev_core::geometry::{inv3, mat3_vec, ProjectionMatrix};
use aerialbev_core::Raster;

use crate::scene::{SceneSpec, TerrainPatch, Vehicle};
use crate::{derive_seed, Result};

/// Vehicles less visible than this fraction of their painted area lose
/// their labels.
pub const MIN_VISIBLE_FRACTION: f64 = 0.5;

const CLASS_COLORS: [[f64; 3]; 4] = [
    [0.78, 0.16, 0.12],
    [0.16, 0.30, 0.78],
    [0.86, 0.84, 0.74],
    [0.20, 0.62, 0.22],
];

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedVehicle {
    /// Index into the scene's vehicle list.
    pub index: usize,
    pub rv: RvBox,
    pub painted_px: usize,
    pub visible_px: usize,
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    /// RGB in [0, 1].
    pub image: Raster<f32>,
    /// Labeled vehicles (visible enough and in front of the camera).
    pub vehicles: Vec<RenderedVehicle>,
    /// Vehicles dropped for being behind the camera or hidden.
    pub dropped: usize,
}

fn hash2(ix: i64, iy: i64, seed: u64) -> f64 {
    let h = derive_seed(seed ^ (ix as u64).wrapping_mul(0x632B_E59B_D9B4_E019), iy as u64);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth value noise in [0, 1] with unit lattice spacing.
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = hash2(ix, iy, seed);
    let b = hash2(ix + 1, iy, seed);
    let c = hash2(ix, iy + 1, seed);
    let d = hash2(ix + 1, iy + 1, seed);
    let top = a + (b - a) * sx;
    let bot = c + (d - c) * sx;
    top + (bot - top) * sy
}

fn ground_color(x: f64, y: f64, seed: u64) -> [f64; 3] {
    let coarse = value_noise(x / 4.0, y / 4.0, seed) - 0.5;
    let fine = value_noise(x / 0.8, y / 0.8, seed ^ 0xA5A5) - 0.5;
    let field = value_noise(x / 11.0, y / 11.0, seed ^ 0x5A5A);
    let base = if field > 0.55 { [0.42, 0.38, 0.26] } else { [0.30, 0.40, 0.24] };
    [
        base[0] + 0.12 * coarse + 0.06 * fine,
        base[1] + 0.12 * coarse + 0.06 * fine,
        base[2] + 0.08 * coarse + 0.05 * fine,
    ]
}

/// Concrete with curbs and dashed lane marks, brightening with altitude.
fn road_color(p: &TerrainPatch, x: f64, y: f64, seed: u64) -> [f64; 3] {
    let ax = p.axis;
    let other = 1 - ax;
    let pos = [x, y];
    let across = pos[other] - p.center[other];
    let along = pos[ax] - p.center[ax];
    let z = p.altitude_at(x, y);
    let shade = 0.45 + 0.035 * z + 0.04 * (value_noise(x / 0.9, y / 0.9, seed) - 0.5);
    let edge = p.half_extent[other] - across.abs();
    if edge < 0.35 {
        let c = 0.25 + 0.03 * z;
        return [c, c, c];
    }
    let dash = (along / 3.0).rem_euclid(1.0) < 0.5;
    if across.abs() < 0.12 && dash {
        return [0.85, 0.82, 0.55];
    }
    [shade, shade, shade * 1.02]
}

fn vehicle_color(v: &Vehicle, x: f64, y: f64) -> [f64; 3] {
    let base = CLASS_COLORS[v.class_id % CLASS_COLORS.len()];
    let mut c = [0.0; 3];
    for k in 0..3 {
        c[k] = base[k] + 0.12 * v.tint[k];
    }
    let (s, co) = v.theta.sin_cos();
    let along = (x - v.x) * co + (y - v.y) * s;
    let across = -(x - v.x) * s + (y - v.y) * co;
    let u = along / (0.5 * v.l);
    let w = across / (0.5 * v.w);
    // Windshield band and rear window.
    if (0.2..0.45).contains(&u) && w.abs() < 0.85 {
        return [0.08, 0.10, 0.14];
    }
    if (-0.7..-0.55).contains(&u) && w.abs() < 0.8 {
        return [0.12, 0.13, 0.16];
    }
    c
}

/// Homography inverse for back-projecting pixels onto `z = a·x + b·y + c`.
fn plane_inverse(p: &ProjectionMatrix, a: f64, b: f64, c: f64) -> Option<[[f64; 3]; 3]> {
    inv3(&p.plane_homography(a, b, c))
}

fn unproject(inv: &[[f64; 3]; 3], u: f64, v: f64) -> Option<[f64; 2]> {
    let w = mat3_vec(inv, [u, v, 1.0]);
    (w[2].abs() > 1e-300).then(|| [w[0] / w[2], w[1] / w[2]])
}

/// Pixel centers inside a convex image polygon (either winding).
fn for_each_pixel_in(poly: &[[f64; 2]], width: usize, height: usize, mut f: impl FnMut(usize, usize)) {
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for q in poly {
        u0 = u0.min(q[0]);
        v0 = v0.min(q[1]);
        u1 = u1.max(q[0]);
        v1 = v1.max(q[1]);
    }
    let c0 = u0.ceil().max(0.0);
    let r0 = v0.ceil().max(0.0);
    let c1 = u1.floor().min(width as f64 - 1.0);
    let r1 = v1.floor().min(height as f64 - 1.0);
    if c1 < c0 || r1 < r0 {
        return;
    }
    let n = poly.len();
    for r in r0 as usize..=r1 as usize {
        for c in c0 as usize..=c1 as usize {
            let (pu, pv) = (c as f64, r as f64);
            let (mut pos, mut neg) = (false, false);
            for i in 0..n {
                let a = poly[i];
                let b = poly[(i + 1) % n];
                let cr = (b[0] - a[0]) * (pv - a[1]) - (b[1] - a[1]) * (pu - a[0]);
                pos |= cr > 0.0;
                neg |= cr < 0.0;
            }
            if !(pos && neg) {
                f(r, c);
            }
        }
    }
}

fn project_quad(p: &ProjectionMatrix, corners: &[[f64; 3]; 4]) -> Option<[[f64; 2]; 4]> {
    let mut out = [[0.0; 2]; 4];
    for (o, &q) in out.iter_mut().zip(corners) {
        let ip = p.project(q).ok()?;
        *o = [ip.u, ip.v];
    }
    Some(out)
}

enum Layer<'a> {
    Patch(&'a TerrainPatch),
    Vehicle(usize, &'a Vehicle),
}

/// Renders the scene seen through `p` at `width × height` pixels.
pub fn render_rv_image(scene: &SceneSpec, p: &ProjectionMatrix, width: usize, height: usize) -> Result<RenderOutput> {
    let tex_seed = derive_seed(scene.seed, 7);
    let mut img = vec![[0.0f64; 3]; width * height];
    let mut owner = vec![usize::MAX; width * height];

    let ground = plane_inverse(p, 0.0, 0.0, 0.0);
    for r in 0..height {
        for c in 0..width {
            let col = match ground.as_ref().and_then(|g| unproject(g, c as f64, r as f64)) {
                Some([x, y]) if p.project([x, y, 0.0]).is_ok() => ground_color(x, y, tex_seed),
                _ => [0.6, 0.7, 0.85],
            };
            img[r * width + c] = col;
        }
    }

    let mut layers: Vec<(f64, Layer)> = scene.terrain.iter().map(|t| (t.base_altitude(), Layer::Patch(t))).collect();
    // Vehicles sit just above the surface they stand on.
    layers.extend(scene.vehicles.iter().enumerate().map(|(i, v)| (v.altitude_m + 1e-3, Layer::Vehicle(i, v))));
    layers.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut painted = vec![0usize; scene.vehicles.len()];
    let mut quads: Vec<Option<[[f64; 2]; 4]>> = vec![None; scene.vehicles.len()];
    for (_, layer) in &layers {
        match layer {
            Layer::Patch(t) => {
                let (a, b, cc) = t.plane();
                let corners = t.corners().map(|[x, y]| [x, y, t.altitude_at(x, y)]);
                let (Some(quad), Some(inv)) = (project_quad(p, &corners), plane_inverse(p, a, b, cc)) else {
                    continue;
                };
                for_each_pixel_in(&quad, width, height, |r, c| {
                    if let Some([x, y]) = unproject(&inv, c as f64, r as f64) {
                        img[r * width + c] = road_color(t, x, y, tex_seed ^ 0x77);
                        owner[r * width + c] = usize::MAX;
                    }
                });
            }
            Layer::Vehicle(i, v) => {
                let corners = v.corners().map(|[x, y]| [x, y, v.altitude_m]);
                let (Some(quad), Some(inv)) = (project_quad(p, &corners), plane_inverse(p, 0.0, 0.0, v.altitude_m)) else {
                    continue;
                };
                quads[*i] = Some(quad);
                for_each_pixel_in(&quad, width, height, |r, c| {
                    if let Some([x, y]) = unproject(&inv, c as f64, r as f64) {
                        img[r * width + c] = vehicle_color(v, x, y);
                        owner[r * width + c] = *i;
                        painted[*i] += 1;
                    }
                });
            }
        }
    }

    let mut visible = vec![0usize; scene.vehicles.len()];
    for &o in &owner {
        if o != usize::MAX {
            visible[o] += 1;
        }
    }
    let mut vehicles = Vec::new();
    let mut dropped = 0;
    for (i, v) in scene.vehicles.iter().enumerate() {
        let Some(quad) = quads[i] else {
            dropped += 1;
            continue;
        };
        if painted[i] == 0 || (visible[i] as f64) < MIN_VISIBLE_FRACTION * painted[i] as f64 {
            dropped += 1;
            continue;
        }
        let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for q in quad {
            u0 = u0.min(q[0]);
            v0 = v0.min(q[1]);
            u1 = u1.max(q[0]);
            v1 = v1.max(q[1]);
        }
        vehicles.push(RenderedVehicle {
            index: i,
            rv: RvBox {
                cu: 0.5 * (u0 + u1),
                cv: 0.5 * (v0 + v1),
                bw: u1 - u0,
                bh: v1 - v0,
                class_id: v.class_id,
                score: 1.0,
            },
            painted_px: painted[i],
            visible_px: visible[i],
        });
    }

    let data = img
        .iter()
        .flat_map(|c| c.map(|v| v.clamp(0.0, 1.0) as f32))
        .collect();
    Ok(RenderOutput {
        image: Raster::from_vec(height, width, 3, data)?,
        vehicles,
        dropped,
    })
}
