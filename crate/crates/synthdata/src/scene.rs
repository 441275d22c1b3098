//! Scene layout: terrain patches and vehicle placement.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use aerialbev_core::detector::{rect_corners, BevObject};
use aerialbev_core::BevGrid;

use crate::camera::{CameraConfig, CameraPose};
use crate::{derive_seed, Result, SynthError};

/// Axis-aligned planar terrain patch raised above the ground.
///
/// Altitude varies linearly along the long axis from `z_start` (at the
/// low-coordinate end) to `z_end`; an overpass deck has `z_start == z_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainPatch {
    pub center: [f64; 2],
    pub half_extent: [f64; 2],
    /// 0: long axis along x, 1: along y.
    pub axis: usize,
    pub z_start: f64,
    pub z_end: f64,
}

impl TerrainPatch {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).abs() <= self.half_extent[0] && (y - self.center[1]).abs() <= self.half_extent[1]
    }

    pub fn is_deck(&self) -> bool {
        self.z_start == self.z_end
    }

    /// Plane coefficients `(a, b, c)` with `z = a·x + b·y + c`.
    pub fn plane(&self) -> (f64, f64, f64) {
        let ax = self.axis;
        let len = 2.0 * self.half_extent[ax];
        let slope = (self.z_end - self.z_start) / len;
        let lo = self.center[ax] - self.half_extent[ax];
        let c = self.z_start - slope * lo;
        if ax == 0 {
            (slope, 0.0, c)
        } else {
            (0.0, slope, c)
        }
    }

    pub fn altitude_at(&self, x: f64, y: f64) -> f64 {
        let (a, b, c) = self.plane();
        a * x + b * y + c
    }

    /// Key for painter's ordering.
    pub fn base_altitude(&self) -> f64 {
        self.z_start.min(self.z_end)
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [cx, cy] = self.center;
        let [hx, hy] = self.half_extent;
        [[cx - hx, cy - hy], [cx + hx, cy - hy], [cx + hx, cy + hy], [cx - hx, cy + hy]]
    }
}

/// Which surface a vehicle stands on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Ground,
    Patch(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub l: f64,
    pub theta: f64,
    pub altitude_m: f64,
    pub class_id: usize,
    pub surface: Surface,
    /// Per-instance color jitter in [-1, 1]^3.
    pub tint: [f64; 3],
}

impl Vehicle {
    pub fn corners(&self) -> [[f64; 2]; 4] {
        rect_corners(self.x, self.y, self.w, self.l, self.theta)
    }

    pub fn object(&self) -> BevObject {
        BevObject {
            x: self.x,
            y: self.y,
            w: self.w,
            l: self.l,
            theta: self.theta,
            altitude_m: self.altitude_m,
            class_id: self.class_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Region populated with vehicles (the detector's grid).
    pub grid: BevGrid,
    pub vehicles: [usize; 2],
    pub num_classes: usize,
    pub vehicle_w: [f64; 2],
    pub vehicle_l: [f64; 2],
    /// Ramps per scene, inclusive range.
    pub ramps: [usize; 2],
    /// Ramp top altitude range; the bottom is the ground.
    pub ramp_height_m: [f64; 2],
    pub ramp_length_m: [f64; 2],
    pub ramp_width_m: f64,
    pub overpasses: [usize; 2],
    pub overpass_height_m: [f64; 2],
    pub overpass_width_m: f64,
    /// Probability of trying a raised surface before the ground.
    pub raised_fraction: f64,
    /// Clearance between vehicles.
    pub gap_m: f64,
    pub max_attempts: usize,
    pub camera: CameraConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            grid: BevGrid::anchored_at_zero(64, 48, 0.5).expect("static grid"),
            vehicles: [6, 12],
            num_classes: 1,
            vehicle_w: [1.8, 2.2],
            vehicle_l: [4.0, 5.0],
            ramps: [0, 2],
            ramp_height_m: [1.0, 2.5],
            ramp_length_m: [10.0, 16.0],
            ramp_width_m: 7.0,
            overpasses: [0, 1],
            overpass_height_m: [6.5, 8.0],
            overpass_width_m: 8.0,
            raised_fraction: 0.5,
            gap_m: 0.3,
            max_attempts: 200,
            camera: CameraConfig::default(),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        self.grid.validate()?;
        self.camera.validate()?;
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[0] > 0.0 && r[0] <= r[1];
        if self.vehicles[0] > self.vehicles[1] || self.ramps[0] > self.ramps[1] || self.overpasses[0] > self.overpasses[1] {
            return bad("count ranges must be ordered");
        }
        if !ordered(self.vehicle_w) || !ordered(self.vehicle_l) {
            return bad("vehicle size ranges must be positive and ordered");
        }
        if self.ramps[1] > 0 && (!ordered(self.ramp_height_m) || !ordered(self.ramp_length_m)) {
            return bad("ramp ranges must be positive and ordered");
        }
        if self.overpasses[1] > 0 && !ordered(self.overpass_height_m) {
            return bad("overpass height range must be positive and ordered");
        }
        if self.num_classes == 0 {
            return bad("at least one class is required");
        }
        if !(0.0..=1.0).contains(&self.raised_fraction) {
            return bad("raised_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Highest terrain altitude a scene can contain.
    pub fn max_altitude(&self) -> f64 {
        let mut top = 0.0f64;
        if self.ramps[1] > 0 {
            top = top.max(self.ramp_height_m[1]);
        }
        if self.overpasses[1] > 0 {
            top = top.max(self.overpass_height_m[1]);
        }
        top
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub terrain: Vec<TerrainPatch>,
    pub vehicles: Vec<Vehicle>,
    pub camera: CameraPose,
    /// Vehicles requested but not placed.
    pub placement_failures: usize,
}

impl SceneSpec {
    /// Terrain altitude and the surface that carries it.
    pub fn surface_at(&self, x: f64, y: f64) -> (f64, Surface) {
        let mut best = (0.0, Surface::Ground);
        for (i, p) in self.terrain.iter().enumerate() {
            if p.contains(x, y) {
                let z = p.altitude_at(x, y);
                if z > best.0 || best.1 == Surface::Ground {
                    best = (z, Surface::Patch(i));
                }
            }
        }
        best
    }

    pub fn altitude_at(&self, x: f64, y: f64) -> f64 {
        self.surface_at(x, y).0
    }
}

fn draw<R: Rng + ?Sized>(r: [f64; 2], rng: &mut R) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn draw_count<R: Rng + ?Sized>(r: [usize; 2], rng: &mut R) -> usize {
    rng.random_range(r[0]..=r[1])
}

/// Separating-axis overlap test of two rectangles grown by `gap / 2`.
fn rects_overlap(a: &Vehicle, b: &Vehicle, gap: f64) -> bool {
    let ca = rect_corners(a.x, a.y, a.w + gap, a.l + gap, a.theta);
    let cb = rect_corners(b.x, b.y, b.w + gap, b.l + gap, b.theta);
    for rect in [&ca, &cb] {
        for i in 0..2 {
            let e = [rect[i + 1][0] - rect[i][0], rect[i + 1][1] - rect[i][1]];
            let n = [-e[1], e[0]];
            let proj = |c: &[[f64; 2]; 4]| {
                c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    let d = p[0] * n[0] + p[1] * n[1];
                    (lo.min(d), hi.max(d))
                })
            };
            let (a0, a1) = proj(&ca);
            let (b0, b1) = proj(&cb);
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
    }
    true
}

fn build_terrain<R: Rng + ?Sized>(cfg: &SceneConfig, rng: &mut R) -> Vec<TerrainPatch> {
    let e = cfg.grid.extent();
    let size = [e[2] - e[0], e[3] - e[1]];
    let mut patches: Vec<TerrainPatch> = Vec::new();
    for _ in 0..draw_count(cfg.overpasses, rng) {
        // A deck crossing the whole region.
        let axis = rng.random_range(0..2usize);
        let other = 1 - axis;
        let hw = 0.5 * cfg.overpass_width_m;
        let mut center = [0.0; 2];
        center[axis] = 0.5 * (e[axis] + e[axis + 2]);
        center[other] = rng.random_range(e[other] + hw + 2.0..e[other + 2] - hw - 2.0);
        let mut half = [0.0; 2];
        half[axis] = 0.5 * size[axis] + 4.0;
        half[other] = hw;
        let z = draw(cfg.overpass_height_m, rng);
        patches.push(TerrainPatch {
            center,
            half_extent: half,
            axis,
            z_start: z,
            z_end: z,
        });
    }
    let n_ramps = draw_count(cfg.ramps, rng);
    let mut tries = 0;
    while patches.iter().filter(|p| !p.is_deck()).count() < n_ramps && tries < 50 {
        tries += 1;
        let axis = rng.random_range(0..2usize);
        let other = 1 - axis;
        let len = draw(cfg.ramp_length_m, rng).min(size[axis] - 2.0);
        let mut half = [0.0; 2];
        half[axis] = 0.5 * len;
        half[other] = 0.5 * cfg.ramp_width_m;
        let mut center = [0.0; 2];
        for k in 0..2 {
            let lo = e[k] + half[k] + 0.5;
            let hi = e[k + 2] - half[k] - 0.5;
            if lo >= hi {
                center[k] = 0.5 * (e[k] + e[k + 2]);
            } else {
                center[k] = rng.random_range(lo..hi);
            }
        }
        let top = draw(cfg.ramp_height_m, rng);
        let (z_start, z_end) = if rng.random_bool(0.5) { (0.0, top) } else { (top, 0.0) };
        let cand = TerrainPatch {
            center,
            half_extent: half,
            axis,
            z_start,
            z_end,
        };
        // Raised patches never overlap each other.
        let clear = patches.iter().all(|p| {
            (p.center[0] - cand.center[0]).abs() > p.half_extent[0] + cand.half_extent[0] + 1.0
                || (p.center[1] - cand.center[1]).abs() > p.half_extent[1] + cand.half_extent[1] + 1.0
        });
        if clear {
            patches.push(cand);
        }
    }
    patches
}

/// Deterministic scene for `(seed, config)`.
pub fn generate_scene(seed: u64, cfg: &SceneConfig) -> Result<SceneSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let terrain = build_terrain(cfg, &mut rng);
    let mut spec = SceneSpec {
        seed,
        terrain,
        vehicles: Vec::new(),
        camera: CameraPose::sample(
            &cfg.camera,
            &cfg.grid,
            cfg.max_altitude(),
            &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)),
        )?,
        placement_failures: 0,
    };
    let want = draw_count(cfg.vehicles, &mut rng);
    let e = cfg.grid.extent();
    for _ in 0..want {
        let mut placed = false;
        for _ in 0..cfg.max_attempts {
            let w = draw(cfg.vehicle_w, &mut rng);
            let l = draw(cfg.vehicle_l, &mut rng);
            let raised = !spec.terrain.is_empty() && rng.random_bool(cfg.raised_fraction);
            let (x, y, theta) = if raised {
                // Along the road of a random patch.
                let p = spec.terrain[rng.random_range(0..spec.terrain.len())];
                let x = rng.random_range(p.center[0] - p.half_extent[0]..p.center[0] + p.half_extent[0]);
                let y = rng.random_range(p.center[1] - p.half_extent[1]..p.center[1] + p.half_extent[1]);
                let heading = if p.axis == 0 { 0.0 } else { FRAC_PI_2 };
                let flip = if rng.random_bool(0.5) { PI } else { 0.0 };
                (x, y, heading + flip + rng.random_range(-0.25..0.25))
            } else {
                (
                    rng.random_range(e[0]..e[2]),
                    rng.random_range(e[1]..e[3]),
                    rng.random_range(-PI..PI),
                )
            };
            let class_id = rng.random_range(0..cfg.num_classes);
            let tint = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let (altitude_m, surface) = spec.surface_at(x, y);
            let v = Vehicle {
                x,
                y,
                w,
                l,
                theta,
                altitude_m,
                class_id,
                surface,
                tint,
            };
            let corners = v.corners();
            let inside = corners
                .iter()
                .all(|c| c[0] >= e[0] + 0.25 && c[0] <= e[2] - 0.25 && c[1] >= e[1] + 0.25 && c[1] <= e[3] - 0.25);
            // The whole footprint rests on one surface.
            let one_surface = corners.iter().all(|c| spec.surface_at(c[0], c[1]).1 == surface);
            let free = spec.vehicles.iter().all(|o| !rects_overlap(o, &v, cfg.gap_m));
            if inside && one_surface && free {
                spec.vehicles.push(v);
                placed = true;
                break;
            }
        }
        if !placed {
            spec.placement_failures += 1;
        }
    }
    if spec.placement_failures > 0 {
        log::warn!(
            "scene {seed}: placed {} of {want} vehicles",
            spec.vehicles.len()
        );
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aerialbev_core::AltitudeBins;
    use std::collections::BTreeSet;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SceneConfig::default();
        let a = generate_scene(42, &cfg).unwrap();
        let b = generate_scene(42, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_scene(43, &cfg).unwrap());
    }

    #[test]
    fn flat_config_keeps_vehicles_on_the_ground() {
        let cfg = SceneConfig {
            ramps: [0, 0],
            overpasses: [0, 0],
            ..SceneConfig::default()
        };
        let bins = AltitudeBins::default();
        for seed in 0..20 {
            let s = generate_scene(seed, &cfg).unwrap();
            assert!(s.terrain.is_empty());
            assert!(!s.vehicles.is_empty());
            for v in &s.vehicles {
                assert_eq!(v.altitude_m, 0.0);
                assert_eq!(bins.assign(v.altitude_m), 2);
            }
        }
    }

    #[test]
    fn ramp_populates_several_bins() {
        let cfg = SceneConfig {
            ramps: [1, 1],
            ramp_height_m: [2.0, 2.0],
            overpasses: [0, 0],
            ..SceneConfig::default()
        };
        let bins = AltitudeBins::default();
        let mut seen = BTreeSet::new();
        for seed in 0..100 {
            for v in generate_scene(seed, &cfg).unwrap().vehicles {
                seen.insert(bins.assign(v.altitude_m));
            }
        }
        assert!(seen.len() >= 3, "{seen:?}");
    }

    #[test]
    fn vehicles_do_not_overlap_and_sit_on_terrain() {
        let cfg = SceneConfig::default();
        for seed in 0..30 {
            let s = generate_scene(seed, &cfg).unwrap();
            for (i, a) in s.vehicles.iter().enumerate() {
                assert_eq!(a.altitude_m, s.altitude_at(a.x, a.y));
                for b in &s.vehicles[i + 1..] {
                    assert!(!rects_overlap(a, b, 0.0));
                }
            }
            let h = s.camera.flying_height_m;
            assert!((30.0..=80.0).contains(&h));
        }
    }

    #[test]
    fn ramp_plane_matches_endpoints() {
        let p = TerrainPatch {
            center: [10.0, 5.0],
            half_extent: [6.0, 3.5],
            axis: 0,
            z_start: 0.0,
            z_end: 2.4,
        };
        assert!((p.altitude_at(4.0, 5.0) - 0.0).abs() < 1e-12);
        assert!((p.altitude_at(16.0, 2.0) - 2.4).abs() < 1e-12);
        assert!((p.altitude_at(10.0, 7.0) - 1.2).abs() < 1e-12);
    }
}
