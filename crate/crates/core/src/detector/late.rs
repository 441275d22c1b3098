//! Late projection: image boxes lifted to the ground after detection.

use crate::detector::boxes::{canonical_angle, BevBox, RvBox};
use crate::geometry::ProjectionMatrix;

/// Convex hull (counter-clockwise, monotone chain); collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Minimum-area enclosing rectangle `(x, y, w, l, θ)` with `l ≥ w` along θ.
///
/// The optimum has a side collinear with a hull edge, so every edge
/// direction is tried.
pub fn min_area_rect(points: &[[f64; 2]]) -> Option<(f64, f64, f64, f64, f64)> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, (f64, f64, f64, f64, f64))> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let phi = (b[1] - a[1]).atan2(b[0] - a[0]);
        let (s, c) = phi.sin_cos();
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for q in &hull {
            let u = q[0] * c + q[1] * s;
            let v = -q[0] * s + q[1] * c;
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        let (du, dv) = (u1 - u0, v1 - v0);
        let area = du * dv;
        if best.is_none_or(|(ba, _)| area < ba) {
            let (um, vm) = (0.5 * (u0 + u1), 0.5 * (v0 + v1));
            let (x, y) = (um * c - vm * s, um * s + vm * c);
            let rect = if du >= dv {
                (x, y, dv, du, canonical_angle(phi))
            } else {
                (x, y, du, dv, canonical_angle(phi + std::f64::consts::FRAC_PI_2))
            };
            best = Some((area, rect));
        }
    }
    best.map(|(_, r)| r)
}

/// Back-projects the four corners of an image box onto the plane `z = 0`
/// and fits the minimum-area rectangle. `None` when a corner ray misses
/// the plane or the footprint is degenerate.
pub fn project_rv_box_to_bev(b: &RvBox, p: &ProjectionMatrix, ground_bin: usize) -> Option<BevBox> {
    let mut pts = Vec::with_capacity(4);
    for [u, v] in b.corners() {
        pts.push(p.backproject_to_plane(u, v, 0.0)?);
    }
    let (x, y, w, l, theta) = min_area_rect(&pts)?;
    Some(BevBox {
        x,
        y,
        w,
        l,
        theta,
        altitude_bin: ground_bin,
        class_id: b.class_id,
        score: b.score,
    })
}
