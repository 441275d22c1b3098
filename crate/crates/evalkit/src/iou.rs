//! Intersection-over-union of oriented rectangles by convex clipping.

use aerialbev_core::detector::rect_corners;
use aerialbev_core::BevBox;

/// Intersections below this area count as empty.
pub const MIN_INTERSECTION: f64 = 1e-12;

/// Signed shoelace area (positive for counter-clockwise).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s
}

/// Sutherland–Hodgman: `subject` clipped to the convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// IoU of two rectangles given as `(x, y, w, l, θ)`.
pub fn rect_iou(a: [f64; 5], b: [f64; 5]) -> f64 {
    let ca = rect_corners(a[0], a[1], a[2], a[3], a[4]);
    let cb = rect_corners(b[0], b[1], b[2], b[3], b[4]);
    let inter = polygon_area(&clip_convex(&ca, &cb)).abs();
    if inter < MIN_INTERSECTION {
        return 0.0;
    }
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn rotated_iou(a: &BevBox, b: &BevBox) -> f64 {
    rect_iou([a.x, a.y, a.w, a.l, a.theta], [b.x, b.y, b.w, b.l, b.theta])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn identical_and_flipped_boxes() {
        let a = [1.0, 2.0, 2.0, 4.5, 0.3];
        assert!((rect_iou(a, a) - 1.0).abs() < 1e-12);
        let flipped = [1.0, 2.0, 2.0, 4.5, 0.3 + PI];
        assert!((rect_iou(a, flipped) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_overlap() {
        let iou = rect_iou([0.0, 0.0, 2.0, 2.0, 0.0], [1.0, 0.0, 2.0, 2.0, 0.0]);
        assert!((iou - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(rect_iou([0.0, 0.0, 1.0, 1.0, 0.0], [5.0, 0.0, 1.0, 1.0, 0.3]), 0.0);
    }

    #[test]
    fn square_and_rotated_square() {
        // Octagon: unit square minus four corner triangles with legs 1 - 1/√2.
        let leg = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
        let inter = 1.0 - 2.0 * leg * leg;
        let want = inter / (2.0 - inter);
        let got = rect_iou([0.0, 0.0, 1.0, 1.0, 0.0], [0.0, 0.0, 1.0, 1.0, FRAC_PI_4]);
        assert!((got - want).abs() < 1e-12, "{got} {want}");
    }
}
