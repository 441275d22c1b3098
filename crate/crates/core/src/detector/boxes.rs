//! Box types for both views.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Maps any angle onto the rectangle-canonical range `[-π/2, π/2)`.
pub fn canonical_angle(theta: f64) -> f64 {
    let t = theta - PI * ((theta + PI / 2.0) / PI).floor();
    // Guard the upper end against round-off.
    if t >= PI / 2.0 {
        t - PI
    } else {
        t
    }
}

/// Oriented ground-plane box with a categorical altitude level.
///
/// `l` runs along the heading `(cos θ, sin θ)`, `w` across it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BevBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub l: f64,
    pub theta: f64,
    pub altitude_bin: usize,
    pub class_id: usize,
    pub score: f64,
}

impl BevBox {
    pub fn corners(&self) -> [[f64; 2]; 4] {
        rect_corners(self.x, self.y, self.w, self.l, self.theta)
    }

    pub fn area(&self) -> f64 {
        self.w * self.l
    }
}

/// Corners of an oriented rectangle, counter-clockwise.
pub fn rect_corners(x: f64, y: f64, w: f64, l: f64, theta: f64) -> [[f64; 2]; 4] {
    let (s, c) = theta.sin_cos();
    let (hl, hw) = (0.5 * l, 0.5 * w);
    let d = [c * hl, s * hl];
    let n = [-s * hw, c * hw];
    [
        [x - d[0] - n[0], y - d[1] - n[1]],
        [x + d[0] - n[0], y + d[1] - n[1]],
        [x + d[0] + n[0], y + d[1] + n[1]],
        [x - d[0] + n[0], y - d[1] + n[1]],
    ]
}

/// Ground-truth BEV object with its continuous altitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BevObject {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub l: f64,
    pub theta: f64,
    pub altitude_m: f64,
    pub class_id: usize,
}

impl BevObject {
    pub fn corners(&self) -> [[f64; 2]; 4] {
        rect_corners(self.x, self.y, self.w, self.l, self.theta)
    }

    /// Whether a ground point lies inside the footprint.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (px - self.x, py - self.y);
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        along.abs() <= 0.5 * self.l && across.abs() <= 0.5 * self.w
    }

    pub fn to_box(&self, altitude_bin: usize, score: f64) -> BevBox {
        BevBox {
            x: self.x,
            y: self.y,
            w: self.w,
            l: self.l,
            theta: canonical_angle(self.theta),
            altitude_bin,
            class_id: self.class_id,
            score,
        }
    }
}

/// Axis-aligned image box in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RvBox {
    pub cu: f64,
    pub cv: f64,
    pub bw: f64,
    pub bh: f64,
    pub class_id: usize,
    pub score: f64,
}

impl RvBox {
    /// Corners `(u, v)` in order: top-left, top-right, bottom-right, bottom-left.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (hu, hv) = (0.5 * self.bw, 0.5 * self.bh);
        [
            [self.cu - hu, self.cv - hv],
            [self.cu + hu, self.cv - hv],
            [self.cu + hu, self.cv + hv],
            [self.cu - hu, self.cv + hv],
        ]
    }

    /// Axis-aligned IoU with another image box.
    pub fn iou(&self, other: &RvBox) -> f64 {
        let ix = ((self.cu + 0.5 * self.bw).min(other.cu + 0.5 * other.bw)
            - (self.cu - 0.5 * self.bw).max(other.cu - 0.5 * other.bw))
        .max(0.0);
        let iy = ((self.cv + 0.5 * self.bh).min(other.cv + 0.5 * other.bh)
            - (self.cv - 0.5 * self.bh).max(other.cv - 0.5 * other.bh))
        .max(0.0);
        let inter = ix * iy;
        let union = self.bw * self.bh + other.bw * other.bh - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}
