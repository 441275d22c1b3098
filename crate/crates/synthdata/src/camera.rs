//! Drone camera poses and their projection matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use aerialbev_core::geometry::ProjectionMatrix;
use aerialbev_core::BevGrid;

use crate::{Result, SynthError};

/// Ranges the camera pose is drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub image_width: usize,
    pub image_height: usize,
    pub flying_height_m: [f64; 2],
    /// Tilt of the optical axis away from nadir.
    pub pitch_deg: [f64; 2],
    pub yaw_deg: [f64; 2],
    /// Pixels kept free around the projected region.
    pub margin_px: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            image_width: 192,
            image_height: 128,
            flying_height_m: [30.0, 80.0],
            pitch_deg: [0.0, 35.0],
            yaw_deg: [-15.0, 15.0],
            margin_px: 2.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.image_width < 8 || self.image_height < 8 {
            return bad("image must be at least 8x8");
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.flying_height_m) || self.flying_height_m[0] <= 0.0 {
            return bad("flying height range must be positive and ordered");
        }
        if !ordered(self.pitch_deg) || self.pitch_deg[0] < 0.0 || self.pitch_deg[1] >= 80.0 {
            return bad("pitch range must lie in [0, 80) degrees");
        }
        if !ordered(self.yaw_deg) {
            return bad("yaw range must be ordered");
        }
        Ok(())
    }
}

/// A camera above the scene looking at `target` on the ground.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub flying_height_m: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub target: [f64; 3],
    pub focal_px: f64,
    pub image_width: usize,
    pub image_height: usize,
}

impl CameraPose {
    /// World-to-camera rotation rows (x right, y down in the image, z forward).
    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        let (sy, cy) = self.yaw_deg.to_radians().sin_cos();
        let rot = |v: [f64; 3]| [cy * v[0] - sy * v[1], sy * v[0] + cy * v[1], v[2]];
        [rot([1.0, 0.0, 0.0]), rot([0.0, -cp, -sp]), rot([0.0, sp, -cp])]
    }

    /// Camera center: `flying_height_m` above the target plane, set back
    /// along the viewing direction.
    pub fn center(&self) -> [f64; 3] {
        let z = self.rotation()[2];
        let d = self.flying_height_m / -z[2];
        [self.target[0] - d * z[0], self.target[1] - d * z[1], self.target[2] - d * z[2]]
    }

    pub fn principal_point(&self) -> [f64; 2] {
        [(self.image_width as f64 - 1.0) / 2.0, (self.image_height as f64 - 1.0) / 2.0]
    }

    /// `P = K [R | -R C]`.
    pub fn projection(&self) -> Result<ProjectionMatrix> {
        let r = self.rotation();
        let c = self.center();
        let [pu, pv] = self.principal_point();
        let k = [[self.focal_px, 0.0, pu], [0.0, self.focal_px, pv], [0.0, 0.0, 1.0]];
        let t: Vec<f64> = (0..3).map(|i| -(r[i][0] * c[0] + r[i][1] * c[1] + r[i][2] * c[2])).collect();
        let mut rows = [[0.0; 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rows[i][j] = (0..3).map(|m| k[i][m] * r[m][j]).sum();
            }
            rows[i][3] = (0..3).map(|m| k[i][m] * t[m]).sum();
        }
        Ok(ProjectionMatrix::new(rows)?)
    }

    /// Largest focal length keeping every listed world point inside the
    /// image with `margin_px` to spare.
    pub fn fit_focal(&mut self, points: &[[f64; 3]], margin_px: f64) -> Result<()> {
        self.focal_px = 1.0;
        let p = self.projection()?;
        let [pu, pv] = self.principal_point();
        let (mut du, mut dv) = (0.0f64, 0.0f64);
        for &q in points {
            let ip = p.project(q)?;
            du = du.max((ip.u - pu).abs());
            dv = dv.max((ip.v - pv).abs());
        }
        let fu = if du > 0.0 { (pu - margin_px) / du } else { f64::INFINITY };
        let fv = if dv > 0.0 { (pv - margin_px) / dv } else { f64::INFINITY };
        let f = fu.min(fv);
        if !(f.is_finite() && f > 0.0) {
            return Err(SynthError::Config("cannot fit the region into the image".into()));
        }
        self.focal_px = f;
        Ok(())
    }

    /// Draws a pose looking at the grid center whose focal length frames
    /// the grid extent between altitudes `0` and `top_m`.
    pub fn sample<R: Rng + ?Sized>(cfg: &CameraConfig, grid: &BevGrid, top_m: f64, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let draw = |r: [f64; 2], rng: &mut R| if r[0] == r[1] { r[0] } else { rng.random_range(r[0]..r[1]) };
        let ext = grid.extent();
        let mut pose = CameraPose {
            flying_height_m: draw(cfg.flying_height_m, rng),
            pitch_deg: draw(cfg.pitch_deg, rng),
            yaw_deg: draw(cfg.yaw_deg, rng),
            target: [0.5 * (ext[0] + ext[2]), 0.5 * (ext[1] + ext[3]), 0.0],
            focal_px: 1.0,
            image_width: cfg.image_width,
            image_height: cfg.image_height,
        };
        let mut corners = Vec::with_capacity(8);
        for z in [0.0, top_m] {
            for (x, y) in [(ext[0], ext[1]), (ext[2], ext[1]), (ext[2], ext[3]), (ext[0], ext[3])] {
                corners.push([x, y, z]);
            }
        }
        pose.fit_focal(&corners, cfg.margin_px)?;
        Ok(pose)
    }
}
