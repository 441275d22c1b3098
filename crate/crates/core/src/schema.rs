//! On-disk dataset tables (NuScenes-style relational JSON).
//!
//! ```text
//! <root>/
//!   images/<sample_token>.png
//!   tables/scene.json  sample.json  sample_annotation.json  category.json
//!   splits.json
//! ```

use serde::{Deserialize, Serialize};

use crate::detector::boxes::{BevObject, RvBox};
use crate::geometry::ProjectionMatrix;

pub const TABLES_DIR: &str = "tables";
pub const IMAGES_DIR: &str = "images";
pub const SCENE_TABLE: &str = "scene.json";
pub const SAMPLE_TABLE: &str = "sample.json";
pub const ANNOTATION_TABLE: &str = "sample_annotation.json";
pub const CATEGORY_TABLE: &str = "category.json";
pub const SPLITS_FILE: &str = "splits.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub token: String,
    pub name: String,
    pub seed: u64,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub token: String,
    pub scene_token: String,
    /// Relative to the dataset root.
    pub image_path: String,
    pub image_width: usize,
    pub image_height: usize,
    /// Row-major 3×4.
    pub projection: ProjectionMatrix,
    pub flying_height_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BevAnnotation {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub l: f64,
    pub theta: f64,
    pub altitude_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RvAnnotation {
    pub cu: f64,
    pub cv: f64,
    pub bw: f64,
    pub bh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub token: String,
    pub sample_token: String,
    pub class_id: usize,
    pub bev: BevAnnotation,
    pub rv: RvAnnotation,
}

impl AnnotationRecord {
    pub fn bev_object(&self) -> BevObject {
        let b = &self.bev;
        BevObject {
            x: b.x,
            y: b.y,
            w: b.w,
            l: b.l,
            theta: b.theta,
            altitude_m: b.altitude_m,
            class_id: self.class_id,
        }
    }

    pub fn rv_box(&self) -> RvBox {
        let r = &self.rv;
        RvBox {
            cu: r.cu,
            cv: r.cv,
            bw: r.bw,
            bh: r.bh,
            class_id: self.class_id,
            score: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub class_id: usize,
    pub name: String,
}

/// Scene tokens per split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// A detection line of the JSONL output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "lowercase")]
pub enum DetectionRecord {
    Bev {
        sample_token: String,
        class_id: usize,
        score: f64,
        x: f64,
        y: f64,
        w: f64,
        l: f64,
        theta: f64,
        altitude_bin: usize,
    },
    Rv {
        sample_token: String,
        class_id: usize,
        score: f64,
        cu: f64,
        cv: f64,
        bw: f64,
        bh: f64,
    },
}

impl DetectionRecord {
    pub fn sample_token(&self) -> &str {
        match self {
            DetectionRecord::Bev { sample_token, .. } | DetectionRecord::Rv { sample_token, .. } => sample_token,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_record_is_tagged_by_view() {
        let d = DetectionRecord::Rv {
            sample_token: "s0".into(),
            class_id: 0,
            score: 0.5,
            cu: 1.0,
            cv: 2.0,
            bw: 3.0,
            bh: 4.0,
        };
        let j = serde_json::to_string(&d).unwrap();
        assert!(j.starts_with(r#"{"view":"rv","sample_token":"s0""#), "{j}");
        assert_eq!(serde_json::from_str::<DetectionRecord>(&j).unwrap(), d);
    }

    #[test]
    fn sample_record_doubles_roundtrip_exactly() {
        let p = ProjectionMatrix::from_row_major(&[
            0.1, 0.2, 0.3, 1e-17, 123.456_789_012_345_67, -7.0, 0.0, 5.5, 1.0 / 3.0, 2.0f64.sqrt(), 1.0, 9.0,
        ])
        .unwrap();
        let s = SampleRecord {
            token: "t".into(),
            scene_token: "sc".into(),
            image_path: "images/t.png".into(),
            image_width: 192,
            image_height: 128,
            projection: p,
            flying_height_m: 47.123_456_789_123_45,
        };
        let back: SampleRecord = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        for (a, b) in back.projection.to_row_major().iter().zip(s.projection.to_row_major()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
