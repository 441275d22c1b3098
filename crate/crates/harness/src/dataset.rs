//! Loading and validating an exported dataset.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use aerialbev_core::schema::{
    AnnotationRecord, CategoryRecord, SampleRecord, SceneRecord, SplitManifest, ANNOTATION_TABLE, CATEGORY_TABLE,
    SAMPLE_TABLE, SCENE_TABLE, SPLITS_FILE, TABLES_DIR,
};
use aerialbev_core::{BevObject, ProjectionMatrix, Raster, RvBox};
use aerialbev_synth::Split;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::{HarnessError, Result};

/// A schema violation, located by file, record and field.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{file}: {record}: field `{field}`: {reason}")]
pub struct ValidationError {
    pub file: String,
    pub record: String,
    pub field: String,
    pub reason: String,
}

fn invalid(file: &str, record: &str, field: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Validation(ValidationError {
        file: file.to_owned(),
        record: record.to_owned(),
        field: field.to_owned(),
        reason: reason.into(),
    })
}

/// `sample.json` row with the projection still unchecked.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    token: String,
    scene_token: String,
    image_path: String,
    image_width: usize,
    image_height: usize,
    projection: Vec<f64>,
    flying_height_m: f64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub scenes: Vec<SceneRecord>,
    pub samples: Vec<SampleRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub categories: Vec<CategoryRecord>,
    pub splits: SplitManifest,
    sample_index: HashMap<String, usize>,
    scene_split: HashMap<String, Split>,
    by_sample: Vec<Vec<usize>>,
}

fn read_table<T: DeserializeOwned>(root: &Path, rel: &str) -> Result<T> {
    let path = root.join(rel);
    let bytes = fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| invalid(rel, "-", "-", e.to_string()))
}

fn unique<'a>(file: &str, tokens: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for t in tokens {
        if !seen.insert(t) {
            return Err(invalid(file, t, "token", "duplicate token"));
        }
    }
    Ok(())
}

fn finite(file: &str, record: &str, fields: &[(&str, f64)]) -> Result<()> {
    for (name, v) in fields {
        if !v.is_finite() {
            return Err(invalid(file, record, name, format!("non-finite value {v}")));
        }
    }
    Ok(())
}

/// Reads and validates every table under `dir`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let scene_file = format!("{TABLES_DIR}/{SCENE_TABLE}");
    let sample_file = format!("{TABLES_DIR}/{SAMPLE_TABLE}");
    let ann_file = format!("{TABLES_DIR}/{ANNOTATION_TABLE}");
    let cat_file = format!("{TABLES_DIR}/{CATEGORY_TABLE}");

    let scenes: Vec<SceneRecord> = read_table(dir, &scene_file)?;
    let raw: Vec<RawSample> = read_table(dir, &sample_file)?;
    let annotations: Vec<AnnotationRecord> = read_table(dir, &ann_file)?;
    let categories: Vec<CategoryRecord> = read_table(dir, &cat_file)?;
    let splits: SplitManifest = read_table(dir, SPLITS_FILE)?;

    unique(&scene_file, scenes.iter().map(|s| s.token.as_str()))?;
    unique(&sample_file, raw.iter().map(|s| s.token.as_str()))?;
    unique(&ann_file, annotations.iter().map(|a| a.token.as_str()))?;
    let mut class_ids = HashSet::new();
    for c in &categories {
        if !class_ids.insert(c.class_id) {
            return Err(invalid(&cat_file, &c.name, "class_id", "duplicate class id"));
        }
    }
    if categories.is_empty() {
        return Err(invalid(&cat_file, "-", "-", "no categories"));
    }

    let scene_tokens: HashSet<&str> = scenes.iter().map(|s| s.token.as_str()).collect();
    let mut scene_split = HashMap::new();
    for (split, list, field) in [(Split::Train, &splits.train, "train"), (Split::Test, &splits.test, "test")] {
        for t in list {
            if !scene_tokens.contains(t.as_str()) {
                return Err(invalid(SPLITS_FILE, t, field, "unknown scene token"));
            }
            if scene_split.insert(t.clone(), split).is_some() {
                return Err(invalid(SPLITS_FILE, t, field, "scene listed in more than one split"));
            }
        }
    }

    let mut samples = Vec::with_capacity(raw.len());
    for r in raw {
        if !scene_tokens.contains(r.scene_token.as_str()) {
            return Err(invalid(&sample_file, &r.token, "scene_token", "unknown scene token"));
        }
        if r.image_width == 0 || r.image_height == 0 {
            return Err(invalid(&sample_file, &r.token, "image_width", "empty image"));
        }
        finite(&sample_file, &r.token, &[("flying_height_m", r.flying_height_m)])?;
        let projection = ProjectionMatrix::from_row_major(&r.projection)
            .map_err(|e| invalid(&sample_file, &r.token, "projection", e.to_string()))?;
        samples.push(SampleRecord {
            token: r.token,
            scene_token: r.scene_token,
            image_path: r.image_path,
            image_width: r.image_width,
            image_height: r.image_height,
            projection,
            flying_height_m: r.flying_height_m,
        });
    }
    let sample_index: HashMap<String, usize> = samples.iter().enumerate().map(|(i, s)| (s.token.clone(), i)).collect();

    let mut by_sample = vec![Vec::new(); samples.len()];
    for (i, a) in annotations.iter().enumerate() {
        let Some(&s) = sample_index.get(&a.sample_token) else {
            return Err(invalid(&ann_file, &a.token, "sample_token", "unknown sample token"));
        };
        if !class_ids.contains(&a.class_id) {
            return Err(invalid(&ann_file, &a.token, "class_id", format!("unknown class {}", a.class_id)));
        }
        let b = &a.bev;
        finite(
            &ann_file,
            &a.token,
            &[
                ("bev.x", b.x),
                ("bev.y", b.y),
                ("bev.w", b.w),
                ("bev.l", b.l),
                ("bev.theta", b.theta),
                ("bev.altitude_m", b.altitude_m),
                ("rv.cu", a.rv.cu),
                ("rv.cv", a.rv.cv),
                ("rv.bw", a.rv.bw),
                ("rv.bh", a.rv.bh),
            ],
        )?;
        if b.w <= 0.0 || b.l <= 0.0 {
            return Err(invalid(&ann_file, &a.token, "bev.w", "non-positive extent"));
        }
        if a.rv.bw <= 0.0 || a.rv.bh <= 0.0 {
            return Err(invalid(&ann_file, &a.token, "rv.bw", "non-positive extent"));
        }
        by_sample[s].push(i);
    }

    Ok(Dataset {
        root: dir.to_owned(),
        scenes,
        samples,
        annotations,
        categories,
        splits,
        sample_index,
        scene_split,
        by_sample,
    })
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.categories.iter().map(|c| c.class_id + 1).max().unwrap_or(1)
    }

    pub fn sample(&self, token: &str) -> Option<&SampleRecord> {
        self.sample_index.get(token).map(|&i| &self.samples[i])
    }

    pub fn annotations_for(&self, token: &str) -> Vec<&AnnotationRecord> {
        self.sample_index
            .get(token)
            .map(|&i| self.by_sample[i].iter().map(|&a| &self.annotations[a]).collect())
            .unwrap_or_default()
    }

    pub fn bev_objects(&self, token: &str) -> Vec<BevObject> {
        self.annotations_for(token).into_iter().map(|a| a.bev_object()).collect()
    }

    pub fn rv_boxes(&self, token: &str) -> Vec<RvBox> {
        self.annotations_for(token).into_iter().map(|a| a.rv_box()).collect()
    }

    pub fn split_of(&self, sample: &SampleRecord) -> Option<Split> {
        self.scene_split.get(&sample.scene_token).copied()
    }

    /// Samples of a split in table order.
    pub fn split_samples(&self, split: Split) -> Vec<&SampleRecord> {
        self.samples.iter().filter(|s| self.split_of(s) == Some(split)).collect()
    }

    /// Ground truth per sample token for a split.
    pub fn ground_truth(&self, split: Split) -> BTreeMap<String, Vec<BevObject>> {
        self.split_samples(split)
            .into_iter()
            .map(|s| (s.token.clone(), self.bev_objects(&s.token)))
            .collect()
    }

    /// RGB image scaled to [0, 1].
    pub fn load_image(&self, sample: &SampleRecord) -> Result<Raster<f32>> {
        let path = self.root.join(&sample.image_path);
        let img = read_rgb(&path)?;
        if img.shape() != (sample.image_height, sample.image_width, 3) {
            return Err(invalid(
                SAMPLE_TABLE,
                &sample.token,
                "image_width",
                format!("image on disk is {}x{}", img.cols(), img.rows()),
            ));
        }
        Ok(img)
    }
}

pub fn read_rgb(path: &Path) -> Result<Raster<f32>> {
    let img = image::open(path)
        .map_err(|source| HarnessError::Image {
            path: path.to_owned(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    Ok(Raster::from_vec(h as usize, w as usize, 3, data)?)
}
