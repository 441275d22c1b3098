//! Dataset export in the relational table layout of `aerialbev_core::schema`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use aerialbev_core::schema::{
    AnnotationRecord, BevAnnotation, CategoryRecord, RvAnnotation, SampleRecord, SceneRecord, SplitManifest,
    ANNOTATION_TABLE, CATEGORY_TABLE, IMAGES_DIR, SAMPLE_TABLE, SCENE_TABLE, SPLITS_FILE, TABLES_DIR,
};
use aerialbev_core::Raster;

use crate::camera::CameraPose;
use crate::render::render_rv_image;
use crate::scene::{generate_scene, SceneConfig, SceneSpec};
use crate::{derive_seed, Result, SynthError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A scene and the camera poses it is photographed from.
#[derive(Clone, Debug)]
pub struct SceneSamples {
    pub spec: SceneSpec,
    pub split: Split,
    pub cameras: Vec<CameraPose>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub seed: u64,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub samples_per_scene: usize,
    pub scene: SceneConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_scenes: 100,
            test_scenes: 20,
            samples_per_scene: 5,
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub scenes: usize,
    pub samples: usize,
    pub annotations: usize,
    pub dropped_vehicles: usize,
    pub placement_failures: usize,
}

pub fn scene_token(spec: &SceneSpec) -> String {
    format!("scene-{:016x}", spec.seed)
}

/// Scenes and poses for a dataset config: the scene's own camera first,
/// then independently drawn poses.
pub fn build_scenes(cfg: &DatasetConfig) -> Result<Vec<SceneSamples>> {
    if cfg.samples_per_scene == 0 {
        return Err(SynthError::Config("samples_per_scene must be positive".into()));
    }
    let total = cfg.train_scenes + cfg.test_scenes;
    let mut out = Vec::with_capacity(total);
    for i in 0..total {
        let seed = derive_seed(cfg.seed, i as u64);
        let spec = generate_scene(seed, &cfg.scene)?;
        let mut cameras = vec![spec.camera];
        for j in 1..cfg.samples_per_scene {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100 + j as u64));
            cameras.push(CameraPose::sample(
                &cfg.scene.camera,
                &cfg.scene.grid,
                cfg.scene.max_altitude(),
                &mut rng,
            )?);
        }
        let split = if i < cfg.train_scenes { Split::Train } else { Split::Test };
        out.push(SceneSamples { spec, split, cameras });
    }
    Ok(out)
}

pub fn generate_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<ExportSummary> {
    let scenes = build_scenes(cfg)?;
    export_dataset(&scenes, cfg.scene.num_classes, out_dir)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes an 8-bit RGB PNG.
pub fn write_png(image: &Raster<f32>, path: &Path) -> Result<()> {
    let (h, w, c) = image.shape();
    if c != 3 {
        return Err(SynthError::Config(format!("expected 3 channels, got {c}")));
    }
    let bytes: Vec<u8> = image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = image::RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer size matches");
    buf.save(path).map_err(|source| SynthError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value)?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Renders every pose of every scene and writes images, tables and the
/// split manifest under `out_dir`.
pub fn export_dataset(scenes: &[SceneSamples], num_classes: usize, out_dir: &Path) -> Result<ExportSummary> {
    let images: PathBuf = out_dir.join(IMAGES_DIR);
    let tables: PathBuf = out_dir.join(TABLES_DIR);
    fs::create_dir_all(&images).map_err(io_err(&images))?;
    fs::create_dir_all(&tables).map_err(io_err(&tables))?;

    let mut summary = ExportSummary::default();
    let mut scene_rows = Vec::new();
    let mut sample_rows = Vec::new();
    let mut ann_rows = Vec::new();
    let mut splits = SplitManifest::default();
    for s in scenes {
        let token = scene_token(&s.spec);
        scene_rows.push(SceneRecord {
            token: token.clone(),
            name: format!("synthetic-{}", s.spec.seed),
            seed: s.spec.seed,
            description: format!(
                "{} vehicles, {} raised patches",
                s.spec.vehicles.len(),
                s.spec.terrain.len()
            ),
        });
        match s.split {
            Split::Train => splits.train.push(token.clone()),
            Split::Test => splits.test.push(token.clone()),
        }
        summary.placement_failures += s.spec.placement_failures;
        for (j, cam) in s.cameras.iter().enumerate() {
            let sample_token = format!("{token}-{j:02}");
            let p = cam.projection()?;
            let out = render_rv_image(&s.spec, &p, cam.image_width, cam.image_height)?;
            let rel = format!("{IMAGES_DIR}/{sample_token}.png");
            write_png(&out.image, &out_dir.join(&rel))?;
            summary.dropped_vehicles += out.dropped;
            for (k, rv) in out.vehicles.iter().enumerate() {
                let v = &s.spec.vehicles[rv.index];
                ann_rows.push(AnnotationRecord {
                    token: format!("{sample_token}-{k:02}"),
                    sample_token: sample_token.clone(),
                    class_id: v.class_id,
                    bev: BevAnnotation {
                        x: v.x,
                        y: v.y,
                        w: v.w,
                        l: v.l,
                        theta: v.theta,
                        altitude_m: v.altitude_m,
                    },
                    rv: RvAnnotation {
                        cu: rv.rv.cu,
                        cv: rv.rv.cv,
                        bw: rv.rv.bw,
                        bh: rv.rv.bh,
                    },
                });
            }
            sample_rows.push(SampleRecord {
                token: sample_token,
                scene_token: token.clone(),
                image_path: rel,
                image_width: cam.image_width,
                image_height: cam.image_height,
                projection: p,
                flying_height_m: cam.flying_height_m,
            });
        }
    }
    summary.scenes = scene_rows.len();
    summary.samples = sample_rows.len();
    summary.annotations = ann_rows.len();
    let categories: Vec<CategoryRecord> = (0..num_classes)
        .map(|class_id| CategoryRecord {
            class_id,
            name: if class_id == 0 { "vehicle".into() } else { format!("vehicle-{class_id}") },
        })
        .collect();
    write_json(&tables.join(SCENE_TABLE), &scene_rows)?;
    write_json(&tables.join(SAMPLE_TABLE), &sample_rows)?;
    write_json(&tables.join(ANNOTATION_TABLE), &ann_rows)?;
    write_json(&tables.join(CATEGORY_TABLE), &categories)?;
    write_json(&out_dir.join(SPLITS_FILE), &splits)?;
    Ok(summary)
}
