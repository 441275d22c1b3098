//! Procedural aerial scenes: terrain with ramps and overpasses, vehicles on
//! top, a drone camera with an exact projection matrix, a minimal renderer
//! and seeded appearance randomization.

pub mod augment;
pub mod camera;
pub mod export;
pub mod render;
pub mod scene;

pub use augment::color_augment;
pub use camera::{CameraConfig, CameraPose};
pub use export::{export_dataset, generate_dataset, DatasetConfig, ExportSummary, Split};
pub use render::{render_rv_image, RenderOutput, RenderedVehicle};
pub use scene::{generate_scene, SceneConfig, SceneSpec, Surface, TerrainPatch, Vehicle};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] aerialbev_core::CoreError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image encoding failed at {path}: {source}")]
    Image {
        path: std::path::PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// Deterministic sub-seed for stream `k` of a parent seed.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
