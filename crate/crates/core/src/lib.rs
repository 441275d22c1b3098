//! Numeric core of a monocular aerial detector that reasons in both the
//! image (range view) and a metric ground-plane grid (bird's-eye view).
//!
//! Everything is generic over [`Real`] (`f32` for training, `f64` for
//! gradient checks); concrete aliases are provided below.

pub mod altitude;
pub mod deform;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod grid_cache;
pub mod losses;
pub mod nn;
pub mod raster;
pub mod scalar;
pub mod schema;

pub use altitude::{assign_altitude_bin, transform_altitude_to_bev, AltitudeHead, AltitudeNormalization};
pub use deform::{collapse_weighted, coord_channels, geo_deformable_transform, DeformableConv};
pub use detector::{BevBox, BevObject, Dvdet, ModelConfig, RvBox, Variant, VariantFlags};
pub use error::{CoreError, Result};
pub use geometry::{
    bilinear_sample, compute_sampling_grid, warp_plane_sweep, AltitudeBins, BevGrid, PlaneSweepGrids, PlaneSweepVolume,
    ProjectionMatrix,
};
pub use grid_cache::SamplingGridCache;
pub use losses::{LossBreakdown, LossWeights};
pub use nn::{Param, Parameterized};
pub use raster::Raster;
pub use scalar::Real;

pub type Raster32 = Raster<f32>;
pub type Raster64 = Raster<f64>;
pub type Dvdet32 = Dvdet<f32>;
pub type Dvdet64 = Dvdet<f64>;
pub type PlaneSweepVolume32 = PlaneSweepVolume<f32>;
pub type PlaneSweepVolume64 = PlaneSweepVolume<f64>;
