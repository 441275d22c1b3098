//! Dual-view CenterNet-style detector.

pub mod backbone;
pub mod boxes;
pub mod decode;
pub mod heads;
pub mod late;
pub mod model;
pub mod targets;

pub use backbone::{Backbone, BACKBONE_STRIDE};
pub use boxes::{canonical_angle, rect_corners, BevBox, BevObject, RvBox};
pub use decode::{decode_bev, decode_rv, find_peaks, Peak, DEFAULT_MAX_DETS, DEFAULT_SCORE_THRESH};
pub use heads::{DetectionHead, HeadGrads, HeadOutputs};
pub use late::{min_area_rect, project_rv_box_to_bev};
pub use model::{Dvdet, ForwardOutput, ModelConfig, OutputGrads, SampleGeometry, Variant, VariantFlags};
pub use targets::{render_rv_targets, render_targets, CenterTarget, TargetMaps};
