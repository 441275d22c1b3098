//! Run configuration: a flat TOML table of documented keys.
//!
//! ```toml
//! variant = "dvdet"          # late-geot | early-geot | inter-geot | inter-geodt |
//!                            # inter-geot-cae | dvdet | dvdet-dualview | continuous-altitude
//! seed = 0                   # model init, shuffling and augmentation
//! epochs = 30
//! batch_size = 8
//! learning_rate = 1e-3       # peak; cosine-decayed to lr_min_factor × peak
//! lr_min_factor = 0.0
//! beta1 = 0.9
//! beta2 = 0.999
//! adam_eps = 1e-8
//! grad_clip = 10.0           # global-norm clip, 0 disables
//! augment_strength = 0.5     # color jitter, 0 disables
//! deterministic = true
//! checkpoint_every = 0       # epochs between checkpoints, 0 = final only
//! channels = 16
//! stem_channels = 8
//! extra_blocks = 2
//! head_trunk = 2
//! grid_x_cells = 64
//! grid_y_cells = 48
//! grid_resolution_m = 0.5
//! altitude_bins = [-1.0, -0.5, 0.0, 0.5, 0.75, 1.0, 1.5, 2.0, 8.0]
//! loss_altitude = 3.0
//! loss_cls_bev = 1.0
//! loss_box_bev = 1.0
//! loss_cls_rv = 1.0
//! loss_box_rv = 1.0
//! score_thresh = 0.25
//! max_dets = 128
//! max_train_samples = 0      # 0 = all
//! ```

use std::path::Path;

use aerialbev_core::detector::{DEFAULT_MAX_DETS, DEFAULT_SCORE_THRESH};
use aerialbev_core::geometry::DEFAULT_ALTITUDE_CENTERS;
use aerialbev_core::{AltitudeBins, BevGrid, LossWeights, ModelConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_min_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: f64,
    pub augment_strength: f64,
    pub deterministic: bool,
    pub checkpoint_every: usize,
    pub channels: usize,
    pub stem_channels: usize,
    pub extra_blocks: usize,
    pub head_trunk: usize,
    pub grid_x_cells: usize,
    pub grid_y_cells: usize,
    pub grid_resolution_m: f64,
    pub altitude_bins: Vec<f64>,
    pub loss_altitude: f64,
    pub loss_cls_bev: f64,
    pub loss_box_bev: f64,
    pub loss_cls_rv: f64,
    pub loss_box_rv: f64,
    pub score_thresh: f64,
    pub max_dets: usize,
    pub max_train_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::for_variant(Variant::Dvdet);
        Self {
            variant: Variant::Dvdet,
            seed: 0,
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            lr_min_factor: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 10.0,
            augment_strength: 0.5,
            deterministic: true,
            checkpoint_every: 0,
            channels: m.channels,
            stem_channels: m.stem_channels,
            extra_blocks: m.extra_blocks,
            head_trunk: m.head_trunk,
            grid_x_cells: m.grid.x_cells,
            grid_y_cells: m.grid.y_cells,
            grid_resolution_m: m.grid.resolution_m,
            altitude_bins: DEFAULT_ALTITUDE_CENTERS.to_vec(),
            loss_altitude: 3.0,
            loss_cls_bev: 1.0,
            loss_box_bev: 1.0,
            loss_cls_rv: 1.0,
            loss_box_rv: 1.0,
            score_thresh: DEFAULT_SCORE_THRESH,
            max_dets: DEFAULT_MAX_DETS,
            max_train_samples: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_owned()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.lr_min_factor) {
            return bad("learning_rate must be > 0 and lr_min_factor in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("beta1, beta2 must be in [0, 1) and adam_eps > 0");
        }
        if !(self.grad_clip >= 0.0) || !(self.augment_strength >= 0.0) {
            return bad("grad_clip and augment_strength must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.score_thresh) || self.max_dets == 0 {
            return bad("score_thresh must be in [0, 1] and max_dets positive");
        }
        self.model_config()?;
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            altitude: self.loss_altitude,
            cls_bev: self.loss_cls_bev,
            box_bev: self.loss_box_bev,
            cls_rv: self.loss_cls_rv,
            box_rv: self.loss_box_rv,
        }
    }

    pub fn grid(&self) -> Result<BevGrid> {
        Ok(BevGrid::anchored_at_zero(
            self.grid_x_cells,
            self.grid_y_cells,
            self.grid_resolution_m,
        )?)
    }

    pub fn bins(&self) -> Result<AltitudeBins> {
        Ok(AltitudeBins::new(self.altitude_bins.clone())?)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut m = ModelConfig::for_variant(self.variant);
        m.channels = self.channels;
        m.stem_channels = self.stem_channels;
        m.extra_blocks = self.extra_blocks;
        m.head_trunk = self.head_trunk;
        m.grid = self.grid()?;
        m.bins = self.bins()?;
        m.validate()?;
        Ok(m)
    }
}
