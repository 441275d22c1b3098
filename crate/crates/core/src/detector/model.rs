//! The dual-view detector and its ablation variants.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::altitude::{
    transform_altitude_to_bev, transform_altitude_to_bev_backward, AltitudeHead, AltitudeHeadCache,
    AltitudeNormalization,
};
use crate::deform::{coord_channels, geo_deformable_transform, geo_deformable_transform_backward, DeformableConv, GeoDeformCache};
use crate::detector::backbone::{Backbone, BackboneCache, BACKBONE_STRIDE};
use crate::detector::heads::{DetectionHead, HeadCache, HeadGrads, HeadOutputs};
use crate::error::{CoreError, Result};
use crate::geometry::{warp_to_plane, AltitudeBins, BevGrid, PlaneSweepGrids, ProjectionMatrix};
use crate::grid_cache::SamplingGridCache;
use crate::nn::{Param, Parameterized};
use crate::raster::Raster;
use crate::scalar::Real;

/// Method variants of the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Detect in the image, project the boxes to the ground.
    LateGeot,
    /// Warp the raw image to the ground plane, detect there.
    EarlyGeot,
    /// Warp backbone features onto the ground plane.
    InterGeot,
    /// Inter-GeoT plus the deformable residual.
    InterGeodt,
    /// Inter-GeoT with the categorical altitude sweep.
    InterGeotCae,
    /// Categorical altitude sweep plus the deformable residual.
    Dvdet,
    /// Dvdet with the image-space decoder trained jointly.
    DvdetDualview,
    /// Dvdet with a regressed altitude in place of the classifier.
    ContinuousAltitude,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::LateGeot,
        Variant::EarlyGeot,
        Variant::InterGeot,
        Variant::InterGeodt,
        Variant::InterGeotCae,
        Variant::Dvdet,
        Variant::DvdetDualview,
        Variant::ContinuousAltitude,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::LateGeot => "late-geot",
            Variant::EarlyGeot => "early-geot",
            Variant::InterGeot => "inter-geot",
            Variant::InterGeodt => "inter-geodt",
            Variant::InterGeotCae => "inter-geot-cae",
            Variant::Dvdet => "dvdet",
            Variant::DvdetDualview => "dvdet-dualview",
            Variant::ContinuousAltitude => "continuous-altitude",
        }
    }

    pub fn flags(self) -> VariantFlags {
        let inter = VariantFlags {
            bev_branch: true,
            ..VariantFlags::default()
        };
        let cae = VariantFlags {
            cae: true,
            cae_supervision: true,
            ..inter
        };
        match self {
            Variant::LateGeot => VariantFlags {
                rv_branch: true,
                late_projection: true,
                ..VariantFlags::default()
            },
            Variant::EarlyGeot => VariantFlags {
                early_warp: true,
                ..inter
            },
            Variant::InterGeot => inter,
            Variant::InterGeodt => VariantFlags { dcn: true, ..inter },
            Variant::InterGeotCae => cae,
            Variant::Dvdet => VariantFlags { dcn: true, ..cae },
            Variant::DvdetDualview => VariantFlags {
                dcn: true,
                rv_branch: true,
                ..cae
            },
            Variant::ContinuousAltitude => VariantFlags {
                dcn: true,
                continuous_altitude: true,
                ..cae
            },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| CoreError::invalid("variant", format!("unknown variant {s:?}")))
    }
}

/// Feature switches composing a variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantFlags {
    /// Ground-plane decoder on warped features.
    pub bev_branch: bool,
    /// Image-space decoder sharing the backbone.
    pub rv_branch: bool,
    /// Warp the input image instead of features (requires `bev_branch`).
    pub early_warp: bool,
    /// Sweep over all altitude bins weighted by the altitude head. Off means
    /// a single ground plane with unit weight.
    pub cae: bool,
    /// Supervise the altitude volume.
    pub cae_supervision: bool,
    /// Regress altitude and spread it onto neighboring bins.
    pub continuous_altitude: bool,
    /// Deformable residual after the geometric collapse.
    pub dcn: bool,
    /// Ground-plane boxes come from projecting image boxes.
    pub late_projection: bool,
}

impl VariantFlags {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(CoreError::invalid("variant flags", r.to_string()));
        if !self.bev_branch && !self.rv_branch {
            return bad("at least one decoder branch is required");
        }
        if self.early_warp && (!self.bev_branch || self.cae || self.dcn || self.rv_branch) {
            return bad("early warp supports only a plain ground-plane decoder");
        }
        if (self.cae_supervision || self.continuous_altitude) && !self.cae {
            return bad("altitude supervision requires the altitude sweep");
        }
        if (self.cae || self.dcn) && !self.bev_branch {
            return bad("altitude sweep and deformable residual need the ground-plane decoder");
        }
        if self.late_projection && (!self.rv_branch || self.bev_branch) {
            return bad("late projection uses the image decoder alone");
        }
        Ok(())
    }
}

/// Architecture and geometry shared by every sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_rows: usize,
    pub image_cols: usize,
    pub channels: usize,
    pub stem_channels: usize,
    pub extra_blocks: usize,
    pub head_trunk: usize,
    pub num_classes: usize,
    pub grid: BevGrid,
    pub bins: AltitudeBins,
    pub flags: VariantFlags,
    /// Sigmoid instead of softmax over bins (untested alternative).
    pub sigmoid_altitude: bool,
    /// Refinement of the early-warp image relative to the grid.
    pub early_refine: usize,
    /// Initial (w, l) meters for the ground-plane size head.
    pub bev_size_prior: [f64; 2],
    /// Initial (bw, bh) pixels for the image size head.
    pub rv_size_prior: [f64; 2],
}

impl ModelConfig {
    /// Desk-scale defaults for a variant.
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            image_rows: 128,
            image_cols: 192,
            channels: 16,
            stem_channels: 8,
            extra_blocks: 2,
            head_trunk: 2,
            num_classes: 1,
            grid: BevGrid::anchored_at_zero(64, 48, 0.5).expect("static grid"),
            bins: AltitudeBins::default(),
            flags: variant.flags(),
            sigmoid_altitude: false,
            early_refine: BACKBONE_STRIDE,
            bev_size_prior: [2.0, 4.5],
            rv_size_prior: [10.0, 10.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.flags.validate()?;
        self.grid.validate()?;
        if !self.image_rows.is_multiple_of(BACKBONE_STRIDE) || !self.image_cols.is_multiple_of(BACKBONE_STRIDE) {
            return Err(CoreError::invalid(
                "model config",
                format!("image size must be divisible by {BACKBONE_STRIDE}"),
            ));
        }
        if self.channels == 0 || self.stem_channels == 0 || self.num_classes == 0 {
            return Err(CoreError::invalid("model config", "zero channel count"));
        }
        if self.flags.early_warp && self.early_refine != BACKBONE_STRIDE {
            return Err(CoreError::invalid(
                "model config",
                format!("early_refine must equal the backbone stride {BACKBONE_STRIDE}"),
            ));
        }
        Ok(())
    }

    /// Bins the sweep runs over: all of them with CAE, else the ground plane.
    pub fn sweep_bins(&self) -> AltitudeBins {
        if self.flags.cae {
            self.bins.clone()
        } else {
            AltitudeBins::single(0.0)
        }
    }

    /// Bin reported for boxes when no altitude volume exists.
    pub fn ground_bin(&self) -> usize {
        self.bins.assign(0.0)
    }

    pub fn rv_shape(&self) -> (usize, usize) {
        (self.image_rows / BACKBONE_STRIDE, self.image_cols / BACKBONE_STRIDE)
    }

    fn normalization(&self) -> AltitudeNormalization {
        if self.flags.continuous_altitude {
            AltitudeNormalization::Continuous
        } else if self.sigmoid_altitude {
            AltitudeNormalization::Sigmoid
        } else {
            AltitudeNormalization::Softmax
        }
    }
}

/// Per-image sampling geometry.
#[derive(Clone, Debug)]
pub struct SampleGeometry {
    /// Feature sweep (RV stride) for the intermediate variants.
    pub sweep: Option<Arc<PlaneSweepGrids>>,
    /// Full-resolution ground-plane grid for the early-warp variant.
    pub early: Option<Arc<PlaneSweepGrids>>,
}

/// Independent initialization stream per module so that variants sharing a
/// module share its initial weights.
fn module_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Shared backbone, altitude head, geo-deformable transform and both decoders.
#[derive(Clone, Debug, PartialEq)]
pub struct Dvdet<T> {
    pub config: ModelConfig,
    pub backbone: Backbone<T>,
    pub altitude: Option<AltitudeHead<T>>,
    pub dcn: Option<DeformableConv<T>>,
    pub bev_head: Option<DetectionHead<T>>,
    pub rv_head: Option<DetectionHead<T>>,
    coords: Raster<T>,
}

/// Outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub bev: Option<HeadOutputs<T>>,
    pub rv: Option<HeadOutputs<T>>,
    /// Altitude volume on the grid (CAE variants).
    pub a_bev: Option<Raster<T>>,
    /// Geometric part `F_g` of the BEV feature (intermediate variants).
    pub geometric: Option<Raster<T>>,
    /// Final BEV feature fed to the decoder.
    pub bev_feature: Option<Raster<T>>,
}

pub struct ForwardCache<T> {
    backbone: BackboneCache<T>,
    rv_feature_shape: (usize, usize),
    altitude: Option<(AltitudeHeadCache<T>, Raster<T>)>,
    geo: Option<GeoDeformCache<T>>,
    bev_head: Option<HeadCache<T>>,
    rv_head: Option<HeadCache<T>>,
    geometry: SampleGeometry,
}

/// Loss gradients with respect to the forward outputs.
#[derive(Clone, Debug, Default)]
pub struct OutputGrads<T> {
    pub bev: Option<HeadGrads<T>>,
    pub rv: Option<HeadGrads<T>>,
    pub a_bev: Option<Raster<T>>,
}

impl<T: Real> Dvdet<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let f = config.flags;
        let c = config.channels;
        let backbone = Backbone::new(
            "backbone",
            3,
            config.stem_channels,
            c,
            config.extra_blocks,
            &mut module_rng(seed, 1),
        );
        let altitude = f.cae.then(|| {
            AltitudeHead::new("altitude", c, &config.bins, config.normalization(), &mut module_rng(seed, 2))
        });
        // The residual branch starts at exactly zero.
        let dcn = f.dcn.then(|| DeformableConv::zeros("dcn", c + 2, c));
        let bev_head = f.bev_branch.then(|| {
            DetectionHead::new(
                "bev",
                c,
                config.head_trunk,
                config.num_classes,
                true,
                config.bev_size_prior,
                &mut module_rng(seed, 3),
            )
        });
        let rv_head = f.rv_branch.then(|| {
            DetectionHead::new(
                "rv",
                c,
                config.head_trunk,
                config.num_classes,
                false,
                config.rv_size_prior,
                &mut module_rng(seed, 4),
            )
        });
        let coords = coord_channels(&config.grid);
        Ok(Self {
            config,
            backbone,
            altitude,
            dcn,
            bev_head,
            rv_head,
            coords,
        })
    }

    /// Sampling grids for one camera, shared through `cache`.
    pub fn geometry(&self, p: &ProjectionMatrix, cache: &SamplingGridCache) -> SampleGeometry {
        let cfg = &self.config;
        if !cfg.flags.bev_branch {
            return SampleGeometry { sweep: None, early: None };
        }
        if cfg.flags.early_warp {
            let fine = cfg.grid.refined(cfg.early_refine);
            return SampleGeometry {
                sweep: None,
                early: Some(cache.get_or_compute(p, &fine, &AltitudeBins::single(0.0))),
            };
        }
        SampleGeometry {
            sweep: Some(cache.get_or_compute(&p.for_stride(BACKBONE_STRIDE), &cfg.grid, &cfg.sweep_bins())),
            early: None,
        }
    }

    pub fn forward(&self, image: &Raster<T>, geometry: &SampleGeometry) -> Result<(ForwardOutput<T>, ForwardCache<T>)> {
        let cfg = &self.config;
        if image.shape() != (cfg.image_rows, cfg.image_cols, 3) {
            return Err(CoreError::shape(format!(
                "image {:?} does not match configured {}x{}x3",
                image.shape(),
                cfg.image_rows,
                cfg.image_cols
            )));
        }
        let mut out = ForwardOutput {
            bev: None,
            rv: None,
            a_bev: None,
            geometric: None,
            bev_feature: None,
        };
        if let Some(early) = &geometry.early {
            let bev_image = warp_to_plane(image, &early.planes[0]);
            let (feat, bb) = self.backbone.forward(&bev_image)?;
            let head = self.bev_head.as_ref().expect("early warp has a bev head");
            let (heads, hc) = head.forward(&feat)?;
            out.bev = Some(heads);
            out.bev_feature = Some(feat.clone());
            let fshape = (feat.rows(), feat.cols());
            return Ok((
                out,
                ForwardCache {
                    backbone: bb,
                    rv_feature_shape: fshape,
                    altitude: None,
                    geo: None,
                    bev_head: Some(hc),
                    rv_head: None,
                    geometry: geometry.clone(),
                },
            ));
        }

        let (f_rv, bb) = self.backbone.forward(image)?;
        let mut cache = ForwardCache {
            backbone: bb,
            rv_feature_shape: (f_rv.rows(), f_rv.cols()),
            altitude: None,
            geo: None,
            bev_head: None,
            rv_head: None,
            geometry: geometry.clone(),
        };
        if let Some(head) = &self.bev_head {
            let grids = geometry
                .sweep
                .as_ref()
                .ok_or_else(|| CoreError::invalid("sample geometry", "missing feature sweep grids"))?;
            let a_bev = match &self.altitude {
                Some(alt) => {
                    let (a_rv, ac) = alt.forward(&f_rv)?;
                    let a_bev = transform_altitude_to_bev(&a_rv, grids)?;
                    cache.altitude = Some((ac, a_bev.clone()));
                    a_bev
                }
                None => Raster::filled(cfg.grid.y_cells, cfg.grid.x_cells, 1, T::one()),
            };
            let (f_bev, gc) = geo_deformable_transform(&f_rv, &a_bev, grids, &self.coords, self.dcn.as_ref())?;
            let (heads, hc) = head.forward(&f_bev)?;
            out.geometric = Some(gc.geometric.clone());
            out.bev_feature = Some(f_bev);
            out.bev = Some(heads);
            if self.altitude.is_some() {
                out.a_bev = Some(a_bev);
            }
            cache.geo = Some(gc);
            cache.bev_head = Some(hc);
        }
        if let Some(head) = &self.rv_head {
            let (heads, hc) = head.forward(&f_rv)?;
            out.rv = Some(heads);
            cache.rv_head = Some(hc);
        }
        Ok((out, cache))
    }

    /// Accumulates gradients of every parameter.
    pub fn backward(&mut self, cache: &ForwardCache<T>, grads: &OutputGrads<T>) {
        let (rr, rc) = cache.rv_feature_shape;
        let c = self.config.channels;
        if cache.geometry.early.is_some() {
            let (Some(head), Some(hc), Some(g)) = (self.bev_head.as_mut(), cache.bev_head.as_ref(), grads.bev.as_ref())
            else {
                return;
            };
            let g_feat = head.backward(hc, g);
            self.backbone.backward(&cache.backbone, &g_feat);
            return;
        }
        let mut g_rv = Raster::zeros(rr, rc, c);
        if let (Some(head), Some(hc), Some(g)) = (self.bev_head.as_mut(), cache.bev_head.as_ref(), grads.bev.as_ref()) {
            let g_bev = head.backward(hc, g);
            let grids = cache.geometry.sweep.as_ref().expect("sweep grids");
            let gc = cache.geo.as_ref().expect("geo cache");
            let ones;
            let a_bev = match &cache.altitude {
                Some((_, a)) => a,
                None => {
                    ones = Raster::filled(self.config.grid.y_cells, self.config.grid.x_cells, 1, T::one());
                    &ones
                }
            };
            let (g_from_geo, mut g_a) = geo_deformable_transform_backward(gc, a_bev, grids, self.dcn.as_mut(), &g_bev);
            g_rv.add_assign(&g_from_geo);
            if let (Some(alt), Some((ac, _))) = (self.altitude.as_mut(), cache.altitude.as_ref()) {
                if let Some(extra) = &grads.a_bev {
                    g_a.add_assign(extra);
                }
                let g_arv = transform_altitude_to_bev_backward(&g_a, grids, rr, rc);
                g_rv.add_assign(&alt.backward(ac, &g_arv));
            }
        }
        if let (Some(head), Some(hc), Some(g)) = (self.rv_head.as_mut(), cache.rv_head.as_ref(), grads.rv.as_ref()) {
            g_rv.add_assign(&head.backward(hc, g));
        }
        self.backbone.backward(&cache.backbone, &g_rv);
    }

    /// Deterministic parameter order, used by the optimizer and checkpoints.
    pub fn named_params(&self) -> Vec<&Param<T>> {
        self.params()
    }
}

impl<T: Real> Parameterized<T> for Dvdet<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.backbone.params();
        if let Some(a) = &self.altitude {
            v.extend(a.params());
        }
        if let Some(d) = &self.dcn {
            v.extend(d.params());
        }
        if let Some(h) = &self.bev_head {
            v.extend(h.params());
        }
        if let Some(h) = &self.rv_head {
            v.extend(h.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.backbone.params_mut();
        if let Some(a) = &mut self.altitude {
            v.extend(a.params_mut());
        }
        if let Some(d) = &mut self.dcn {
            v.extend(d.params_mut());
        }
        if let Some(h) = &mut self.bev_head {
            v.extend(h.params_mut());
        }
        if let Some(h) = &mut self.rv_head {
            v.extend(h.params_mut());
        }
        v
    }
}
