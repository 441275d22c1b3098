//! Training objective: focal heatmap loss, masked altitude classification
//! and ℓ1 box regression, each returned with its analytic gradient.

use serde::{Deserialize, Serialize};

use crate::detector::heads::{HeadGrads, HeadOutputs};
use crate::detector::model::{ForwardOutput, OutputGrads, VariantFlags};
use crate::detector::targets::{CenterTarget, TargetMaps};
use crate::raster::Raster;
use crate::scalar::Real;

pub const PROB_EPS: f64 = 1e-6;
pub const FOCAL_ALPHA: i32 = 2;
pub const FOCAL_BETA: i32 = 4;
pub const ALTITUDE_GAMMA: i32 = 2;

/// Clamped probability and whether the clamp is inactive (gradient passes).
fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_EPS {
        (PROB_EPS, false)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, false)
    } else {
        (p, true)
    }
}

/// Penalty-reduced focal loss over a heatmap, normalized by the number of
/// unit-valued target cells (at least one). Returns `(loss, dL/dpred)`.
pub fn penalty_reduced_focal<T: Real>(pred: &Raster<T>, target: &Raster<T>) -> (f64, Raster<T>) {
    assert!(pred.same_shape(target), "focal loss shape mismatch");
    let (a, b) = (FOCAL_ALPHA, FOCAL_BETA);
    let peaks = target.data().iter().filter(|&&t| t == T::one()).count().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Raster::zeros(pred.rows(), pred.cols(), pred.channels());
    for ((&pv, &tv), g) in pred.data().iter().zip(target.data()).zip(grad.data_mut()) {
        let (p, live) = clamp_prob(pv.as_f64());
        let t = tv.as_f64();
        let (l, d) = if t == 1.0 {
            let q = 1.0 - p;
            (
                -q.powi(a) * p.ln(),
                a as f64 * q.powi(a - 1) * p.ln() - q.powi(a) / p,
            )
        } else {
            let wt = (1.0 - t).powi(b);
            let lq = (1.0 - p).ln();
            (
                -wt * p.powi(a) * lq,
                -wt * (a as f64 * p.powi(a - 1) * lq - p.powi(a) / (1.0 - p)),
            )
        };
        loss += l;
        if live {
            *g = T::of(d / peaks);
        }
    }
    (loss / peaks, grad)
}

/// Categorical focal loss on the target bin of `A_bev` at masked cells,
/// normalized by the mask count (at least one).
pub fn altitude_loss<T: Real>(a_bev: &Raster<T>, target_bins: &[usize], mask: &[bool]) -> (f64, Raster<T>) {
    let (rows, cols, z) = a_bev.shape();
    assert_eq!(mask.len(), rows * cols, "mask size");
    assert_eq!(target_bins.len(), rows * cols, "target size");
    let n = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let g = ALTITUDE_GAMMA;
    let mut loss = 0.0;
    let mut grad = Raster::zeros(rows, cols, z);
    for cell in 0..rows * cols {
        if !mask[cell] {
            continue;
        }
        let i = cell * z + target_bins[cell];
        let (p, live) = clamp_prob(a_bev.data()[i].as_f64());
        let q = 1.0 - p;
        loss += -q.powi(g) * p.ln();
        if live {
            let d = g as f64 * q.powi(g - 1) * p.ln() - q.powi(g) / p;
            grad.data_mut()[i] = T::of(d / n);
        }
    }
    (loss / n, grad)
}

/// ℓ1 between the bin-weighted altitude `Σ_z A(z)·c_z` and the true
/// altitude at masked cells (continuous-regression variant).
pub fn continuous_altitude_loss<T: Real>(
    a_bev: &Raster<T>,
    centers: &[f64],
    target_m: &[f64],
    mask: &[bool],
) -> (f64, Raster<T>) {
    let (rows, cols, z) = a_bev.shape();
    assert_eq!(z, centers.len(), "bin count");
    let n = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Raster::zeros(rows, cols, z);
    for cell in 0..rows * cols {
        if !mask[cell] {
            continue;
        }
        let a = &a_bev.data()[cell * z..(cell + 1) * z];
        let est: f64 = a.iter().zip(centers).map(|(&w, &c)| w.as_f64() * c).sum();
        let r = est - target_m[cell];
        loss += r.abs();
        let s = sign(r) / n;
        for (k, &c) in centers.iter().enumerate() {
            grad.data_mut()[cell * z + k] = T::of(s * c);
        }
    }
    (loss / n, grad)
}

fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// ℓ1 over offset, size and angle at the target center cells, normalized by
/// the number of targets (at least one). Only the regression fields of the
/// returned gradient are populated.
pub fn box_regression_loss<T: Real>(heads: &HeadOutputs<T>, centers: &[CenterTarget]) -> (f64, HeadGrads<T>) {
    let mut grads = HeadGrads::zeros_like(heads);
    let n = centers.len().max(1) as f64;
    let mut loss = 0.0;
    let mut term = |pred: &Raster<T>, grad: &mut Raster<T>, r: usize, c: usize, want: [f64; 2]| {
        for (ch, w) in want.into_iter().enumerate() {
            let d = pred.get(r, c, ch).as_f64() - w;
            loss += d.abs();
            let i = grad.index(r, c, ch);
            grad.data_mut()[i] += T::of(sign(d) / n);
        }
    };
    for t in centers {
        term(&heads.offset, &mut grads.offset, t.row, t.col, t.offset);
        term(&heads.size, &mut grads.size, t.row, t.col, t.size);
        if let (Some(a), Some(ga), Some(want)) = (&heads.angle, grads.angle.as_mut(), t.angle) {
            term(a, ga, t.row, t.col, want);
        }
    }
    (loss / n, grads)
}

/// Per-term weights of the total objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub altitude: f64,
    pub cls_bev: f64,
    pub box_bev: f64,
    pub cls_rv: f64,
    pub box_rv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            altitude: 1.0,
            cls_bev: 1.0,
            box_bev: 1.0,
            cls_rv: 1.0,
            box_rv: 1.0,
        }
    }
}

/// Loss components (unweighted) and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_altitude: f64,
    pub l_cls_bev: f64,
    pub l_box_bev: f64,
    pub l_cls_rv: f64,
    pub l_box_rv: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const COLUMNS: [&'static str; 6] = ["l_altitude", "l_cls_bev", "l_box_bev", "l_cls_rv", "l_box_rv", "total"];

    pub fn values(&self) -> [f64; 6] {
        [self.l_altitude, self.l_cls_bev, self.l_box_bev, self.l_cls_rv, self.l_box_rv, self.total]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Weighted sum of the components.
pub fn total_loss(weights: &LossWeights, components: [f64; 5]) -> LossBreakdown {
    let [a, cb, bb, cr, br] = components;
    LossBreakdown {
        l_altitude: a,
        l_cls_bev: cb,
        l_box_bev: bb,
        l_cls_rv: cr,
        l_box_rv: br,
        total: weights.altitude * a + weights.cls_bev * cb + weights.box_bev * bb + weights.cls_rv * cr + weights.box_rv * br,
    }
}

/// Targets of one training sample.
#[derive(Clone, Debug)]
pub struct SampleTargets<T> {
    pub bev: Option<TargetMaps<T>>,
    pub rv: Option<TargetMaps<T>>,
}

fn scale<T: Real>(r: &mut Raster<T>, w: f64) {
    let w = T::of(w);
    r.data_mut().iter_mut().for_each(|v| *v *= w);
}

fn scale_head<T: Real>(g: &mut HeadGrads<T>, w_cls: f64, w_box: f64) {
    scale(&mut g.heatmap, w_cls);
    scale(&mut g.size, w_box);
    scale(&mut g.offset, w_box);
    if let Some(a) = g.angle.as_mut() {
        scale(a, w_box);
    }
}

fn head_terms<T: Real>(heads: &HeadOutputs<T>, t: &TargetMaps<T>, w_cls: f64, w_box: f64) -> (f64, f64, HeadGrads<T>) {
    let (l_cls, g_heat) = penalty_reduced_focal(&heads.heatmap, &t.heatmap);
    let (l_box, mut g) = box_regression_loss(heads, &t.centers);
    g.heatmap = g_heat;
    scale_head(&mut g, w_cls, w_box);
    (l_cls, l_box, g)
}

/// Full objective for one forward pass and the gradients to back-propagate.
pub fn detection_loss<T: Real>(
    out: &ForwardOutput<T>,
    targets: &SampleTargets<T>,
    flags: &VariantFlags,
    centers_m: &[f64],
    weights: &LossWeights,
) -> (LossBreakdown, OutputGrads<T>) {
    let mut comp = [0.0; 5];
    let mut grads = OutputGrads::default();
    if let (Some(h), Some(t)) = (&out.bev, &targets.bev) {
        let (c, b, g) = head_terms(h, t, weights.cls_bev, weights.box_bev);
        comp[1] = c;
        comp[2] = b;
        grads.bev = Some(g);
        if let (Some(a), true) = (&out.a_bev, flags.cae_supervision) {
            let (l, mut g) = if flags.continuous_altitude {
                continuous_altitude_loss(a, centers_m, &t.altitude_m, &t.mask)
            } else {
                altitude_loss(a, &t.altitude_bin, &t.mask)
            };
            scale(&mut g, weights.altitude);
            comp[0] = l;
            grads.a_bev = Some(g);
        }
    }
    if let (Some(h), Some(t)) = (&out.rv, &targets.rv) {
        let (c, b, g) = head_terms(h, t, weights.cls_rv, weights.box_rv);
        comp[3] = c;
        comp[4] = b;
        grads.rv = Some(g);
    }
    (total_loss(weights, comp), grads)
}
