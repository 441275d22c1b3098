//! Dataset-level evaluation report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use aerialbev_core::{AltitudeBins, BevBox, BevObject};
use serde::{Deserialize, Serialize};

use crate::ap::{average_precision, pr_curve, PrPoint};
use crate::matching::match_greedy;

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// IoU at which altitude accuracy is measured.
pub const ALTITUDE_IOU: f64 = 0.5;

pub const METRIC_NOTE: &str = "ap_mean: mean of all-point AP over IoU 0.50:0.05:0.95, averaged over classes with ground truth; \
altitude_accuracy: share of IoU-0.5 true positives whose altitude bin equals the matched ground truth's";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("detections reference unknown sample token {0:?}")]
    UnknownSample(String),
    #[error("invalid box in sample {sample:?}: {reason}")]
    InvalidBox { sample: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub iou: f64,
    pub ap: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    /// Pooled over classes; one point per detection.
    pub pr_curve: Vec<PrPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric_note: String,
    pub ap_mean: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// Fraction of IoU-0.5 true positives whose bin equals the matched gt's.
    pub altitude_accuracy: f64,
    pub thresholds: Vec<ThresholdResult>,
    pub num_samples: usize,
    pub num_gts: usize,
    pub num_dets: usize,
    pub altitude_matches: usize,
    /// No ground truth at all: every AP is 0 by definition.
    pub vacuous: bool,
    /// Per-cell accuracy of the altitude volume over foreground cells, when
    /// the caller supplies it (see [`cell_altitude_accuracy`]).
    pub cell_altitude_accuracy: Option<f64>,
}

/// Fraction of masked cells whose predicted bin equals the target bin;
/// `None` without masked cells.
pub fn cell_altitude_accuracy(pred: &[usize], target: &[usize], mask: &[bool]) -> Option<f64> {
    assert!(pred.len() == target.len() && target.len() == mask.len(), "cell arrays differ in length");
    let (mut n, mut hit) = (0usize, 0usize);
    for ((p, t), &m) in pred.iter().zip(target).zip(mask) {
        if m {
            n += 1;
            hit += (p == t) as usize;
        }
    }
    (n > 0).then(|| hit as f64 / n as f64)
}

fn check_box(sample: &str, v: &[f64]) -> Result<(), EvalError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::InvalidBox {
            sample: sample.to_owned(),
            reason: "non-finite value".into(),
        });
    }
    if v[2] <= 0.0 || v[3] <= 0.0 {
        return Err(EvalError::InvalidBox {
            sample: sample.to_owned(),
            reason: format!("non-positive extent {}x{}", v[2], v[3]),
        });
    }
    Ok(())
}

/// AP per IoU threshold, averaged over the classes that have ground truth,
/// plus altitude accuracy on the true positives at IoU 0.5.
///
/// Every detection token must appear in `gts`; samples with ground truth
/// but no detections count as all misses.
pub fn evaluate(
    dets: &BTreeMap<String, Vec<BevBox>>,
    gts: &BTreeMap<String, Vec<BevObject>>,
    bins: &AltitudeBins,
) -> Result<EvalReport, EvalError> {
    for (token, ds) in dets {
        if !gts.contains_key(token) {
            return Err(EvalError::UnknownSample(token.clone()));
        }
        for d in ds {
            check_box(token, &[d.x, d.y, d.w, d.l, d.theta, d.score])?;
        }
    }
    for (token, gs) in gts {
        for g in gs {
            check_box(token, &[g.x, g.y, g.w, g.l, g.theta, g.altitude_m])?;
        }
    }
    let gt_boxes: BTreeMap<&str, Vec<BevBox>> = gts
        .iter()
        .map(|(t, gs)| (t.as_str(), gs.iter().map(|g| g.to_box(bins.assign(g.altitude_m), 1.0)).collect()))
        .collect();
    let classes: BTreeSet<usize> = gt_boxes.values().flatten().map(|g| g.class_id).collect();
    let num_gts = gt_boxes.values().map(Vec::len).sum();
    let num_dets = dets.values().map(Vec::len).sum();
    let empty = Vec::new();

    let mut thresholds = Vec::with_capacity(IOU_THRESHOLDS.len());
    let mut altitude_tp = 0usize;
    let mut altitude_matches = 0usize;
    for &iou in &IOU_THRESHOLDS {
        let mut per_class: BTreeMap<usize, Vec<(f64, bool)>> = BTreeMap::new();
        let mut pooled = Vec::with_capacity(num_dets);
        for (token, gs) in &gt_boxes {
            let ds = dets.get(*token).unwrap_or(&empty);
            for m in match_greedy(ds, gs, iou) {
                let class = ds[m.det].class_id;
                per_class.entry(class).or_default().push((m.score, m.tp));
                pooled.push((m.score, m.tp));
                if iou == ALTITUDE_IOU && m.tp {
                    altitude_tp += 1;
                    let g = m.gt.expect("true positive has a gt");
                    altitude_matches += (ds[m.det].altitude_bin == gs[g].altitude_bin) as usize;
                }
            }
        }
        let ap = if classes.is_empty() {
            0.0
        } else {
            let sum: f64 = classes
                .iter()
                .map(|c| {
                    let n = gt_boxes.values().flatten().filter(|g| g.class_id == *c).count();
                    average_precision(per_class.get(c).map_or(&[][..], |v| v), n)
                })
                .sum();
            sum / classes.len() as f64
        };
        let tp = pooled.iter().filter(|l| l.1).count();
        thresholds.push(ThresholdResult {
            iou,
            ap,
            true_positives: tp,
            false_positives: pooled.len() - tp,
            pr_curve: pr_curve(&pooled, num_gts),
        });
    }
    let ap_at = |t: f64| {
        thresholds
            .iter()
            .find(|r| (r.iou - t).abs() < 1e-12)
            .map_or(0.0, |r| r.ap)
    };
    Ok(EvalReport {
        metric_note: METRIC_NOTE.to_owned(),
        ap_mean: thresholds.iter().map(|r| r.ap).sum::<f64>() / thresholds.len() as f64,
        ap50: ap_at(0.5),
        ap75: ap_at(0.75),
        altitude_accuracy: if altitude_tp == 0 {
            0.0
        } else {
            altitude_matches as f64 / altitude_tp as f64
        },
        thresholds,
        num_samples: gts.len(),
        num_gts,
        num_dets,
        altitude_matches,
        vacuous: num_gts == 0,
        cell_altitude_accuracy: None,
    })
}

impl EvalReport {
    pub fn true_positives_at_50(&self) -> usize {
        self.thresholds.first().map_or(0, |r| r.true_positives)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let s = serde_json::to_string_pretty(self)?;
        write(path, s)
    }

    pub fn read_json(path: &Path) -> Result<Self, EvalError> {
        let s = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_owned(),
            source,
        })?;
        Ok(serde_json::from_str(&s)?)
    }

    /// One row per threshold: `iou,ap,tp,fp`.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("iou,ap,tp,fp\n");
        for r in &self.thresholds {
            let _ = writeln!(s, "{:.2},{},{},{}", r.iou, r.ap, r.true_positives, r.false_positives);
        }
        s
    }

    /// Long format PR curves: `iou,rank,score,precision,recall`.
    pub fn pr_csv(&self) -> String {
        let mut s = String::from("iou,rank,score,precision,recall\n");
        for r in &self.thresholds {
            for (k, p) in r.pr_curve.iter().enumerate() {
                let _ = writeln!(s, "{:.2},{},{},{},{}", r.iou, k, p.score, p.precision, p.recall);
            }
        }
        s
    }

    pub fn write_csvs(&self, summary: &Path, pr: &Path) -> Result<(), EvalError> {
        write(summary, self.summary_csv())?;
        write(pr, self.pr_csv())
    }
}

fn write(path: &Path, s: String) -> Result<(), EvalError> {
    fs::write(path, s).map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(x: f64, alt: f64) -> BevObject {
        BevObject {
            x,
            y: 3.0,
            w: 2.0,
            l: 4.5,
            theta: 0.4,
            altitude_m: alt,
            class_id: 0,
        }
    }

    fn gts() -> BTreeMap<String, Vec<BevObject>> {
        let mut m = BTreeMap::new();
        m.insert("a".to_owned(), vec![obj(2.0, 0.0), obj(10.0, 7.5)]);
        m.insert("b".to_owned(), vec![obj(5.0, 1.0)]);
        m
    }

    #[test]
    fn perfect_detections() {
        let bins = AltitudeBins::default();
        let dets = gts()
            .into_iter()
            .map(|(t, gs)| (t, gs.iter().map(|g| g.to_box(bins.assign(g.altitude_m), 0.9)).collect()))
            .collect();
        let r = evaluate(&dets, &gts(), &bins).unwrap();
        assert_eq!((r.ap_mean, r.ap50, r.ap75, r.altitude_accuracy), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(r.true_positives_at_50(), 3);
    }

    #[test]
    fn no_detections_is_all_zero() {
        let r = evaluate(&BTreeMap::new(), &gts(), &AltitudeBins::default()).unwrap();
        assert_eq!((r.ap_mean, r.ap50, r.ap75, r.altitude_accuracy), (0.0, 0.0, 0.0, 0.0));
        assert!(!r.vacuous);
    }

    #[test]
    fn wrong_bin_counts_against_accuracy_only() {
        let bins = AltitudeBins::default();
        let mut dets = BTreeMap::new();
        dets.insert("b".to_owned(), vec![obj(5.0, 1.0).to_box(0, 0.8)]);
        let mut g = BTreeMap::new();
        g.insert("b".to_owned(), vec![obj(5.0, 1.0)]);
        let r = evaluate(&dets, &g, &bins).unwrap();
        assert_eq!((r.ap50, r.altitude_accuracy), (1.0, 0.0));
    }

    #[test]
    fn unknown_token_is_an_error() {
        let mut dets = BTreeMap::new();
        dets.insert("zzz".to_owned(), vec![]);
        assert!(matches!(
            evaluate(&dets, &gts(), &AltitudeBins::default()),
            Err(EvalError::UnknownSample(t)) if t == "zzz"
        ));
    }

    #[test]
    fn vacuous_when_no_ground_truth() {
        let mut g = BTreeMap::new();
        g.insert("a".to_owned(), vec![]);
        let r = evaluate(&BTreeMap::new(), &g, &AltitudeBins::default()).unwrap();
        assert!(r.vacuous);
        assert_eq!(r.ap_mean, 0.0);
    }

    #[test]
    fn cell_accuracy_counts_masked_cells_only() {
        let acc = cell_altitude_accuracy(&[1, 2, 3, 4], &[1, 0, 3, 0], &[true, true, true, false]);
        assert_eq!(acc, Some(2.0 / 3.0));
        assert_eq!(cell_altitude_accuracy(&[1], &[1], &[false]), None);
    }

    #[test]
    fn json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let r = evaluate(&BTreeMap::new(), &gts(), &AltitudeBins::default()).unwrap();
        let p = dir.path().join("r.json");
        r.write_json(&p).unwrap();
        assert_eq!(EvalReport::read_json(&p).unwrap(), r);
    }
}
