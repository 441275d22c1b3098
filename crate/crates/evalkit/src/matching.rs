//! Greedy score-ordered matching of detections to ground truth.

use aerialbev_core::BevBox;

use crate::iou::rotated_iou;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchLabel {
    /// Index into the detection list as given.
    pub det: usize,
    pub score: f64,
    pub tp: bool,
    pub gt: Option<usize>,
    pub iou: f64,
}

/// Detections in descending score (stable on ties) each take the
/// highest-IoU unmatched ground truth of their class with IoU ≥ `thresh`;
/// equal IoUs go to the lower gt index.
/// Labels are returned in that processing order.
pub fn match_greedy(dets: &[BevBox], gts: &[BevBox], thresh: f64) -> Vec<MatchLabel> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|d| {
            let det = &dets[d];
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] || gt.class_id != det.class_id {
                    continue;
                }
                let iou = rotated_iou(det, gt);
                if iou >= thresh && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            MatchLabel {
                det: d,
                score: det.score,
                tp: best.is_some(),
                gt: best.map(|(g, _)| g),
                iou: best.map_or(0.0, |(_, i)| i),
            }
        })
        .collect()
}
