//! Peak extraction and box readout.

use crate::detector::boxes::{canonical_angle, BevBox, RvBox};
use crate::detector::heads::HeadOutputs;
use crate::geometry::BevGrid;
use crate::raster::Raster;
use crate::scalar::Real;

pub const DEFAULT_SCORE_THRESH: f64 = 0.25;
pub const DEFAULT_MAX_DETS: usize = 128;

/// A heatmap cell that survived local-maximum suppression.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub class_id: usize,
    pub score: f64,
}

/// Cells that are `>=` all 8 neighbors in their class channel, keeping the
/// best class per cell, filtered by `thresh` and truncated to the top `k`.
/// Order: descending score, ties by raster order.
pub fn find_peaks<T: Real>(heat: &Raster<T>, k: usize, thresh: f64) -> Vec<Peak> {
    let (rows, cols, classes) = heat.shape();
    let mut peaks = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let mut best: Option<Peak> = None;
            for cls in 0..classes {
                let v = heat.get(r, c, cls);
                let score = v.as_f64();
                if !(score >= thresh) || best.is_some_and(|b| b.score >= score) {
                    continue;
                }
                if is_local_max(heat, r, c, cls, v) {
                    best = Some(Peak {
                        row: r,
                        col: c,
                        class_id: cls,
                        score,
                    });
                }
            }
            peaks.extend(best);
        }
    }
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score));
    peaks.truncate(k);
    peaks
}

fn is_local_max<T: Real>(heat: &Raster<T>, r: usize, c: usize, cls: usize, v: T) -> bool {
    let (rows, cols, _) = heat.shape();
    for nr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
        for nc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
            if (nr, nc) != (r, c) && heat.get(nr, nc, cls) > v {
                return false;
            }
        }
    }
    true
}

/// BEV boxes from head outputs. The altitude level is the argmax of
/// `a_bev` at the peak cell, or `fallback_bin` without a volume.
pub fn decode_bev<T: Real>(
    heads: &HeadOutputs<T>,
    a_bev: Option<&Raster<T>>,
    fallback_bin: usize,
    grid: &BevGrid,
    max_dets: usize,
    score_thresh: f64,
) -> Vec<BevBox> {
    find_peaks(&heads.heatmap, max_dets, score_thresh)
        .into_iter()
        .map(|p| {
            let (r, c) = (p.row, p.col);
            let [x, y] = grid.cell_center(c, r);
            let dx = heads.offset.get(r, c, 0).as_f64();
            let dy = heads.offset.get(r, c, 1).as_f64();
            let theta = match &heads.angle {
                Some(a) => canonical_angle(a.get(r, c, 0).as_f64().atan2(a.get(r, c, 1).as_f64())),
                None => 0.0,
            };
            let altitude_bin = a_bev.map_or(fallback_bin, |a| argmax(a.pixel(r, c)));
            BevBox {
                x: x + dx * grid.resolution_m,
                y: y + dy * grid.resolution_m,
                w: heads.size.get(r, c, 0).as_f64(),
                l: heads.size.get(r, c, 1).as_f64(),
                theta,
                altitude_bin,
                class_id: p.class_id,
                score: p.score,
            }
        })
        .collect()
}

/// Image boxes from RV head outputs on a stride-`stride` raster.
pub fn decode_rv<T: Real>(heads: &HeadOutputs<T>, stride: usize, max_dets: usize, score_thresh: f64) -> Vec<RvBox> {
    let s = stride as f64;
    find_peaks(&heads.heatmap, max_dets, score_thresh)
        .into_iter()
        .map(|p| {
            let (r, c) = (p.row, p.col);
            RvBox {
                cu: (c as f64 + heads.offset.get(r, c, 0).as_f64()) * s,
                cv: (r as f64 + heads.offset.get(r, c, 1).as_f64()) * s,
                bw: heads.size.get(r, c, 0).as_f64(),
                bh: heads.size.get(r, c, 1).as_f64(),
                class_id: p.class_id,
                score: p.score,
            }
        })
        .collect()
}

/// First index of the largest value.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heads(rows: usize, cols: usize) -> HeadOutputs<f64> {
        HeadOutputs {
            heatmap: Raster::zeros(rows, cols, 1),
            size: Raster::from_fn(rows, cols, 2, |_, _, ch| [2.0, 4.0][ch]),
            offset: Raster::zeros(rows, cols, 2),
            angle: Some(Raster::from_fn(rows, cols, 2, |_, _, ch| [0.0, 1.0][ch])),
        }
    }

    #[test]
    fn single_peak_reads_out_directly() {
        let g = BevGrid::anchored_at_zero(8, 6, 0.5).unwrap();
        let mut h = heads(6, 8);
        h.heatmap.set(3, 5, 0, 0.9);
        let d = decode_bev(&h, None, 2, &g, 10, 0.25);
        assert_eq!(d.len(), 1);
        let b = d[0];
        assert_eq!([b.x, b.y], g.cell_center(5, 3));
        assert_eq!((b.w, b.l, b.theta, b.altitude_bin, b.score), (2.0, 4.0, 0.0, 2, 0.9));
    }

    #[test]
    fn below_threshold_is_empty() {
        let g = BevGrid::anchored_at_zero(4, 4, 0.5).unwrap();
        let mut h = heads(4, 4);
        h.heatmap.data_mut().iter_mut().for_each(|v| *v = 0.2);
        assert!(decode_bev(&h, None, 0, &g, 10, 0.25).is_empty());
        assert!(decode_rv(&h, 4, 10, 0.25).is_empty());
    }

    #[test]
    fn altitude_bin_from_volume_argmax() {
        let g = BevGrid::anchored_at_zero(3, 3, 1.0).unwrap();
        let mut h = heads(3, 3);
        h.heatmap.set(1, 1, 0, 0.8);
        let a = Raster::from_fn(3, 3, 4, |_, _, z| if z == 3 { 0.6 } else { 0.1 });
        assert_eq!(decode_bev(&h, Some(&a), 0, &g, 10, 0.25)[0].altitude_bin, 3);
    }

    #[test]
    fn rv_readout_scales_by_stride() {
        let mut h = heads(4, 6);
        h.heatmap.set(2, 3, 0, 0.7);
        h.offset.set(2, 3, 0, 0.25);
        let d = decode_rv(&h, 4, 10, 0.25);
        assert_eq!((d[0].cu, d[0].cv, d[0].bw, d[0].bh), (13.0, 8.0, 2.0, 4.0));
    }

    #[test]
    fn top_k_keeps_highest() {
        let mut h = heads(1, 7);
        for (c, v) in [(0, 0.3), (2, 0.9), (4, 0.5), (6, 0.7)] {
            h.heatmap.set(0, c, 0, v);
        }
        let p = find_peaks(&h.heatmap, 2, 0.25);
        assert_eq!(p.iter().map(|p| p.col).collect::<Vec<_>>(), vec![2, 6]);
    }
}
