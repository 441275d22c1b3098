//! Reference implementations that share no code with the evaluator.
#![allow(dead_code)]

use std::collections::BTreeMap;

use aerialbev_core::{AltitudeBins, BevBox, BevObject};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inside(b: &BevBox, px: f64, py: f64) -> bool {
    let (s, c) = b.theta.sin_cos();
    let (dx, dy) = (px - b.x, py - b.y);
    (dx * c + dy * s).abs() <= 0.5 * b.l && (-dx * s + dy * c).abs() <= 0.5 * b.w
}

fn corners(b: &BevBox) -> Vec<[f64; 2]> {
    let (s, c) = b.theta.sin_cos();
    [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|(a, n)| {
            let (al, ac) = (a * 0.5 * b.l, n * 0.5 * b.w);
            [b.x + al * c - ac * s, b.y + al * s + ac * c]
        })
        .collect()
}

/// Uniform points over the joint bounding square; IoU = |A∩B| / |A∪B| counts.
pub fn monte_carlo_iou(a: &BevBox, b: &BevBox, n: usize, seed: u64) -> f64 {
    let pts: Vec<[f64; 2]> = corners(a).into_iter().chain(corners(b)).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &pts {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..n {
        let x = rng.random_range(x0..x1);
        let y = rng.random_range(y0..y1);
        let (ia, ib) = (inside(a, x, y), inside(b, x, y));
        both += (ia && ib) as usize;
        either += (ia || ib) as usize;
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

fn seg_intersection(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2]) -> Option<[f64; 2]> {
    let d1 = [q[0] - p[0], q[1] - p[1]];
    let d2 = [s[0] - r[0], s[1] - r[1]];
    let den = d1[0] * d2[1] - d1[1] * d2[0];
    if den.abs() < 1e-15 {
        return None;
    }
    let w = [r[0] - p[0], r[1] - p[1]];
    let t = (w[0] * d2[1] - w[1] * d2[0]) / den;
    let u = (w[0] * d1[1] - w[1] * d1[0]) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| [p[0] + t * d1[0], p[1] + t * d1[1]])
}

/// Intersection polygon from contained corners plus edge crossings,
/// ordered by angle about their centroid.
pub fn vertex_iou(a: &BevBox, b: &BevBox) -> f64 {
    let (ca, cb) = (corners(a), corners(b));
    let grow = |bx: &BevBox| BevBox {
        w: bx.w * (1.0 + 1e-12),
        l: bx.l * (1.0 + 1e-12),
        ..*bx
    };
    let (ga, gb) = (grow(a), grow(b));
    let mut pts: Vec<[f64; 2]> = Vec::new();
    pts.extend(ca.iter().filter(|p| inside(&gb, p[0], p[1])));
    pts.extend(cb.iter().filter(|p| inside(&ga, p[0], p[1])));
    for i in 0..4 {
        for j in 0..4 {
            if let Some(p) = seg_intersection(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]) {
                pts.push(p);
            }
        }
    }
    if pts.len() < 3 {
        return 0.0;
    }
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|p, q| (p[1] - cy).atan2(p[0] - cx).total_cmp(&(q[1] - cy).atan2(q[0] - cx)));
    let mut area = 0.0;
    for i in 0..pts.len() {
        let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
        area += p[0] * q[1] - q[0] * p[1];
    }
    let inter = 0.5 * area.abs();
    if inter < 1e-12 {
        return 0.0;
    }
    inter / (a.w * a.l + b.w * b.l - inter)
}

/// Greedy matching as the lexicographic maximum, over every injective
/// partial assignment, of `(matched, iou)` in descending score order.
pub fn exhaustive_match(dets: &[BevBox], gts: &[BevBox], thresh: f64) -> Vec<(usize, Option<usize>)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let iou: Vec<Vec<f64>> = dets.iter().map(|d| gts.iter().map(|g| vertex_iou(d, g)).collect()).collect();
    let mut best: Option<(Vec<(bool, f64)>, Vec<Option<usize>>)> = None;
    let mut cur = vec![None; order.len()];
    fn rec(
        k: usize,
        order: &[usize],
        dets: &[BevBox],
        gts: &[BevBox],
        iou: &[Vec<f64>],
        thresh: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        best: &mut Option<(Vec<(bool, f64)>, Vec<Option<usize>>)>,
    ) {
        if k == order.len() {
            let key: Vec<(bool, f64)> = cur
                .iter()
                .enumerate()
                .map(|(i, g)| g.map_or((false, 0.0), |g| (true, iou[order[i]][g])))
                .collect();
            let better = match best {
                None => true,
                Some((bk, _)) => {
                    let mut res = false;
                    for (x, y) in key.iter().zip(bk) {
                        if x.0 != y.0 {
                            res = x.0;
                            break;
                        }
                        if x.1 != y.1 {
                            res = x.1 > y.1;
                            break;
                        }
                    }
                    res
                }
            };
            if better {
                *best = Some((key, cur.clone()));
            }
            return;
        }
        let d = order[k];
        cur[k] = None;
        rec(k + 1, order, dets, gts, iou, thresh, used, cur, best);
        for g in 0..gts.len() {
            if !used[g] && gts[g].class_id == dets[d].class_id && iou[d][g] >= thresh {
                used[g] = true;
                cur[k] = Some(g);
                rec(k + 1, order, dets, gts, iou, thresh, used, cur, best);
                used[g] = false;
                cur[k] = None;
            }
        }
    }
    let mut used = vec![false; gts.len()];
    rec(0, &order, dets, gts, &iou, thresh, &mut used, &mut cur, &mut best);
    let (_, assign) = best.expect("at least the empty assignment");
    order.into_iter().zip(assign).collect()
}

/// Precision/recall lists, envelope by explicit suffix maxima, then the
/// area as a sum of rectangles over recall increments.
pub fn brute_force_ap(labels: &[(f64, bool)], num_gts: usize) -> f64 {
    if num_gts == 0 {
        return 0.0;
    }
    let mut l = labels.to_vec();
    l.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut prec = Vec::new();
    let mut rec = Vec::new();
    for k in 0..l.len() {
        let tp = l[..=k].iter().filter(|x| x.1).count();
        prec.push(tp as f64 / (k + 1) as f64);
        rec.push(tp as f64 / num_gts as f64);
    }
    let mut area = 0.0;
    let mut prev_r = 0.0;
    for i in 0..l.len() {
        let env = prec[i..].iter().cloned().fold(0.0, f64::max);
        area += (rec[i] - prev_r) * env;
        prev_r = rec[i];
    }
    area
}

pub struct OracleReport {
    pub ap: Vec<f64>,
    pub ap_mean: f64,
    pub altitude_accuracy: f64,
}

/// Loop-based evaluator over single-class or multi-class data.
pub fn loop_evaluate(
    dets: &BTreeMap<String, Vec<BevBox>>,
    gts: &BTreeMap<String, Vec<BevObject>>,
    bins: &AltitudeBins,
) -> OracleReport {
    let thresholds: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let mut classes: Vec<usize> = gts.values().flatten().map(|g| g.class_id).collect();
    classes.sort();
    classes.dedup();
    let mut ap = Vec::new();
    let (mut hit, mut tp50) = (0usize, 0usize);
    for (ti, &t) in thresholds.iter().enumerate() {
        let mut sum = 0.0;
        for &c in &classes {
            let mut labels = Vec::new();
            let mut n = 0;
            for (tok, gs) in gts {
                let gb: Vec<BevBox> = gs
                    .iter()
                    .filter(|g| g.class_id == c)
                    .map(|g| BevBox {
                        x: g.x,
                        y: g.y,
                        w: g.w,
                        l: g.l,
                        theta: g.theta,
                        altitude_bin: bins.assign(g.altitude_m),
                        class_id: c,
                        score: 1.0,
                    })
                    .collect();
                n += gb.len();
                let ds: Vec<BevBox> = dets
                    .get(tok)
                    .map(|v| v.iter().filter(|d| d.class_id == c).cloned().collect())
                    .unwrap_or_default();
                let mut used = vec![false; gb.len()];
                let mut order: Vec<usize> = (0..ds.len()).collect();
                order.sort_by(|&a, &b| ds[b].score.total_cmp(&ds[a].score));
                for d in order {
                    let mut best = None;
                    let mut best_iou = t;
                    for g in 0..gb.len() {
                        let v = vertex_iou(&ds[d], &gb[g]);
                        if !used[g] && v >= best_iou && best.is_none_or(|_| v > best_iou) {
                            best = Some(g);
                            best_iou = v;
                        }
                    }
                    if let Some(g) = best {
                        used[g] = true;
                        if ti == 0 {
                            tp50 += 1;
                            hit += (gb[g].altitude_bin == ds[d].altitude_bin) as usize;
                        }
                    }
                    labels.push((ds[d].score, best.is_some()));
                }
            }
            sum += brute_force_ap(&labels, n);
        }
        ap.push(if classes.is_empty() { 0.0 } else { sum / classes.len() as f64 });
    }
    OracleReport {
        ap_mean: ap.iter().sum::<f64>() / ap.len() as f64,
        ap,
        altitude_accuracy: if tp50 == 0 { 0.0 } else { hit as f64 / tp50 as f64 },
    }
}

/// Random gt boxes per sample plus jittered, duplicated and spurious
/// detections with distinct scores.
pub fn crafted_set(
    seed: u64,
    samples: usize,
) -> (BTreeMap<String, Vec<BevBox>>, BTreeMap<String, Vec<BevObject>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = AltitudeBins::default();
    let mut dets = BTreeMap::new();
    let mut gts = BTreeMap::new();
    let mut next_score = 0usize;
    let mut score = |rng: &mut ChaCha8Rng| {
        next_score += 1;
        rng.random_range(0.05..0.95) + next_score as f64 * 1e-7
    };
    for s in 0..samples {
        let tok = format!("s{s:03}");
        let ng = rng.random_range(0..6);
        let mut gs = Vec::new();
        for i in 0..ng {
            gs.push(BevObject {
                x: 6.0 * i as f64 + rng.random_range(-1.0..1.0),
                y: rng.random_range(0.0..20.0),
                w: rng.random_range(1.6..2.4),
                l: rng.random_range(3.8..5.2),
                theta: rng.random_range(-3.2..3.2),
                altitude_m: rng.random_range(-1.0..8.0),
                class_id: rng.random_range(0..2),
            });
        }
        let mut ds = Vec::new();
        for g in &gs {
            for _ in 0..rng.random_range(0..3) {
                let j = rng.random_range(0.0..0.6);
                ds.push(BevBox {
                    x: g.x + rng.random_range(-j..=j),
                    y: g.y + rng.random_range(-j..=j),
                    w: g.w * rng.random_range(0.85..1.15),
                    l: g.l * rng.random_range(0.85..1.15),
                    theta: g.theta + rng.random_range(-0.2..0.2),
                    altitude_bin: if rng.random_bool(0.8) { bins.assign(g.altitude_m) } else { rng.random_range(0..9) },
                    class_id: if rng.random_bool(0.9) { g.class_id } else { 1 - g.class_id },
                    score: score(&mut rng),
                });
            }
        }
        for _ in 0..rng.random_range(0..3) {
            ds.push(BevBox {
                x: rng.random_range(-5.0..35.0),
                y: rng.random_range(0.0..20.0),
                w: 2.0,
                l: 4.5,
                theta: rng.random_range(-1.5..1.5),
                altitude_bin: rng.random_range(0..9),
                class_id: rng.random_range(0..2),
                score: score(&mut rng),
            });
        }
        gts.insert(tok.clone(), gs);
        dets.insert(tok, ds);
    }
    (dets, gts)
}
