//! All-point interpolated average precision.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Double-double accumulator: keeps the rounding error of every addition.
#[derive(Clone, Copy, Debug, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    /// `p / q` with its residual (exact for integer-valued inputs).
    fn ratio(p: f64, q: f64) -> Self {
        let hi = p / q;
        let lo = (-hi).mul_add(q, p) / q;
        Dd { hi, lo }
    }

    fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let e = (self.hi - (s - bb)) + (o.hi - bb) + self.lo + o.lo;
        let hi = s + e;
        Dd { hi, lo: e - (hi - s) }
    }

    fn div(self, q: f64) -> f64 {
        let q1 = self.hi / q;
        let r = (-q1).mul_add(q, self.hi) + self.lo;
        q1 + r / q
    }
}

fn ranked(labels: &[(f64, bool)]) -> Vec<(f64, bool)> {
    let mut v = labels.to_vec();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v
}

/// Precision/recall after each detection in descending score order.
pub fn pr_curve(labels: &[(f64, bool)], num_gts: usize) -> Vec<PrPoint> {
    let mut tp = 0usize;
    ranked(labels)
        .into_iter()
        .enumerate()
        .map(|(k, (score, is_tp))| {
            tp += is_tp as usize;
            PrPoint {
                score,
                precision: tp as f64 / (k + 1) as f64,
                recall: if num_gts == 0 { 0.0 } else { tp as f64 / num_gts as f64 },
            }
        })
        .collect()
}

/// Area under the right-to-left maximum of precision over recall.
///
/// Recall steps by `1/num_gts` exactly at true positives, so the area is the
/// mean over ground truths of the envelope precision at the true positive
/// that recalled them (zero for unrecalled ones). `(score, is_tp)` pairs are
/// ranked by descending score, stable on ties. No ground truth gives 0.
pub fn average_precision(labels: &[(f64, bool)], num_gts: usize) -> f64 {
    if num_gts == 0 {
        return 0.0;
    }
    let r = ranked(labels);
    // Envelope as exact fractions tp/k, scanned from the right.
    let mut tp_at = Vec::with_capacity(r.len());
    let mut tp = 0usize;
    for &(_, t) in &r {
        tp += t as usize;
        tp_at.push(tp);
    }
    let mut env: Option<(usize, usize)> = None;
    let mut sum = Dd::default();
    for k in (0..r.len()).rev() {
        let cand = (tp_at[k], k + 1);
        // a/b > c/d  ⇔  a·d > c·b
        if env.is_none_or(|(n, d)| cand.0 * d > n * cand.1) {
            env = Some(cand);
        }
        if r[k].1 {
            let (n, d) = env.expect("set above");
            sum = sum.add(Dd::ratio(n as f64, d as f64));
        }
    }
    sum.div(num_gts as f64).min(1.0)
}
