use aerialbev_core::BevBox;
use aerialbev_eval::{average_precision, evaluate, rotated_iou};
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = BevBox> {
    (-5.0..5.0f64, -5.0..5.0f64, 0.3..4.0f64, 0.3..6.0f64, -4.0..4.0f64).prop_map(|(x, y, w, l, theta)| BevBox {
        x,
        y,
        w,
        l,
        theta,
        altitude_bin: 0,
        class_id: 0,
        score: 1.0,
    })
}

fn rigid(b: &BevBox, tx: f64, ty: f64, phi: f64) -> BevBox {
    let (s, c) = phi.sin_cos();
    BevBox {
        x: c * b.x - s * b.y + tx,
        y: s * b.x + c * b.y + ty,
        theta: b.theta + phi,
        ..*b
    }
}

fn aligned_iou(a: &BevBox, b: &BevBox) -> f64 {
    let ix = ((a.x + a.l / 2.0).min(b.x + b.l / 2.0) - (a.x - a.l / 2.0).max(b.x - b.l / 2.0)).max(0.0);
    let iy = ((a.y + a.w / 2.0).min(b.y + b.w / 2.0) - (a.y - a.w / 2.0).max(b.y - b.w / 2.0)).max(0.0);
    let i = ix * iy;
    i / (a.w * a.l + b.w * b.l - i)
}

fn arb_labels() -> impl Strategy<Value = (Vec<(f64, bool)>, usize)> {
    (prop::collection::vec((0.0..1.0f64, any::<bool>()), 0..25), 0..5usize).prop_map(|(l, extra)| {
        let tps = l.iter().filter(|x| x.1).count();
        (l, tps + extra)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let (ab, ba) = (rotated_iou(&a, &b), rotated_iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn iou_rigid_invariant(a in arb_box(), b in arb_box(), tx in -50.0..50.0f64, ty in -50.0..50.0f64, phi in -4.0..4.0f64) {
        let before = rotated_iou(&a, &b);
        let after = rotated_iou(&rigid(&a, tx, ty, phi), &rigid(&b, tx, ty, phi));
        prop_assert!((before - after).abs() < 1e-9, "{} vs {}", before, after);
    }

    #[test]
    fn iou_half_turn_is_identity(a in arb_box(), sign in prop::bool::ANY) {
        let f = BevBox { theta: a.theta + if sign { std::f64::consts::PI } else { -std::f64::consts::PI }, ..a };
        prop_assert!((rotated_iou(&a, &f) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_matches_axis_aligned(mut a in arb_box(), mut b in arb_box()) {
        a.theta = 0.0;
        b.theta = 0.0;
        prop_assert!((rotated_iou(&a, &b) - aligned_iou(&a, &b)).abs() <= 1e-9);
    }

    #[test]
    fn ap_invariant_to_monotone_rescale((labels, n) in arb_labels(), k in 0.1..10.0f64, c in -3.0..3.0f64) {
        let warped: Vec<(f64, bool)> = labels.iter().map(|&(s, t)| ((k * s + c).exp(), t)).collect();
        prop_assert_eq!(average_precision(&labels, n), average_precision(&warped, n));
    }

    #[test]
    fn appending_lowest_tp_or_fp((labels, n) in arb_labels()) {
        let base = average_precision(&labels, n + 1);
        let mut with_tp = labels.clone();
        with_tp.push((-1.0, true));
        prop_assert!(average_precision(&with_tp, n + 1) >= base);
        let mut with_fp = labels.clone();
        with_fp.push((-1.0, false));
        prop_assert!(average_precision(&with_fp, n + 1) <= base);
    }

    #[test]
    fn ap_in_unit_interval((labels, n) in arb_labels()) {
        let ap = average_precision(&labels, n);
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn ap75_never_exceeds_ap50(seed in 0u64..1_000_000) {
        let (dets, gts) = support::oracle::crafted_set(seed, 3);
        let r = evaluate(&dets, &gts, &aerialbev_core::AltitudeBins::default()).unwrap();
        prop_assert!(r.ap75 <= r.ap50);
        for v in [r.ap_mean, r.ap50, r.ap75, r.altitude_accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[path = "support/mod.rs"]
mod support;
