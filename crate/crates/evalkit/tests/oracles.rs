#[path = "support/mod.rs"]
mod support;

use std::collections::BTreeMap;

use aerialbev_core::{AltitudeBins, BevBox};
use aerialbev_eval::{average_precision, evaluate, match_greedy, rotated_iou, IOU_THRESHOLDS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracle;

fn bx(x: f64, y: f64, w: f64, l: f64, theta: f64, score: f64) -> BevBox {
    BevBox {
        x,
        y,
        w,
        l,
        theta,
        altitude_bin: 0,
        class_id: 0,
        score,
    }
}

fn random_pair(rng: &mut ChaCha8Rng) -> (BevBox, BevBox) {
    let a = bx(0.0, 0.0, rng.random_range(0.5..3.0), rng.random_range(0.5..6.0), rng.random_range(-3.2..3.2), 1.0);
    let b = bx(
        rng.random_range(-2.5..2.5),
        rng.random_range(-2.5..2.5),
        rng.random_range(0.5..3.0),
        rng.random_range(0.5..6.0),
        rng.random_range(-3.2..3.2),
        1.0,
    );
    (a, b)
}

#[test]
fn iou_agrees_with_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..20 {
        let (a, b) = random_pair(&mut rng);
        let mc = oracle::monte_carlo_iou(&a, &b, 1_000_000, i);
        let got = rotated_iou(&a, &b);
        assert!((got - mc).abs() <= 0.005, "pair {i}: {got} vs {mc}");
    }
}

#[test]
fn octagon_agrees_with_monte_carlo() {
    let a = bx(0.0, 0.0, 1.0, 1.0, 0.0, 1.0);
    let b = bx(0.0, 0.0, 1.0, 1.0, std::f64::consts::FRAC_PI_4, 1.0);
    let mc = oracle::monte_carlo_iou(&a, &b, 1_000_000, 5);
    assert!((rotated_iou(&a, &b) - mc).abs() <= 0.005);
}

#[test]
fn iou_agrees_with_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5000 {
        let (a, b) = random_pair(&mut rng);
        let (got, want) = (rotated_iou(&a, &b), oracle::vertex_iou(&a, &b));
        assert!((got - want).abs() < 1e-9, "{a:?} {b:?}: {got} vs {want}");
    }
}

#[test]
fn exact_iou_cases() {
    let a = bx(1.5, -2.0, 1.8, 4.4, 0.7, 1.0);
    assert_eq!(rotated_iou(&a, &a), 1.0);
    let flipped = BevBox {
        theta: a.theta + std::f64::consts::PI,
        ..a
    };
    assert!((rotated_iou(&a, &flipped) - 1.0).abs() < 1e-12);
    let iou = rotated_iou(&bx(0.0, 0.0, 2.0, 2.0, 0.0, 1.0), &bx(1.0, 0.0, 2.0, 2.0, 0.0, 1.0));
    assert!((iou - 1.0 / 3.0).abs() <= 1e-9);
}

/// Three cars in a row, four detections straddling them.
#[test]
fn tangle_matches_exhaustive_assignment() {
    let gts = vec![
        bx(0.0, 0.0, 2.0, 4.0, 0.0, 1.0),
        bx(3.0, 0.0, 2.0, 4.0, 0.0, 1.0),
        bx(6.0, 0.0, 2.0, 4.0, 0.0, 1.0),
    ];
    let dets = vec![
        bx(1.4, 0.0, 2.0, 4.0, 0.0, 0.9),
        bx(0.4, 0.0, 2.0, 4.0, 0.1, 0.8),
        bx(3.6, 0.1, 2.0, 4.0, 0.0, 0.8),
        bx(4.5, 0.0, 2.2, 4.0, 0.0, 0.7),
    ];
    for thresh in [0.1, 0.2, 0.3, 0.5] {
        let got: Vec<(usize, Option<usize>)> = match_greedy(&dets, &gts, thresh).iter().map(|m| (m.det, m.gt)).collect();
        assert_eq!(got, oracle::exhaustive_match(&dets, &gts, thresh), "thresh {thresh}");
    }
}

#[test]
fn random_matching_agrees_with_exhaustive() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let ng = rng.random_range(0..4);
        let nd = rng.random_range(0..5);
        let gts: Vec<BevBox> = (0..ng)
            .map(|i| bx(2.5 * i as f64, 0.0, 2.0, 4.0, rng.random_range(-0.3..0.3), 1.0))
            .collect();
        let dets: Vec<BevBox> = (0..nd)
            .map(|_| {
                bx(
                    rng.random_range(-1.0..6.0),
                    rng.random_range(-0.5..0.5),
                    2.0,
                    4.0,
                    rng.random_range(-0.3..0.3),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let thresh = rng.random_range(0.1..0.7);
        let got: Vec<(usize, Option<usize>)> = match_greedy(&dets, &gts, thresh).iter().map(|m| (m.det, m.gt)).collect();
        assert_eq!(got, oracle::exhaustive_match(&dets, &gts, thresh));
    }
}

#[test]
fn ap_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..2000 {
        let n = rng.random_range(0..30);
        let labels: Vec<(f64, bool)> = (0..n).map(|_| (rng.random_range(0.0..1.0), rng.random_bool(0.5))).collect();
        let tps = labels.iter().filter(|l| l.1).count();
        let gts = tps + rng.random_range(0..5);
        let (got, want) = (average_precision(&labels, gts), oracle::brute_force_ap(&labels, gts));
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn hand_case_is_exactly_five_sixths() {
    assert_eq!(average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2), 5.0 / 6.0);
}

#[test]
fn evaluator_agrees_with_loop_reference_on_crafted_sets() {
    let bins = AltitudeBins::default();
    for seed in 0..50 {
        let (dets, gts) = oracle::crafted_set(seed, 6);
        let got = evaluate(&dets, &gts, &bins).unwrap();
        let want = oracle::loop_evaluate(&dets, &gts, &bins);
        for (r, w) in got.thresholds.iter().zip(&want.ap) {
            assert!((r.ap - w).abs() <= 1e-9, "seed {seed} iou {}: {} vs {w}", r.iou, r.ap);
        }
        assert!((got.ap_mean - want.ap_mean).abs() <= 1e-9);
        assert!((got.altitude_accuracy - want.altitude_accuracy).abs() <= 1e-9);
        assert_eq!(got.thresholds.len(), IOU_THRESHOLDS.len());
    }
}

#[test]
fn empty_everything() {
    let r = evaluate(&BTreeMap::new(), &BTreeMap::new(), &AltitudeBins::default()).unwrap();
    assert!(r.vacuous);
    assert_eq!(r.ap_mean, 0.0);
}
