#![allow(dead_code)]

use aerialbev_core::gradcheck::{central_difference, compare, DEFAULT_STEP};
use aerialbev_core::{AltitudeBins, BevGrid, Param, Parameterized, ProjectionMatrix, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-4;
/// Entries smaller than this are compared in absolute terms; round-off in a
/// loss of order one is about 1e-10 at the default step.
pub const FLOOR: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pinhole camera at `center` with a nadir view tilted by `tilt` radians
/// about the image x axis.
pub fn camera(f: f64, cx: f64, cy: f64, center: [f64; 3], tilt: f64) -> ProjectionMatrix {
    let base = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    let (s, c) = tilt.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]];
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| rx[i][k] * base[k][j]).sum();
        }
    }
    let k = [[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]];
    let mut rows = [[0.0; 4]; 3];
    for i in 0..3 {
        let kr: Vec<f64> = (0..3).map(|j| (0..3).map(|m| k[i][m] * r[m][j]).sum()).collect();
        rows[i][..3].copy_from_slice(&kr);
        rows[i][3] = -(0..3).map(|j| kr[j] * center[j]).sum::<f64>();
    }
    ProjectionMatrix::new(rows).unwrap()
}

/// 32×32 image looking down at an 8×8 grid of 0.5 m cells.
pub fn toy_camera() -> ProjectionMatrix {
    camera(36.0, 15.5, 15.5, [2.0, 1.6, 9.0], 0.12)
}

pub fn toy_grid() -> BevGrid {
    BevGrid::new(8, 8, 0.5, [0.0, 0.0]).unwrap()
}

pub fn toy_bins() -> AltitudeBins {
    AltitudeBins::new(vec![-0.5, 0.0, 0.75, 1.5]).unwrap()
}

pub fn random_raster<R: Rng>(rng: &mut R, rows: usize, cols: usize, ch: usize, lo: f64, hi: f64) -> Raster<f64> {
    Raster::from_fn(rows, cols, ch, |_, _, _| rng.random_range(lo..hi))
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn assert_grad(label: &str, analytic: &[f64], numeric: &[f64]) {
    let c = compare(analytic, numeric, FLOOR);
    assert!(
        c.passes(TOL),
        "{label}: max rel err {:.3e} at {} (analytic {:e}, numeric {:e})",
        c.max_rel_err,
        c.worst_index,
        c.analytic_at_worst,
        c.numeric_at_worst
    );
}

/// Checks the gradient of `loss` with respect to a raster input.
pub fn check_input(label: &str, x: &Raster<f64>, analytic: &Raster<f64>, loss: impl Fn(&Raster<f64>) -> f64) {
    let (r, c, ch) = x.shape();
    let numeric = central_difference(x.data(), DEFAULT_STEP, |v| {
        loss(&Raster::from_vec(r, c, ch, v.to_vec()).unwrap())
    });
    assert_grad(label, analytic.data(), &numeric);
}

pub fn flat_values<M: Parameterized<f64>>(m: &M) -> Vec<f64> {
    m.params().iter().flat_map(|p| p.value.iter().copied()).collect()
}

pub fn flat_grads<M: Parameterized<f64>>(m: &M) -> Vec<f64> {
    m.params().iter().flat_map(|p| p.grad.iter().copied()).collect()
}

pub fn set_values<M: Parameterized<f64>>(m: &mut M, v: &[f64]) {
    let mut k = 0;
    for p in m.params_mut() {
        let n = p.len();
        p.value.copy_from_slice(&v[k..k + n]);
        k += n;
    }
}

/// Runs `backprop` on a fresh copy to collect parameter gradients and
/// compares them with central differences of `loss`.
pub fn check_params<M: Parameterized<f64> + Clone>(
    label: &str,
    model: &M,
    loss: impl Fn(&M) -> f64,
    backprop: impl FnOnce(&mut M),
) {
    let mut m = model.clone();
    m.zero_grad();
    backprop(&mut m);
    let analytic = flat_grads(&m);
    let x = flat_values(model);
    let eval = |v: &[f64]| {
        let mut probe = model.clone();
        set_values(&mut probe, v);
        loss(&probe)
    };
    let mut numeric = central_difference(&x, DEFAULT_STEP, eval);
    // A ReLU or l1 kink closer than the step spoils the central difference;
    // re-probe those entries with a smaller step.
    let mut retried = 0;
    for i in 0..x.len() {
        if rel_err(analytic[i], numeric[i]) <= TOL {
            continue;
        }
        retried += 1;
        let mut v = x.clone();
        v[i] = x[i] + KINK_STEP;
        let fp = eval(&v);
        v[i] = x[i] - KINK_STEP;
        let fm = eval(&v);
        numeric[i] = (fp - fm) / (2.0 * KINK_STEP);
    }
    assert!(retried * 100 <= x.len(), "{label}: {retried} of {} entries needed a second probe", x.len());
    assert_grad(label, &analytic, &numeric);
}

const KINK_STEP: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

pub fn randomize(p: &mut Param<f64>, std: f64, rng: &mut ChaCha8Rng) {
    for v in &mut p.value {
        *v = rng.random_range(-std..std);
    }
}
