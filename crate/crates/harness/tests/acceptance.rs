//! Acceptance criteria, one test each. Every test writes a single
//! `PASS`/`FAIL` line to stdout (bypassing output capture) before asserting.
//!
//! The training criteria share one 500/100 synthetic dataset and one set of
//! runs under `target/tmp/acceptance`. The directory is wiped at the start
//! of every invocation unless `AERIALBEV_ACCEPTANCE_REUSE=1`, in which case
//! runs whose config is unchanged are read back instead of retrained.

#![allow(clippy::duplicate_mod)]

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use aerialbev_core::{AltitudeBins, BevBox, Dvdet, Parameterized, SamplingGridCache, Variant};
use aerialbev_eval::{average_precision, evaluate, rotated_iou, EvalReport};
use aerialbev_harness::ablation::{train_and_evaluate, AblationTable};
use aerialbev_harness::run::REPORT_JSON;
use aerialbev_harness::{load_dataset, run_ablation_suite, train, Checkpoint, Dataset, RunConfig};
use aerialbev_synth::export::build_scenes;
use aerialbev_synth::{generate_dataset, render_rv_image, DatasetConfig, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[path = "../../core/tests/gradients.rs"]
mod suite_gradients;
#[path = "../../core/tests/properties.rs"]
mod suite_props_core;
#[path = "../../evalkit/tests/properties.rs"]
mod suite_props_eval;
#[path = "../../synthdata/tests/scenes.rs"]
mod suite_props_scenes;
#[path = "../../evalkit/tests/support/oracle.rs"]
mod oracle;

const SEEDS: [u64; 3] = [0, 1, 2];
const ABLATION_VARIANTS: [Variant; 5] = [
    Variant::LateGeot,
    Variant::InterGeot,
    Variant::Dvdet,
    Variant::ContinuousAltitude,
    Variant::DvdetDualview,
];

fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    let line = format!("{} criterion {n:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
    assert!(pass, "{line}");
}

/// Runs this binary again restricted to tests whose path contains `filter`.
fn run_suite(filter: &str) -> (bool, String) {
    let start = Instant::now();
    let out = Command::new(std::env::current_exe().unwrap())
        .arg(filter)
        .env_remove("AERIALBEV_ACCEPTANCE_REUSE")
        .output()
        .expect("re-running the acceptance binary");
    let secs = start.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let summary = stdout
        .lines()
        .rfind(|l| l.starts_with("test result:"))
        .unwrap_or("no result line")
        .trim_start_matches("test result: ")
        .to_owned();
    if !out.status.success() {
        let failed: Vec<&str> = stdout.lines().filter(|l| l.ends_with("FAILED")).collect();
        eprintln!("{stdout}");
        return (false, format!("{summary}; failing: {}", failed.join(", ")));
    }
    (true, format!("{summary}, wall {secs:.1}s"))
}

fn work_dir() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        let reuse = std::env::var("AERIALBEV_ACCEPTANCE_REUSE").is_ok_and(|v| v == "1");
        if !reuse && d.exists() {
            fs::remove_dir_all(&d).unwrap();
        }
        fs::create_dir_all(&d).unwrap();
        d
    })
}

/// 100 train scenes and 20 test scenes, five views each: 500/100 images.
fn desk_dataset() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| {
        let dir = work_dir().join("dataset");
        let cfg = DatasetConfig::default();
        assert_eq!((cfg.train_scenes * cfg.samples_per_scene, cfg.test_scenes * cfg.samples_per_scene), (500, 100));
        if !dir.join(aerialbev_core::schema::SPLITS_FILE).is_file() {
            generate_dataset(&cfg, &dir).unwrap();
        }
        load_dataset(&dir).unwrap()
    })
}

/// The desk-scale training recipe used by every trained criterion.
fn desk_config(variant: Variant, seed: u64) -> RunConfig {
    RunConfig {
        variant,
        seed,
        ..RunConfig::default()
    }
}

/// Serializes everything that trains into the shared run directories.
static TRAINING: Mutex<Option<&'static AblationTable>> = Mutex::new(None);

fn ablation() -> &'static AblationTable {
    let mut g = TRAINING.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(t) = *g {
        return t;
    }
    let t = run_ablation_suite(
        &desk_config(Variant::Dvdet, 0),
        &ABLATION_VARIANTS,
        &SEEDS,
        desk_dataset(),
        &work_dir().join("ablation"),
    )
    .unwrap();
    let _ = writeln!(std::io::stdout().lock(), "{}", t.to_markdown());
    let t: &'static AblationTable = Box::leak(Box::new(t));
    *g = Some(t);
    t
}

fn median_of(t: &AblationTable, v: Variant, f: fn(&aerialbev_harness::AblationRow) -> f64) -> f64 {
    f(t.row(v).expect("variant in the ablation table"))
}

#[test]
fn criterion_01_gradient_suite() {
    let start = Instant::now();
    let (ok, detail) = run_suite("suite_gradients::");
    let secs = start.elapsed().as_secs_f64();
    verdict(1, "gradient suite", ok && secs < 300.0, &format!("{detail}; limit 300s"));
}

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

#[test]
fn criterion_02_rotated_iou_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let a = bx(0.0, 0.0, rng.random_range(0.5..3.0), rng.random_range(0.5..6.0), rng.random_range(-3.2..3.2), 1.0);
        let b = bx(
            rng.random_range(-2.5..2.5),
            rng.random_range(-2.5..2.5),
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..6.0),
            rng.random_range(-3.2..3.2),
            1.0,
        );
        let mc = oracle::monte_carlo_iou(&a, &b, 1_000_000, i);
        worst = worst.max((rotated_iou(&a, &b) - mc).abs());
    }
    let a = bx(1.5, -2.0, 1.8, 4.4, 0.7, 1.0);
    let flipped = BevBox {
        theta: a.theta + std::f64::consts::PI,
        ..a
    };
    let same = rotated_iou(&a, &a);
    let flip = rotated_iou(&a, &flipped);
    let third = rotated_iou(&bx(0.0, 0.0, 2.0, 2.0, 0.0, 1.0), &bx(1.0, 0.0, 2.0, 2.0, 0.0, 1.0));
    let exact_ok = same == 1.0 && (flip - 1.0).abs() <= 1e-12 && (third - 1.0 / 3.0).abs() <= 1e-9;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "rotated IoU oracle",
        worst <= 0.005 && exact_ok && secs < 120.0,
        &format!(
            "max |clip - MC| over 200 pairs {worst:.5} (tol 0.005); identical {same}, flipped {flip}, offset squares {third:.12}; {secs:.1}s"
        ),
    );
}

#[test]
fn criterion_03_ap_oracle() {
    let bins = AltitudeBins::default();
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let (dets, gts) = oracle::crafted_set(seed, 6);
        let got = evaluate(&dets, &gts, &bins).unwrap();
        let want = oracle::loop_evaluate(&dets, &gts, &bins);
        for (r, w) in got.thresholds.iter().zip(&want.ap) {
            worst = worst.max((r.ap - w).abs());
        }
        worst = worst.max((got.ap_mean - want.ap_mean).abs());
    }
    // TP, FP, TP over two ground truths, both through the curve and the
    // full evaluator.
    let curve = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2);
    let gts = BTreeMap::from([(
        "s".to_owned(),
        vec![bx(0.0, 0.0, 2.0, 4.5, 0.0, 1.0).into_object(), bx(10.0, 0.0, 2.0, 4.5, 0.0, 1.0).into_object()],
    )]);
    let dets = BTreeMap::from([(
        "s".to_owned(),
        vec![bx(0.0, 0.0, 2.0, 4.5, 0.0, 0.9), bx(20.0, 0.0, 2.0, 4.5, 0.0, 0.8), bx(10.0, 0.0, 2.0, 4.5, 0.0, 0.7)],
    )]);
    let full = evaluate(&dets, &gts, &bins).unwrap().ap50;
    verdict(
        3,
        "AP oracle",
        worst <= 1e-9 && curve == 5.0 / 6.0 && full == 5.0 / 6.0,
        &format!("max deviation over 50 crafted sets {worst:.2e} (tol 1e-9); hand case {curve} and {full} vs 5/6"),
    );
}

trait IntoObject {
    fn into_object(self) -> aerialbev_core::BevObject;
}

impl IntoObject for BevBox {
    fn into_object(self) -> aerialbev_core::BevObject {
        aerialbev_core::BevObject {
            x: self.x,
            y: self.y,
            w: self.w,
            l: self.l,
            theta: self.theta,
            altitude_m: 0.0,
            class_id: self.class_id,
        }
    }
}

#[test]
fn criterion_04_residual_identity() {
    let ds = desk_dataset();
    let cache = SamplingGridCache::in_memory();
    let mut checked = 0;
    let mut ok = true;
    for seed in SEEDS {
        let full: Dvdet<f32> = Dvdet::new(desk_config(Variant::Dvdet, seed).model_config().unwrap(), seed).unwrap();
        let plain: Dvdet<f32> = Dvdet::new(desk_config(Variant::InterGeotCae, seed).model_config().unwrap(), seed).unwrap();
        let full64: Dvdet<f64> = Dvdet::new(full.config.clone(), seed).unwrap();
        for s in ds.split_samples(Split::Test).into_iter().take(4) {
            let image = ds.load_image(s).unwrap();
            let g = full.geometry(&s.projection, &cache);
            let (a, _) = full.forward(&image, &g).unwrap();
            let (b, _) = plain.forward(&image, &g).unwrap();
            let (c, _) = full64.forward(&image.cast::<f64>(), &g).unwrap();
            let bits32 = |r: &Option<aerialbev_core::Raster<f32>>| -> Vec<u32> {
                r.as_ref().unwrap().data().iter().map(|v| v.to_bits()).collect()
            };
            let bits64 = |r: &Option<aerialbev_core::Raster<f64>>| -> Vec<u64> {
                r.as_ref().unwrap().data().iter().map(|v| v.to_bits()).collect()
            };
            ok &= bits32(&a.bev_feature) == bits32(&a.geometric);
            ok &= bits32(&a.bev_feature) == bits32(&b.bev_feature);
            ok &= bits64(&c.bev_feature) == bits64(&c.geometric);
            checked += 1;
        }
    }
    verdict(
        4,
        "residual identity",
        ok && checked > 0,
        &format!("{checked} images x (f32, f64): zero-initialized deformable branch leaves the geometric feature bit-identical"),
    );
}

#[test]
fn criterion_05_end_to_end_desk_scale() {
    let ds = desk_dataset();
    let cfg = desk_config(Variant::Dvdet, 0);
    let _guard = TRAINING.lock().unwrap_or_else(|e| e.into_inner());
    let dir = work_dir().join("ablation").join(Variant::Dvdet.name()).join("seed-0");
    let run = train_and_evaluate(&cfg, ds, &dir).unwrap();
    let report = EvalReport::read_json(&dir.join(REPORT_JSON)).unwrap();
    let cell = report.cell_altitude_accuracy.unwrap_or(f64::NAN);
    let pass = run.train_seconds <= 1800.0 && run.ap50 >= 0.5 && run.altitude_accuracy >= 0.85;
    verdict(
        5,
        "end-to-end desk scale",
        pass,
        &format!(
            "dvdet, {} epochs, {:.0}s training (limit 1800s): AP@50 {:.4} (>= 0.50), altitude accuracy {:.4} over {} true positives (>= 0.85); cell-basis {:.4}",
            cfg.epochs,
            run.train_seconds,
            run.ap50,
            run.altitude_accuracy,
            report.altitude_matches,
            cell
        ),
    );
}

#[test]
fn criterion_06_projection_stage_trend() {
    let t = ablation();
    let late = median_of(t, Variant::LateGeot, |r| r.median_ap50);
    let inter50 = median_of(t, Variant::InterGeot, |r| r.median_ap50);
    let inter = median_of(t, Variant::InterGeot, |r| r.median_ap);
    let dvdet = median_of(t, Variant::Dvdet, |r| r.median_ap);
    verdict(
        6,
        "ablation trend (late vs intermediate, dvdet vs inter-geot)",
        late <= 0.5 * inter50 && dvdet >= inter,
        &format!(
            "median AP@50 late-geot {late:.4} <= 0.5 x inter-geot {inter50:.4}; median AP dvdet {dvdet:.4} >= inter-geot {inter:.4}"
        ),
    );
}

#[test]
fn criterion_07_categorical_vs_continuous_altitude() {
    let t = ablation();
    let cat = median_of(t, Variant::Dvdet, |r| r.median_ap);
    let cont = median_of(t, Variant::ContinuousAltitude, |r| r.median_ap);
    verdict(
        7,
        "categorical vs continuous altitude",
        cat >= cont,
        &format!("median AP categorical {cat:.4} >= continuous {cont:.4}"),
    );
}

#[test]
fn criterion_08_dual_view_trend() {
    let t = ablation();
    let dual = median_of(t, Variant::DvdetDualview, |r| r.median_ap);
    let single = median_of(t, Variant::Dvdet, |r| r.median_ap);
    verdict(
        8,
        "dual-view trend",
        dual >= single - 0.02,
        &format!("median BEV AP dual-view {dual:.4} >= BEV-only {single:.4} - 0.02"),
    );
}

fn small_dataset_config() -> DatasetConfig {
    DatasetConfig {
        seed: 9,
        train_scenes: 3,
        test_scenes: 1,
        samples_per_scene: 2,
        ..DatasetConfig::default()
    }
}

fn tiny(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        epochs: 2,
        batch_size: 2,
        channels: 4,
        stem_channels: 4,
        extra_blocks: 1,
        head_trunk: 1,
        ..RunConfig::default()
    }
}

#[test]
fn criterion_09_determinism_and_round_trips() {
    let root = work_dir().join("determinism");
    let data = root.join("dataset");
    let cfg = small_dataset_config();
    generate_dataset(&cfg, &data).unwrap();
    let ds = load_dataset(&data).unwrap();

    // Fixed seed, two runs, identical loss traces.
    let traces: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|k| fs::read(train::<f32>(&tiny(4), &ds, &root.join(k), None).unwrap().loss_csv).unwrap())
        .collect();
    let loss_ok = traces[0] == traces[1] && !traces[0].is_empty();

    // Export then load: every stored number equals the generator's own.
    let (mut fields, mut export_ok) = (0usize, true);
    for s in build_scenes(&cfg).unwrap() {
        for (j, cam) in s.cameras.iter().enumerate() {
            let token = format!("scene-{:016x}-{j:02}", s.spec.seed);
            let rec = ds.sample(&token).unwrap();
            let p = cam.projection().unwrap();
            export_ok &= rec.projection.rows().iter().flatten().map(|v| v.to_bits()).eq(p.rows().iter().flatten().map(|v| v.to_bits()));
            let rendered = render_rv_image(&s.spec, &p, cam.image_width, cam.image_height).unwrap();
            let anns = ds.annotations_for(&token);
            export_ok &= anns.len() == rendered.vehicles.len();
            for (a, rv) in anns.iter().zip(&rendered.vehicles) {
                let v = &s.spec.vehicles[rv.index];
                let stored = [a.bev.x, a.bev.y, a.bev.w, a.bev.l, a.bev.theta, a.bev.altitude_m, a.rv.cu, a.rv.cv, a.rv.bw, a.rv.bh];
                let truth = [v.x, v.y, v.w, v.l, v.theta, v.altitude_m, rv.rv.cu, rv.rv.cv, rv.rv.bw, rv.rv.bh];
                export_ok &= stored.iter().zip(truth).all(|(x, y)| x.to_bits() == y.to_bits()) && a.class_id == v.class_id;
                fields += stored.len();
            }
        }
    }

    // Save, load, forward: same bits.
    let out = train::<f32>(&RunConfig { variant: Variant::DvdetDualview, ..tiny(5) }, &ds, &root.join("ck"), None).unwrap();
    let restored: Dvdet<f32> = Checkpoint::load(&out.checkpoint).unwrap().restore_model(&out.checkpoint).unwrap();
    let param_bits = |m: &Dvdet<f32>| -> Vec<u32> { m.params().iter().flat_map(|p| p.value.iter().map(|v| v.to_bits())).collect() };
    let mut ck_ok = param_bits(&restored) == param_bits(&out.model);
    let cache = SamplingGridCache::in_memory();
    for s in ds.split_samples(Split::Test) {
        let image = ds.load_image(s).unwrap();
        let g = out.model.geometry(&s.projection, &cache);
        let (a, _) = out.model.forward(&image, &g).unwrap();
        let (b, _) = restored.forward(&image, &g).unwrap();
        ck_ok &= a.bev == b.bev && a.rv == b.rv && a.a_bev == b.a_bev;
    }
    verdict(
        9,
        "determinism and round-trips",
        loss_ok && export_ok && fields > 0 && ck_ok,
        &format!(
            "loss CSVs identical: {loss_ok}; {fields} exported annotation values bit-exact: {export_ok}; checkpoint forward bit-identical: {ck_ok}"
        ),
    );
}

#[test]
fn criterion_10_property_suites() {
    let start = Instant::now();
    let (ok, detail) = run_suite("suite_props_");
    let secs = start.elapsed().as_secs_f64();
    verdict(
        10,
        "property suites",
        ok && secs < 600.0,
        &format!("{detail}; 1000 cases per property; limit 600s"),
    );
}
