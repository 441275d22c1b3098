//! Inference, evaluation runs and the detections JSONL format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use aerialbev_core::detector::decode::argmax;
use aerialbev_core::detector::{
    decode_bev, decode_rv, project_rv_box_to_bev, render_targets, SampleGeometry, TargetMaps, BACKBONE_STRIDE,
};
use aerialbev_core::schema::DetectionRecord;
use aerialbev_core::{BevBox, Dvdet, ProjectionMatrix, Raster, Real, RvBox, SamplingGridCache};
use aerialbev_eval::{cell_altitude_accuracy, evaluate, EvalReport};
use aerialbev_synth::Split;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{read_rgb, Dataset};
use crate::overlay;
use crate::{HarnessError, Result};

pub const DETECTIONS_JSONL: &str = "detections.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const PR_CSV: &str = "pr_curves.csv";
pub const OVERLAY_DIR: &str = "overlays";
/// Test samples that get overlay images.
pub const DEFAULT_OVERLAYS: usize = 8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Predictions {
    pub bev: Vec<BevBox>,
    pub rv: Vec<RvBox>,
    /// Argmax bin of the altitude volume per grid cell (CAE variants).
    pub altitude_cells: Option<Vec<usize>>,
}

/// BEV boxes from the BEV decoder, or for the image-only variant, image
/// boxes back-projected to the ground plane.
pub fn predict<T: Real>(
    model: &Dvdet<T>,
    image: &Raster<f32>,
    geometry: &SampleGeometry,
    p: &ProjectionMatrix,
    score_thresh: f64,
    max_dets: usize,
) -> Result<Predictions> {
    let cfg = &model.config;
    let (out, _) = model.forward(&image.cast::<T>(), geometry)?;
    let rv = out
        .rv
        .as_ref()
        .map(|h| decode_rv(h, BACKBONE_STRIDE, max_dets, score_thresh))
        .unwrap_or_default();
    let bev = if let Some(h) = &out.bev {
        decode_bev(h, out.a_bev.as_ref(), cfg.ground_bin(), &cfg.grid, max_dets, score_thresh)
    } else if cfg.flags.late_projection {
        rv.iter().filter_map(|b| project_rv_box_to_bev(b, p, cfg.ground_bin())).collect()
    } else {
        Vec::new()
    };
    let altitude_cells = out
        .a_bev
        .as_ref()
        .map(|a| (0..a.rows() * a.cols()).map(|i| argmax(a.pixel(i / a.cols(), i % a.cols()))).collect());
    Ok(Predictions {
        bev,
        rv,
        altitude_cells,
    })
}

pub fn detection_records(token: &str, pred: &Predictions) -> Vec<DetectionRecord> {
    let bev = pred.bev.iter().map(|b| DetectionRecord::Bev {
        sample_token: token.to_owned(),
        class_id: b.class_id,
        score: b.score,
        x: b.x,
        y: b.y,
        w: b.w,
        l: b.l,
        theta: b.theta,
        altitude_bin: b.altitude_bin,
    });
    let rv = pred.rv.iter().map(|b| DetectionRecord::Rv {
        sample_token: token.to_owned(),
        class_id: b.class_id,
        score: b.score,
        cu: b.cu,
        cv: b.cv,
        bw: b.bw,
        bh: b.bh,
    });
    bev.chain(rv).collect()
}

pub fn write_jsonl(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(s, "{}", serde_json::to_string(r)?);
    }
    fs::write(path, s).map_err(|e| HarnessError::io(path, e))
}

/// BEV detections per sample from a JSONL file.
pub fn read_bev_detections(path: &Path) -> Result<BTreeMap<String, Vec<BevBox>>> {
    let s = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out: BTreeMap<String, Vec<BevBox>> = BTreeMap::new();
    for line in s.lines().filter(|l| !l.trim().is_empty()) {
        if let DetectionRecord::Bev {
            sample_token,
            class_id,
            score,
            x,
            y,
            w,
            l,
            theta,
            altitude_bin,
        } = serde_json::from_str(line)?
        {
            out.entry(sample_token).or_default().push(BevBox {
                x,
                y,
                w,
                l,
                theta,
                altitude_bin,
                class_id,
                score,
            });
        }
    }
    Ok(out)
}

/// Predictions for every sample of a split, keyed by token.
pub fn predict_split<T: Real>(
    model: &Dvdet<T>,
    ds: &Dataset,
    split: Split,
    score_thresh: f64,
    max_dets: usize,
) -> Result<BTreeMap<String, Predictions>> {
    let cache = SamplingGridCache::from_env();
    let mut out = BTreeMap::new();
    for s in ds.split_samples(split) {
        let image = ds.load_image(s)?;
        let geometry = model.geometry(&s.projection, &cache);
        out.insert(
            s.token.clone(),
            predict(model, &image, &geometry, &s.projection, score_thresh, max_dets)?,
        );
    }
    Ok(out)
}

/// Evaluates BEV predictions against a split's ground truth. The cell-basis
/// altitude accuracy is pooled over the foreground cells of every sample
/// that has an altitude volume.
pub fn evaluate_predictions<T: Real>(
    model: &Dvdet<T>,
    preds: &BTreeMap<String, Predictions>,
    ds: &Dataset,
    split: Split,
) -> Result<EvalReport> {
    let cfg = &model.config;
    let dets: BTreeMap<String, Vec<BevBox>> = preds.iter().map(|(t, p)| (t.clone(), p.bev.clone())).collect();
    let mut report = evaluate(&dets, &ds.ground_truth(split), &cfg.bins)?;
    let (mut pred, mut target, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    for (token, p) in preds {
        if let Some(cells) = &p.altitude_cells {
            let t: TargetMaps<f32> = render_targets(&ds.bev_objects(token), &cfg.grid, &cfg.bins, cfg.num_classes);
            pred.extend_from_slice(cells);
            target.extend(t.altitude_bin);
            mask.extend(t.mask);
        }
    }
    report.cell_altitude_accuracy = cell_altitude_accuracy(&pred, &target, &mask);
    Ok(report)
}

pub struct EvalRunOutput {
    pub report: EvalReport,
    pub detections: PathBuf,
    pub report_json: PathBuf,
    pub overlays: Vec<PathBuf>,
}

/// Writes detections, report and overlays for already computed predictions.
pub fn write_eval_outputs<T: Real>(
    model: &Dvdet<T>,
    preds: &BTreeMap<String, Predictions>,
    ds: &Dataset,
    out_dir: &Path,
    num_overlays: usize,
) -> Result<EvalRunOutput> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let records: Vec<DetectionRecord> = preds.iter().flat_map(|(t, p)| detection_records(t, p)).collect();
    let detections = out_dir.join(DETECTIONS_JSONL);
    write_jsonl(&detections, &records)?;
    let report = evaluate_predictions(model, preds, ds, Split::Test)?;
    let report_json = out_dir.join(REPORT_JSON);
    report.write_json(&report_json)?;
    report.write_csvs(&out_dir.join(REPORT_CSV), &out_dir.join(PR_CSV))?;

    let mut overlays = Vec::new();
    if num_overlays > 0 {
        let dir = out_dir.join(OVERLAY_DIR);
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for (token, pred) in preds.iter().take(num_overlays) {
            let s = ds.sample(token).expect("prediction for a dataset sample");
            let image = ds.load_image(s)?;
            let rv = overlay::rv_overlay(
                &image,
                &s.projection,
                &model.config.bins,
                &ds.rv_boxes(token),
                &pred.rv,
                &pred.bev,
            );
            let bev = overlay::bev_overlay(&image, &s.projection, &model.config.grid, &ds.bev_objects(token), &pred.bev);
            for (img, kind) in [(rv, "rv"), (bev, "bev")] {
                let p = dir.join(format!("{token}-{kind}.png"));
                overlay::save(&img, &p)?;
                overlays.push(p);
            }
        }
    }
    Ok(EvalRunOutput {
        report,
        detections,
        report_json,
        overlays,
    })
}

/// Runs a checkpoint on the test split.
pub fn evaluate_run(checkpoint: &Path, ds: &Dataset, out_dir: &Path) -> Result<EvalRunOutput> {
    let ck = Checkpoint::load(checkpoint)?;
    let model: Dvdet<f32> = ck.restore_model(checkpoint)?;
    let rc: &RunConfig = &ck.run_config;
    let preds = predict_split(&model, ds, Split::Test, rc.score_thresh, rc.max_dets)?;
    write_eval_outputs(&model, &preds, ds, out_dir, DEFAULT_OVERLAYS)
}

/// Single image with its projection: JSONL plus both overlays.
pub fn infer_image(
    checkpoint: &Path,
    image_path: &Path,
    p: &ProjectionMatrix,
    out_dir: &Path,
) -> Result<Predictions> {
    let ck = Checkpoint::load(checkpoint)?;
    let model: Dvdet<f32> = ck.restore_model(checkpoint)?;
    let image = read_rgb(image_path)?;
    let geometry = model.geometry(p, &SamplingGridCache::in_memory());
    let pred = predict(&model, &image, &geometry, p, ck.run_config.score_thresh, ck.run_config.max_dets)?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let token = image_path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_owned();
    write_jsonl(&out_dir.join(DETECTIONS_JSONL), &detection_records(&token, &pred))?;
    overlay::save(
        &overlay::rv_overlay(&image, p, &model.config.bins, &[], &pred.rv, &pred.bev),
        &out_dir.join(format!("{token}-rv.png")),
    )?;
    overlay::save(
        &overlay::bev_overlay(&image, p, &model.config.grid, &[], &pred.bev),
        &out_dir.join(format!("{token}-bev.png")),
    )?;
    Ok(pred)
}
