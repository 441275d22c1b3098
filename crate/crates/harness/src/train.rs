//! Mini-batch training.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aerialbev_core::detector::{render_rv_targets, render_targets, SampleGeometry, BACKBONE_STRIDE};
use aerialbev_core::losses::{detection_loss, SampleTargets};
use aerialbev_core::{Dvdet, LossBreakdown, Parameterized, Raster, Real, SamplingGridCache};
use aerialbev_synth::{color_augment, Split};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::optim::{cosine_lr, Adam};
use crate::{HarnessError, Result};

pub const LOSS_CSV: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "checkpoint-final.bin";
pub const NAN_DUMP: &str = "nan_dump.json";

/// A training sample with everything but the pixels' augmentation fixed.
pub struct PreparedSample<T> {
    pub token: String,
    pub image: Raster<f32>,
    pub geometry: SampleGeometry,
    pub targets: SampleTargets<T>,
}

pub fn prepare_samples<T: Real>(
    model: &Dvdet<T>,
    ds: &Dataset,
    split: Split,
    limit: usize,
    cache: &SamplingGridCache,
) -> Result<Vec<PreparedSample<T>>> {
    let cfg = &model.config;
    let nc = cfg.num_classes;
    let (rr, rc) = cfg.rv_shape();
    let mut out = Vec::new();
    for s in ds.split_samples(split) {
        if limit > 0 && out.len() == limit {
            break;
        }
        let image = ds.load_image(s)?;
        if image.shape() != (cfg.image_rows, cfg.image_cols, 3) {
            return Err(HarnessError::Config(format!(
                "sample {} is {}x{}, model expects {}x{}",
                s.token,
                image.cols(),
                image.rows(),
                cfg.image_cols,
                cfg.image_rows
            )));
        }
        let targets = SampleTargets {
            bev: cfg
                .flags
                .bev_branch
                .then(|| render_targets(&ds.bev_objects(&s.token), &cfg.grid, &cfg.bins, nc)),
            rv: cfg
                .flags
                .rv_branch
                .then(|| render_rv_targets(&ds.rv_boxes(&s.token), rr, rc, BACKBONE_STRIDE, nc)),
        };
        out.push(PreparedSample {
            token: s.token.clone(),
            geometry: model.geometry(&s.projection, cache),
            image,
            targets,
        });
    }
    Ok(out)
}

pub struct TrainOutput<T> {
    pub model: Dvdet<T>,
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub steps: usize,
    /// Mean breakdown over the last epoch.
    pub final_epoch_loss: LossBreakdown,
    pub seconds: f64,
}

#[derive(Serialize)]
struct NanDump<'a> {
    step: usize,
    epoch: usize,
    sample_tokens: Vec<&'a str>,
    losses: Vec<(String, [f64; 6])>,
    non_finite_params: Vec<String>,
    max_abs_param: Vec<(String, f64)>,
}

fn csv_header() -> String {
    let mut h = String::from("step,epoch,lr,grad_norm");
    for c in LossBreakdown::COLUMNS {
        h.push(',');
        h.push_str(c);
    }
    h.push('\n');
    h
}

/// Trains `cfg.variant` on the train split and writes `loss.csv` and
/// checkpoints into `out_dir`.
///
/// All shuffling and augmentation draws come from one generator seeded with
/// `cfg.seed`; in deterministic mode that makes the loss trace a pure
/// function of config and data. `init_from` loads matching parameters
/// from a checkpoint before training (fine-tuning).
pub fn train<T: Real>(
    cfg: &RunConfig,
    ds: &Dataset,
    out_dir: &Path,
    init_from: Option<&Path>,
) -> Result<TrainOutput<T>> {
    cfg.validate()?;
    let start = Instant::now();
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut model_cfg = cfg.model_config()?;
    model_cfg.num_classes = ds.num_classes();
    let mut model: Dvdet<T> = Dvdet::new(model_cfg, cfg.seed)?;
    if let Some(path) = init_from {
        let n = Checkpoint::load(path)?.load_params_into(&mut model, path, true)?;
        log::info!("initialized {n} parameter arrays from {}", path.display());
    }
    let cache = SamplingGridCache::from_env();
    let samples = prepare_samples(&model, ds, Split::Train, cfg.max_train_samples, &cache)?;
    if samples.is_empty() {
        return Err(HarnessError::Config("train split is empty".into()));
    }
    log::info!(
        "training {} on {} samples, {} parameters",
        cfg.variant,
        samples.len(),
        model.num_params()
    );

    let mut rng = if cfg.deterministic {
        ChaCha8Rng::seed_from_u64(cfg.seed)
    } else {
        ChaCha8Rng::seed_from_u64(cfg.seed ^ rand::rng().next_u64())
    };
    let mut opt = Adam::new(&model.named_params(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.grad_clip);
    let weights = cfg.loss_weights();
    let centers = model.config.bins.centers().to_vec();
    let flags = model.config.flags;
    let steps_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;

    let loss_csv = out_dir.join(LOSS_CSV);
    let mut csv = csv_header();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0;
    let mut epoch_sum = [0.0; 6];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        epoch_sum = [0.0; 6];
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let mut sum = [0.0; 6];
            let mut per_sample = Vec::with_capacity(batch.len());
            for &i in batch {
                let s = &samples[i];
                let aug_seed = rng.next_u64();
                let image = if cfg.augment_strength > 0.0 {
                    color_augment(&s.image, aug_seed, cfg.augment_strength)
                } else {
                    s.image.clone()
                };
                let (out, fc) = model.forward(&image.cast::<T>(), &s.geometry)?;
                let (lb, grads) = detection_loss(&out, &s.targets, &flags, &centers, &weights);
                per_sample.push((s.token.clone(), lb.values()));
                if !lb.is_finite() {
                    let dump = out_dir.join(NAN_DUMP);
                    write_nan_dump(&dump, &model, step, epoch, batch, &samples, per_sample)?;
                    return Err(HarnessError::NonFiniteLoss { step, dump });
                }
                for (a, v) in sum.iter_mut().zip(lb.values()) {
                    *a += v;
                }
                model.backward(&fc, &grads);
            }
            let lr = cosine_lr(cfg.learning_rate, cfg.lr_min_factor, step, total_steps);
            let inv = 1.0 / batch.len() as f64;
            let norm = {
                let mut params = model.params_mut();
                opt.update(&mut params, lr, inv)
            };
            if !norm.is_finite() {
                let dump = out_dir.join(NAN_DUMP);
                write_nan_dump(&dump, &model, step, epoch, batch, &samples, per_sample)?;
                return Err(HarnessError::NonFiniteLoss { step, dump });
            }
            let _ = write!(csv, "{step},{epoch},{lr},{norm}");
            for (e, v) in epoch_sum.iter_mut().zip(sum) {
                let _ = write!(csv, ",{}", v * inv);
                *e += v;
            }
            csv.push('\n');
            step += 1;
        }
        let n = samples.len() as f64;
        log::info!(
            "epoch {}/{} total {:.4} ({:.0}s)",
            epoch + 1,
            cfg.epochs,
            epoch_sum[5] / n,
            start.elapsed().as_secs_f64()
        );
        fs::write(&loss_csv, &csv).map_err(|e| HarnessError::io(&loss_csv, e))?;
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs {
            let p = out_dir.join(format!("checkpoint-epoch{:03}.bin", epoch + 1));
            Checkpoint::capture(&model, cfg, Some(&opt), epoch + 1, Some(&rng)).save(&p)?;
        }
    }
    let checkpoint = out_dir.join(FINAL_CHECKPOINT);
    Checkpoint::capture(&model, cfg, Some(&opt), cfg.epochs, Some(&rng)).save(&checkpoint)?;
    let n = samples.len() as f64;
    let final_epoch_loss = LossBreakdown {
        l_altitude: epoch_sum[0] / n,
        l_cls_bev: epoch_sum[1] / n,
        l_box_bev: epoch_sum[2] / n,
        l_cls_rv: epoch_sum[3] / n,
        l_box_rv: epoch_sum[4] / n,
        total: epoch_sum[5] / n,
    };
    Ok(TrainOutput {
        model,
        checkpoint,
        loss_csv,
        steps: step,
        final_epoch_loss,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn write_nan_dump<T: Real>(
    path: &Path,
    model: &Dvdet<T>,
    step: usize,
    epoch: usize,
    batch: &[usize],
    samples: &[PreparedSample<T>],
    losses: Vec<(String, [f64; 6])>,
) -> Result<()> {
    let params = model.named_params();
    let dump = NanDump {
        step,
        epoch,
        sample_tokens: batch.iter().map(|&i| samples[i].token.as_str()).collect(),
        losses,
        non_finite_params: params
            .iter()
            .filter(|p| p.value.iter().chain(&p.grad).any(|v| !v.is_finite()))
            .map(|p| p.name.clone())
            .collect(),
        max_abs_param: params
            .iter()
            .map(|p| (p.name.clone(), p.value.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()))))
            .collect(),
    };
    // Losses may be NaN, which JSON cannot hold; write them as strings.
    let mut v = serde_json::to_value(&dump).unwrap_or(serde_json::Value::Null);
    if let Some(arr) = v.get_mut("losses").and_then(|l| l.as_array_mut()) {
        for (entry, (_, vals)) in arr.iter_mut().zip(&dump.losses) {
            entry[1] = vals.iter().map(|x| serde_json::Value::String(x.to_string())).collect();
        }
    }
    let bytes = serde_json::to_vec_pretty(&v)?;
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}
