//! Train-and-evaluate every variant for several seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use aerialbev_core::Variant;
use aerialbev_eval::EvalReport;
use aerialbev_synth::Split;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::run::{predict_split, write_eval_outputs, REPORT_JSON};
use crate::train::train;
use crate::{HarnessError, Result};

pub const MIN_SEEDS: usize = 3;
pub const RUN_CONFIG_FILE: &str = "run_config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub altitude_accuracy: f64,
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub runs: Vec<AblationRun>,
    pub median_ap: f64,
    pub median_ap50: f64,
    pub median_ap75: f64,
    pub median_altitude_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

impl AblationRow {
    pub fn from_runs(variant: Variant, runs: Vec<AblationRun>) -> Self {
        let col = |f: fn(&AblationRun) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
        Self {
            variant,
            median_ap: col(|r| r.ap),
            median_ap50: col(|r| r.ap50),
            median_ap75: col(|r| r.ap75),
            median_altitude_accuracy: col(|r| r.altitude_accuracy),
            runs,
        }
    }
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| variant | AP | AP@50 | AP@75 | altitude acc | seeds |\n|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {:.4} | {:.4} | {:.4} | {:.4} | {} |",
                r.variant,
                r.median_ap,
                r.median_ap50,
                r.median_ap75,
                r.median_altitude_accuracy,
                r.runs.len()
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,seed,ap,ap50,ap75,altitude_accuracy,train_seconds\n");
        for r in &self.rows {
            for run in &r.runs {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{:.1}",
                    r.variant, run.seed, run.ap, run.ap50, run.ap75, run.altitude_accuracy, run.train_seconds
                );
            }
        }
        s
    }
}

fn summarize(seed: u64, r: &EvalReport, train_seconds: f64) -> AblationRun {
    AblationRun {
        seed,
        ap: r.ap_mean,
        ap50: r.ap50,
        ap75: r.ap75,
        altitude_accuracy: r.altitude_accuracy,
        train_seconds,
    }
}

/// One run, reusing `dir` when it already holds a report for exactly this
/// config.
pub fn train_and_evaluate(cfg: &RunConfig, ds: &Dataset, dir: &Path) -> Result<AblationRun> {
    let cfg_text = cfg.to_toml_string();
    let cfg_path = dir.join(RUN_CONFIG_FILE);
    let report_path = dir.join(REPORT_JSON);
    let timing_path = dir.join("train_seconds.txt");
    if fs::read_to_string(&cfg_path).ok().as_deref() == Some(cfg_text.as_str()) && report_path.is_file() {
        if let Ok(r) = EvalReport::read_json(&report_path) {
            let secs = fs::read_to_string(&timing_path)
                .ok()
                .and_then(|s| s.trim().parse().ok())
                .unwrap_or(f64::NAN);
            log::info!("reusing {}", dir.display());
            return Ok(summarize(cfg.seed, &r, secs));
        }
    }
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let out = train::<f32>(cfg, ds, dir, None)?;
    let preds = predict_split(&out.model, ds, Split::Test, cfg.score_thresh, cfg.max_dets)?;
    let ev = write_eval_outputs(&out.model, &preds, ds, dir, 4)?;
    fs::write(&timing_path, format!("{}\n", out.seconds)).map_err(|e| HarnessError::io(&timing_path, e))?;
    fs::write(&cfg_path, cfg_text).map_err(|e| HarnessError::io(&cfg_path, e))?;
    log::info!(
        "{} seed {}: AP {:.4} AP50 {:.4} AP75 {:.4} acc {:.4} ({:.0}s)",
        cfg.variant,
        cfg.seed,
        ev.report.ap_mean,
        ev.report.ap50,
        ev.report.ap75,
        ev.report.altitude_accuracy,
        out.seconds
    );
    Ok(summarize(cfg.seed, &ev.report, out.seconds))
}

/// Trains every variant for every seed from `base`, evaluates on the test
/// split and reports per-variant medians. Runs live under
/// `out_dir/<variant>/seed-<k>/`; `table.md` and `runs.csv` summarize.
pub fn run_ablation_suite(
    base: &RunConfig,
    variants: &[Variant],
    seeds: &[u64],
    ds: &Dataset,
    out_dir: &Path,
) -> Result<AblationTable> {
    if seeds.len() < MIN_SEEDS {
        return Err(HarnessError::Config(format!(
            "ablation needs at least {MIN_SEEDS} seeds, got {}",
            seeds.len()
        )));
    }
    let mut table = AblationTable::default();
    for &variant in variants {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = RunConfig {
                variant,
                seed,
                ..base.clone()
            };
            runs.push(train_and_evaluate(&cfg, ds, &out_dir.join(variant.name()).join(format!("seed-{seed}")))?);
        }
        table.rows.push(AblationRow::from_runs(variant, runs));
    }
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    for (name, text) in [
        ("table.md", table.to_markdown()),
        ("runs.csv", table.to_csv()),
        ("table.json", serde_json::to_string_pretty(&table)?),
    ] {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
