use std::path::PathBuf;

use aerialbev_core::{ProjectionMatrix, Variant};
use aerialbev_harness::{evaluate_run, infer_image, load_dataset, run_ablation_suite, train, RunConfig};
use aerialbev_synth::{generate_dataset, DatasetConfig};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aerialbev", version, about = "Aerial monocular BEV detection at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat TOML run config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(v) = self.variant {
            c.variant = v;
        }
        if self.deterministic {
            c.deterministic = true;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        train_scenes: usize,
        #[arg(long, default_value_t = 20)]
        test_scenes: usize,
        #[arg(long, default_value_t = 5)]
        samples_per_scene: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a variant on a dataset's train split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint whose matching parameters initialize the model.
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect in one image given its 3×4 projection (12 comma-separated values, row-major).
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 12, allow_hyphen_values = true)]
        projection: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate several variants over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "late-geot,early-geot,inter-geot,inter-geodt,inter-geot-cae,dvdet")]
        variants: Vec<Variant>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Generate {
            seed,
            train_scenes,
            test_scenes,
            samples_per_scene,
            out,
        } => {
            let cfg = DatasetConfig {
                seed,
                train_scenes,
                test_scenes,
                samples_per_scene,
                ..DatasetConfig::default()
            };
            let s = generate_dataset(&cfg, &out).with_context(|| format!("generating into {}", out.display()))?;
            println!(
                "{} scenes, {} samples, {} annotations ({} vehicles dropped as occluded)",
                s.scenes, s.samples, s.annotations, s.dropped_vehicles
            );
        }
        Command::Train { common, data, init_from } => {
            let cfg = common.run_config()?;
            let ds = load_dataset(&data)?;
            let out = train::<f32>(&cfg, &ds, &common.out, init_from.as_deref())?;
            println!(
                "{} steps in {:.0}s, final epoch loss {:.4}; checkpoint {}",
                out.steps,
                out.seconds,
                out.final_epoch_loss.total,
                out.checkpoint.display()
            );
        }
        Command::Eval { checkpoint, data, out } => {
            let ds = load_dataset(&data)?;
            let r = evaluate_run(&checkpoint, &ds, &out)?.report;
            println!(
                "AP {:.4}  AP@50 {:.4}  AP@75 {:.4}  altitude accuracy {:.4}",
                r.ap_mean, r.ap50, r.ap75, r.altitude_accuracy
            );
        }
        Command::Infer {
            checkpoint,
            image,
            projection,
            out,
        } => {
            if projection.len() != 12 {
                bail!("--projection needs 12 values");
            }
            let p = ProjectionMatrix::from_row_major(&projection)?;
            let pred = infer_image(&checkpoint, &image, &p, &out)?;
            println!("{} BEV and {} RV detections", pred.bev.len(), pred.rv.len());
        }
        Command::Ablate {
            common,
            data,
            variants,
            seeds,
        } => {
            let cfg = common.run_config()?;
            let ds = load_dataset(&data)?;
            let table = run_ablation_suite(&cfg, &variants, &seeds, &ds, &common.out)?;
            print!("{}", table.to_markdown());
        }
    }
    Ok(())
}
