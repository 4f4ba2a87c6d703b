use std::path::PathBuf;

use anyhow::{Context, Result};
use faithtrace_core::aligner::{mean_squared_error, DEFAULT_RIDGE};
use faithtrace_core::modelio::{read_features, write_aligner};
use faithtrace_core::{train_aligner, AlignmentDataset};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::exit::usage;
use crate::manifest::{beside, ManifestBuilder};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Classifier features, one row per pair (FTM1).
    #[arg(long)]
    features: PathBuf,
    /// Joint-space image embeddings, same row order (FTM1).
    #[arg(long)]
    targets: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    #[arg(long)]
    out: PathBuf,
    /// Fraction of rows held out for evaluation.
    #[arg(long, default_value_t = 0.0)]
    holdout: f64,
    /// Shuffle seed for the holdout split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct Config {
    ridge: f64,
    holdout: f64,
}

/// Shuffled `(train, holdout)` row indices.
fn split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    if fraction <= 0.0 {
        return (idx, Vec::new());
    }
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1));
    let mut hold = idx.split_off(n - n_hold);
    idx.sort_unstable();
    hold.sort_unstable();
    (idx, hold)
}

pub fn run(a: Args) -> Result<()> {
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(usage(format!("--holdout must be in [0, 1), got {}", a.holdout)));
    }
    if !(a.ridge >= 0.0 && a.ridge.is_finite()) {
        return Err(usage(format!("--ridge must be a finite value >= 0, got {}", a.ridge)));
    }
    let mut manifest = ManifestBuilder::start(
        "train-aligner",
        Config {
            ridge: a.ridge,
            holdout: a.holdout,
        },
    )?;
    manifest.input("features", &a.features).input("targets", &a.targets);
    manifest.seed(a.seed);

    let x = read_features(&a.features).with_context(|| format!("reading {}", a.features.display()))?;
    let y = read_features(&a.targets).with_context(|| format!("reading {}", a.targets.display()))?;
    let data = AlignmentDataset::new(x, y).context("features and targets disagree")?;
    if a.holdout > 0.0 && data.len() < 2 {
        return Err(usage("--holdout needs at least 2 rows"));
    }
    let (train_rows, hold_rows) = split(data.len(), a.holdout, a.seed);
    let train = data.select(&train_rows)?;
    let aligner = train_aligner(&train, a.ridge)?;
    let train_mse = mean_squared_error(&aligner, &train)?;
    println!("train_mse={train_mse:e} rows={}", train.len());
    manifest.result("train_mse", train_mse)?;
    manifest.result("train_rows", train.len())?;
    if !hold_rows.is_empty() {
        let hold = data.select(&hold_rows)?;
        let hold_mse = mean_squared_error(&aligner, &hold)?;
        println!("holdout_mse={hold_mse:e} rows={}", hold.len());
        manifest.result("holdout_mse", hold_mse)?;
        manifest.result("holdout_rows", hold.len())?;
    }
    write_aligner(&a.out, &aligner)?;
    manifest.output("aligner", &a.out);
    manifest.finish(&beside(&a.out))?;
    Ok(())
}
