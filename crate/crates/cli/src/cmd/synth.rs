use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::ValueEnum;
use faithtrace_core::modelio::{synth_world, HeadKind, SynthConfig};

use crate::manifest::ManifestBuilder;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum HeadArg {
    Linear,
    Mlp,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Classifier feature dimension.
    #[arg(long, default_value_t = 16)]
    dim_in: usize,
    /// Joint embedding dimension.
    #[arg(long, default_value_t = 12)]
    dim_out: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Concepts per sample bank.
    #[arg(long, default_value_t = 20)]
    bank_size: usize,
    /// Aligner training pairs [default: max(4(dim_in+1), 64)].
    #[arg(long)]
    n_train: Option<usize>,
    /// Gaussian noise on aligner targets.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value = "mlp")]
    head: HeadArg,
    /// Hidden width of the MLP head.
    #[arg(long, default_value_t = 16)]
    hidden: usize,
}

pub fn run(a: Args) -> Result<()> {
    let mut cfg = SynthConfig::new(a.seed, a.dim_in, a.dim_out, a.classes, a.samples, a.bank_size);
    if let Some(n) = a.n_train {
        cfg.n_train = n;
    }
    cfg.noise_sigma = a.noise;
    cfg.head = match a.head {
        HeadArg::Linear => HeadKind::Linear,
        HeadArg::Mlp => HeadKind::Mlp { hidden: a.hidden },
    };
    let mut manifest = ManifestBuilder::start("synth", &cfg)?;
    manifest.seed(a.seed);
    let out = synth_world(&cfg)?;
    out.write_to(&a.out)
        .with_context(|| format!("writing world to {}", a.out.display()))?;
    manifest.output("dir", &a.out);
    manifest.result("samples", out.samples.len())?;
    manifest.finish(&a.out.join("manifest.json"))?;
    println!(
        "wrote {} samples, {} training pairs to {}",
        out.samples.len(),
        out.dataset.len(),
        a.out.display()
    );
    Ok(())
}
