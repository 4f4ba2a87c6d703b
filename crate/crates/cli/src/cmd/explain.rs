use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use faithtrace_core::explainer::explain;
use faithtrace_core::influence::direction_check;
use faithtrace_core::modelio::{read_aligner, read_bank, read_head};
use faithtrace_core::{ClassifierHead, Error, ExplainContext, Method};
use serde::Serialize;

use crate::cmd::read_row;
use crate::exit::usage;
use crate::manifest::{beside, ManifestBuilder};

/// Central-difference step used by `--verify`.
pub const VERIFY_DELTA: f64 = 1e-6;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Classifier features (FTM1).
    #[arg(long)]
    features: PathBuf,
    /// Row of the feature file to explain.
    #[arg(long, default_value_t = 0)]
    row: usize,
    #[arg(long)]
    aligner: PathBuf,
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    /// Class index or name [default: predicted class].
    #[arg(long)]
    class: Option<String>,
    /// faithtrace, t2c or random.
    #[arg(long, default_value = "faithtrace")]
    method: Method,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// Seed for the random baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check every closed-form direction against finite differences.
    #[arg(long)]
    verify: bool,
    /// Write JSON lines here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest path [default: next to --out, else ./explain.manifest.json].
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct Line<'a> {
    rank: usize,
    text: &'a str,
    score: f64,
    method: &'static str,
    class: usize,
    bank_index: usize,
    directional_score: f64,
}

#[derive(Serialize)]
struct Config {
    row: usize,
    class: usize,
    method: &'static str,
    top_k: usize,
    verify: bool,
}

pub fn run(a: Args) -> Result<()> {
    if a.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let z = read_row(&a.features, a.row)?;
    let aligner = read_aligner(&a.aligner)?;
    let head = read_head(&a.head)?;
    let bank = read_bank(&a.bank)?;
    let class = match &a.class {
        Some(class_ref) => head.resolve_class(class_ref)?,
        None => {
            let logits = head.logits(&z)?;
            (0..logits.len()).fold(0, |best, j| if logits[j] > logits[best] { j } else { best })
        }
    };

    let mut manifest = ManifestBuilder::start(
        "explain",
        Config {
            row: a.row,
            class,
            method: a.method.as_str(),
            top_k: a.top_k,
            verify: a.verify,
        },
    )?;
    manifest
        .input("features", &a.features)
        .input("aligner", &a.aligner)
        .input("head", &a.head)
        .input("bank", &a.bank);
    manifest.seed(a.seed);

    let ctx = ExplainContext {
        aligner: &aligner,
        head: &head,
        class,
        features: &z,
    };
    let explanations = explain(a.method, &bank, &ctx, a.top_k, a.seed)?;
    let mut text = String::new();
    for e in &explanations {
        let line = Line {
            rank: e.rank,
            text: &e.text,
            score: e.score,
            method: a.method.as_str(),
            class,
            bank_index: e.bank_index,
            directional_score: e.directional_score,
        };
        text.push_str(&serde_json::to_string(&line)?);
        text.push('\n');
    }

    if a.verify {
        let mut max_err: f64 = 0.0;
        let mut checked = 0usize;
        for entry in bank.entries() {
            match direction_check(&aligner, &z, entry.embedding(), VERIFY_DELTA) {
                Ok(err) => {
                    max_err = max_err.max(err);
                    checked += 1;
                }
                Err(Error::DegenerateDirection { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        eprintln!("verify: checked={checked} max_rel_err={max_err:e}");
        manifest.result("verify_max_rel_err", max_err)?;
        manifest.result("verify_checked", checked)?;
    }

    let manifest_path = match (&a.manifest, &a.out) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) => beside(out),
        (None, None) => PathBuf::from("explain.manifest.json"),
    };
    match &a.out {
        Some(out) => {
            fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
            manifest.output("explanations", out);
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    manifest.finish(&manifest_path)?;
    Ok(())
}
