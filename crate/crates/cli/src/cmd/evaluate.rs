use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use faithtrace_core::explainer::explain;
use faithtrace_core::metrics::{aggregate, influence_curve, SampleRecord, CURVE_SUM_DISPLAY_UNIT, DEFAULT_RHOS};
use faithtrace_core::modelio::{read_aligner, read_bank, read_head, read_json, write_json, SampleMeta};
use faithtrace_core::{
    AffineAligner, ConceptBank, CurveConfig, Error, EvaluationReport, ExplainContext, FeatureVector, Head,
    InfluenceCurve, Method,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::cmd::{parse_list, read_row};
use crate::exit::usage;
use crate::manifest::{beside, ManifestBuilder};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Directory of `<sample_id>/{features.ftm,bank.json,meta.json}`, or a
    /// synth output directory containing `samples/`.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    aligner: PathBuf,
    #[arg(long)]
    head: PathBuf,
    /// Comma-separated methods, or `all`.
    #[arg(long, default_value = "all")]
    method: String,
    /// Comma-separated k values; one report section per method and k.
    #[arg(long, default_value = "1,3,5")]
    top_k: String,
    /// `ds` (directional score) and/or `curves`.
    #[arg(long, default_value = "ds,curves")]
    metrics: String,
    /// Comma-separated step sizes relative to ‖z‖.
    #[arg(long)]
    rhos: Option<String>,
    /// Evaluate raw logits instead of margin confidence on curves.
    #[arg(long)]
    raw_logit: bool,
    /// The k whose mean curves go to the CSV.
    #[arg(long, default_value_t = 3)]
    curve_top_k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Base seed for the random baseline; sample i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads [default: logical cores].
    #[arg(long)]
    jobs: Option<usize>,
}

struct Sample {
    id: String,
    class: usize,
    features: FeatureVector,
    bank: ConceptBank,
}

#[derive(Serialize)]
struct Config<'a> {
    methods: Vec<&'static str>,
    top_k: &'a [usize],
    curves: bool,
    rhos: &'a [f64],
    use_margin_confidence: bool,
    curve_top_k: usize,
}

#[derive(Serialize)]
struct TableRow {
    method: String,
    top_k: usize,
    mean: f64,
    nr: f64,
    items: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    insertion_sum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    deletion_sum: Option<f64>,
}

#[derive(Serialize)]
struct Report<'a> {
    samples: usize,
    methods: Vec<&'static str>,
    top_k: &'a [usize],
    rhos: Option<&'a [f64]>,
    use_margin_confidence: bool,
    /// Curve sums are stored raw; divide by this for display.
    curve_sum_display_unit: f64,
    table: Vec<TableRow>,
    sections: Vec<EvaluationReport>,
}

fn sample_root(dir: &Path) -> PathBuf {
    let nested = dir.join("samples");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn load_samples(dir: &Path) -> Result<Vec<Sample>> {
    let root = sample_root(dir);
    let mut dirs: Vec<PathBuf> = fs::read_dir(&root)
        .with_context(|| format!("listing {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("meta.json").is_file())
        .collect();
    dirs.sort();
    let mut samples: Vec<Sample> = dirs
        .par_iter()
        .map(|d| -> Result<Sample> {
            let meta: SampleMeta = read_json(&d.join("meta.json"))?;
            Ok(Sample {
                id: meta.sample_id,
                class: meta.class,
                features: read_row(&d.join("features.ftm"), 0)?,
                bank: read_bank(&d.join("bank.json"))?,
            })
        })
        .collect::<Result<_>>()?;
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    if samples.is_empty() {
        return Err(Error::EmptyInput).with_context(|| format!("no samples under {}", root.display()));
    }
    Ok(samples)
}

/// Zero curve for an item that has no feature-space direction.
fn flat_curve(rhos: &[f64]) -> InfluenceCurve {
    InfluenceCurve {
        rhos: rhos.to_vec(),
        insertion: vec![0.0; rhos.len()],
        deletion: vec![0.0; rhos.len()],
        insertion_sum: 0.0,
        deletion_sum: 0.0,
    }
}

fn score_sample(
    s: &Sample,
    seed: u64,
    aligner: &AffineAligner,
    head: &Head,
    method: Method,
    k: usize,
    curves: Option<&CurveConfig>,
) -> Result<SampleRecord> {
    let ctx = ExplainContext {
        aligner,
        head,
        class: s.class,
        features: &s.features,
    };
    let k = k.min(s.bank.len());
    let explanations = explain(method, &s.bank, &ctx, k, seed).with_context(|| format!("sample {}", s.id))?;
    let mut record = SampleRecord {
        sample_id: s.id.clone(),
        class: s.class,
        texts: explanations.iter().map(|e| e.text.clone()).collect(),
        scores: explanations.iter().map(|e| e.directional_score).collect(),
        curves: Vec::new(),
    };
    if let Some(cfg) = curves {
        for e in &explanations {
            record.curves.push(match &e.direction {
                Some(dir) => influence_curve(head, s.class, &s.features, dir, cfg)?,
                None => flat_curve(&cfg.rhos),
            });
        }
    }
    Ok(record)
}

pub fn run(a: Args) -> Result<()> {
    let methods: Vec<Method> = if a.method.trim() == "all" {
        Method::ALL.to_vec()
    } else {
        parse_list(&a.method)?
    };
    let top_ks: Vec<usize> = parse_list(&a.top_k)?;
    if methods.is_empty() || top_ks.is_empty() || top_ks.contains(&0) {
        return Err(usage("need at least one method and k values >= 1"));
    }
    let metrics: Vec<String> = parse_list(&a.metrics)?;
    for m in &metrics {
        if m != "ds" && m != "curves" {
            return Err(usage(format!("unknown metric {m:?} (expected ds, curves)")));
        }
    }
    let want_curves = metrics.iter().any(|m| m == "curves");
    let rhos = match &a.rhos {
        Some(s) => parse_list(s)?,
        None => DEFAULT_RHOS.to_vec(),
    };
    let curve_cfg = CurveConfig::new(rhos, !a.raw_logit)?;
    if a.csv.is_some() && !want_curves {
        return Err(usage("--csv needs the curves metric"));
    }
    if a.csv.is_some() && !top_ks.contains(&a.curve_top_k) {
        return Err(usage(format!("--curve-top-k {} is not among --top-k", a.curve_top_k)));
    }
    if a.jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }

    let method_names: Vec<&'static str> = methods.iter().map(|m| m.as_str()).collect();
    let mut manifest = ManifestBuilder::start(
        "evaluate",
        Config {
            methods: method_names.clone(),
            top_k: &top_ks,
            curves: want_curves,
            rhos: &curve_cfg.rhos,
            use_margin_confidence: curve_cfg.use_margin_confidence,
            curve_top_k: a.curve_top_k,
        },
    )?;
    manifest
        .input("samples", &a.samples)
        .input("aligner", &a.aligner)
        .input("head", &a.head);
    manifest.seed(a.seed);

    let aligner = read_aligner(&a.aligner)?;
    let head = read_head(&a.head)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().context("building worker pool")?;

    let curves = want_curves.then_some(&curve_cfg);
    let mut sections = Vec::new();
    pool.install(|| -> Result<()> {
        let samples = load_samples(&a.samples)?;
        for &method in &methods {
            for &k in &top_ks {
                let records: Vec<SampleRecord> = samples
                    .par_iter()
                    .enumerate()
                    .map(|(i, s)| score_sample(s, a.seed.wrapping_add(i as u64), &aligner, &head, method, k, curves))
                    .collect::<Result<_>>()?;
                sections.push(aggregate(method.as_str(), k, records)?);
            }
        }
        Ok(())
    })?;

    let table: Vec<TableRow> = sections
        .iter()
        .map(|r| TableRow {
            method: r.method.clone(),
            top_k: r.top_k,
            mean: r.mean_directional_score,
            nr: r.negative_rate,
            items: r.items,
            insertion_sum: r.curve_sums().map(|c| c.0),
            deletion_sum: r.curve_sums().map(|c| c.1),
        })
        .collect();
    for row in &table {
        println!(
            "{:<10} top-{:<2} mean={:+.6} nr={:.3}",
            row.method, row.top_k, row.mean, row.nr
        );
    }
    let samples_count = sections.first().map(|s| s.per_sample.len()).unwrap_or(0);

    if let Some(csv_path) = &a.csv {
        let mut w = csv::Writer::from_path(csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
        w.write_record(["method", "rho", "insertion", "deletion"])?;
        for r in sections.iter().filter(|r| r.top_k == a.curve_top_k) {
            if let Some(c) = &r.curve {
                for i in 0..c.rhos.len() {
                    w.write_record([
                        r.method.clone(),
                        c.rhos[i].to_string(),
                        c.insertion[i].to_string(),
                        c.deletion[i].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        manifest.output("csv", csv_path);
    }

    let report = Report {
        samples: samples_count,
        methods: method_names,
        top_k: &top_ks,
        rhos: want_curves.then_some(curve_cfg.rhos.as_slice()),
        use_margin_confidence: curve_cfg.use_margin_confidence,
        curve_sum_display_unit: CURVE_SUM_DISPLAY_UNIT,
        table,
        sections,
    };
    write_json(&a.out, &report)?;
    manifest.output("report", &a.out);
    manifest.result("samples", samples_count)?;
    manifest.finish(&beside(&a.out))?;
    Ok(())
}
