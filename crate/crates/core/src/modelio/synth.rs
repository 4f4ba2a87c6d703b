//! Desk-scale synthetic worlds: a ground-truth affine aligner, a classifier
//! head, an alignment dataset, and per-sample concept banks with one
//! planted concept whose direction is the best achievable for the
//! sample's class.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ftm, write_aligner, write_bank, write_head, write_json, IoError};
use crate::aligner::{AffineAligner, AlignmentDataset};
use crate::error::{Error, Result};
use crate::explainer::{ConceptBank, ConceptEntry, ConceptSource};
use crate::head::{ClassifierHead, Head, LinearHead, MlpHead};
use crate::influence::direction_closed_form;
use crate::numkernel::{dot, normalize, FeatureMatrix, FeatureVector};

/// Name and version of the fixture generator. Bump when the draw order changes.
pub const SYNTH_GENERATOR: &str = "chacha8-v1";

const ADJECTIVES: [&str; 16] = [
    "orange", "striped", "long", "pointed", "glossy", "spotted", "curved", "dark", "pale", "fuzzy", "bright", "narrow",
    "round", "jagged", "smooth", "speckled",
];
const NOUNS: [&str; 16] = [
    "plumage", "tail", "beak", "ears", "fur", "scales", "fins", "wings", "snout", "branches", "water", "grass", "sand",
    "foliage", "rocks", "sky",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadKind {
    Linear,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub dim_in: usize,
    pub dim_out: usize,
    pub num_classes: usize,
    pub n_samples: usize,
    pub bank_size: usize,
    pub n_train: usize,
    pub noise_sigma: f64,
    pub head: HeadKind,
}

impl SynthConfig {
    pub fn new(
        seed: u64,
        dim_in: usize,
        dim_out: usize,
        num_classes: usize,
        n_samples: usize,
        bank_size: usize,
    ) -> Self {
        Self {
            seed,
            dim_in,
            dim_out,
            num_classes,
            n_samples,
            bank_size,
            n_train: (4 * (dim_in + 1)).max(64),
            noise_sigma: 0.0,
            head: HeadKind::Mlp { hidden: 16 },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim_in < 2 || self.dim_out < 2 {
            return Err(Error::InvalidConfig("feature and embedding dims must be >= 2".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("need at least 2 classes".into()));
        }
        if self.bank_size < 1 || self.n_train < 1 {
            return Err(Error::InvalidConfig("bank size and training size must be >= 1".into()));
        }
        if let HeadKind::Mlp { hidden } = self.head {
            if hidden < 1 {
                return Err(Error::InvalidConfig("hidden width must be >= 1".into()));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: SynthConfig,
    pub true_aligner: AffineAligner,
    pub head: Head,
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub id: String,
    pub class: usize,
    pub features: FeatureVector,
    pub bank: ConceptBank,
    pub planted_index: usize,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub world: SyntheticWorld,
    pub dataset: AlignmentDataset,
    pub samples: Vec<SynthSample>,
}

/// Contents of `<sample>/meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: String,
    pub class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_index: Option<usize>,
}

#[derive(Serialize)]
struct WorldFile<'a> {
    generator: &'static str,
    #[serde(flatten)]
    config: &'a SynthConfig,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Rounds through `f32` so in-memory values match what the files hold.
fn quantize(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| f64::from(x as f32)).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, m: usize) -> Result<FeatureVector> {
    loop {
        let v = FeatureVector::new(gaussian(rng, m, 1.0))?;
        if v.norm() > 1e-6 {
            return normalize(&v);
        }
    }
}

pub fn synth_world(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let (d, m, c) = (cfg.dim_in, cfg.dim_out, cfg.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let true_aligner = AffineAligner::new(
        FeatureMatrix::new(m, d, gaussian(&mut rng, m * d, 1.0 / (d as f64).sqrt()))?,
        FeatureVector::new(gaussian(&mut rng, m, 0.5))?,
    )?;
    let classes: Vec<String> = (0..c).map(|i| format!("class_{i}")).collect();
    let head = match cfg.head {
        HeadKind::Linear => Head::Linear(LinearHead::new(
            FeatureMatrix::new(c, d, gaussian(&mut rng, c * d, 2.0 / (d as f64).sqrt()))?,
            FeatureVector::new(gaussian(&mut rng, c, 0.1))?,
            Some(classes.clone()),
        )?),
        HeadKind::Mlp { hidden } => Head::Mlp(MlpHead::new(
            FeatureMatrix::new(hidden, d, gaussian(&mut rng, hidden * d, 1.0 / (d as f64).sqrt()))?,
            FeatureVector::new(gaussian(&mut rng, hidden, 0.1))?,
            FeatureMatrix::new(c, hidden, gaussian(&mut rng, c * hidden, 3.0 / (hidden as f64).sqrt()))?,
            FeatureVector::new(gaussian(&mut rng, c, 0.1))?,
            Some(classes.clone()),
        )?),
    };

    let train_z = quantize(gaussian(&mut rng, cfg.n_train * d, 1.0));
    let mut train_t = Vec::with_capacity(cfg.n_train * m);
    for r in 0..cfg.n_train {
        let z = FeatureVector::new(train_z[r * d..(r + 1) * d].to_vec())?;
        let h = true_aligner.apply(&z)?;
        for &v in h.as_slice() {
            let noise = if cfg.noise_sigma > 0.0 {
                cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            train_t.push(v + noise);
        }
    }
    let dataset = AlignmentDataset::new(
        FeatureMatrix::new(cfg.n_train, d, train_z)?,
        FeatureMatrix::new(cfg.n_train, m, quantize(train_t))?,
    )?;

    let mut samples = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let class = i % c;
        let features = draw_sample(&mut rng, &head, d, class)?;
        let planted_index = rng.random_range(0..cfg.bank_size);
        let texts = concept_texts(&mut rng, cfg.bank_size);
        let mut entries = Vec::with_capacity(cfg.bank_size);
        for (j, text) in texts.into_iter().enumerate() {
            let embedding = if j == planted_index {
                planted_embedding(&true_aligner, &head, &features, class)?
            } else {
                random_unit(&mut rng, m)?
            };
            let source = if j % 4 == 3 {
                ConceptSource::Vlm
            } else {
                ConceptSource::Llm
            };
            entries.push(ConceptEntry::new(text, embedding, source)?);
        }
        let id = format!("s{i:04}");
        let bank = ConceptBank::new(entries, classes[class].clone(), Some(id.clone()))?;
        samples.push(SynthSample {
            id,
            class,
            features,
            bank,
            planted_index,
        });
    }

    Ok(SynthOutput {
        world: SyntheticWorld {
            config: cfg.clone(),
            true_aligner,
            head,
        },
        dataset,
        samples,
    })
}

/// Draws a feature predicted as `class`, giving up after a bounded number
/// of tries and keeping the last draw.
fn draw_sample(rng: &mut ChaCha8Rng, head: &Head, d: usize, class: usize) -> Result<FeatureVector> {
    let mut z = FeatureVector::new(quantize(gaussian(rng, d, 1.0)))?;
    for _ in 0..256 {
        let logits = head.logits(&z)?;
        let argmax = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if argmax == class && z.norm() > 1e-3 {
            break;
        }
        z = FeatureVector::new(quantize(gaussian(rng, d, 1.0)))?;
    }
    Ok(z)
}

fn concept_texts(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let vocab = ADJECTIVES.len() * NOUNS.len();
    if n > vocab {
        return (0..n).map(|i| format!("concept {i}")).collect();
    }
    rand::seq::index::sample(rng, vocab, n)
        .into_iter()
        .map(|k| format!("{} {}", ADJECTIVES[k / NOUNS.len()], NOUNS[k % NOUNS.len()]))
        .collect()
}

/// Text embedding whose induced direction best aligns with `∇g_c(z)`.
///
/// The direction is `Wᵀ t̂⊥ / ‖h‖` where `t̂⊥` is the part of `t̂`
/// orthogonal to `ĥ`, so the best `t̂⊥` solves
/// `min_p ‖Wᵀ P p − ∇g_c‖` with `P = I − ĥĥᵀ`.
fn planted_embedding(al: &AffineAligner, head: &Head, z: &FeatureVector, class: usize) -> Result<FeatureVector> {
    let (m, d) = (al.dim_out(), al.dim_in());
    let h = al.apply(z)?;
    let h_hat = normalize(&h)?;
    let grad = head.grad(z, class)?;

    let proj = DMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - h_hat[i] * h_hat[j]
    });
    let w = DMatrix::from_row_slice(m, d, al.weight().as_slice());
    let b = w.transpose() * &proj;
    let g = DVector::from_row_slice(grad.as_slice());

    let mut candidates = Vec::new();
    if let Ok(y) = b.clone().svd(true, true).solve(&g, 1e-12) {
        candidates.push((&proj * y).iter().copied().collect::<Vec<f64>>());
    }
    // Fallback: the projection of W g, which always scores >= 0.
    candidates.push((&proj * (&w * &g)).iter().copied().collect());

    for p in candidates {
        let pn = crate::numkernel::norm(&p);
        if pn.is_nan() || pn <= 1e-9 {
            continue;
        }
        let t: Vec<f64> = p
            .iter()
            .zip(h_hat.as_slice())
            .map(|(pi, hi)| pi / pn + 0.3 * hi)
            .collect();
        let t_hat = normalize(&FeatureVector::new(t)?)?;
        if let Ok(dir) = direction_closed_form(al, z, &t_hat) {
            if dot(grad.as_slice(), dir.unit().as_slice()) > 0.0 {
                return Ok(t_hat);
            }
        }
    }
    Err(Error::InvalidConfig(
        "could not plant a positive concept: class gradient is orthogonal to every text direction".into(),
    ))
}

impl SynthOutput {
    /// Writes the world under `dir`:
    ///
    /// ```text
    /// world.json  true_aligner.json  head.json
    /// train_features.ftm  train_targets.ftm
    /// samples/<id>/{features.ftm, bank.json, meta.json}
    /// ```
    pub fn write_to(&self, dir: &Path) -> std::result::Result<(), IoError> {
        write_json(
            &dir.join("world.json"),
            &WorldFile {
                generator: SYNTH_GENERATOR,
                config: &self.world.config,
            },
        )?;
        write_aligner(&dir.join("true_aligner.json"), &self.world.true_aligner)?;
        write_head(&dir.join("head.json"), &self.world.head)?;
        ftm::write_features(&dir.join("train_features.ftm"), self.dataset.features())?;
        ftm::write_features(&dir.join("train_targets.ftm"), self.dataset.targets())?;
        for s in &self.samples {
            let sdir = dir.join("samples").join(&s.id);
            ftm::write_features(
                &sdir.join("features.ftm"),
                &FeatureMatrix::from_rows(std::slice::from_ref(&s.features))?,
            )?;
            write_bank(&sdir.join("bank.json"), &s.bank)?;
            write_json(
                &sdir.join("meta.json"),
                &SampleMeta {
                    sample_id: s.id.clone(),
                    class: s.class,
                    class_name: Some(s.bank.class_label().to_string()),
                    planted_index: Some(s.planted_index),
                },
            )?;
        }
        Ok(())
    }
}
