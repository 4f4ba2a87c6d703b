//! Faithfulness metrics: directional-score aggregation (mean and negative
//! rate) and insertion/deletion influence curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::ClassifierHead;
use crate::influence::DirectionVector;
use crate::numkernel::{check_dims, FeatureVector};

/// Relative step sizes swept by default.
pub const DEFAULT_RHOS: [f64; 6] = [0.01, 0.02, 0.04, 0.08, 0.16, 0.32];

/// Curve sums are conventionally displayed in units of this value.
pub const CURVE_SUM_DISPLAY_UNIT: f64 = 0.1;

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `m_c = g_c − max_{j≠c} g_j` for every class `c`.
pub fn margin<H: ClassifierHead + ?Sized>(head: &H, z: &FeatureVector) -> Result<Vec<f64>> {
    let logits = head.logits(z)?;
    if logits.len() < 2 {
        return Err(Error::InvalidClass {
            class: 1,
            num_classes: logits.len(),
        });
    }
    Ok(margins_from_logits(&logits))
}

fn margins_from_logits(logits: &[f64]) -> Vec<f64> {
    // Best and runner-up give every "max over the others" in one pass.
    let (mut best, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut best_idx = 0;
    for (i, &g) in logits.iter().enumerate() {
        if g > best {
            second = best;
            best = g;
            best_idx = i;
        } else if g > second {
            second = g;
        }
    }
    logits
        .iter()
        .enumerate()
        .map(|(i, &g)| g - if i == best_idx { second } else { best })
        .collect()
}

pub fn margin_for<H: ClassifierHead + ?Sized>(head: &H, z: &FeatureVector, class: usize) -> Result<f64> {
    head.check_class(class)?;
    Ok(margin(head, z)?[class])
}

/// `q_c = σ(m_c)`.
pub fn margin_confidence<H: ClassifierHead + ?Sized>(head: &H, z: &FeatureVector, class: usize) -> Result<f64> {
    Ok(sigmoid(margin_for(head, z, class)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub rhos: Vec<f64>,
    pub use_margin_confidence: bool,
}

impl CurveConfig {
    pub fn new(rhos: Vec<f64>, use_margin_confidence: bool) -> Result<Self> {
        if rhos.is_empty() {
            return Err(Error::InvalidConfig("at least one step size is required".into()));
        }
        if rhos.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidConfig(format!("step sizes must be > 0: {rhos:?}")));
        }
        if rhos.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(format!(
                "step sizes must be strictly increasing: {rhos:?}"
            )));
        }
        Ok(Self {
            rhos,
            use_margin_confidence,
        })
    }
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            rhos: DEFAULT_RHOS.to_vec(),
            use_margin_confidence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceCurve {
    pub rhos: Vec<f64>,
    pub insertion: Vec<f64>,
    pub deletion: Vec<f64>,
    pub insertion_sum: f64,
    pub deletion_sum: f64,
}

impl InfluenceCurve {
    fn from_deltas(rhos: Vec<f64>, insertion: Vec<f64>, deletion: Vec<f64>) -> Self {
        Self {
            insertion_sum: insertion.iter().sum(),
            deletion_sum: deletion.iter().sum(),
            rhos,
            insertion,
            deletion,
        }
    }
}

/// Insertion/deletion deltas at `α_k = ρ_k ‖z‖` along the unit direction.
///
/// The evaluated score is `q_c` with margin confidence on, else the raw
/// logit `g_c`.
pub fn influence_curve<H: ClassifierHead + ?Sized>(
    head: &H,
    class: usize,
    z: &FeatureVector,
    dir: &DirectionVector,
    cfg: &CurveConfig,
) -> Result<InfluenceCurve> {
    head.check_class(class)?;
    check_dims(head.dim_in(), z.dim())?;
    check_dims(z.dim(), dir.unit().dim())?;
    let phi = |p: &FeatureVector| -> Result<f64> {
        if cfg.use_margin_confidence {
            margin_confidence(head, p, class)
        } else {
            head.logit(p, class)
        }
    };
    let base = phi(z)?;
    let norm = z.norm();
    let mut insertion = Vec::with_capacity(cfg.rhos.len());
    let mut deletion = Vec::with_capacity(cfg.rhos.len());
    for rho in &cfg.rhos {
        let alpha = rho * norm;
        insertion.push(phi(&z.add_scaled(alpha, dir.unit())?)? - base);
        deletion.push(base - phi(&z.add_scaled(-alpha, dir.unit())?)?);
    }
    Ok(InfluenceCurve::from_deltas(cfg.rhos.clone(), insertion, deletion))
}

/// Scored explanations for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub class: usize,
    pub texts: Vec<String>,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<InfluenceCurve>,
}

/// Curve averaged over every (sample, text) item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurve {
    pub rhos: Vec<f64>,
    pub insertion: Vec<f64>,
    pub deletion: Vec<f64>,
    pub insertion_sum: f64,
    pub deletion_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub top_k: usize,
    pub mean_directional_score: f64,
    pub negative_rate: f64,
    /// Number of pooled (sample, text) items.
    pub items: usize,
    /// How items are pooled before averaging.
    pub pooling: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<MeanCurve>,
    pub per_sample: Vec<SampleRecord>,
}

impl EvaluationReport {
    /// `(insertion, deletion)` curve sums, if curves were computed.
    pub fn curve_sums(&self) -> Option<(f64, f64)> {
        self.curve.as_ref().map(|c| (c.insertion_sum, c.deletion_sum))
    }
}

/// Pools every (sample, retrieved text) pair: mean directional score,
/// strict negative rate, and the item-averaged influence curve.
pub fn aggregate(method: &str, top_k: usize, samples: Vec<SampleRecord>) -> Result<EvaluationReport> {
    let mut n = 0usize;
    let mut negatives = 0usize;
    let mut total = 0.0;
    for s in &samples {
        check_dims(s.texts.len(), s.scores.len())?;
        for &v in &s.scores {
            n += 1;
            total += v;
            if v < 0.0 {
                negatives += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }

    let curves: Vec<&InfluenceCurve> = samples.iter().flat_map(|s| &s.curves).collect();
    let curve = if curves.is_empty() {
        None
    } else {
        let rhos = curves[0].rhos.clone();
        let mut insertion = vec![0.0; rhos.len()];
        let mut deletion = vec![0.0; rhos.len()];
        for c in &curves {
            if c.rhos != rhos {
                return Err(Error::InvalidConfig("curves use different step sizes".into()));
            }
            for k in 0..rhos.len() {
                insertion[k] += c.insertion[k];
                deletion[k] += c.deletion[k];
            }
        }
        let count = curves.len() as f64;
        insertion.iter_mut().for_each(|v| *v /= count);
        deletion.iter_mut().for_each(|v| *v /= count);
        Some(MeanCurve {
            insertion_sum: insertion.iter().sum(),
            deletion_sum: deletion.iter().sum(),
            rhos,
            insertion,
            deletion,
        })
    };

    Ok(EvaluationReport {
        method: method.to_string(),
        top_k,
        mean_directional_score: total / n as f64,
        negative_rate: negatives as f64 / n as f64,
        items: n,
        pooling: "pair".to_string(),
        curve,
        per_sample: samples,
    })
}
