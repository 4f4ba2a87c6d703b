//! Concept banks and the three rankers: influence-based, text-to-concept
//! cosine retrieval, and uniform random selection.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aligner::AffineAligner;
use crate::error::{Error, Result};
use crate::head::ClassifierHead;
use crate::influence::{direction_closed_form, directional_score, DirectionVector};
use crate::numkernel::{check_dims, cosine_slices, normalize, FeatureVector};

/// Tolerance on `‖embedding‖ = 1` for bank entries.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptSource {
    Llm,
    Vlm,
    Manual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptEntry {
    text: String,
    embedding: FeatureVector,
    source: ConceptSource,
}

impl ConceptEntry {
    /// The embedding must already be unit-norm within
    /// [`UNIT_NORM_TOLERANCE`]; it is renormalized exactly.
    pub fn new(text: impl Into<String>, embedding: FeatureVector, source: ConceptSource) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidConfig("concept text is empty".into()));
        }
        let n = embedding.norm();
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::NotUnitNorm { index: 0, norm: n });
        }
        Ok(Self {
            text,
            embedding: normalize(&embedding)?,
            source,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn embedding(&self) -> &FeatureVector {
        &self.embedding
    }

    pub fn source(&self) -> ConceptSource {
        self.source
    }
}

/// Candidate concepts `B(x, c)` for one sample and class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptBank {
    entries: Vec<ConceptEntry>,
    class_label: String,
    sample_id: Option<String>,
}

impl ConceptBank {
    pub fn new(entries: Vec<ConceptEntry>, class_label: impl Into<String>, sample_id: Option<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.text.to_lowercase()) {
                return Err(Error::DuplicateConcept(e.text.clone()));
            }
        }
        if let Some(first) = entries.first() {
            let dim = first.embedding.dim();
            for e in &entries {
                check_dims(dim, e.embedding.dim())?;
            }
        }
        Ok(Self {
            entries,
            class_label: class_label.into(),
            sample_id,
        })
    }

    pub fn entries(&self) -> &[ConceptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn sample_id(&self) -> Option<&str> {
        self.sample_id.as_deref()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(&BankFile::from(self))
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, BankParseError> {
        let file: BankFile = serde_json::from_str(s)?;
        Ok(file.try_into()?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BankParseError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConceptRecord {
    pub text: String,
    pub source: ConceptSource,
    pub embedding: Vec<f64>,
}

/// On-disk JSON layout of a concept bank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankFile {
    #[serde(rename = "class")]
    pub class_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    pub concepts: Vec<ConceptRecord>,
}

impl From<&ConceptBank> for BankFile {
    fn from(b: &ConceptBank) -> Self {
        Self {
            class_label: b.class_label.clone(),
            sample_id: b.sample_id.clone(),
            concepts: b
                .entries
                .iter()
                .map(|e| ConceptRecord {
                    text: e.text.clone(),
                    source: e.source,
                    embedding: e.embedding.as_slice().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<BankFile> for ConceptBank {
    type Error = Error;

    fn try_from(f: BankFile) -> Result<Self> {
        let entries = f
            .concepts
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                ConceptEntry::new(r.text, FeatureVector::new(r.embedding)?, r.source).map_err(|e| match e {
                    Error::NotUnitNorm { norm, .. } => Error::NotUnitNorm { index, norm },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ConceptBank::new(entries, f.class_label, f.sample_id)
    }
}

/// Explanation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FaithTrace,
    TextToConcept,
    Random,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FaithTrace, Method::TextToConcept, Method::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FaithTrace => "faithtrace",
            Method::TextToConcept => "t2c",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faithtrace" => Ok(Method::FaithTrace),
            "t2c" | "text-to-concept" => Ok(Method::TextToConcept),
            "random" => Ok(Method::Random),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

/// One ranked concept.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub rank: usize,
    pub text: String,
    /// Position in the bank.
    pub bank_index: usize,
    /// The ranking score: directional score, or cosine for text-to-concept.
    pub score: f64,
    /// Directional score along the text-induced direction, 0 when the
    /// direction is degenerate.
    pub directional_score: f64,
    pub direction: Option<DirectionVector>,
}

impl Explanation {
    pub fn is_positive(&self) -> bool {
        self.directional_score > 0.0
    }
}

/// Everything needed to score concepts for one sample.
#[derive(Clone, Copy)]
pub struct ExplainContext<'a, H: ClassifierHead + ?Sized> {
    pub aligner: &'a AffineAligner,
    pub head: &'a H,
    pub class: usize,
    pub features: &'a FeatureVector,
}

/// Per-candidate directional score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub index: usize,
    pub direction: DirectionVector,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BankScores {
    pub scored: Vec<ScoredCandidate>,
    /// Bank indices whose direction was degenerate; these are never ranked.
    pub degenerate: Vec<usize>,
}

/// Directional score of every bank entry, in bank order.
pub fn score_bank<H: ClassifierHead + ?Sized>(bank: &ConceptBank, ctx: &ExplainContext<'_, H>) -> Result<BankScores> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    ctx.head.check_class(ctx.class)?;
    let grad = ctx.head.grad(ctx.features, ctx.class)?;
    let mut out = BankScores::default();
    for (index, entry) in bank.entries.iter().enumerate() {
        match direction_closed_form(ctx.aligner, ctx.features, &entry.embedding) {
            Ok(direction) => {
                let score = grad.dot(direction.unit())?;
                out.scored.push(ScoredCandidate {
                    index,
                    direction,
                    score,
                });
            }
            Err(Error::DegenerateDirection { .. }) => out.degenerate.push(index),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Indices sorted by descending score; ties keep their input order.
fn stable_descending(scores: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v
}

/// Ranks by directional score and keeps the top `k`.
///
/// Candidates with negative scores are still returned when fewer than `k`
/// are positive; check [`Explanation::is_positive`].
pub fn rank_faithtrace<H: ClassifierHead + ?Sized>(
    bank: &ConceptBank,
    ctx: &ExplainContext<'_, H>,
    k: usize,
) -> Result<Vec<Explanation>> {
    check_k(k)?;
    let scores = score_bank(bank, ctx)?;
    if scores.scored.is_empty() {
        return Err(Error::AllDegenerate);
    }
    let mut order = scores.scored;
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, c)| Explanation {
            rank: i + 1,
            text: bank.entries[c.index].text.clone(),
            bank_index: c.index,
            score: c.score,
            directional_score: c.score,
            direction: Some(c.direction),
        })
        .collect())
}

/// Ranks by cosine between the aligned feature and each text embedding.
pub fn rank_text_to_concept(
    bank: &ConceptBank,
    aligner: &AffineAligner,
    z: &FeatureVector,
    k: usize,
) -> Result<Vec<Explanation>> {
    check_k(k)?;
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let h = aligner.apply(z)?;
    let mut scored = Vec::with_capacity(bank.len());
    for (i, e) in bank.entries.iter().enumerate() {
        check_dims(h.dim(), e.embedding.dim())?;
        scored.push((i, cosine_slices(h.as_slice(), e.embedding.as_slice())?));
    }
    Ok(stable_descending(&scored)
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (index, score))| Explanation {
            rank: i + 1,
            text: bank.entries[index].text.clone(),
            bank_index: index,
            score,
            directional_score: f64::NAN,
            direction: None,
        })
        .collect())
}

/// Text-to-concept retrieval, re-scored by directional score so it can be
/// compared with the other methods.
pub fn rank_text_to_concept_scored<H: ClassifierHead + ?Sized>(
    bank: &ConceptBank,
    ctx: &ExplainContext<'_, H>,
    k: usize,
) -> Result<Vec<Explanation>> {
    let mut out = rank_text_to_concept(bank, ctx.aligner, ctx.features, k)?;
    attach_directional_scores(bank, ctx, &mut out)?;
    Ok(out)
}

/// `k` distinct indices from `0..n`, uniform without replacement, in draw order.
pub fn random_selection(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::KTooLarge { k, available: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, n, k).into_vec())
}

/// Uniformly random concepts; the score is each pick's directional score.
pub fn rank_random<H: ClassifierHead + ?Sized>(
    bank: &ConceptBank,
    ctx: &ExplainContext<'_, H>,
    k: usize,
    seed: u64,
) -> Result<Vec<Explanation>> {
    check_k(k)?;
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    let picks = random_selection(bank.len(), k, seed)?;
    let mut out: Vec<Explanation> = picks
        .into_iter()
        .enumerate()
        .map(|(i, index)| Explanation {
            rank: i + 1,
            text: bank.entries[index].text.clone(),
            bank_index: index,
            score: f64::NAN,
            directional_score: f64::NAN,
            direction: None,
        })
        .collect();
    attach_directional_scores(bank, ctx, &mut out)?;
    for e in &mut out {
        e.score = e.directional_score;
    }
    Ok(out)
}

fn attach_directional_scores<H: ClassifierHead + ?Sized>(
    bank: &ConceptBank,
    ctx: &ExplainContext<'_, H>,
    explanations: &mut [Explanation],
) -> Result<()> {
    for e in explanations {
        let t_hat = &bank.entries[e.bank_index].embedding;
        match direction_closed_form(ctx.aligner, ctx.features, t_hat) {
            Ok(dir) => {
                e.directional_score = directional_score(ctx.head, ctx.class, ctx.features, &dir)?;
                e.direction = Some(dir);
            }
            // No feature-space direction: moving the feature cannot raise
            // the similarity, so it carries no influence.
            Err(Error::DegenerateDirection { .. }) => {
                ctx.head.check_class(ctx.class)?;
                e.directional_score = 0.0;
                e.direction = None;
            }
            Err(err) => return Err(err),
        }
    }
    Ok(())
}

/// Dispatches to the ranker for `method`. `seed` is only used by `Random`.
pub fn explain<H: ClassifierHead + ?Sized>(
    method: Method,
    bank: &ConceptBank,
    ctx: &ExplainContext<'_, H>,
    k: usize,
    seed: u64,
) -> Result<Vec<Explanation>> {
    match method {
        Method::FaithTrace => rank_faithtrace(bank, ctx, k),
        Method::TextToConcept => rank_text_to_concept_scored(bank, ctx, k),
        Method::Random => rank_random(bank, ctx, k, seed),
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidConfig("k must be at least 1".into()))
    } else {
        Ok(())
    }
}
