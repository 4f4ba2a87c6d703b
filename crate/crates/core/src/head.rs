//! Classification heads `g: Z_f -> R^C` with per-class gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{check_dims, dot, FeatureMatrix, FeatureVector};

/// Step used by the finite-difference gradient fallback.
pub const DEFAULT_FD_DELTA: f64 = 1e-5;

/// A differentiable map from feature space to class logits.
///
/// Implementors only need [`logits`](ClassifierHead::logits); the default
/// [`grad`](ClassifierHead::grad) falls back to central differences.
pub trait ClassifierHead: Send + Sync {
    fn num_classes(&self) -> usize;

    fn dim_in(&self) -> usize;

    fn logits(&self, z: &FeatureVector) -> Result<Vec<f64>>;

    fn logit(&self, z: &FeatureVector, class: usize) -> Result<f64> {
        self.check_class(class)?;
        Ok(self.logits(z)?[class])
    }

    /// `∇_z g_c(z)`.
    fn grad(&self, z: &FeatureVector, class: usize) -> Result<FeatureVector> {
        finite_difference_grad(self, z, class, DEFAULT_FD_DELTA)
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class < self.num_classes() {
            Ok(())
        } else {
            Err(Error::InvalidClass {
                class,
                num_classes: self.num_classes(),
            })
        }
    }
}

/// Central-difference gradient of one logit.
pub fn finite_difference_grad<H: ClassifierHead + ?Sized>(
    head: &H,
    z: &FeatureVector,
    class: usize,
    delta: f64,
) -> Result<FeatureVector> {
    head.check_class(class)?;
    check_dims(head.dim_in(), z.dim())?;
    let mut probe = z.as_slice().to_vec();
    let mut grad = Vec::with_capacity(z.dim());
    for i in 0..z.dim() {
        let orig = probe[i];
        probe[i] = orig + delta;
        let plus = head.logit(&FeatureVector::new(probe.clone())?, class)?;
        probe[i] = orig - delta;
        let minus = head.logit(&FeatureVector::new(probe.clone())?, class)?;
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * delta));
    }
    FeatureVector::new(grad)
}

fn default_classes(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class_{i}")).collect()
}

fn check_classes(classes: &[String], n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "a classifier head needs at least 2 classes, got {n}"
        )));
    }
    check_dims(n, classes.len())
}

/// `g(z) = W z + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    weight: FeatureMatrix,
    bias: FeatureVector,
    classes: Vec<String>,
}

impl LinearHead {
    pub fn new(weight: FeatureMatrix, bias: FeatureVector, classes: Option<Vec<String>>) -> Result<Self> {
        check_dims(weight.rows(), bias.dim())?;
        let classes = classes.unwrap_or_else(|| default_classes(weight.rows()));
        check_classes(&classes, weight.rows())?;
        Ok(Self { weight, bias, classes })
    }

    pub fn weight(&self) -> &FeatureMatrix {
        &self.weight
    }

    pub fn bias(&self) -> &FeatureVector {
        &self.bias
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }
}

impl ClassifierHead for LinearHead {
    fn num_classes(&self) -> usize {
        self.weight.rows()
    }

    fn dim_in(&self) -> usize {
        self.weight.cols()
    }

    fn logits(&self, z: &FeatureVector) -> Result<Vec<f64>> {
        let mut out = self.weight.matvec(z.as_slice())?;
        for (o, b) in out.iter_mut().zip(self.bias.as_slice()) {
            *o += b;
        }
        Ok(out)
    }

    fn logit(&self, z: &FeatureVector, class: usize) -> Result<f64> {
        self.check_class(class)?;
        check_dims(self.dim_in(), z.dim())?;
        Ok(dot(self.weight.row(class), z.as_slice()) + self.bias[class])
    }

    fn grad(&self, z: &FeatureVector, class: usize) -> Result<FeatureVector> {
        self.check_class(class)?;
        check_dims(self.dim_in(), z.dim())?;
        Ok(self.weight.row_vector(class))
    }
}

/// One hidden tanh layer: `g(z) = W2 tanh(W1 z + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    w1: FeatureMatrix,
    b1: FeatureVector,
    w2: FeatureMatrix,
    b2: FeatureVector,
    classes: Vec<String>,
}

impl MlpHead {
    pub fn new(
        w1: FeatureMatrix,
        b1: FeatureVector,
        w2: FeatureMatrix,
        b2: FeatureVector,
        classes: Option<Vec<String>>,
    ) -> Result<Self> {
        check_dims(w1.rows(), b1.dim())?;
        check_dims(w1.rows(), w2.cols())?;
        check_dims(w2.rows(), b2.dim())?;
        let classes = classes.unwrap_or_else(|| default_classes(w2.rows()));
        check_classes(&classes, w2.rows())?;
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            classes,
        })
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    fn activations(&self, z: &FeatureVector) -> Result<Vec<f64>> {
        let mut pre = self.w1.matvec(z.as_slice())?;
        for (p, b) in pre.iter_mut().zip(self.b1.as_slice()) {
            *p = (*p + b).tanh();
        }
        Ok(pre)
    }
}

impl ClassifierHead for MlpHead {
    fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    fn dim_in(&self) -> usize {
        self.w1.cols()
    }

    fn logits(&self, z: &FeatureVector) -> Result<Vec<f64>> {
        let a = self.activations(z)?;
        let mut out = self.w2.matvec(&a)?;
        for (o, b) in out.iter_mut().zip(self.b2.as_slice()) {
            *o += b;
        }
        Ok(out)
    }

    fn logit(&self, z: &FeatureVector, class: usize) -> Result<f64> {
        self.check_class(class)?;
        let a = self.activations(z)?;
        Ok(dot(self.w2.row(class), &a) + self.b2[class])
    }

    fn grad(&self, z: &FeatureVector, class: usize) -> Result<FeatureVector> {
        self.check_class(class)?;
        let a = self.activations(z)?;
        // d/dz = W1ᵀ diag(1 - a²) W2[c]ᵀ
        let upstream: Vec<f64> = self
            .w2
            .row(class)
            .iter()
            .zip(&a)
            .map(|(w, ai)| w * (1.0 - ai * ai))
            .collect();
        FeatureVector::new(self.w1.matvec_transposed(&upstream)?)
    }
}

/// The head types that can be stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Linear(LinearHead),
    Mlp(MlpHead),
}

impl Head {
    pub fn classes(&self) -> &[String] {
        match self {
            Head::Linear(h) => h.classes(),
            Head::Mlp(h) => h.classes(),
        }
    }

    /// Resolves a class given either as an index or by name.
    pub fn resolve_class(&self, class_ref: &str) -> Result<usize> {
        if let Ok(idx) = class_ref.parse::<usize>() {
            self.check_class(idx)?;
            return Ok(idx);
        }
        self.classes()
            .iter()
            .position(|c| c == class_ref)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown class {class_ref:?}")))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(&HeadFile::from(self))
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, HeadParseError> {
        let file: HeadFile = serde_json::from_str(s)?;
        Ok(file.try_into()?)
    }
}

impl ClassifierHead for Head {
    fn num_classes(&self) -> usize {
        match self {
            Head::Linear(h) => h.num_classes(),
            Head::Mlp(h) => h.num_classes(),
        }
    }

    fn dim_in(&self) -> usize {
        match self {
            Head::Linear(h) => h.dim_in(),
            Head::Mlp(h) => h.dim_in(),
        }
    }

    fn logits(&self, z: &FeatureVector) -> Result<Vec<f64>> {
        match self {
            Head::Linear(h) => h.logits(z),
            Head::Mlp(h) => h.logits(z),
        }
    }

    fn logit(&self, z: &FeatureVector, class: usize) -> Result<f64> {
        match self {
            Head::Linear(h) => h.logit(z, class),
            Head::Mlp(h) => h.logit(z, class),
        }
    }

    fn grad(&self, z: &FeatureVector, class: usize) -> Result<FeatureVector> {
        match self {
            Head::Linear(h) => h.grad(z, class),
            Head::Mlp(h) => h.grad(z, class),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HeadParseError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

/// Weight matrices may be written flat (row-major) or as nested rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixRepr {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

impl MatrixRepr {
    fn into_matrix(self, rows: usize) -> Result<FeatureMatrix> {
        match self {
            MatrixRepr::Flat(v) => {
                if rows == 0 || v.len() % rows != 0 {
                    return Err(Error::DimMismatch {
                        expected: rows,
                        got: v.len(),
                    });
                }
                let cols = v.len() / rows;
                FeatureMatrix::new(rows, cols, v)
            }
            MatrixRepr::Nested(r) => {
                check_dims(rows, r.len())?;
                let cols = r.first().map_or(0, Vec::len);
                let mut flat = Vec::with_capacity(rows * cols);
                for row in r {
                    check_dims(cols, row.len())?;
                    flat.extend(row);
                }
                FeatureMatrix::new(rows, cols, flat)
            }
        }
    }
}

/// On-disk JSON layout, tagged by `"type"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HeadFile {
    Linear {
        #[serde(rename = "W")]
        weight: MatrixRepr,
        bias: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<Vec<String>>,
    },
    Mlp {
        #[serde(rename = "W1")]
        w1: MatrixRepr,
        b1: Vec<f64>,
        #[serde(rename = "W2")]
        w2: MatrixRepr,
        b2: Vec<f64>,
        activation: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<Vec<String>>,
    },
}

impl From<&Head> for HeadFile {
    fn from(h: &Head) -> Self {
        match h {
            Head::Linear(l) => HeadFile::Linear {
                weight: MatrixRepr::Flat(l.weight.as_slice().to_vec()),
                bias: l.bias.as_slice().to_vec(),
                classes: Some(l.classes.clone()),
            },
            Head::Mlp(m) => HeadFile::Mlp {
                w1: MatrixRepr::Flat(m.w1.as_slice().to_vec()),
                b1: m.b1.as_slice().to_vec(),
                w2: MatrixRepr::Flat(m.w2.as_slice().to_vec()),
                b2: m.b2.as_slice().to_vec(),
                activation: "tanh".to_string(),
                classes: Some(m.classes.clone()),
            },
        }
    }
}

impl TryFrom<HeadFile> for Head {
    type Error = Error;

    fn try_from(f: HeadFile) -> Result<Self> {
        match f {
            HeadFile::Linear { weight, bias, classes } => {
                let weight = weight.into_matrix(bias.len())?;
                Ok(Head::Linear(LinearHead::new(
                    weight,
                    FeatureVector::new(bias)?,
                    classes,
                )?))
            }
            HeadFile::Mlp {
                w1,
                b1,
                w2,
                b2,
                activation,
                classes,
            } => {
                if activation != "tanh" {
                    return Err(Error::InvalidConfig(format!(
                        "unsupported activation {activation:?}; only \"tanh\" is available"
                    )));
                }
                let w1 = w1.into_matrix(b1.len())?;
                let w2 = w2.into_matrix(b2.len())?;
                Ok(Head::Mlp(MlpHead::new(
                    w1,
                    FeatureVector::new(b1)?,
                    w2,
                    FeatureVector::new(b2)?,
                    classes,
                )?))
            }
        }
    }
}
