//! Text-induced directions in classifier feature space and the influence
//! of moving along them on a class logit.
//!
//! For a unit text embedding `t̂` and aligned feature `h = W z + b`, the
//! direction is the gradient of the joint-space cosine `s = ĥ·t̂` with
//! respect to `z`:
//!
//! ```text
//! v_t = Wᵀ (t̂ − s ĥ) / ‖h‖
//! ```
//!
//! The influence of a concept on class `c` is the directional derivative
//! `∇g_c(z)·v̂_t`.

use crate::aligner::AffineAligner;
use crate::error::{Error, Result};
use crate::head::{ClassifierHead, DEFAULT_FD_DELTA};
use crate::numkernel::{check_dims, normalize, FeatureVector, ZERO_NORM_THRESHOLD};

/// The gradient of the joint-space similarity w.r.t. the classifier feature.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionVector {
    raw: FeatureVector,
    unit: FeatureVector,
    similarity_at_point: f64,
}

impl DirectionVector {
    /// Fails with `DegenerateDirection` when `raw` is numerically zero.
    pub fn from_raw(raw: FeatureVector, similarity_at_point: f64) -> Result<Self> {
        let n = raw.norm();
        if n < ZERO_NORM_THRESHOLD {
            return Err(Error::DegenerateDirection { norm: n });
        }
        let unit = normalize(&raw)?;
        Ok(Self {
            raw,
            unit,
            similarity_at_point,
        })
    }

    pub fn raw(&self) -> &FeatureVector {
        &self.raw
    }

    pub fn unit(&self) -> &FeatureVector {
        &self.unit
    }

    pub fn similarity_at_point(&self) -> f64 {
        self.similarity_at_point
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceConfig {
    pub epsilon: f64,
    pub fd_delta: f64,
}

impl InfluenceConfig {
    pub fn new(epsilon: f64, fd_delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(fd_delta > 0.0 && fd_delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("fd_delta must be > 0, got {fd_delta}")));
        }
        Ok(Self { epsilon, fd_delta })
    }
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            fd_delta: DEFAULT_FD_DELTA,
        }
    }
}

/// Closed-form `∂s/∂z` for an affine aligner.
pub fn direction_closed_form(al: &AffineAligner, z: &FeatureVector, t_hat: &FeatureVector) -> Result<DirectionVector> {
    check_dims(al.dim_out(), t_hat.dim())?;
    let h = al.apply(z)?;
    let r = h.norm();
    if r < ZERO_NORM_THRESHOLD {
        return Err(Error::ZeroNorm { norm: r });
    }
    let h_hat: Vec<f64> = h.as_slice().iter().map(|v| v / r).collect();
    let s = crate::numkernel::dot(&h_hat, t_hat.as_slice()).clamp(-1.0, 1.0);
    let inner: Vec<f64> = t_hat
        .as_slice()
        .iter()
        .zip(&h_hat)
        .map(|(t, hh)| (t - s * hh) / r)
        .collect();
    let raw = FeatureVector::new(al.weight().matvec_transposed(&inner)?)?;
    DirectionVector::from_raw(raw, s)
}

/// Coordinate-wise central difference of `s(h(z), t̂)`; the oracle for
/// [`direction_closed_form`].
pub fn direction_finite_diff(
    al: &AffineAligner,
    z: &FeatureVector,
    t_hat: &FeatureVector,
    delta: f64,
) -> Result<FeatureVector> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidConfig(format!("delta must be > 0, got {delta}")));
    }
    check_dims(al.dim_in(), z.dim())?;
    // Surface ZeroNorm at the base point itself.
    al.similarity(z, t_hat)?;
    let mut probe = z.as_slice().to_vec();
    let mut grad = Vec::with_capacity(z.dim());
    for i in 0..z.dim() {
        let orig = probe[i];
        probe[i] = orig + delta;
        let plus = al.similarity(&FeatureVector::new(probe.clone())?, t_hat)?;
        probe[i] = orig - delta;
        let minus = al.similarity(&FeatureVector::new(probe.clone())?, t_hat)?;
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * delta));
    }
    FeatureVector::new(grad)
}

/// `∇_z g_c(z) · v̂`.
pub fn directional_score<H: ClassifierHead + ?Sized>(
    head: &H,
    class: usize,
    z: &FeatureVector,
    dir: &DirectionVector,
) -> Result<f64> {
    head.check_class(class)?;
    check_dims(head.dim_in(), z.dim())?;
    check_dims(z.dim(), dir.unit.dim())?;
    head.grad(z, class)?.dot(&dir.unit)
}

/// `g_c(z + ε v̂) − g_c(z)`, the finite influence rather than its
/// first-order approximation.
pub fn influence_score<H: ClassifierHead + ?Sized>(
    head: &H,
    class: usize,
    z: &FeatureVector,
    dir: &DirectionVector,
    cfg: &InfluenceConfig,
) -> Result<f64> {
    head.check_class(class)?;
    check_dims(head.dim_in(), z.dim())?;
    check_dims(z.dim(), dir.unit.dim())?;
    let moved = z.add_scaled(cfg.epsilon, &dir.unit)?;
    Ok(head.logit(&moved, class)? - head.logit(z, class)?)
}

/// Relative L2 error between the closed-form direction and its
/// finite-difference oracle.
pub fn direction_check(al: &AffineAligner, z: &FeatureVector, t_hat: &FeatureVector, delta: f64) -> Result<f64> {
    let closed = direction_closed_form(al, z, t_hat)?;
    let numeric = direction_finite_diff(al, z, t_hat, delta)?;
    Ok(closed.raw.add_scaled(-1.0, &numeric)?.norm() / closed.raw.norm())
}
