//! Textual explanations for image classifiers ranked by directional
//! derivatives in the classifier's feature space, plus the faithfulness
//! metrics used to compare explanation methods.
//!
//! The pipeline, given precomputed features and embeddings:
//!
//! 1. [`aligner::train_aligner`] fits `h(z) = W z + b` into the joint
//!    vision-language space.
//! 2. [`influence::direction_closed_form`] turns each concept text into a
//!    direction in feature space.
//! 3. [`explainer::rank_faithtrace`] ranks concepts by the directional
//!    derivative of the class logit along that direction.
//! 4. [`metrics`] aggregates directional scores and influence curves.

pub mod aligner;
pub mod error;
pub mod explainer;
pub mod head;
pub mod influence;
pub mod metrics;
pub mod modelio;
pub mod numkernel;

pub use aligner::{train_aligner, AffineAligner, AlignmentDataset};
pub use error::{Error, Result};
pub use explainer::{ConceptBank, ConceptEntry, ConceptSource, ExplainContext, Explanation, Method};
pub use head::{ClassifierHead, Head, LinearHead, MlpHead};
pub use influence::{DirectionVector, InfluenceConfig};
pub use metrics::{CurveConfig, EvaluationReport, InfluenceCurve};
pub use numkernel::{FeatureMatrix, FeatureVector};
