use std::path::Path;

use faithtrace_core::modelio::read_features;
use faithtrace_core::numkernel::normalize;
use faithtrace_core::{ConceptBank, ConceptEntry, Error};

use crate::error::GenError;
use crate::generate::GeneratedConcept;

/// Pairs each concept with the row of the same index in an FTM1 embedding
/// file, normalizing every embedding to unit length.
pub fn attach_embeddings(
    concepts: &[GeneratedConcept],
    embedding_file: &Path,
    expected_dim: Option<usize>,
    class_label: &str,
    sample_id: Option<String>,
) -> Result<ConceptBank, GenError> {
    let m = read_features(embedding_file)?;
    if m.rows() != concepts.len() {
        return Err(GenError::CountMismatch {
            expected: concepts.len(),
            actual: m.rows(),
        });
    }
    if let Some(dim) = expected_dim {
        if dim != m.cols() {
            return Err(Error::DimMismatch {
                expected: dim,
                got: m.cols(),
            }
            .into());
        }
    }
    let mut entries = Vec::with_capacity(concepts.len());
    for (index, c) in concepts.iter().enumerate() {
        let unit = normalize(&m.row_vector(index)).map_err(|source| GenError::Concept { index, source })?;
        let entry = ConceptEntry::new(c.text.clone(), unit, c.source.into())
            .map_err(|source| GenError::Concept { index, source })?;
        entries.push(entry);
    }
    Ok(ConceptBank::new(entries, class_label, sample_id)?)
}
