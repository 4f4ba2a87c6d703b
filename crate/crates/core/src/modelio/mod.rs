//! File formats and synthetic fixtures.

mod ftm;
mod synth;

use std::fs;
use std::path::Path;

pub use ftm::{decode_features, encode_features, read_features, write_features, FTM_MAGIC};
pub use synth::{
    synth_world, HeadKind, SampleMeta, SynthConfig, SynthOutput, SynthSample, SyntheticWorld, SYNTH_GENERATOR,
};

use crate::aligner::AffineAligner;
use crate::error::Error;
use crate::explainer::ConceptBank;
use crate::head::Head;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("bad magic {found:?}, expected \"FTM1\"")]
    BadMagic { found: [u8; 4] },

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },

    #[error("trailing data: expected {expected} bytes, found {actual}")]
    TrailingData { expected: usize, actual: usize },

    #[error("non-finite value at byte offset {offset}")]
    NonFinite { offset: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Invalid(#[from] Error),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn json(path: &Path, source: serde_json::Error) -> Self {
        IoError::Json {
            path: path.display().to_string(),
            source,
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn write_text(path: &Path, s: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
        }
    }
    fs::write(path, s).map_err(|e| IoError::io(path, e))
}

pub fn read_aligner(path: &Path) -> Result<AffineAligner, IoError> {
    let s = read_text(path)?;
    match AffineAligner::from_json(&s) {
        Ok(a) => Ok(a),
        Err(crate::aligner::AlignerParseError::Json(e)) => Err(IoError::json(path, e)),
        Err(crate::aligner::AlignerParseError::Invalid(e)) => Err(e.into()),
    }
}

pub fn write_aligner(path: &Path, al: &AffineAligner) -> Result<(), IoError> {
    let s = al.to_json().map_err(|e| IoError::json(path, e))?;
    write_text(path, &s)
}

pub fn read_head(path: &Path) -> Result<Head, IoError> {
    let s = read_text(path)?;
    match Head::from_json(&s) {
        Ok(h) => Ok(h),
        Err(crate::head::HeadParseError::Json(e)) => Err(IoError::json(path, e)),
        Err(crate::head::HeadParseError::Invalid(e)) => Err(e.into()),
    }
}

pub fn write_head(path: &Path, head: &Head) -> Result<(), IoError> {
    let s = head.to_json().map_err(|e| IoError::json(path, e))?;
    write_text(path, &s)
}

pub fn read_bank(path: &Path) -> Result<ConceptBank, IoError> {
    let s = read_text(path)?;
    match ConceptBank::from_json(&s) {
        Ok(b) => Ok(b),
        Err(crate::explainer::BankParseError::Json(e)) => Err(IoError::json(path, e)),
        Err(crate::explainer::BankParseError::Invalid(e)) => Err(e.into()),
    }
}

pub fn write_bank(path: &Path, bank: &ConceptBank) -> Result<(), IoError> {
    let s = bank.to_json().map_err(|e| IoError::json(path, e))?;
    write_text(path, &s)
}

/// Reads any JSON document into `T`.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let s = read_text(path)?;
    serde_json::from_str(&s).map_err(|e| IoError::json(path, e))
}

/// Writes `value` as compact JSON.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let s = serde_json::to_string(value).map_err(|e| IoError::json(path, e))?;
    write_text(path, &s)
}
