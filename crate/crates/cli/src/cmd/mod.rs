pub mod evaluate;
pub mod explain;
pub mod genbank;
pub mod synth;
pub mod train;

use std::path::Path;

use anyhow::{Context, Result};
use faithtrace_core::modelio::read_features;
use faithtrace_core::FeatureVector;

use crate::exit::usage;

/// Row `row` of an FTM1 file as a feature vector.
pub fn read_row(path: &Path, row: usize) -> Result<FeatureVector> {
    let m = read_features(path).with_context(|| format!("reading features {}", path.display()))?;
    if row >= m.rows() {
        return Err(usage(format!(
            "{}: row {row} out of range (file has {} rows)",
            path.display(),
            m.rows()
        )));
    }
    Ok(m.row_vector(row))
}

/// Parses a comma-separated list.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| usage(format!("bad list item {p:?}: {e}"))))
        .collect()
}
