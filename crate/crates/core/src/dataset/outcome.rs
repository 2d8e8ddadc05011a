use std::collections::BTreeSet;

use super::AnalysisFrame;
use crate::error::{Error, Result};

/// Returns a copy of `frame` with `y` replaced by `new_outcome`, labelled `label`.
pub fn redefine_outcome(
    frame: &AnalysisFrame,
    new_outcome: &[u8],
    label: impl Into<String>,
) -> Result<AnalysisFrame> {
    if new_outcome.len() != frame.n() {
        return Err(Error::LengthMismatch {
            expected: frame.n(),
            actual: new_outcome.len(),
        });
    }
    frame.replace_outcome(new_outcome.to_vec(), label.into())
}

/// Expands a multi-category column into one binary indicator per category, skipping
/// the labels in `exclude` (for example a "no re-arrest" level). Categories are
/// returned in lexicographic order.
pub fn one_vs_rest(values: &[String], exclude: &[&str]) -> Vec<(String, Vec<u8>)> {
    let categories: BTreeSet<&str> = values
        .iter()
        .map(String::as_str)
        .filter(|v| !exclude.contains(v))
        .collect();
    categories
        .into_iter()
        .map(|c| {
            (
                c.to_string(),
                values.iter().map(|v| (v == c) as u8).collect(),
            )
        })
        .collect()
}
