//! Tabular ingestion, covariate encoding, stratification and descriptive summaries.
//!
//! An [`AnalysisFrame`] is the analysis-ready view of a dataset: encoded covariates
//! `x` (n × p), a binary exposure `a` and a binary outcome `y`. The raw covariate
//! values are retained next to the encoded matrix so that descriptive summaries can
//! be reported on the original scale.

mod encode;
mod io;
mod outcome;
mod summary;

use std::collections::{BTreeMap, HashSet};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use encode::{encode_covariates, MAX_CATEGORICAL_LEVELS};
pub use io::{load_csv, read_frame_csv, read_raw_csv, write_frame_csv, RawTable};
pub use outcome::{one_vs_rest, redefine_outcome};
pub use summary::{
    summarize, GroupBy, GroupSummary, SummaryStats, SummaryTable, VariableSummary,
};

/// Default minimum number of rows per stratum.
pub const DEFAULT_MIN_STRATUM_ROWS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Fail,
    DropRow,
}

/// Names the columns of a raw table that play each role in the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub outcome_column: String,
    pub treatment_column: String,
    pub covariate_columns: Vec<String>,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    #[serde(default)]
    pub strata_column: Option<String>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
}

impl ColumnSchema {
    pub fn new(
        outcome: impl Into<String>,
        treatment: impl Into<String>,
        covariates: &[&str],
    ) -> Self {
        Self {
            outcome_column: outcome.into(),
            treatment_column: treatment.into(),
            covariate_columns: covariates.iter().map(|c| c.to_string()).collect(),
            categorical_columns: Vec::new(),
            strata_column: None,
            missing_policy: MissingPolicy::Fail,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcome_column == self.treatment_column {
            return Err(Error::Config(format!(
                "outcome and treatment both name column `{}`",
                self.outcome_column
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.covariate_columns {
            if c == &self.outcome_column || c == &self.treatment_column {
                return Err(Error::Config(format!(
                    "column `{c}` is listed both as a covariate and as outcome/treatment"
                )));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::Config(format!("covariate `{c}` listed twice")));
            }
        }
        for c in &self.categorical_columns {
            if !seen.contains(c.as_str()) {
                return Err(Error::Config(format!(
                    "categorical column `{c}` is not a covariate"
                )));
            }
        }
        Ok(())
    }

    pub fn is_categorical(&self, column: &str) -> bool {
        self.categorical_columns.iter().any(|c| c == column)
    }
}

/// How one encoded column of `x` was derived from a raw column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodedColumn {
    /// `(value - mean) / sd`; `sd == 0` means the column was mapped to zeros.
    Standardized { source: String, mean: f64, sd: f64 },
    /// Indicator of `source == level`.
    Indicator { source: String, level: String },
    /// Copied through unchanged.
    Identity { source: String },
}

impl EncodedColumn {
    pub fn name(&self) -> String {
        match self {
            EncodedColumn::Standardized { source, .. } | EncodedColumn::Identity { source } => {
                source.clone()
            }
            EncodedColumn::Indicator { source, level } => format!("{source}={level}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub columns: Vec<EncodedColumn>,
    /// Dropped reference level of each categorical column.
    pub reference_levels: BTreeMap<String, String>,
}

impl EncodingMap {
    pub fn identity(names: &[String]) -> Self {
        Self {
            columns: names
                .iter()
                .map(|n| EncodedColumn::Identity { source: n.clone() })
                .collect(),
            reference_levels: BTreeMap::new(),
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(EncodedColumn::name).collect()
    }
}

/// Covariate values on their original scale.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValues {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub values: RawValues,
}

impl RawColumn {
    fn select(&self, rows: &[usize]) -> RawColumn {
        let values = match &self.values {
            RawValues::Numeric(v) => RawValues::Numeric(rows.iter().map(|&i| v[i]).collect()),
            RawValues::Categorical(v) => {
                RawValues::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
            }
        };
        RawColumn {
            name: self.name.clone(),
            values,
        }
    }

    fn len(&self) -> usize {
        match &self.values {
            RawValues::Numeric(v) => v.len(),
            RawValues::Categorical(v) => v.len(),
        }
    }
}

/// Analysis-ready data: encoded covariates, binary exposure and binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisFrame {
    x: Array2<f64>,
    a: Vec<u8>,
    y: Vec<u8>,
    strata: Option<Vec<String>>,
    unit_ids: Vec<u64>,
    encoding: EncodingMap,
    raw: Vec<RawColumn>,
    outcome_label: String,
}

impl AnalysisFrame {
    /// Builds a frame whose encoded covariates are `x` itself.
    pub fn new(x: Array2<f64>, a: Vec<u8>, y: Vec<u8>) -> Result<Self> {
        let names: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let raw = names
            .iter()
            .enumerate()
            .map(|(j, name)| RawColumn {
                name: name.clone(),
                values: RawValues::Numeric(x.column(j).to_vec()),
            })
            .collect();
        let unit_ids = (1..=a.len() as u64).collect();
        let frame = Self {
            encoding: EncodingMap::identity(&names),
            x,
            a,
            y,
            strata: None,
            unit_ids,
            raw,
            outcome_label: "y".to_string(),
        };
        frame.check()?;
        Ok(frame)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        x: Array2<f64>,
        a: Vec<u8>,
        y: Vec<u8>,
        strata: Option<Vec<String>>,
        unit_ids: Vec<u64>,
        encoding: EncodingMap,
        raw: Vec<RawColumn>,
        outcome_label: String,
    ) -> Result<Self> {
        let frame = Self {
            x,
            a,
            y,
            strata,
            unit_ids,
            encoding,
            raw,
            outcome_label,
        };
        frame.check()?;
        Ok(frame)
    }

    fn check(&self) -> Result<()> {
        let n = self.a.len();
        if n == 0 {
            return Err(Error::EmptyFrame);
        }
        let lens = [
            self.x.nrows(),
            self.y.len(),
            self.unit_ids.len(),
            self.strata.as_ref().map_or(n, Vec::len),
        ];
        for len in lens.into_iter().chain(self.raw.iter().map(RawColumn::len)) {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        if self.encoding.columns.len() != self.x.ncols() {
            return Err(Error::InvalidData(format!(
                "encoding map describes {} columns but x has {}",
                self.encoding.columns.len(),
                self.x.ncols()
            )));
        }
        for (role, v) in [("treatment", &self.a), ("outcome", &self.y)] {
            if let Some(i) = v.iter().position(|&b| b > 1) {
                return Err(Error::NonBinary {
                    role,
                    row: self.unit_ids[i] as usize,
                    value: v[i].to_string(),
                });
            }
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("x contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn with_strata(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                actual: labels.len(),
            });
        }
        self.strata = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn strata(&self) -> Option<&[String]> {
        self.strata.as_deref()
    }

    pub fn unit_ids(&self) -> &[u64] {
        &self.unit_ids
    }

    pub fn encoding(&self) -> &EncodingMap {
        &self.encoding
    }

    pub fn raw_columns(&self) -> &[RawColumn] {
        &self.raw
    }

    pub fn outcome_label(&self) -> &str {
        &self.outcome_label
    }

    pub fn treated_count(&self) -> usize {
        self.a.iter().filter(|&&v| v == 1).count()
    }

    pub fn outcome_mean(&self) -> f64 {
        self.y.iter().map(|&v| v as f64).sum::<f64>() / self.n() as f64
    }

    /// Sub-frame with the given rows, in the given order. Encoding is kept as is.
    pub fn select_rows(&self, rows: &[usize]) -> Result<AnalysisFrame> {
        AnalysisFrame::from_parts(
            self.x.select(Axis(0), rows),
            rows.iter().map(|&i| self.a[i]).collect(),
            rows.iter().map(|&i| self.y[i]).collect(),
            self.strata
                .as_ref()
                .map(|s| rows.iter().map(|&i| s[i].clone()).collect()),
            rows.iter().map(|&i| self.unit_ids[i]).collect(),
            self.encoding.clone(),
            self.raw.iter().map(|c| c.select(rows)).collect(),
            self.outcome_label.clone(),
        )
    }

    pub(crate) fn replace_outcome(&self, y: Vec<u8>, label: String) -> Result<AnalysisFrame> {
        let mut frame = self.clone();
        frame.y = y;
        frame.outcome_label = label;
        frame.check()?;
        Ok(frame)
    }
}

/// Partitions a frame by its strata labels. Labels are returned in lexicographic
/// order; rows keep their original relative order.
pub fn stratify(frame: &AnalysisFrame, min_rows: usize) -> Result<Vec<(String, AnalysisFrame)>> {
    let labels = frame
        .strata()
        .ok_or_else(|| Error::Config("frame has no strata column".into()))?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        groups.entry(label.as_str()).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(label, rows)| {
            if rows.len() < min_rows {
                return Err(Error::StratumTooSmall {
                    label: label.to_string(),
                    rows: rows.len(),
                    min: min_rows,
                });
            }
            Ok((label.to_string(), frame.select_rows(&rows)?))
        })
        .collect()
}
