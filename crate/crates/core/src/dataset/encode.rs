use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;

use super::io::RawTable;
use super::{AnalysisFrame, ColumnSchema, EncodedColumn, EncodingMap, MissingPolicy, RawColumn, RawValues};
use crate::error::{Error, Result};

pub const MAX_CATEGORICAL_LEVELS: usize = 64;

/// Parses a binary exposure/outcome cell. Only `0`, `1`, `true` and `false` are accepted.
fn parse_binary(cell: &str) -> Option<u8> {
    match cell.trim() {
        "0" | "false" => Some(0),
        "1" | "true" => Some(1),
        _ => None,
    }
}

fn column_index(table: &RawTable, name: &str) -> Result<usize> {
    table
        .headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

/// Validates, drops or rejects missing cells, and encodes covariates: categorical
/// columns become indicators (lexicographically first level dropped) and numeric
/// columns are standardized with the sample standard deviation.
pub fn encode_covariates(table: &RawTable, schema: &ColumnSchema) -> Result<AnalysisFrame> {
    schema.validate()?;
    let y_col = column_index(table, &schema.outcome_column)?;
    let a_col = column_index(table, &schema.treatment_column)?;
    let cov_cols = schema
        .covariate_columns
        .iter()
        .map(|c| column_index(table, c))
        .collect::<Result<Vec<_>>>()?;
    let strata_col = schema
        .strata_column
        .as_deref()
        .map(|c| column_index(table, c))
        .transpose()?;

    let mut used: Vec<(usize, &str)> = vec![
        (y_col, schema.outcome_column.as_str()),
        (a_col, schema.treatment_column.as_str()),
    ];
    used.extend(cov_cols.iter().copied().zip(schema.covariate_columns.iter().map(String::as_str)));
    if let (Some(c), Some(name)) = (strata_col, schema.strata_column.as_deref()) {
        used.push((c, name));
    }

    for &(col, name) in &used {
        if !table.rows.is_empty() && table.rows.iter().all(|r| r[col].is_none()) {
            return Err(Error::AllMissing(name.to_string()));
        }
    }

    // Row filtering under the missing-data policy. Data rows are numbered from 1.
    let mut keep = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        if let Some(&(_, name)) = used.iter().find(|&&(c, _)| row[c].is_none()) {
            match schema.missing_policy {
                MissingPolicy::Fail => {
                    return Err(Error::MissingValue {
                        column: name.to_string(),
                        row: i + 1,
                    })
                }
                MissingPolicy::DropRow => continue,
            }
        }
        keep.push(i);
    }
    if keep.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let cell = |i: usize, c: usize| table.rows[i][c].as_deref().unwrap_or_default();

    let mut a = Vec::with_capacity(keep.len());
    let mut y = Vec::with_capacity(keep.len());
    for &i in &keep {
        a.push(parse_binary(cell(i, a_col)).ok_or_else(|| Error::NonBinary {
            role: "treatment",
            row: i + 1,
            value: cell(i, a_col).to_string(),
        })?);
        y.push(parse_binary(cell(i, y_col)).ok_or_else(|| Error::NonBinary {
            role: "outcome",
            row: i + 1,
            value: cell(i, y_col).to_string(),
        })?);
    }

    let n = keep.len();
    let mut encoded: Vec<Vec<f64>> = Vec::new();
    let mut map = EncodingMap::default();
    let mut raw = Vec::with_capacity(cov_cols.len());

    for (&col, name) in cov_cols.iter().zip(&schema.covariate_columns) {
        if schema.is_categorical(name) {
            let values: Vec<String> = keep.iter().map(|&i| cell(i, col).to_string()).collect();
            let levels: BTreeSet<&str> = values.iter().map(String::as_str).collect();
            if levels.len() > MAX_CATEGORICAL_LEVELS {
                return Err(Error::TooManyLevels {
                    column: name.clone(),
                    levels: levels.len(),
                    limit: MAX_CATEGORICAL_LEVELS,
                });
            }
            let mut iter = levels.iter();
            if let Some(reference) = iter.next() {
                map.reference_levels.insert(name.clone(), reference.to_string());
            }
            for level in iter {
                encoded.push(values.iter().map(|v| (v == level) as u8 as f64).collect());
                map.columns.push(EncodedColumn::Indicator {
                    source: name.clone(),
                    level: level.to_string(),
                });
            }
            raw.push(RawColumn {
                name: name.clone(),
                values: RawValues::Categorical(values),
            });
        } else {
            let values = keep
                .iter()
                .map(|&i| {
                    let s = cell(i, col).trim();
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::ParseNumeric {
                            column: name.clone(),
                            row: i + 1,
                            value: s.to_string(),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, sd) = mean_sd(&values);
            encoded.push(
                values
                    .iter()
                    .map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 })
                    .collect(),
            );
            map.columns.push(EncodedColumn::Standardized {
                source: name.clone(),
                mean,
                sd,
            });
            raw.push(RawColumn {
                name: name.clone(),
                values: RawValues::Numeric(values),
            });
        }
    }

    let x = Array2::from_shape_fn((n, encoded.len()), |(i, j)| encoded[j][i]);
    let strata = strata_col.map(|c| keep.iter().map(|&i| cell(i, c).to_string()).collect());
    let unit_ids = keep.iter().map(|&i| i as u64 + 1).collect();
    AnalysisFrame::from_parts(
        x,
        a,
        y,
        strata,
        unit_ids,
        map,
        raw,
        schema.outcome_column.clone(),
    )
}

/// Mean and sample (n - 1) standard deviation; the sd of fewer than two values is 0.
pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Level counts in lexicographic order.
pub(crate) fn level_counts<'a>(values: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut counts = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(headers: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|c| (!c.is_empty()).then(|| c.to_string()))
                        .collect()
                })
                .collect(),
        }
    }

    #[test]
    fn numeric_column_is_standardized() {
        let t = table(&["y", "a", "x1"], &[&["0", "1", "1"], &["1", "0", "2"], &["1", "1", "3"]]);
        let f = encode_covariates(&t, &ColumnSchema::new("y", "a", &["x1"])).unwrap();
        assert_eq!(f.x().column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn categorical_drops_first_level() {
        let t = table(&["y", "a", "g"], &[&["0", "1", "A"], &["1", "0", "B"], &["1", "1", "A"]]);
        let mut s = ColumnSchema::new("y", "a", &["g"]);
        s.categorical_columns = vec!["g".into()];
        let f = encode_covariates(&t, &s).unwrap();
        assert_eq!(f.p(), 1);
        assert_eq!(f.x().column(0).to_vec(), vec![0.0, 1.0, 0.0]);
        assert_eq!(f.encoding().reference_levels["g"], "A");
        assert_eq!(f.encoding().column_names(), vec!["g=B"]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let t = table(&["y", "a", "x"], &[&["0", "1", "5"], &["1", "0", "5"], &["1", "1", "5"]]);
        let f = encode_covariates(&t, &ColumnSchema::new("y", "a", &["x"])).unwrap();
        assert_eq!(f.x().column(0).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn boolean_literals_accepted() {
        let t = table(&["y", "a", "x"], &[&["true", "false", "1"], &["false", "true", "2"]]);
        let f = encode_covariates(&t, &ColumnSchema::new("y", "a", &["x"])).unwrap();
        assert_eq!(f.y(), &[1, 0]);
        assert_eq!(f.a(), &[0, 1]);
    }

    #[test]
    fn too_many_levels_rejected() {
        let levels: Vec<String> = (0..70).map(|i| format!("L{i:02}")).collect();
        let rows: Vec<Vec<&str>> = levels.iter().map(|l| vec!["0", "1", l.as_str()]).collect();
        let rows: Vec<&[&str]> = rows.iter().map(Vec::as_slice).collect();
        let t = table(&["y", "a", "g"], &rows);
        let mut s = ColumnSchema::new("y", "a", &["g"]);
        s.categorical_columns = vec!["g".into()];
        assert!(matches!(
            encode_covariates(&t, &s),
            Err(Error::TooManyLevels { levels: 70, .. })
        ));
    }

    #[test]
    fn all_missing_column_rejected() {
        let t = table(&["y", "a", "x"], &[&["0", "1", ""], &["1", "0", ""]]);
        let mut s = ColumnSchema::new("y", "a", &["x"]);
        s.missing_policy = MissingPolicy::DropRow;
        assert!(matches!(encode_covariates(&t, &s), Err(Error::AllMissing(c)) if c == "x"));
    }

    #[test]
    fn unparseable_numeric_names_row() {
        let t = table(&["y", "a", "x"], &[&["0", "1", "1.5"], &["1", "0", "abc"]]);
        match encode_covariates(&t, &ColumnSchema::new("y", "a", &["x"])) {
            Err(Error::ParseNumeric { column, row, value }) => {
                assert_eq!((column.as_str(), row, value.as_str()), ("x", 2, "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_cell_fails_under_fail_policy() {
        let t = table(&["y", "a", "x"], &[&["0", "1", "1"], &["1", "0", ""]]);
        assert!(matches!(
            encode_covariates(&t, &ColumnSchema::new("y", "a", &["x"])),
            Err(Error::MissingValue { row: 2, .. })
        ));
    }
}
