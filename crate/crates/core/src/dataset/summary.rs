use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::encode::{level_counts, mean_sd};
use super::{AnalysisFrame, RawValues};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Treatment,
    Strata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
}

/// Per-group statistics. Inner vectors are indexed by group, in `SummaryTable::groups` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SummaryStats {
    Categorical {
        levels: Vec<String>,
        /// `counts[group][level]`
        counts: Vec<Vec<usize>>,
        percents: Vec<Vec<f64>>,
    },
    Numeric {
        mean: Vec<f64>,
        sd: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub name: String,
    pub stats: SummaryStats,
}

/// Counts (%) for categorical variables and mean (sd) for numeric ones, per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub group_by: GroupBy,
    pub total_n: usize,
    pub groups: Vec<GroupSummary>,
    pub variables: Vec<VariableSummary>,
}

fn categorical(name: &str, values: &[&str], groups: &[Vec<usize>]) -> VariableSummary {
    let levels: Vec<&str> = level_counts(values.iter().copied()).into_keys().collect();
    let mut counts = Vec::with_capacity(groups.len());
    let mut percents = Vec::with_capacity(groups.len());
    for rows in groups {
        let c = level_counts(rows.iter().map(|&i| values[i]));
        let row: Vec<usize> = levels.iter().map(|l| c.get(l).copied().unwrap_or(0)).collect();
        percents.push(row.iter().map(|&k| 100.0 * k as f64 / rows.len() as f64).collect());
        counts.push(row);
    }
    VariableSummary {
        name: name.to_string(),
        stats: SummaryStats::Categorical {
            levels: levels.into_iter().map(str::to_string).collect(),
            counts,
            percents,
        },
    }
}

fn numeric(name: &str, values: &[f64], groups: &[Vec<usize>]) -> VariableSummary {
    let (mean, sd) = groups
        .iter()
        .map(|rows| mean_sd(&rows.iter().map(|&i| values[i]).collect::<Vec<_>>()))
        .unzip();
    VariableSummary {
        name: name.to_string(),
        stats: SummaryStats::Numeric { mean, sd },
    }
}

/// Descriptive table in the layout of a study-sample characteristics table.
/// Empty groups are omitted; a frame without strata grouped by strata yields one
/// group labelled `all`.
pub fn summarize(frame: &AnalysisFrame, group_by: GroupBy) -> SummaryTable {
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in 0..frame.n() {
        let key = match (group_by, frame.strata()) {
            (GroupBy::Treatment, _) => {
                if frame.a()[i] == 1 { "treated" } else { "untreated" }.to_string()
            }
            (GroupBy::Strata, Some(s)) => s[i].clone(),
            (GroupBy::Strata, None) => "all".to_string(),
        };
        members.entry(key).or_default().push(i);
    }
    let groups: Vec<GroupSummary> = members
        .iter()
        .map(|(label, rows)| GroupSummary {
            label: label.clone(),
            n: rows.len(),
        })
        .collect();
    let rows: Vec<Vec<usize>> = members.into_values().collect();

    let binary = |v: &[u8]| -> Vec<&'static str> {
        v.iter().map(|&b| if b == 1 { "1" } else { "0" }).collect()
    };
    let mut variables = vec![categorical(frame.outcome_label(), &binary(frame.y()), &rows)];
    if group_by == GroupBy::Strata {
        variables.push(categorical("treatment", &binary(frame.a()), &rows));
    }
    for col in frame.raw_columns() {
        variables.push(match &col.values {
            RawValues::Numeric(v) => numeric(&col.name, v, &rows),
            RawValues::Categorical(v) => {
                let v: Vec<&str> = v.iter().map(String::as_str).collect();
                categorical(&col.name, &v, &rows)
            }
        });
    }
    SummaryTable {
        group_by,
        total_n: frame.n(),
        groups,
        variables,
    }
}

impl SummaryTable {
    pub const CSV_HEADER: [&'static str; 8] = ["variable", "level", "group", "n", "count", "percent", "mean", "sd"];

    /// Long-format rows matching [`SummaryTable::CSV_HEADER`].
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for var in &self.variables {
            for (g, group) in self.groups.iter().enumerate() {
                match &var.stats {
                    SummaryStats::Categorical {
                        levels,
                        counts,
                        percents,
                    } => {
                        for (l, level) in levels.iter().enumerate() {
                            rows.push(vec![
                                var.name.clone(),
                                level.clone(),
                                group.label.clone(),
                                group.n.to_string(),
                                counts[g][l].to_string(),
                                percents[g][l].to_string(),
                                String::new(),
                                String::new(),
                            ]);
                        }
                    }
                    SummaryStats::Numeric { mean, sd } => {
                        rows.push(vec![
                            var.name.clone(),
                            String::new(),
                            group.label.clone(),
                            group.n.to_string(),
                            String::new(),
                            String::new(),
                            mean[g].to_string(),
                            sd[g].to_string(),
                        ]);
                    }
                }
            }
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for row in self.csv_rows() {
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
