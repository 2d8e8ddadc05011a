use std::fs::File;
use std::path::Path;

use ndarray::Array2;

use super::{encode_covariates, AnalysisFrame, ColumnSchema, EncodingMap, RawColumn, RawValues};
use crate::error::{Error, Result};

/// Header plus string cells; `None` marks a missing cell (empty or `NA`).
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<&str>>> {
        let idx = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx].as_deref()).collect())
    }
}

pub fn read_raw_csv(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::InvalidData(format!("{}: missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(
            record
                .iter()
                .map(|c| {
                    let c = c.trim();
                    (!c.is_empty() && c != "NA").then(|| c.to_string())
                })
                .collect(),
        );
    }
    Ok(RawTable { headers, rows })
}

/// Reads a CSV and encodes it according to `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<AnalysisFrame> {
    let table = read_raw_csv(path)?;
    encode_covariates(&table, schema)
}

const RESERVED: [&str; 4] = ["unit_id", "y", "a", "stratum"];

/// Writes the analysis-ready frame: `unit_id,y,a[,stratum],<encoded columns>`.
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_frame_csv(frame: &AnalysisFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = vec!["unit_id".into(), "y".into(), "a".into()];
    if frame.strata().is_some() {
        header.push("stratum".into());
    }
    header.extend(frame.encoding().column_names());
    w.write_record(&header)?;
    for i in 0..frame.n() {
        let mut rec = vec![
            frame.unit_ids()[i].to_string(),
            frame.y()[i].to_string(),
            frame.a()[i].to_string(),
        ];
        if let Some(s) = frame.strata() {
            rec.push(s[i].clone());
        }
        rec.extend(frame.x().row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a file produced by [`write_frame_csv`] without re-encoding.
pub fn read_frame_csv(path: impl AsRef<Path>) -> Result<AnalysisFrame> {
    let table = read_raw_csv(path)?;
    let idx = |name: &str| table.headers.iter().position(|h| h == name);
    let (id_col, y_col, a_col) = match (idx("unit_id"), idx("y"), idx("a")) {
        (Some(i), Some(y), Some(a)) => (i, y, a),
        _ => return Err(Error::MissingColumn("unit_id/y/a".into())),
    };
    let s_col = idx("stratum");
    let x_cols: Vec<usize> = (0..table.headers.len())
        .filter(|&c| !RESERVED.contains(&table.headers[c].as_str()))
        .collect();
    let names: Vec<String> = x_cols.iter().map(|&c| table.headers[c].clone()).collect();
    let n = table.rows.len();
    if n == 0 {
        return Err(Error::EmptyFrame);
    }

    let get = |r: usize, c: usize| -> Result<&str> {
        table.rows[r][c].as_deref().ok_or_else(|| Error::MissingValue {
            column: table.headers[c].clone(),
            row: r + 1,
        })
    };
    let num = |r: usize, c: usize| -> Result<f64> {
        let s = get(r, c)?;
        s.parse::<f64>().map_err(|_| Error::ParseNumeric {
            column: table.headers[c].clone(),
            row: r + 1,
            value: s.to_string(),
        })
    };
    let bin = |r: usize, c: usize, role: &'static str| -> Result<u8> {
        match get(r, c)? {
            "0" => Ok(0),
            "1" => Ok(1),
            v => Err(Error::NonBinary {
                role,
                row: r + 1,
                value: v.to_string(),
            }),
        }
    };

    let mut x = Array2::zeros((n, x_cols.len()));
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut strata = s_col.map(|_| Vec::with_capacity(n));
    for r in 0..n {
        ids.push(get(r, id_col)?.parse::<u64>().map_err(|_| Error::ParseNumeric {
            column: "unit_id".into(),
            row: r + 1,
            value: get(r, id_col).unwrap_or_default().to_string(),
        })?);
        y.push(bin(r, y_col, "outcome")?);
        a.push(bin(r, a_col, "treatment")?);
        if let (Some(c), Some(s)) = (s_col, strata.as_mut()) {
            s.push(get(r, c)?.to_string());
        }
        for (j, &c) in x_cols.iter().enumerate() {
            x[[r, j]] = num(r, c)?;
        }
    }
    let raw = names
        .iter()
        .enumerate()
        .map(|(j, name)| RawColumn {
            name: name.clone(),
            values: RawValues::Numeric(x.column(j).to_vec()),
        })
        .collect();
    AnalysisFrame::from_parts(x, a, y, strata, ids, EncodingMap::identity(&names), raw, "y".into())
}
