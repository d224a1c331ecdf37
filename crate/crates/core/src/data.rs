//! Predictor matrix with column metadata and factor/dummy bookkeeping.
//!
//! Factor columns are expanded to one 0/1 dummy column per level at
//! construction time; the factor-to-dummy map is kept so importance and
//! interaction scores can later be aggregated back onto whole factors.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    Dummy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    /// Name of the originating factor for dummy columns.
    pub parent_factor: Option<String>,
    /// Factor level encoded by this dummy column.
    pub level_label: Option<String>,
}

impl ColumnMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Numeric,
            parent_factor: None,
            level_label: None,
        }
    }

    pub fn dummy(name: impl Into<String>, factor: impl Into<String>, level: impl Into<String>) -> Self {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Dummy,
            parent_factor: Some(factor.into()),
            level_label: Some(level.into()),
        }
    }

    /// Name used when grouping dummies back onto their factor.
    pub fn display_group(&self) -> &str {
        self.parent_factor.as_deref().unwrap_or(&self.name)
    }
}

/// An n x p predictor matrix (column major) plus a length-n response.
#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<ColumnMeta>,
    /// p columns, each of length n.
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<ColumnMeta>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidData("need at least one predictor column".into()));
        }
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if columns.len() != x.len() {
            return Err(Error::InvalidData(format!(
                "{} column metadata entries for {} columns",
                columns.len(),
                x.len()
            )));
        }
        for (j, col) in x.iter().enumerate() {
            if col.len() != n {
                return Err(Error::InvalidData(format!(
                    "column {} has {} rows, response has {n}",
                    columns[j].name,
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "column {} contains a non-finite value",
                    columns[j].name
                )));
            }
            if columns[j].kind == ColumnKind::Dummy
                && col.iter().any(|&v| v != 0.0 && v != 1.0)
            {
                return Err(Error::InvalidData(format!(
                    "dummy column {} contains a value other than 0/1",
                    columns[j].name
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate column name {}", c.name)));
            }
        }
        let ds = Dataset { columns, x, y };
        // Dummies of one factor must be mutually exclusive per row.
        for (factor, cols) in ds.factor_groups() {
            for i in 0..n {
                let active: usize = cols.iter().map(|&j| (ds.x[j][i] == 1.0) as usize).sum();
                if active > 1 {
                    return Err(Error::InvalidData(format!(
                        "row {i} activates {active} levels of factor {factor}"
                    )));
                }
            }
        }
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.x[j]
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.x[col][row]
    }

    /// One full row as an owned vector (used by per-row predictors).
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|col| col[i]).collect()
    }

    /// Map from factor name to the indices of its dummy columns.
    pub fn factor_groups(&self) -> BTreeMap<String, Vec<usize>> {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (j, c) in self.columns.iter().enumerate() {
            if let Some(f) = &c.parent_factor {
                groups.entry(f.clone()).or_default().push(j);
            }
        }
        groups
    }

    /// Replaces column `j` with the given values (used by permutation importance).
    pub fn with_column(&self, j: usize, values: Vec<f64>) -> Result<Self> {
        if j >= self.p() {
            return Err(Error::InvalidData(format!("no column {j}")));
        }
        if values.len() != self.n() {
            return Err(Error::InvalidData("replacement column has wrong length".into()));
        }
        let mut x = self.x.clone();
        x[j] = values;
        Ok(Dataset {
            columns: self.columns.clone(),
            x,
            y: self.y.clone(),
        })
    }

    /// Reads a dataset from CSV. A header row is required. Columns listed in
    /// `factors` are treated as categorical and expanded to one dummy per
    /// level; every other non-response column must parse as a number.
    pub fn from_csv_path(path: &Path, factors: &[String], response: &str) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, factors, response)
    }

    pub fn from_csv_reader<R: Read>(reader: R, factors: &[String], response: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .iter()
            .map(|s| s.to_string())
            .collect();
        let resp_idx = headers
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| Error::InvalidData(format!("response column {response} not found")))?;
        for f in factors {
            if !headers.iter().any(|h| h == f) {
                return Err(Error::InvalidData(format!("factor column {f} not found")));
            }
            if f == response {
                return Err(Error::InvalidData(format!("response {f} cannot be a factor")));
            }
        }

        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for (rec_no, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { line: rec_no + 2, message: e.to_string() })?;
            if rec.len() != headers.len() {
                return Err(Error::Parse {
                    line: rec_no + 2,
                    message: format!("expected {} fields, got {}", headers.len(), rec.len()),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                raw[j].push(field.to_string());
            }
        }
        let n = raw[resp_idx].len();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }

        let parse_num = |name: &str, vals: &[String]| -> Result<Vec<f64>> {
            vals.iter()
                .enumerate()
                .map(|(i, s)| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 2,
                        message: format!("column {name}: cannot parse {s:?} as a number"),
                    })
                })
                .collect()
        };

        let y = parse_num(response, &raw[resp_idx])?;
        let mut columns = Vec::new();
        let mut x = Vec::new();
        for (j, name) in headers.iter().enumerate() {
            if j == resp_idx {
                continue;
            }
            if factors.iter().any(|f| f == name) {
                let mut levels: Vec<String> = raw[j].clone();
                levels.sort();
                levels.dedup();
                for level in &levels {
                    let col: Vec<f64> = raw[j].iter().map(|v| (v == level) as u8 as f64).collect();
                    columns.push(ColumnMeta::dummy(format!("{name}.{level}"), name.clone(), level.clone()));
                    x.push(col);
                }
            } else {
                x.push(parse_num(name, &raw[j])?);
                columns.push(ColumnMeta::numeric(name.clone()));
            }
        }
        Dataset::new(columns, x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_csv() -> &'static str {
        "x1,color,y\n0.5,red,1.0\n0.2,blue,2.0\n0.9,red,3.0\n"
    }

    #[test]
    fn csv_reader_expands_factors() {
        let ds = Dataset::from_csv_reader(toy_csv().as_bytes(), &["color".into()], "y").unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.p(), 3); // x1 + two color levels
        let names = ds.column_names();
        assert_eq!(names, vec!["x1", "color.blue", "color.red"]);
        assert_eq!(ds.column(1), &[0.0, 1.0, 0.0]);
        assert_eq!(ds.column(2), &[1.0, 0.0, 1.0]);
        let groups = ds.factor_groups();
        assert_eq!(groups["color"], vec![1, 2]);
    }

    #[test]
    fn csv_reader_rejects_bad_numbers() {
        let err = Dataset::from_csv_reader("a,y\noops,1\n0.2,2\n".as_bytes(), &[], "y").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dummy_columns_must_be_binary() {
        let cols = vec![ColumnMeta::dummy("f.a", "f", "a")];
        let err = Dataset::new(cols, vec![vec![0.0, 0.5]], vec![1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn overlapping_dummies_rejected() {
        let cols = vec![ColumnMeta::dummy("f.a", "f", "a"), ColumnMeta::dummy("f.b", "f", "b")];
        let err = Dataset::new(
            cols,
            vec![vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![1.0, 2.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn duplicate_names_rejected() {
        let cols = vec![ColumnMeta::numeric("a"), ColumnMeta::numeric("a")];
        let err = Dataset::new(cols, vec![vec![0.0, 1.0], vec![0.0, 1.0]], vec![1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }
}
