//! CSV matrices on disk: one header row of column names, one row per
//! observation. Values are written in shortest round-trip form so a
//! write/read cycle is exact.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use coop_pliable::MultiViewData;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// A parse failure pinned to a place in an input file. Rows count data rows
/// from 1 (the header is not a row).
#[derive(Debug, Clone, PartialEq)]
pub struct IngestError {
    pub file: PathBuf,
    pub row: Option<usize>,
    pub column: Option<String>,
    pub message: String,
}

impl IngestError {
    fn new(file: &Path, row: Option<usize>, column: Option<String>, message: impl Into<String>) -> Self {
        Self {
            file: file.to_path_buf(),
            row,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file.display())?;
        if let Some(r) = self.row {
            write!(f, ", row {r}")?;
        }
        if let Some(c) = &self.column {
            write!(f, ", column '{c}'")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for IngestError {}

/// Raw string cells with the header split off.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::new(path, None, None, format!("unreadable header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(IngestError::new(path, None, None, "missing header row").into());
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IngestError::new(path, Some(row), None, e.to_string()))?;
        if record.len() != header.len() {
            return Err(IngestError::new(
                path,
                Some(row),
                None,
                format!("expected {} fields, found {}", header.len(), record.len()),
            )
            .into());
        }
        let cells: Vec<String> = record.iter().map(|c| c.trim().to_string()).collect();
        if let Some(col) = cells.iter().position(|c| c.is_empty()) {
            return Err(IngestError::new(path, Some(row), Some(header[col].clone()), "missing value").into());
        }
        rows.push(cells);
    }
    if rows.is_empty() {
        return Err(IngestError::new(path, None, None, "no data rows").into());
    }
    Ok(Table {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

fn parse_cell(table: &Table, row: usize, col: usize) -> Result<f64, IngestError> {
    let cell = &table.rows[row][col];
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::new(
            &table.path,
            Some(row + 1),
            Some(table.header[col].clone()),
            format!("not a finite number: '{cell}'"),
        )),
    }
}

/// All columns as numbers.
pub fn numeric_matrix(table: &Table) -> Result<Array2<f64>> {
    let (n, p) = (table.rows.len(), table.header.len());
    let mut out = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            out[[i, j]] = parse_cell(table, i, j)?;
        }
    }
    Ok(out)
}

/// How one modifier column becomes model columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ZColumn {
    Numeric { name: String },
    /// One indicator per level, minus the first when `reference` is set.
    Categorical { name: String, levels: Vec<String>, reference: bool },
}

/// Column-by-column recipe for the modifier file, learned on training data
/// and reused for test and prediction inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZEncoding {
    pub columns: Vec<ZColumn>,
}

fn sorted_levels(values: impl Iterator<Item = String>) -> Vec<String> {
    let mut levels: Vec<String> = values.collect();
    levels.sort();
    levels.dedup();
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        return pairs.into_iter().map(|(_, l)| l).collect();
    }
    levels
}

impl ZEncoding {
    pub fn fit(table: &Table, categorical: &[String], reference: bool) -> Result<Self> {
        for name in categorical {
            if !table.header.contains(name) {
                return Err(IngestError::new(
                    &table.path,
                    None,
                    Some(name.clone()),
                    "declared categorical but not present",
                )
                .into());
            }
        }
        let columns = table
            .header
            .iter()
            .enumerate()
            .map(|(j, name)| {
                if categorical.contains(name) {
                    let levels = sorted_levels(table.rows.iter().map(|r| r[j].clone()));
                    ZColumn::Categorical {
                        name: name.clone(),
                        levels,
                        reference,
                    }
                } else {
                    ZColumn::Numeric { name: name.clone() }
                }
            })
            .collect();
        Ok(Self { columns })
    }

    /// Expanded column names.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.columns {
            match c {
                ZColumn::Numeric { name } => out.push(name.clone()),
                ZColumn::Categorical { name, levels, reference } => {
                    let skip = usize::from(*reference);
                    out.extend(levels.iter().skip(skip).map(|l| format!("{name}={l}")));
                }
            }
        }
        out
    }

    pub fn apply(&self, table: &Table) -> Result<Array2<f64>> {
        let expected: Vec<&str> = self
            .columns
            .iter()
            .map(|c| match c {
                ZColumn::Numeric { name } | ZColumn::Categorical { name, .. } => name.as_str(),
            })
            .collect();
        let found: Vec<&str> = table.header.iter().map(String::as_str).collect();
        if expected != found {
            return Err(IngestError::new(
                &table.path,
                None,
                None,
                format!("columns {found:?} do not match the fitted layout {expected:?}"),
            )
            .into());
        }
        let n = table.rows.len();
        let width = self.names().len();
        let mut out = Array2::zeros((n, width));
        for i in 0..n {
            let mut at = 0;
            for (j, c) in self.columns.iter().enumerate() {
                match c {
                    ZColumn::Numeric { .. } => {
                        out[[i, at]] = parse_cell(table, i, j)?;
                        at += 1;
                    }
                    ZColumn::Categorical { name, levels, reference } => {
                        let cell = &table.rows[i][j];
                        let level = levels.iter().position(|l| l == cell).ok_or_else(|| {
                            IngestError::new(&table.path, Some(i + 1), Some(name.clone()), format!("unknown level '{cell}'"))
                        })?;
                        let skip = usize::from(*reference);
                        if level >= skip {
                            out[[i, at + level - skip]] = 1.0;
                        }
                        at += levels.len() - skip;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Modifier columns to expand into indicators.
    pub categorical: Vec<String>,
    /// Drop the first level of each categorical column.
    pub reference_coding: bool,
}

/// A loaded dataset with its column names.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub data: MultiViewData,
    pub x1_names: Vec<String>,
    pub x2_names: Vec<String>,
    pub z_names: Vec<String>,
    pub encoding: ZEncoding,
}

fn row_count_check(reference: &Table, other: &Table) -> Result<()> {
    if reference.rows.len() != other.rows.len() {
        return Err(IngestError::new(
            &other.path,
            None,
            None,
            format!(
                "{} rows, but {} has {}",
                other.rows.len(),
                reference.path.display(),
                reference.rows.len()
            ),
        )
        .into());
    }
    Ok(())
}

/// Reads `x1.csv`, `x2.csv`, `z.csv` and `y.csv` from `dir`. With an
/// `encoding` the modifier layout must match it; otherwise one is fitted.
pub fn load_dataset(dir: &Path, options: &IngestOptions, encoding: Option<&ZEncoding>) -> Result<Dataset> {
    load(dir, options, encoding, true)
}

/// As [`load_dataset`], but a missing `y.csv` is allowed and read as zeros.
pub fn load_features(dir: &Path, options: &IngestOptions, encoding: Option<&ZEncoding>) -> Result<(Dataset, bool)> {
    let has_y = dir.join("y.csv").exists();
    Ok((load(dir, options, encoding, has_y)?, has_y))
}

fn load(dir: &Path, options: &IngestOptions, encoding: Option<&ZEncoding>, with_y: bool) -> Result<Dataset> {
    let x1 = read_table(&dir.join("x1.csv"))?;
    let x2 = read_table(&dir.join("x2.csv"))?;
    let z = read_table(&dir.join("z.csv"))?;
    row_count_check(&x1, &x2)?;
    row_count_check(&x1, &z)?;
    let y_vec: Array1<f64> = if with_y {
        let y = read_table(&dir.join("y.csv"))?;
        row_count_check(&x1, &y)?;
        if y.header.len() != 1 {
            return Err(IngestError::new(&y.path, None, None, format!("expected one column, found {}", y.header.len())).into());
        }
        numeric_matrix(&y)?.column(0).to_owned()
    } else {
        Array1::zeros(x1.rows.len())
    };
    let encoding = match encoding {
        Some(e) => e.clone(),
        None => ZEncoding::fit(&z, &options.categorical, options.reference_coding)?,
    };
    let z_matrix = encoding.apply(&z)?;
    let data = MultiViewData::new(numeric_matrix(&x1)?, numeric_matrix(&x2)?, z_matrix, y_vec)
        .with_context(|| format!("invalid dataset in {}", dir.display()))?;
    Ok(Dataset {
        data,
        x1_names: x1.header,
        x2_names: x2.header,
        z_names: encoding.names(),
        encoding,
    })
}

/// First column of a headed CSV, as group ids.
pub fn read_groups(path: &Path) -> Result<Vec<String>> {
    let table = read_table(path)?;
    Ok(table.rows.into_iter().map(|mut r| r.swap_remove(0)).collect())
}

pub fn write_matrix(path: &Path, names: &[String], data: ArrayView2<'_, f64>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", names.join(","))?;
    let mut line = String::new();
    for row in data.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_vector(path: &Path, name: &str, data: ArrayView1<'_, f64>) -> Result<()> {
    let column = data.insert_axis(ndarray::Axis(1));
    write_matrix(path, &[name.to_string()], column)
}

pub fn default_names(prefix: &str, p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("{prefix}_{j}")).collect()
}

/// Writes the four matrix files of a dataset into `dir`.
pub fn write_dataset(dir: &Path, data: &MultiViewData) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_matrix(&dir.join("x1.csv"), &default_names("x1", data.p1()), data.x1())?;
    write_matrix(&dir.join("x2.csv"), &default_names("x2", data.p2()), data.x2())?;
    write_matrix(&dir.join("z.csv"), &default_names("z", data.k()), data.z())?;
    write_vector(&dir.join("y.csv"), "y", data.y())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(header: &[&str], rows: &[&[&str]]) -> Table {
        Table {
            path: PathBuf::from("z.csv"),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn full_indicator_coding() {
        let t = table(&["time", "dose"], &[&["2", "0.5"], &["1", "1.5"], &["3", "2.5"], &["1", "0"]]);
        let enc = ZEncoding::fit(&t, &["time".to_string()], false).unwrap();
        assert_eq!(enc.names(), vec!["time=1", "time=2", "time=3", "dose"]);
        let z = enc.apply(&t).unwrap();
        assert_eq!(z.row(0).to_vec(), vec![0.0, 1.0, 0.0, 0.5]);
        assert_eq!(z.row(3).to_vec(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn reference_coding_drops_first_level() {
        let t = table(&["time"], &[&["2"], &["1"], &["3"]]);
        let enc = ZEncoding::fit(&t, &["time".to_string()], true).unwrap();
        assert_eq!(enc.names(), vec!["time=2", "time=3"]);
        assert_eq!(enc.apply(&t).unwrap().row(1).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn numeric_levels_sort_numerically() {
        assert_eq!(sorted_levels(["10", "9", "1"].iter().map(|s| s.to_string())), vec!["1", "9", "10"]);
    }

    #[test]
    fn unknown_level_is_located() {
        let train = table(&["time"], &[&["1"], &["2"]]);
        let enc = ZEncoding::fit(&train, &["time".to_string()], false).unwrap();
        let test = table(&["time"], &[&["1"], &["4"]]);
        let err = enc.apply(&test).unwrap_err().downcast::<IngestError>().unwrap();
        assert_eq!(err.row, Some(2));
        assert_eq!(err.column.as_deref(), Some("time"));
    }

    #[test]
    fn bad_number_is_located() {
        let t = table(&["a", "b"], &[&["1", "2"], &["3", "x"]]);
        let err = numeric_matrix(&t).unwrap_err().downcast::<IngestError>().unwrap();
        assert_eq!((err.row, err.column.as_deref()), (Some(2), Some("b")));
        assert!(err.to_string().contains("row 2, column 'b'"));
    }
}
