//! Columnar tables with explicit missingness.
//!
//! Numeric columns carry a bad-value mask (missing, NaN or infinite input all
//! count as bad). Categorical columns keep missing values as a level of their
//! own, [`Level::Missing`], so it can be counted and encoded like any other.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Missing-value tokens used when no schema overrides them.
pub const DEFAULT_MISSING_TOKENS: [&str; 2] = ["", "NA"];

/// Token emitted for bad numeric cells and missing categorical cells.
pub const NA_TOKEN: &str = "NA";

/// A categorical level, with missing values as a distinguished level.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "Option<String>", into = "Option<String>")]
pub enum Level {
    Missing,
    Value(String),
}

impl Level {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Level::Missing => None,
            Level::Value(s) => Some(s),
        }
    }
}

impl From<Option<String>> for Level {
    fn from(v: Option<String>) -> Self {
        v.map_or(Level::Missing, Level::Value)
    }
}

impl From<Level> for Option<String> {
    fn from(l: Level) -> Self {
        match l {
            Level::Missing => None,
            Level::Value(s) => Some(s),
        }
    }
}

impl From<&str> for Level {
    fn from(s: &str) -> Self {
        Level::Value(s.to_string())
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Missing => f.write_str(NA_TOKEN),
            Level::Value(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl ColumnKind {
    pub fn name(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
        }
    }
}

/// Numeric values plus a mask that is true wherever the input was bad.
///
/// Masked positions hold NaN; every unmasked value is finite.
#[derive(Clone, Debug, Default)]
pub struct NumericColumn {
    values: Vec<f64>,
    bad: Vec<bool>,
}

impl NumericColumn {
    /// Builds a column, masking every non-finite value.
    pub fn new(values: Vec<f64>) -> Self {
        let bad: Vec<bool> = values.iter().map(|v| !v.is_finite()).collect();
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::NAN })
            .collect();
        NumericColumn { values, bad }
    }

    /// Builds a column from optional values, `None` meaning missing.
    pub fn from_options<I: IntoIterator<Item = Option<f64>>>(values: I) -> Self {
        Self::new(values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw values; masked positions are NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bad_mask(&self) -> &[bool] {
        &self.bad
    }

    pub fn get(&self, row: usize) -> Option<f64> {
        if self.bad[row] {
            None
        } else {
            Some(self.values[row])
        }
    }

    pub fn bad_count(&self) -> usize {
        self.bad.iter().filter(|&&b| b).count()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        NumericColumn {
            values: rows.iter().map(|&r| self.values[r]).collect(),
            bad: rows.iter().map(|&r| self.bad[r]).collect(),
        }
    }
}

impl PartialEq for NumericColumn {
    fn eq(&self, other: &Self) -> bool {
        self.bad == other.bad
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.bad)
                .all(|((a, b), &bad)| bad || a == b)
    }
}

/// Level dictionary plus per-row codes; `None` codes are [`Level::Missing`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoricalColumn {
    levels: Vec<String>,
    codes: Vec<Option<u32>>,
}

impl CategoricalColumn {
    /// Builds a column from optional strings; levels are numbered in order of
    /// first appearance.
    pub fn from_values<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = Option<S>>,
        S: AsRef<str>,
    {
        let mut lookup: HashMap<String, u32> = HashMap::new();
        let mut levels = Vec::new();
        let codes = values
            .into_iter()
            .map(|v| {
                v.map(|s| {
                    let s = s.as_ref();
                    if let Some(&c) = lookup.get(s) {
                        c
                    } else {
                        let c = levels.len() as u32;
                        levels.push(s.to_string());
                        lookup.insert(s.to_string(), c);
                        c
                    }
                })
            })
            .collect();
        CategoricalColumn { levels, codes }
    }

    /// Convenience constructor where `None` entries are missing.
    pub fn from_strs(values: &[Option<&str>]) -> Self {
        Self::from_values(values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Dictionary of non-missing levels.
    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn codes(&self) -> &[Option<u32>] {
        &self.codes
    }

    pub fn get(&self, row: usize) -> Option<&str> {
        self.codes[row].map(|c| self.levels[c as usize].as_str())
    }

    pub fn level(&self, row: usize) -> Level {
        self.get(row)
            .map_or(Level::Missing, |s| Level::Value(s.to_string()))
    }

    /// Number of dense slots: one per dictionary level plus one for missing.
    pub fn slot_count(&self) -> usize {
        self.levels.len() + 1
    }

    /// Dense slot of a row: the level code, or `levels().len()` when missing.
    pub fn slot(&self, row: usize) -> usize {
        self.codes[row].map_or(self.levels.len(), |c| c as usize)
    }

    pub fn slot_level(&self, slot: usize) -> Level {
        if slot == self.levels.len() {
            Level::Missing
        } else {
            Level::Value(self.levels[slot].clone())
        }
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self::from_values(rows.iter().map(|&r| self.get(r)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(NumericColumn),
    Categorical(CategoricalColumn),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(c) => c.len(),
            Column::Categorical(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn as_numeric(&self) -> Option<&NumericColumn> {
        match self {
            Column::Numeric(c) => Some(c),
            Column::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&CategoricalColumn> {
        match self {
            Column::Categorical(c) => Some(c),
            Column::Numeric(_) => None,
        }
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        match self {
            Column::Numeric(c) => Column::Numeric(c.select(rows)),
            Column::Categorical(c) => Column::Categorical(c.select(rows)),
        }
    }

    fn cell_token(&self, row: usize) -> String {
        match self {
            Column::Numeric(c) => c
                .get(row)
                .map_or_else(|| NA_TOKEN.to_string(), format_float),
            Column::Categorical(c) => c.get(row).unwrap_or(NA_TOKEN).to_string(),
        }
    }
}

impl From<NumericColumn> for Column {
    fn from(c: NumericColumn) -> Self {
        Column::Numeric(c)
    }
}

impl From<CategoricalColumn> for Column {
    fn from(c: CategoricalColumn) -> Self {
        Column::Categorical(c)
    }
}

/// Ordered collection of equally long, uniquely named columns.
#[derive(Clone, Debug, Default)]
pub struct Frame {
    names: Vec<String>,
    columns: Vec<Column>,
    index: HashMap<String, usize>,
    nrows: usize,
}

impl Frame {
    pub fn new(nrows: usize) -> Self {
        Frame {
            nrows,
            ..Default::default()
        }
    }

    /// Builds a frame from named columns; the row count comes from the first
    /// column (zero rows when there are no columns).
    pub fn from_columns<S: Into<String>>(columns: Vec<(S, Column)>) -> Result<Self> {
        let nrows = columns.first().map_or(0, |(_, c)| c.len());
        let mut frame = Frame::new(nrows);
        for (name, col) in columns {
            frame.push_column(name, col)?;
        }
        Ok(frame)
    }

    pub fn push_column(
        &mut self,
        name: impl Into<String>,
        column: impl Into<Column>,
    ) -> Result<()> {
        let name = name.into();
        let column = column.into();
        if name.is_empty() {
            return Err(Error::InvalidColumnName(name));
        }
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateColumn(name));
        }
        if column.len() != self.nrows {
            return Err(Error::ColumnLength {
                name,
                expected: self.nrows,
                found: column.len(),
            });
        }
        self.index.insert(name.clone(), self.columns.len());
        self.names.push(name);
        self.columns.push(column);
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.names.iter().map(String::as_str).zip(&self.columns)
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.index.get(name).map(|&i| &self.columns[i])
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.get(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&NumericColumn> {
        let col = self.column(name)?;
        col.as_numeric().ok_or(Error::ColumnKind {
            name: name.to_string(),
            expected: "numeric",
            found: "categorical",
        })
    }

    pub fn categorical(&self, name: &str) -> Result<&CategoricalColumn> {
        let col = self.column(name)?;
        col.as_categorical().ok_or(Error::ColumnKind {
            name: name.to_string(),
            expected: "categorical",
            found: "numeric",
        })
    }

    /// Row subset, in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> Frame {
        Frame {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            index: self.index.clone(),
            nrows: rows.len(),
        }
    }
}

impl PartialEq for Frame {
    fn eq(&self, other: &Self) -> bool {
        self.nrows == other.nrows && self.names == other.names && self.columns == other.columns
    }
}

/// Mean of the unmasked values and the number of masked ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub bad_count: usize,
    /// Set when no value is usable; `mean` is then reported as 0.
    pub all_bad: bool,
}

pub fn column_stats(col: &NumericColumn) -> ColumnStats {
    let (sum, n) = col
        .values
        .iter()
        .zip(&col.bad)
        .filter(|(_, &bad)| !bad)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    let bad_count = col.len() - n;
    if n == 0 {
        ColumnStats {
            mean: 0.0,
            bad_count,
            all_bad: true,
        }
    } else {
        ColumnStats {
            mean: sum / n as f64,
            bad_count,
            all_bad: false,
        }
    }
}

/// Per-column overrides for CSV ingestion.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ColumnKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_tokens: Option<Vec<String>>,
}

/// Declared column kinds and missing tokens. Columns not listed are inferred.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub missing_tokens: Vec<String>,
    pub columns: BTreeMap<String, ColumnSchema>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            missing_tokens: DEFAULT_MISSING_TOKENS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            columns: BTreeMap::new(),
        }
    }
}

impl Schema {
    pub fn with_kind(mut self, column: impl Into<String>, kind: ColumnKind) -> Self {
        self.columns.entry(column.into()).or_default().kind = Some(kind);
        self
    }

    /// Reads a schema file: a JSON object mapping column names to
    /// `{"kind": "numeric"|"categorical", "missing_tokens": [...]}`.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let columns: BTreeMap<String, ColumnSchema> =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Ok(Schema {
            columns,
            ..Default::default()
        })
    }

    fn tokens_for(&self, column: &str) -> &[String] {
        self.columns
            .get(column)
            .and_then(|c| c.missing_tokens.as_deref())
            .unwrap_or(&self.missing_tokens)
    }

    fn kind_for(&self, column: &str) -> Option<ColumnKind> {
        self.columns.get(column).and_then(|c| c.kind)
    }
}

/// Parses a numeric token. Finite decimal or scientific numbers parse to
/// themselves; `Inf`, `-Inf`, `NaN` (and overflowing literals) parse to a
/// non-finite value that the column will mask.
pub fn parse_numeric(token: &str) -> Option<f64> {
    token.trim().parse::<f64>().ok()
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn read_csv(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<Frame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, schema)
}

pub fn read_csv_from<R: Read>(reader: R, schema: Option<&Schema>) -> Result<Frame> {
    let default_schema = Schema::default();
    let schema = schema.unwrap_or(&default_schema);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Schema("missing header row".into()));
    }
    {
        let mut seen = std::collections::HashSet::new();
        for h in &headers {
            if h.is_empty() {
                return Err(Error::InvalidColumnName(h.clone()));
            }
            if !seen.insert(h.as_str()) {
                return Err(Error::DuplicateColumn(h.clone()));
            }
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            // 1-based data row; the header is row 0
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            cells[j].push(field.to_string());
        }
    }

    let nrows = cells.first().map_or(0, Vec::len);
    let mut frame = Frame::new(nrows);
    for (name, tokens) in headers.into_iter().zip(cells) {
        let missing = schema.tokens_for(&name);
        let is_missing = |t: &str| missing.iter().any(|m| m == t);
        let kind = match schema.kind_for(&name) {
            Some(k) => k,
            None => {
                let numeric = tokens
                    .iter()
                    .filter(|t| !is_missing(t))
                    .all(|t| parse_numeric(t).is_some());
                if numeric {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical
                }
            }
        };
        let column = match kind {
            ColumnKind::Numeric => {
                let mut values = Vec::with_capacity(tokens.len());
                for (row, t) in tokens.iter().enumerate() {
                    if is_missing(t) {
                        values.push(f64::NAN);
                    } else {
                        let v = parse_numeric(t).ok_or_else(|| {
                            Error::Schema(format!(
                                "column {name:?} row {}: {t:?} is not numeric",
                                row + 1
                            ))
                        })?;
                        values.push(v);
                    }
                }
                Column::Numeric(NumericColumn::new(values))
            }
            ColumnKind::Categorical => {
                Column::Categorical(CategoricalColumn::from_values(tokens.iter().map(|t| {
                    if is_missing(t) {
                        None
                    } else {
                        Some(t.as_str())
                    }
                })))
            }
        };
        frame.push_column(name, column)?;
    }
    Ok(frame)
}

pub fn write_csv(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv_to(frame, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a frame as CSV. Bad numeric cells and missing levels become `NA`.
pub fn write_csv_to<W: Write>(frame: &Frame, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(frame.names())?;
    let mut record = Vec::with_capacity(frame.ncols());
    for row in 0..frame.nrows() {
        record.clear();
        record.extend(frame.columns.iter().map(|c| c.cell_token(row)));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Frame> {
        read_csv_from(text.as_bytes(), None)
    }

    #[test]
    fn na_in_numeric_column_is_masked() {
        let f = read("x,z,y\na,0,TRUE\na,1,TRUE\nb,2,FALSE\nb,NA,TRUE\nNA,4,TRUE\n").unwrap();
        let z = f.numeric("z").unwrap();
        assert_eq!(z.bad_mask(), &[false, false, false, true, false]);
        let x = f.categorical("x").unwrap();
        assert_eq!(x.get(4), None);
        assert_eq!(x.levels(), &["a", "b"]);
        assert!(f.categorical("y").is_ok());
    }

    #[test]
    fn header_only_gives_empty_frame() {
        let f = read("a,b\n").unwrap();
        assert_eq!(f.nrows(), 0);
        assert_eq!(f.ncols(), 2);
    }

    #[test]
    fn one_bad_token_makes_column_categorical() {
        let f = read("v\n1\n2\noops\n").unwrap();
        let v = f.categorical("v").unwrap();
        assert_eq!(v.levels().len(), 3);
    }

    #[test]
    fn inf_and_nan_tokens_are_numeric_but_bad() {
        let f = read("v\n1\nInf\n-Inf\nNaN\n2.5e1\n").unwrap();
        let v = f.numeric("v").unwrap();
        assert_eq!(v.bad_mask(), &[false, true, true, true, false]);
        assert_eq!(v.get(4), Some(25.0));
        assert!(v
            .values()
            .iter()
            .zip(v.bad_mask())
            .all(|(x, &b)| b || x.is_finite()));
    }

    #[test]
    fn ragged_row_reports_row_number() {
        let err = read("a,b\n1,2\n3\n").unwrap_err();
        assert!(matches!(
            err,
            Error::RaggedRow {
                row: 2,
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(matches!(read("a,a\n1,2\n"), Err(Error::DuplicateColumn(_))));
    }

    #[test]
    fn schema_forces_kind_and_tokens() {
        let schema = Schema::from_json_str(
            r#"{"zip": {"kind": "categorical"}, "v": {"missing_tokens": ["?"]}}"#,
        )
        .unwrap();
        let f = read_csv_from("zip,v\n01,?\n02,3\n".as_bytes(), Some(&schema)).unwrap();
        assert_eq!(f.categorical("zip").unwrap().levels(), &["01", "02"]);
        assert_eq!(f.numeric("v").unwrap().bad_mask(), &[true, false]);
        let forced = Schema::default().with_kind("zip", ColumnKind::Numeric);
        assert!(read_csv_from("zip\nabc\n".as_bytes(), Some(&forced)).is_err());
    }

    #[test]
    fn column_stats_cases() {
        let z = NumericColumn::from_options([Some(0.0), Some(1.0), Some(2.0), None, Some(4.0)]);
        let s = column_stats(&z);
        assert_eq!(s.mean, 1.75);
        assert_eq!(s.bad_count, 1);
        assert!(!s.all_bad);

        let all_bad = NumericColumn::new(vec![f64::NAN, f64::INFINITY]);
        let s = column_stats(&all_bad);
        assert_eq!((s.mean, s.bad_count, s.all_bad), (0.0, 2, true));

        let one = NumericColumn::new(vec![5.0]);
        assert_eq!(column_stats(&one).mean, 5.0);
        assert_eq!(column_stats(&one).bad_count, 0);
    }

    #[test]
    fn write_emits_na_and_header_only() {
        let empty =
            Frame::from_columns(vec![("a", Column::Numeric(NumericColumn::new(vec![])))]).unwrap();
        let mut out = Vec::new();
        write_csv_to(&empty, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a\n");

        let f = Frame::from_columns(vec![
            (
                "n",
                Column::Numeric(NumericColumn::new(vec![0.1, f64::NAN])),
            ),
            (
                "c",
                Column::Categorical(CategoricalColumn::from_strs(&[Some("q"), None])),
            ),
        ])
        .unwrap();
        let mut out = Vec::new();
        write_csv_to(&f, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "n,c\n0.1,q\nNA,NA\n");
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e300, -2.5e-12, 123456789.125, 0.0, -0.0] {
            assert_eq!(
                format_float(v).parse::<f64>().unwrap().to_bits(),
                v.to_bits()
            );
        }
    }

    #[test]
    fn frame_rejects_bad_columns() {
        let mut f = Frame::new(2);
        assert!(f
            .push_column("", NumericColumn::new(vec![1.0, 2.0]))
            .is_err());
        assert!(f.push_column("a", NumericColumn::new(vec![1.0])).is_err());
        f.push_column("a", NumericColumn::new(vec![1.0, 2.0]))
            .unwrap();
        assert!(f
            .push_column("a", NumericColumn::new(vec![1.0, 2.0]))
            .is_err());
    }
}
