use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ForecastError;

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, 1).map(|_| Self { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since year 0.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + self.month as i64 - 1
    }

    pub fn from_ordinal(n: i64) -> Self {
        Self {
            year: n.div_euclid(12) as i32,
            month: n.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    pub fn succ(self) -> Self {
        self.offset(1)
    }

    /// Inclusive count of months from `self` to `end`.
    pub fn months_until(self, end: Month) -> i64 {
        end.ordinal() - self.ordinal() + 1
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("expected YYYY-MM, got {s:?}");
        if s.len() != 7 || s.as_bytes()[4] != b'-' {
            return Err(bad());
        }
        let d = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d").map_err(|_| bad())?;
        Ok(Self {
            year: d.year(),
            month: d.month(),
        })
    }
}

impl Serialize for Month {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Monthly series aligned on a gap-free run of months.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    start: Month,
    len: usize,
    names: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
}

impl TimeSeriesPanel {
    pub fn new(start: Month, len: usize) -> Self {
        Self {
            start,
            len,
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add_column(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<(), ForecastError> {
        if values.len() != self.len {
            return Err(ForecastError::Config(format!(
                "column {name:?} has {} values for {} months",
                values.len(),
                self.len
            )));
        }
        if self.names.iter().any(|n| n == name) {
            return Err(ForecastError::Config(format!("duplicate column {name:?}")));
        }
        if let Some(v) = values.iter().flatten().find(|v| !v.is_finite()) {
            return Err(ForecastError::NonFinite(format!("column {name:?} holds {v}")));
        }
        self.names.push(name.to_string());
        self.values.push(values);
        Ok(())
    }

    pub fn start(&self) -> Month {
        self.start
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.len as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn months(&self) -> impl Iterator<Item = Month> + '_ {
        (0..self.len).map(|i| self.start.offset(i as i64))
    }

    pub fn month_at(&self, index: usize) -> Month {
        self.start.offset(index as i64)
    }

    pub fn index_of(&self, month: Month) -> Option<usize> {
        let i = month.ordinal() - self.start.ordinal();
        (0..self.len as i64).contains(&i).then_some(i as usize)
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i].as_slice())
    }

    pub fn value(&self, name: &str, month: Month) -> Option<f64> {
        self.column(name)?.get(self.index_of(month)?).copied().flatten()
    }

    /// Indices of missing cells strictly between the first and last
    /// observation of a column.
    pub fn interior_gaps(&self, name: &str) -> Vec<usize> {
        let Some(col) = self.column(name) else {
            return Vec::new();
        };
        let first = col.iter().position(Option::is_some);
        let last = col.iter().rposition(Option::is_some);
        match (first, last) {
            (Some(a), Some(b)) => (a..=b).filter(|&i| col[i].is_none()).collect(),
            _ => Vec::new(),
        }
    }

    /// Outer join on months. Shared columns must agree wherever both are
    /// observed; the other side fills cells missing on this side.
    pub fn join(&self, other: &TimeSeriesPanel) -> Result<TimeSeriesPanel, ForecastError> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        let start = self.start.min(other.start);
        let end = self.end().max(other.end());
        let len = start.months_until(end) as usize;
        let mut out = TimeSeriesPanel::new(start, len);
        let mut order: Vec<&String> = self.names.iter().collect();
        order.extend(other.names.iter().filter(|n| !self.names.contains(n)));
        for name in order {
            let mut col = vec![None; len];
            for (panel, side) in [(self, "left"), (other, "right")] {
                let Some(src) = panel.column(name) else { continue };
                let shift = (panel.start.ordinal() - start.ordinal()) as usize;
                for (i, v) in src.iter().enumerate() {
                    let Some(v) = v else { continue };
                    match col[shift + i] {
                        Some(prev) if prev != *v => {
                            return Err(ForecastError::Config(format!(
                                "column {name:?} disagrees at {} ({side} has {v}, other has {prev})",
                                start.offset((shift + i) as i64)
                            )))
                        }
                        _ => col[shift + i] = Some(*v),
                    }
                }
            }
            out.add_column(name, col)?;
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ForecastError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| ForecastError::Csv {
            line: 0,
            message: e.to_string(),
        };
        let mut header = vec!["month".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, m) in self.months().enumerate() {
            let mut rec = vec![m.to_string()];
            rec.extend(
                self.values
                    .iter()
                    .map(|c| c[i].map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_panel(path: &Path) -> Result<TimeSeriesPanel, ForecastError> {
    let file = std::fs::File::open(path).map_err(|e| ForecastError::Path {
        path: path.display().to_string(),
        source: e,
    })?;
    read_panel(file)
}

pub fn read_panel<R: Read>(input: R) -> Result<TimeSeriesPanel, ForecastError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| ForecastError::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.get(0) != Some("month") {
        return Err(ForecastError::Csv {
            line: 1,
            message: "first column must be `month`".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut months: Vec<Month> = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for rec in reader.records() {
        let rec = rec.map_err(|e| ForecastError::Csv {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let month: Month = rec[0]
            .parse()
            .map_err(|message| ForecastError::Csv { line, message })?;
        if let Some(&prev) = months.last() {
            if month == prev {
                return Err(ForecastError::DuplicateMonth(month));
            }
            if month < prev {
                return Err(ForecastError::Unordered { prev, next: month });
            }
            if month != prev.succ() {
                return Err(ForecastError::MonthGap { prev, next: month });
            }
        }
        months.push(month);
        for (j, col) in columns.iter_mut().enumerate() {
            let cell = rec.get(j + 1).unwrap_or("");
            col.push(if cell.is_empty() {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| ForecastError::Csv {
                    line,
                    message: format!("column {:?}: not a number: {cell:?}", names[j]),
                })?;
                if !v.is_finite() {
                    return Err(ForecastError::Csv {
                        line,
                        message: format!("column {:?}: non-finite value", names[j]),
                    });
                }
                Some(v)
            });
        }
    }
    let Some(&start) = months.first() else {
        return Err(ForecastError::Csv {
            line: 1,
            message: "panel has no rows".into(),
        });
    };
    let mut panel = TimeSeriesPanel::new(start, months.len());
    for (name, col) in names.iter().zip(columns) {
        panel.add_column(name, col)?;
    }
    Ok(panel)
}

/// Direct forecast of `target` at `t + horizon` from lags `t - lags ..= t`
/// of every feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTask {
    pub target: String,
    pub horizon: usize,
    pub lags: usize,
    pub features: Vec<String>,
    /// Share of usable rows, taken from the end, held out for testing.
    pub test_fraction: f64,
}

impl ForecastTask {
    pub fn new(target: &str, horizon: usize, features: Vec<String>) -> Self {
        Self {
            target: target.to_string(),
            horizon,
            lags: 3,
            features,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub feature: String,
    /// Months before the row month.
    pub lag: usize,
}

impl fmt::Display for DesignColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lag == 0 {
            write!(f, "{}[t]", self.feature)
        } else {
            write!(f, "{}[t-{}]", self.feature, self.lag)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// Month `t` of each row.
    pub months: Vec<Month>,
    pub horizon: usize,
    pub columns: Vec<DesignColumn>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.months.len()
    }

    /// Month the value in column `col` of row `row` was observed.
    pub fn source_month(&self, row: usize, col: usize) -> Month {
        self.months[row].offset(-(self.columns[col].lag as i64))
    }

    /// Month of the target value in row `row`.
    pub fn target_month(&self, row: usize) -> Month {
        self.months[row].offset(self.horizon as i64)
    }

    /// Rows whose month is in `keep`, order preserved.
    pub fn select_months(&self, keep: &BTreeSet<Month>) -> DesignMatrix {
        let idx: Vec<usize> = (0..self.rows()).filter(|&i| keep.contains(&self.months[i])).collect();
        self.select_rows(&idx)
    }

    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            x: self.x.select(ndarray::Axis(0), idx),
            y: self.y.select(ndarray::Axis(0), idx),
            months: idx.iter().map(|&i| self.months[i]).collect(),
            horizon: self.horizon,
            columns: self.columns.clone(),
        }
    }

    /// Chronological split with the last `ceil(fraction * rows)` rows held out.
    pub fn split(&self, fraction: f64) -> (DesignMatrix, DesignMatrix) {
        let n = self.rows();
        let test = ((fraction * n as f64).ceil() as usize).min(n);
        let train: Vec<usize> = (0..n - test).collect();
        let held: Vec<usize> = (n - test..n).collect();
        (self.select_rows(&train), self.select_rows(&held))
    }
}

/// One row per month `t` at which every lag of every feature and the
/// target at `t + horizon` are observed. Columns run feature by feature,
/// oldest lag first.
pub fn build_design_matrix(
    panel: &TimeSeriesPanel,
    task: &ForecastTask,
) -> Result<DesignMatrix, ForecastError> {
    if task.horizon == 0 {
        return Err(ForecastError::Config("horizon must be at least 1".into()));
    }
    let col = |name: &str| {
        panel
            .column(name)
            .ok_or_else(|| ForecastError::UnknownColumn(name.to_string()))
    };
    let target = col(&task.target)?;
    let features: Vec<&[Option<f64>]> = task.features.iter().map(|f| col(f)).collect::<Result<_, _>>()?;
    let columns: Vec<DesignColumn> = task
        .features
        .iter()
        .flat_map(|f| {
            (0..=task.lags).rev().map(move |lag| DesignColumn {
                feature: f.clone(),
                lag,
            })
        })
        .collect();

    let mut rows: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    let mut months = Vec::new();
    let n = panel.len();
    for t in task.lags..n.saturating_sub(task.horizon) {
        let Some(target) = target[t + task.horizon] else { continue };
        let start = rows.len();
        let complete = features.iter().all(|f| {
            (t - task.lags..=t).all(|s| match f[s] {
                Some(v) => {
                    rows.push(v);
                    true
                }
                None => false,
            })
        });
        if !complete {
            rows.truncate(start);
            continue;
        }
        y.push(target);
        months.push(panel.month_at(t));
    }
    if months.is_empty() {
        return Err(ForecastError::NoUsableRows {
            target: task.target.clone(),
            horizon: task.horizon,
        });
    }
    let x = Array2::from_shape_vec((months.len(), columns.len()), rows)
        .expect("row-major buffer sized by construction");
    Ok(DesignMatrix {
        x,
        y: Array1::from(y),
        months,
        horizon: task.horizon,
        columns,
    })
}

/// Alias table mapping graph entities to panel columns.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasMap {
    map: BTreeMap<String, Vec<String>>,
}

impl AliasMap {
    pub fn new<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: Into<String>,
    {
        let mut m = Self::default();
        for (a, b) in pairs {
            m.insert(a.as_ref(), b.into());
        }
        m
    }

    pub fn insert(&mut self, entity: &str, column: String) {
        let cols = self.map.entry(crate::text::entity_key(entity)).or_default();
        if !cols.contains(&column) {
            cols.push(column);
        }
    }

    /// Columns for `entity`; an exact column name match stands in when
    /// the table has no entry.
    pub fn columns<'a>(&'a self, entity: &str, panel: &'a TimeSeriesPanel) -> Vec<&'a str> {
        match self.map.get(&crate::text::entity_key(entity)) {
            Some(cols) => cols
                .iter()
                .filter(|c| panel.column(c).is_some())
                .map(String::as_str)
                .collect(),
            None => panel
                .column_names()
                .iter()
                .filter(|c| crate::text::entity_key(c) == crate::text::entity_key(entity))
                .map(String::as_str)
                .collect(),
        }
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, ForecastError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = reader.headers().map_err(|e| ForecastError::Csv {
            line: 1,
            message: e.to_string(),
        })?;
        if header.iter().collect::<Vec<_>>() != ["entity", "column"] {
            return Err(ForecastError::Csv {
                line: 1,
                message: "alias header must be `entity,column`".into(),
            });
        }
        let mut m = Self::default();
        for rec in reader.records() {
            let rec = rec.map_err(|e| ForecastError::Csv {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            m.insert(&rec[0], rec[1].to_string());
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ForecastError> {
        let file = std::fs::File::open(path).map_err(|e| ForecastError::Path {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ForecastError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| ForecastError::Csv {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(["entity", "column"]).map_err(csv_err)?;
        for (e, cols) in &self.map {
            for c in cols {
                w.write_record([e, c]).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
