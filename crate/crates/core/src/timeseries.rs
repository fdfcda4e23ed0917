//! The aligned data matrix and the time-shift interpolation behind the
//! quadrature library.
//!
//! A [`TimeSeriesTable`] holds `n` named columns sampled on the uniform grid
//! `t_i = t0 + i·dt`, `i = 0..m`. Time is measured in months; calendar
//! months map to consecutive integers via [`YearMonth::index`].

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative distance under which a shifted position is treated as landing on
/// a grid point.
const GRID_SNAP: f64 = 1e-9;

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Parameter(format!("month {month} outside 1..=12")));
        }
        Ok(YearMonth { year, month })
    }

    /// Consecutive integer index, `year·12 + month − 1`.
    pub fn index(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    pub fn from_index(index: i64) -> Self {
        YearMonth {
            year: index.div_euclid(12) as i32,
            month: index.rem_euclid(12) as u32 + 1,
        }
    }

    /// Parses `YYYY-MM`.
    pub fn parse(text: &str) -> Option<Self> {
        let (year, month) = text.trim().split_once('-')?;
        if year.len() != 4 || month.len() != 2 {
            return None;
        }
        let year = year.parse().ok()?;
        let month = month.parse().ok()?;
        YearMonth::new(year, month).ok()
    }

    pub fn days(self) -> u32 {
        match self.month {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            _ if is_leap(self.year) => 29,
            _ => 28,
        }
    }

    pub fn succ(self) -> Self {
        YearMonth::from_index(self.index() + 1)
    }
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// Uniformly sampled multivariate series with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesTable {
    t0: f64,
    dt: f64,
    /// When set, `t0` is a [`YearMonth::index`] and `dt` is one month.
    calendar: bool,
    columns: Vec<Column>,
}

impl TimeSeriesTable {
    /// Builds a table whose row `i` sits at `t0 + i·dt`.
    pub fn new<S: Into<String>>(series: Vec<(S, Vec<f64>)>, t0: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Parameter(format!("sampling step must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::Parameter("time origin must be finite".into()));
        }
        let columns: Vec<Column> = series
            .into_iter()
            .map(|(name, values)| Column { name: name.into(), values })
            .collect();
        let Some(first) = columns.first() else {
            return Err(Error::Dimension("table needs at least one column".into()));
        };
        let m = first.values.len();
        if m < 2 {
            return Err(Error::Dimension(format!("columns need at least 2 rows, got {m}")));
        }
        let mut seen = HashSet::new();
        for column in &columns {
            if column.values.len() != m {
                return Err(Error::Dimension(format!(
                    "column `{}` has {} rows, expected {m}",
                    column.name,
                    column.values.len()
                )));
            }
            if column.name.is_empty() || column.name == "t" {
                return Err(Error::Schema(format!("invalid column name `{}`", column.name)));
            }
            if !seen.insert(column.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", column.name)));
            }
        }
        Ok(TimeSeriesTable { t0, dt, calendar: false, columns })
    }

    /// Monthly table starting at `start`.
    pub fn monthly<S: Into<String>>(series: Vec<(S, Vec<f64>)>, start: YearMonth) -> Result<Self> {
        let mut table = Self::new(series, start.index() as f64, 1.0)?;
        table.calendar = true;
        Ok(table)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_calendar(&self) -> bool {
        self.calendar
    }

    /// First calendar month, for calendar tables.
    pub fn start_month(&self) -> Option<YearMonth> {
        self.calendar.then(|| YearMonth::from_index(self.t0 as i64))
    }

    /// Calendar month of row `i`, for calendar tables.
    pub fn month_of(&self, row: usize) -> Option<YearMonth> {
        self.start_month().map(|start| YearMonth::from_index(start.index() + row as i64))
    }

    /// Number of snapshots `m`.
    pub fn len(&self) -> usize {
        self.columns[0].values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn time(&self, row: usize) -> f64 {
        self.t0 + row as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))
    }

    /// First row whose time minus `delay` does not precede `t0`.
    pub fn first_valid_row(&self, delay: f64) -> usize {
        let lag = delay / self.dt;
        let nearest = lag.round();
        if (lag - nearest).abs() <= GRID_SNAP * nearest.max(1.0) {
            nearest as usize
        } else {
            lag.ceil() as usize
        }
    }

    /// Piecewise-linear interpolant of `name` at `t_i − delay` for every row
    /// where that time lies inside the sampled range.
    pub fn shift(&self, name: &str, delay: f64) -> Result<ShiftedView> {
        let values = self.column(name)?;
        if !(delay >= 0.0) || !delay.is_finite() {
            return Err(Error::Parameter(format!("delay must be a nonnegative number, got {delay}")));
        }
        let lag = delay / self.dt;
        // an empty view sits at the end of the table
        let first_row = self.first_valid_row(delay).min(values.len());
        let shifted = (first_row..values.len())
            .map(|row| interpolate_index(values, row as f64 - lag))
            .collect();
        Ok(ShiftedView { source: name.to_string(), delay, first_row, values: shifted })
    }

    /// Splits into the first `n_train` rows and the remainder.
    pub fn split(&self, n_train: usize) -> Result<(Self, Self)> {
        let m = self.len();
        if n_train == 0 || n_train >= m {
            return Err(Error::Parameter(format!("n_train must lie in 1..{m}, got {n_train}")));
        }
        let head = self.slice_rows(0, n_train);
        let tail = self.slice_rows(n_train, m);
        Ok((head, tail))
    }

    /// Rows `start..end` as a table with its origin moved to `t_start`.
    ///
    /// Unlike [`TimeSeriesTable::new`] a single-row slice is allowed here so
    /// that splits may leave one validation row.
    fn slice_rows(&self, start: usize, end: usize) -> Self {
        TimeSeriesTable {
            t0: self.time(start),
            dt: self.dt,
            calendar: self.calendar,
            columns: self
                .columns
                .iter()
                .map(|c| Column { name: c.name.clone(), values: c.values[start..end].to_vec() })
                .collect(),
        }
    }

    /// Appends `other`, which must continue this table's grid with the same
    /// columns in the same order.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.column_names() != other.column_names() {
            return Err(Error::Schema("tables have different columns".into()));
        }
        let expected = self.time(self.len());
        let tol = 1e-9 * expected.abs().max(1.0);
        if (self.dt - other.dt).abs() > 1e-12 * self.dt || (other.t0 - expected).abs() > tol {
            return Err(Error::Parameter("tables are not contiguous on one grid".into()));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| {
                let mut values = a.values.clone();
                values.extend_from_slice(&b.values);
                Column { name: a.name.clone(), values }
            })
            .collect();
        Ok(TimeSeriesTable { t0: self.t0, dt: self.dt, calendar: self.calendar, columns })
    }

    /// A table with only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let columns = names
            .iter()
            .map(|name| Ok(Column { name: name.to_string(), values: self.column(name)?.to_vec() }))
            .collect::<Result<Vec<_>>>()?;
        Ok(TimeSeriesTable { t0: self.t0, dt: self.dt, calendar: self.calendar, columns })
    }

    /// Same grid, column `name` replaced (or appended) with `values`.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Dimension(format!(
                "column `{name}` has {} rows, expected {}",
                values.len(),
                self.len()
            )));
        }
        let mut table = self.clone();
        match table.column_index(name) {
            Some(i) => table.columns[i].values = values,
            None => table.columns.push(Column { name: name.to_string(), values }),
        }
        Ok(table)
    }
}

/// Linear interpolation at fractional index `position` in `[0, len − 1]`.
/// Positions within [`GRID_SNAP`] of an integer return the stored sample.
pub(crate) fn interpolate_index(values: &[f64], position: f64) -> f64 {
    let nearest = position.round();
    if (position - nearest).abs() <= GRID_SNAP {
        let i = (nearest.max(0.0) as usize).min(values.len() - 1);
        return values[i];
    }
    let lower = position.floor().max(0.0) as usize;
    if lower + 1 >= values.len() {
        return values[values.len() - 1];
    }
    let frac = position - lower as f64;
    values[lower] + frac * (values[lower + 1] - values[lower])
}

/// A column evaluated at `t_i − delay` on the rows where that is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedView {
    pub source: String,
    pub delay: f64,
    /// First valid row; the valid range is `first_row..m`.
    pub first_row: usize,
    pub values: Vec<f64>,
}

impl ShiftedView {
    pub fn valid_range(&self) -> std::ops::Range<usize> {
        self.first_row..self.first_row + self.values.len()
    }

    /// Value at table row `row`, if that row is valid.
    pub fn get(&self, row: usize) -> Option<f64> {
        row.checked_sub(self.first_row).and_then(|i| self.values.get(i).copied())
    }
}
