//! Weather and case inputs: ISD-lite hourly files, monthly case CSVs,
//! monthly aggregation, alignment, and the canonical table format.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{TimeSeriesTable, YearMonth};

/// ISD-lite missing-value sentinel.
pub const MISSING: i64 = -9999;

/// Shortest span, in months, that [`align`] accepts.
pub const MIN_OVERLAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlyRecord {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    /// °C; `None` for the sentinel.
    pub air_temp: Option<f64>,
}

/// Records plus the lines that could not be read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IsdParse {
    pub records: Vec<HourlyRecord>,
    /// 1-based line number and reason.
    pub malformed: Vec<(usize, String)>,
}

fn parse_isd_line(line: &str) -> std::result::Result<HourlyRecord, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 5 {
        return Err(format!("expected at least 5 fields, found {}", fields.len()));
    }
    let int = |i: usize, name: &str| fields[i].parse::<i64>().map_err(|_| format!("bad {name} `{}`", fields[i]));
    let year = int(0, "year")?;
    let month = int(1, "month")?;
    let day = int(2, "day")?;
    let hour = int(3, "hour")?;
    let tenths = int(4, "air temperature")?;
    if !(1..=9999).contains(&year) {
        return Err(format!("year {year} out of range"));
    }
    let ym = YearMonth::new(year as i32, month.clamp(0, 13) as u32).map_err(|_| format!("month {month} out of range"))?;
    if !(1..=ym.days() as i64).contains(&day) {
        return Err(format!("day {day} out of range for {ym}"));
    }
    if !(0..=23).contains(&hour) {
        return Err(format!("hour {hour} out of range"));
    }
    let air_temp = if tenths == MISSING { None } else { Some(tenths as f64 / 10.0) };
    Ok(HourlyRecord { year: year as i32, month: month as u32, day: day as u32, hour: hour as u32, air_temp })
}

/// Reads ISD-lite lines (year, month, day, hour, air temperature in tenths
/// of °C, further fields ignored). Blank lines are skipped; malformed lines
/// are collected, and more than half malformed is a format error.
pub fn parse_isdlite<R: BufRead>(reader: R) -> Result<IsdParse> {
    let mut out = IsdParse::default();
    let mut total = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match parse_isd_line(&line) {
            Ok(record) => out.records.push(record),
            Err(reason) => out.malformed.push((i + 1, reason)),
        }
    }
    if 2 * out.malformed.len() > total {
        let (line, reason) = &out.malformed[0];
        return Err(Error::format(format!(
            "{} of {total} lines are malformed (first at line {line}: {reason})",
            out.malformed.len()
        )));
    }
    Ok(out)
}

/// Opens `path`, transparently decompressing gzip (detected by magic bytes).
pub fn open_maybe_gzip(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = BufReader::new(File::open(path)?);
    let magic = file.fill_buf()?;
    if magic.len() >= 2 && magic[0] == 0x1f && magic[1] == 0x8b {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(file))
    }
}

pub fn read_isdlite_file(path: &Path) -> Result<IsdParse> {
    parse_isdlite(open_maybe_gzip(path)?)
}

/// Consecutive months; gaps are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub start: YearMonth,
    pub values: Vec<Option<f64>>,
    /// Fraction of the month's hours with a reading (1 or 0 for counts).
    pub coverage: Vec<f64>,
}

impl MonthlySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn month(&self, i: usize) -> YearMonth {
        YearMonth::from_index(self.start.index() + i as i64)
    }

    pub fn end(&self) -> YearMonth {
        self.month(self.len().saturating_sub(1))
    }

    pub fn get(&self, month: YearMonth) -> Option<f64> {
        let offset = month.index() - self.start.index();
        if offset < 0 {
            return None;
        }
        self.values.get(offset as usize).copied().flatten()
    }
}

/// Mean air temperature per calendar month; months below `min_coverage`
/// are missing. Values are summed in sorted order so that the result does
/// not depend on record order.
pub fn monthly_mean(records: &[HourlyRecord], min_coverage: f64) -> Result<MonthlySeries> {
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::Parameter(format!("min_coverage must lie in [0, 1], got {min_coverage}")));
    }
    let mut months: BTreeMap<i64, (Vec<f64>, HashSet<(u32, u32)>)> = BTreeMap::new();
    for r in records {
        let ym = YearMonth::new(r.year, r.month)?;
        let entry = months.entry(ym.index()).or_default();
        if let Some(v) = r.air_temp {
            entry.0.push(v);
            entry.1.insert((r.day, r.hour));
        }
    }
    let (Some(&first), Some(&last)) = (months.keys().next(), months.keys().next_back()) else {
        return Err(Error::InsufficientData("no hourly records".into()));
    };
    let n = (last - first + 1) as usize;
    let mut values = vec![None; n];
    let mut coverage = vec![0.0; n];
    for (index, (mut readings, hours)) in months {
        let i = (index - first) as usize;
        let hours_in_month = YearMonth::from_index(index).days() as f64 * 24.0;
        coverage[i] = hours.len() as f64 / hours_in_month;
        if !readings.is_empty() && coverage[i] >= min_coverage {
            readings.sort_by(f64::total_cmp);
            values[i] = Some(readings.iter().sum::<f64>() / readings.len() as f64);
        }
    }
    if values.iter().all(Option::is_none) {
        return Err(Error::InsufficientData("every month is below the coverage floor".into()));
    }
    Ok(MonthlySeries { start: YearMonth::from_index(first), values, coverage })
}

/// Monthly case counts from a `date,cases` CSV (`YYYY-MM`, nonnegative
/// integers). Absent months become missing.
pub fn load_cases_csv<R: Read>(reader: R) -> Result<MonthlySeries> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(|e| Error::format_at(1, e.to_string()))?.clone();
    if header.len() != 2 || &header[0] != "date" || &header[1] != "cases" {
        return Err(Error::format_at(1, format!("expected header `date,cases`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows: BTreeMap<i64, f64> = BTreeMap::new();
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::format_at(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::format_at(line, format!("expected 2 fields, found {}", record.len())));
        }
        let month = YearMonth::parse(&record[0])
            .ok_or_else(|| Error::format_at(line, format!("bad date `{}`, expected YYYY-MM", &record[0])))?;
        let cases: u64 = record[1].parse().map_err(|_| {
            if record[1].parse::<f64>().map(|v| v < 0.0).unwrap_or(false) {
                Error::format_at(line, format!("negative case count `{}`", &record[1]))
            } else {
                Error::format_at(line, format!("case count `{}` is not a nonnegative integer", &record[1]))
            }
        })?;
        if rows.insert(month.index(), cases as f64).is_some() {
            return Err(Error::format_at(line, format!("duplicate month {month}")));
        }
    }
    let (Some(&first), Some(&last)) = (rows.keys().next(), rows.keys().next_back()) else {
        return Err(Error::InsufficientData("case file has no rows".into()));
    };
    let values: Vec<Option<f64>> = (first..=last).map(|i| rows.get(&i).copied()).collect();
    let coverage = values.iter().map(|v| if v.is_some() { 1.0 } else { 0.0 }).collect();
    Ok(MonthlySeries { start: YearMonth::from_index(first), values, coverage })
}

pub fn load_cases_file(path: &Path) -> Result<MonthlySeries> {
    load_cases_csv(File::open(path)?)
}

/// Restricts every series to the longest run of months on which all of
/// them have values (earliest run on ties) and builds a monthly table.
pub fn align(series: &[(String, MonthlySeries)]) -> Result<TimeSeriesTable> {
    if series.is_empty() {
        return Err(Error::Parameter("nothing to align".into()));
    }
    let start = series.iter().map(|(_, s)| s.start.index()).max().unwrap();
    let end = series.iter().map(|(_, s)| s.end().index()).min().unwrap();
    let mut best: Option<(i64, i64)> = None;
    let mut run_start = None;
    for index in start..=end.max(start - 1) {
        let month = YearMonth::from_index(index);
        let clean = series.iter().all(|(_, s)| s.get(month).is_some());
        match (clean, run_start) {
            (true, None) => run_start = Some(index),
            (false, Some(s)) => {
                if best.map_or(true, |(a, b)| index - s > b - a) {
                    best = Some((s, index));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        if best.map_or(true, |(a, b)| end + 1 - s > b - a) {
            best = Some((s, end + 1));
        }
    }
    let (a, b) = best.unwrap_or((start, start));
    let length = (b - a).max(0) as usize;
    if length < MIN_OVERLAP {
        return Err(Error::InsufficientData(format!(
            "longest common clean span is {length} months; at least {MIN_OVERLAP} are needed"
        )));
    }
    let columns = series
        .iter()
        .map(|(name, s)| {
            (name.clone(), (a..b).map(|i| s.get(YearMonth::from_index(i)).expect("clean span")).collect())
        })
        .collect();
    TimeSeriesTable::monthly(columns, YearMonth::from_index(a))
}

/// Canonical delimited table: header `t,<columns…>`, then one row per
/// sample. Calendar tables write `t` as `YYYY-MM`; others write the time
/// value. Numbers use the shortest representation that reads back exactly.
pub fn write_table<W: Write>(table: &TimeSeriesTable, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend(table.column_names().iter().map(|s| s.to_string()));
    csv.write_record(&header).map_err(csv_io)?;
    for i in 0..table.len() {
        let mut row = Vec::with_capacity(table.n_columns() + 1);
        row.push(match table.month_of(i) {
            Some(month) => month.to_string(),
            None => format!("{}", table.time(i)),
        });
        for column in table.columns() {
            row.push(format!("{}", column.values[i]));
        }
        csv.write_record(&row).map_err(csv_io)?;
    }
    csv.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(format!("{other:?}")),
    }
}

/// Inverse of [`write_table`].
pub fn read_table<R: Read>(reader: R) -> Result<TimeSeriesTable> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv.headers().map_err(|e| Error::format_at(1, e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "t" {
        return Err(Error::format_at(1, "table header must start with `t` and name at least one column"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut stamps: Vec<(usize, String)> = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::format_at(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::format_at(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        stamps.push((line, record[0].to_string()));
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::format_at(line, format!("column `{}`: `{field}` is not a number", names[j])))?;
            columns[j].push(v);
        }
    }
    if stamps.len() < 2 {
        return Err(Error::InsufficientData(format!("table has {} rows; at least 2 are needed", stamps.len())));
    }
    let series: Vec<(String, Vec<f64>)> = names.into_iter().zip(columns).collect();
    if let Some(start) = YearMonth::parse(&stamps[0].1) {
        for (k, (line, stamp)) in stamps.iter().enumerate() {
            let expected = YearMonth::from_index(start.index() + k as i64);
            if YearMonth::parse(stamp) != Some(expected) {
                return Err(Error::format_at(*line, format!("expected month {expected}, found `{stamp}`")));
            }
        }
        return TimeSeriesTable::monthly(series, start);
    }
    let times = stamps
        .iter()
        .map(|(line, s)| s.trim().parse::<f64>().map_err(|_| Error::format_at(*line, format!("bad time `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let m = times.len();
    let dt = (times[m - 1] - times[0]) / (m - 1) as f64;
    for (k, t) in times.iter().enumerate() {
        let expected = times[0] + k as f64 * dt;
        if (t - expected).abs() > 1e-9 * dt.abs().max(expected.abs()) {
            return Err(Error::format_at(stamps[k].0, format!("time {t} is off the uniform grid")));
        }
    }
    TimeSeriesTable::new(series, times[0], dt)
}

pub fn write_table_file(table: &TimeSeriesTable, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(File::create(path)?);
    write_table(table, file)
}

pub fn read_table_file(path: &Path) -> Result<TimeSeriesTable> {
    read_table(File::open(path)?)
}
