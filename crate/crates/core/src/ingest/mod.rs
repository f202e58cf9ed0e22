//! Loaders for the dataset tables, the GTFS feed and the train JSON.
//!
//! All CSV loaders locate columns by header name, report errors with the
//! 1-based file line and column, and are strict unless
//! [`LoadOptions::permissive`] is set, in which case bad rows are skipped and
//! reported in [`Loaded::skipped`].

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};

use crate::geodesy::{BoundingBox, GeoPoint};
use crate::model::Timestamp;

pub mod gtfs;
mod tables;
pub mod trains;

pub use gtfs::{load_gtfs, GtfsBundle};
pub use tables::*;
pub use trains::{load_train_stops, TrainStops};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}, column '{column}': {message}")]
    Field {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{path}: line {line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: missing required file '{file}'")]
    MissingFile { path: PathBuf, file: String },
    #[error("{path}: {file}: {count} dangling references, first: {}", first.join("; "))]
    Integrity {
        path: PathBuf,
        file: String,
        count: usize,
        first: Vec<String>,
    },
    #[error("{path}: {message}")]
    Archive { path: PathBuf, message: String },
    #[error("{path}: invalid JSON at byte {offset}: {message}")]
    Json {
        path: PathBuf,
        offset: usize,
        message: String,
    },
}

impl IngestError {
    pub fn line(&self) -> Option<u64> {
        match self {
            IngestError::Csv { line, .. }
            | IngestError::Field { line, .. }
            | IngestError::Row { line, .. } => Some(*line),
            _ => None,
        }
    }

    /// Row-level errors can be downgraded to warnings in permissive mode.
    fn is_row_level(&self) -> bool {
        matches!(
            self,
            IngestError::Field { .. } | IngestError::Row { .. } | IngestError::Csv { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub permissive: bool,
    /// Date attached to time-of-day-only timestamps.
    pub default_date: NaiveDate,
    /// Rejects live positions outside this rectangle when set.
    pub bounds: Option<BoundingBox>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            permissive: false,
            default_date: NaiveDate::from_ymd_opt(2016, 8, 26).unwrap(),
            bounds: None,
        }
    }
}

impl LoadOptions {
    pub fn permissive() -> Self {
        Self {
            permissive: true,
            ..Self::default()
        }
    }
}

/// Rows of one table plus whatever the loader had to say about them.
#[derive(Debug)]
pub struct Loaded<T> {
    pub rows: Vec<T>,
    /// Row errors downgraded in permissive mode.
    pub skipped: Vec<IngestError>,
    pub notes: Vec<String>,
}

impl<T> Loaded<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, IngestError> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf)
}

/// Column lookup for one CSV source.
pub(crate) struct Header {
    path: PathBuf,
    index: HashMap<String, usize>,
}

impl Header {
    pub(crate) fn new(path: &Path, record: &csv::StringRecord) -> Self {
        let index = record
            .iter()
            .enumerate()
            .map(|(i, name)| (name.trim().trim_start_matches('\u{feff}').to_ascii_lowercase(), i))
            .collect();
        Self {
            path: path.to_path_buf(),
            index,
        }
    }

    pub(crate) fn require(&self, column: &'static str) -> Result<Col, IngestError> {
        self.index
            .get(column)
            .map(|&idx| Col { name: column, idx })
            .ok_or_else(|| IngestError::MissingColumn {
                path: self.path.clone(),
                column: column.to_string(),
            })
    }

    pub(crate) fn optional(&self, column: &'static str) -> Option<Col> {
        self.index.get(column).map(|&idx| Col { name: column, idx })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Col {
    name: &'static str,
    idx: usize,
}

/// One record with enough context to produce located errors.
pub(crate) struct Row<'a> {
    pub(crate) path: &'a Path,
    pub(crate) record: &'a csv::StringRecord,
    pub(crate) line: u64,
}

impl Row<'_> {
    pub(crate) fn field_error(&self, col: Col, message: impl Into<String>) -> IngestError {
        IngestError::Field {
            path: self.path.to_path_buf(),
            line: self.line,
            column: col.name.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> IngestError {
        IngestError::Row {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    /// Trimmed text; empty string when the cell is absent.
    pub(crate) fn text(&self, col: Col) -> &str {
        self.record.get(col.idx).map(str::trim).unwrap_or("")
    }

    pub(crate) fn text_opt(&self, col: Option<Col>) -> String {
        col.map(|c| self.text(c).to_string()).unwrap_or_default()
    }

    pub(crate) fn required(&self, col: Col) -> Result<&str, IngestError> {
        match self.record.get(col.idx).map(str::trim) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(self.field_error(col, "missing value")),
        }
    }

    pub(crate) fn parse<T>(&self, col: Col) -> Result<T, IngestError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.required(col)?;
        raw.parse::<T>()
            .map_err(|e| self.field_error(col, format!("'{raw}': {e}")))
    }

    pub(crate) fn parse_opt<T>(&self, col: Option<Col>) -> Result<Option<T>, IngestError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match col {
            Some(c) if !self.text(c).is_empty() => self.parse(c).map(Some),
            _ => Ok(None),
        }
    }

    pub(crate) fn timestamp(&self, col: Col, date: NaiveDate) -> Result<Timestamp, IngestError> {
        let raw = self.required(col)?;
        parse_timestamp(raw, date).ok_or_else(|| self.field_error(col, format!("unparseable timestamp '{raw}'")))
    }

    pub(crate) fn timestamp_opt(
        &self,
        col: Option<Col>,
        date: NaiveDate,
    ) -> Result<Option<Timestamp>, IngestError> {
        match col {
            Some(c) if !self.text(c).is_empty() => self.timestamp(c, date).map(Some),
            _ => Ok(None),
        }
    }

    pub(crate) fn coordinate(&self, lat: Col, lng: Col) -> Result<GeoPoint, IngestError> {
        let la: f64 = self.parse(lat)?;
        let lo: f64 = self.parse(lng)?;
        if !(-90.0..=90.0).contains(&la) {
            return Err(self.field_error(lat, format!("latitude {la} out of range")));
        }
        if !(-180.0..=180.0).contains(&lo) {
            return Err(self.field_error(lng, format!("longitude {lo} out of range")));
        }
        Ok(GeoPoint::new(la, lo))
    }
}

/// Parses a naive timestamp, truncated to whole seconds.
///
/// Accepts `YYYY-MM-DD HH:MM[:SS[.fff]]` (space or `T` separated) and bare
/// times of day, which are attached to `date`.
pub fn parse_timestamp(raw: &str, date: NaiveDate) -> Option<Timestamp> {
    let s = raw.trim();
    const DATETIME: [&str; 4] = [
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M",
    ];
    const TIME: [&str; 2] = ["%H:%M:%S%.f", "%H:%M"];
    let ts = DATETIME
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            TIME.iter()
                .find_map(|f| NaiveTime::parse_from_str(s, f).ok())
                .map(|t| date.and_time(t))
        })?;
    ts.with_nanosecond(0)
}

pub fn format_timestamp(t: Timestamp) -> String {
    t.format("%Y-%m-%d %H:%M:%S").to_string()
}

/// Drives a CSV source row by row, applying strict or permissive handling.
pub(crate) fn read_csv<T>(
    path: &Path,
    bytes: &[u8],
    permissive: bool,
    mut parse_row: impl FnMut(&Header, &Row<'_>) -> Result<T, IngestError>,
    mut check_header: impl FnMut(&Header) -> Result<(), IngestError>,
) -> Result<(Vec<T>, Vec<IngestError>), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(bytes);
    let header_rec = reader.headers().map_err(|e| csv_error(path, &e))?.clone();
    let header = Header::new(path, &header_rec);
    check_header(&header)?;

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map(|p| p.line()).unwrap_or(0);
                if record.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                let row = Row {
                    path,
                    record: &record,
                    line,
                };
                match parse_row(&header, &row) {
                    Ok(v) => rows.push(v),
                    Err(e) if permissive && e.is_row_level() => {
                        log::warn!("{e}");
                        skipped.push(e);
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e) => {
                let err = csv_error(path, &e);
                if permissive && err.is_row_level() {
                    log::warn!("{err}");
                    skipped.push(err);
                } else {
                    return Err(err);
                }
            }
        }
    }
    Ok((rows, skipped))
}

fn csv_error(path: &Path, e: &csv::Error) -> IngestError {
    IngestError::Csv {
        path: path.to_path_buf(),
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 8, 26).unwrap()
    }

    #[test]
    fn timestamps_in_several_layouts() {
        let want = day().and_hms_opt(10, 52, 30).unwrap();
        assert_eq!(parse_timestamp("2016-08-26 10:52:30", day()), Some(want));
        assert_eq!(parse_timestamp("2016-08-26T10:52:30.417", day()), Some(want));
        assert_eq!(parse_timestamp("10:52:30", day()), Some(want));
        assert_eq!(
            parse_timestamp("10:52", day()),
            Some(day().and_hms_opt(10, 52, 0).unwrap())
        );
        assert_eq!(parse_timestamp("yesterday", day()), None);
    }
}
