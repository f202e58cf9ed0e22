//! Commuter-train stop records. Parsed and counted only; no matcher reads them.

use std::path::Path;

use serde_json::Value;

use super::{read_file, IngestError};

#[derive(Debug, Clone)]
pub struct TrainStops {
    pub root: Value,
}

impl TrainStops {
    /// Number of train records: the top-level array, or the array under a
    /// `junat` key.
    pub fn train_count(&self) -> usize {
        match &self.root {
            Value::Array(items) => items.len(),
            Value::Object(map) => map
                .get("junat")
                .and_then(Value::as_array)
                .map_or(0, Vec::len),
            _ => 0,
        }
    }
}

pub fn load_train_stops(path: &Path) -> Result<TrainStops, IngestError> {
    parse_train_stops(path, &read_file(path)?)
}

pub fn parse_train_stops(path: &Path, bytes: &[u8]) -> Result<TrainStops, IngestError> {
    serde_json::from_slice(bytes)
        .map(|root| TrainStops { root })
        .map_err(|e| IngestError::Json {
            path: path.to_path_buf(),
            offset: byte_offset(bytes, e.line(), e.column()),
            message: e.to_string(),
        })
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let line_start: usize = bytes
        .split_inclusive(|&b| b == b'\n')
        .take(line.saturating_sub(1))
        .map(<[u8]>::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}
