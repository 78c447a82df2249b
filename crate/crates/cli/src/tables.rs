//! CSV tables written and read by the binary.

use std::path::Path;

use clic_core::harness::CancellationDb;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{io_error, CliError};

/// Written in the `c_db` column when the residual is exactly zero.
pub const ABOVE_RANGE: &str = "above_range";

pub const RESULT_COLUMNS: [&str; 7] = [
    "id",
    "seed",
    "c_db",
    "residual_dbm",
    "n_params",
    "complexity",
    "epochs",
];

/// One canceller run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub id: String,
    pub seed: u64,
    /// Decimal dB or [`ABOVE_RANGE`].
    pub c_db: String,
    pub residual_dbm: f64,
    pub n_params: u64,
    pub complexity: u64,
    /// Epoch whose weights were kept; zero for the LS cancellers.
    pub epochs: usize,
}

pub fn format_c_db(c: CancellationDb) -> String {
    match c {
        CancellationDb::Ratio(v) => v.to_string(),
        CancellationDb::AboveRange => ABOVE_RANGE.to_string(),
    }
}

pub fn parse_c_db(text: &str) -> Option<CancellationDb> {
    if text == ABOVE_RANGE {
        return Some(CancellationDb::AboveRange);
    }
    text.parse::<f64>()
        .ok()
        .filter(|v| !v.is_nan())
        .map(CancellationDb::Ratio)
}

pub const HISTORY_COLUMNS: [&str; 4] = ["epoch", "train_loss", "test_loss", "test_c_db"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_c_db: Option<f64>,
}

pub const SWEEP_COLUMNS: [&str; 6] = ["canceller", "axis", "value", "n_params", "complexity", "c_db"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub canceller: String,
    pub axis: String,
    pub value: usize,
    pub n_params: u64,
    pub complexity: u64,
    /// Empty unless the sweep evaluated the canceller.
    pub c_db: Option<String>,
}

pub const RESIDUAL_COLUMNS: [&str; 5] = ["id", "seed", "cli_dbm", "residual_dbm", "c_db"];

/// Received CLI power against residual power after cancellation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub id: String,
    pub seed: u64,
    pub cli_dbm: Option<f64>,
    pub residual_dbm: f64,
    pub c_db: String,
}

pub const EPOCH_COLUMNS: [&str; 5] = ["id", "epoch", "train_loss", "test_loss", "test_c_db"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub id: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_c_db: Option<f64>,
}

/// CSV bytes with the header always present, even for zero rows.
pub fn to_csv<T: Serialize>(columns: &[&str], rows: &[T]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(columns).expect("in-memory write");
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_csv<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<(), CliError> {
    clic_core::container::write_atomic(path, &to_csv(columns, rows))?;
    Ok(())
}

/// Reads a table, insisting on every column in `columns`.
pub fn read_csv<T: DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<Vec<T>, CliError> {
    let bytes = std::fs::read(path).map_err(io_error(path))?;
    let schema = |message: String| CliError::Schema {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let headers = r.headers().map_err(|e| schema(e.to_string()))?.clone();
    for col in columns {
        if !headers.iter().any(|h| h == *col) {
            return Err(schema(format!("missing column `{col}`")));
        }
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| schema(format!("row {}: {e}", i + 1))))
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let rows: Vec<ResultRow> = read_csv(path, &RESULT_COLUMNS)?;
    for (i, row) in rows.iter().enumerate() {
        if parse_c_db(&row.c_db).is_none() {
            return Err(CliError::Schema {
                path: path.to_path_buf(),
                message: format!("row {}: c_db `{}` is neither a number nor {ABOVE_RANGE}", i + 1, row.c_db),
            });
        }
    }
    Ok(rows)
}
