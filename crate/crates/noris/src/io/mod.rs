//! File formats and serialization: JSON Lines pools, the NFM1 binary
//! feature-map container, selection reports, CSV tables, and the similarity
//! matrix / detection list inputs used by the command-line tools.
//!
//! All output files are written atomically (temp file + rename) so pipeline
//! callers never observe a half-written artifact.

mod detections;
mod jsonl;
mod nfm;
mod report;
mod tables;

pub use detections::{read_detections, Detection};
pub use jsonl::{
    pool_to_jsonl, pool_to_jsonl_string, read_pool, read_pool_file, sample_to_json_line,
};
pub use nfm::{
    feature_map_to_bytes, read_feature_map, read_feature_map_file, write_feature_map_file,
};
pub use report::{OracleReport, SelectionReport};
pub use tables::{distance_rows_csv, strategy_reports_csv};

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::selector::MatrixSimilarity;

/// Writes `bytes` to `path` atomically: a sibling temp file is written and
/// renamed over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn temp_sibling(path: &Path) -> std::path::PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| ".out".into());
    name.push(".tmp");
    path.with_file_name(name)
}

/// Reads a JSON file holding an explicit similarity matrix (array of rows)
/// and validates it as a provider.
pub fn read_similarity_matrix(path: &Path) -> Result<MatrixSimilarity> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| crate::error::Error::format(format!("similarity matrix: {e}")))?;
    MatrixSimilarity::new(rows)
}
