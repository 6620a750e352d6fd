//! Artifact I/O: hashing, alpha.csv, JSON reports.

use std::fs;
use std::path::{Path, PathBuf};

use pomdp_aa::parser::{parse_pomdp, PomdpSource};
use pomdp_aa::{AlphaMatrix, PomdpModel};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A parsed model together with the hash of the exact bytes parsed.
pub struct LoadedModel {
    pub model: PomdpModel,
    pub path: PathBuf,
    pub sha256: String,
}

pub fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::File {
        path: path.to_path_buf(),
        message: "not valid UTF-8".into(),
    })?;
    let sha256 = sha256_hex(text.as_bytes());
    let src = PomdpSource {
        text,
        origin: path.display().to_string(),
    };
    let model = parse_pomdp(&src)?;
    Ok(LoadedModel {
        model,
        path: path.to_path_buf(),
        sha256,
    })
}

/// Writes α as `|A|` rows of `|S|` values with 17 significant digits.
pub fn write_alpha_csv(path: &Path, alpha: &AlphaMatrix) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    for row in alpha.rows() {
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))
            .map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_alpha_csv(path: &Path) -> Result<AlphaMatrix, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| CliError::csv(path, e))?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| CliError::File {
                    path: path.to_path_buf(),
                    message: format!("row {}: '{field}' is not a number", i + 1),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    AlphaMatrix::from_rows(&rows).ok_or_else(|| CliError::File {
        path: path.to_path_buf(),
        message: "rows are empty or of unequal length".into(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}
