//! On-disk formats.
//!
//! Features (`ECNF`) and distances (`ECND`) share one little-endian layout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic, b"ECNF" or b"ECND"
//! 4       2     version, u16 = 1
//! 6       8     rows (n_items), u64
//! 14      8     cols (dim), u64
//! 22      4·r·c IEEE-754 f32 payload, row-major
//! ```
//!
//! Metadata is CSV with header `index,person_id,camera_id,role`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::types::{EvalRecord, EvalRecords, FeatureMatrix, Matrix, Role};

pub const FEATURE_MAGIC: [u8; 4] = *b"ECNF";
pub const DISTANCE_MAGIC: [u8; 4] = *b"ECND";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 22;

fn write_dense(path: &Path, magic: [u8; 4], rows: usize, cols: usize, values: impl Iterator<Item = f32>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&magic)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(rows as u64).to_le_bytes())?;
    out.write_all(&(cols as u64).to_le_bytes())?;
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_dense(path: &Path, magic: [u8; 4]) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = std::fs::read(path)?;
    parse_dense(&bytes, magic)
}

fn parse_dense(bytes: &[u8], magic: [u8; 4]) -> Result<(usize, usize, Vec<f32>)> {
    let truncated = |expected: usize| Error::TruncatedFile {
        expected: expected as u64,
        actual: bytes.len() as u64,
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN));
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic { expected: magic, found });
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let rows = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::shape("addressable payload", format!("{rows} x {cols}")))?;
    if (bytes.len() as u64) < expected {
        return Err(Error::TruncatedFile {
            expected,
            actual: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::shape(
            format!("{expected} bytes"),
            format!("{} bytes (trailing data)", bytes.len()),
        ));
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok((rows as usize, cols as usize, values))
}

pub fn write_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_dense(
        path.as_ref(),
        FEATURE_MAGIC,
        m.n_items(),
        m.dim(),
        m.data().iter().copied(),
    )
}

/// Reads an `ECNF` file, or a headerless CSV (one item per row) when the
/// extension is `.csv`.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return read_features_csv(path);
    }
    let (rows, cols, data) = read_dense(path, FEATURE_MAGIC)?;
    FeatureMatrix::new(rows, cols, data)
}

fn read_features_csv(path: &Path) -> Result<FeatureMatrix> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(e.to_string()))?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f32>()
                    .map_err(|e| parse_err(format!("row {}: {field:?}: {e}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    FeatureMatrix::from_rows(&rows)
}

/// Writes any dense matrix as `ECND`, narrowing to `f32`.
pub fn write_distance(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    if let Some(index) = m.data().iter().position(|&v| !(v as f32).is_finite()) {
        return Err(Error::NonFinite { index });
    }
    write_dense(
        path.as_ref(),
        DISTANCE_MAGIC,
        m.rows(),
        m.cols(),
        m.data().iter().map(|&v| v as f32),
    )
}

pub fn read_distance(path: impl AsRef<Path>) -> Result<Matrix> {
    let (rows, cols, data) = read_dense(path.as_ref(), DISTANCE_MAGIC)?;
    Matrix::new(rows, cols, data.into_iter().map(f64::from).collect())
}

#[derive(Deserialize)]
struct MetaRow {
    index: usize,
    person_id: i64,
    camera_id: i64,
    role: String,
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<EvalRecords> {
    let path = path.as_ref();
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["index", "person_id", "camera_id", "role"] {
        return Err(parse_err(format!(
            "expected header index,person_id,camera_id,role, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut records = Vec::new();
    for row in reader.deserialize::<MetaRow>() {
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        records.push(EvalRecord {
            item_index: row.index,
            person_id: row.person_id,
            camera_id: row.camera_id,
            role: row.role.parse::<Role>()?,
        });
    }
    EvalRecords::new(records)
}

pub fn write_metadata(records: &EvalRecords, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "index,person_id,camera_id,role")?;
    for r in records.iter() {
        writeln!(out, "{},{},{},{}", r.item_index, r.person_id, r.camera_id, r.role)?;
    }
    out.flush()?;
    Ok(())
}
