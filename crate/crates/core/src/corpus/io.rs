//! Binary embedding container and line-oriented metadata files.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! bytes 0..4   magic ("EMB1" for embeddings, "ENC1" for encoder weights)
//! bytes 4..8   u32 row count N
//! bytes 8..12  u32 column count D
//! bytes 12..   N*D f32 values, row-major, nothing after
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::{CorpusError, EmbeddingRecord, Embeddings, Split};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMB1";
pub const ENCODER_MAGIC: [u8; 4] = *b"ENC1";
const HEADER_LEN: usize = 12;

const REQUIRED_KEYS: [&str; 7] = [
    "record_id",
    "identity",
    "media_id",
    "camera_id",
    "clothes_id",
    "dataset",
    "split",
];

pub fn encode_container(magic: [u8; 4], matrix: &Embeddings) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.data.len() * 4);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&(matrix.rows as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.dim as u32).to_le_bytes());
    for v in &matrix.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_container(magic: [u8; 4], bytes: &[u8]) -> Result<Embeddings, CorpusError> {
    if bytes.len() < 4 || bytes[..4] != magic {
        return Err(CorpusError::BadMagic {
            expected: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(CorpusError::TruncatedFile {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected =
        rows.checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or(CorpusError::DimMismatch {
                rows,
                dim,
                payload: payload.len(),
            })?;
    if payload.len() < expected {
        return Err(CorpusError::TruncatedFile {
            expected: HEADER_LEN + expected,
            actual: bytes.len(),
        });
    }
    if payload.len() != expected {
        return Err(CorpusError::DimMismatch {
            rows,
            dim,
            payload: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Embeddings { rows, dim, data })
}

/// Reads an `EMB1` file into an N×D matrix.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Embeddings, CorpusError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    decode_container(EMBEDDING_MAGIC, &bytes)
}

pub fn write_embeddings(path: impl AsRef<Path>, matrix: &Embeddings) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, encode_container(EMBEDDING_MAGIC, matrix)).map_err(|e| CorpusError::io(path, e))
}

fn parse_record(line_no: usize, line: &str) -> Result<EmbeddingRecord, CorpusError> {
    let obj: Map<String, Value> =
        serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
    for key in REQUIRED_KEYS {
        if !obj.contains_key(key) {
            return Err(CorpusError::MissingField {
                line: line_no,
                field: key,
            });
        }
    }
    let text = |key: &'static str| -> Result<String, CorpusError> {
        match &obj[key] {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            other => Err(CorpusError::MalformedLine {
                line: line_no,
                reason: format!("field `{key}` must be a string, got {other}"),
            }),
        }
    };
    let record_id = obj["record_id"]
        .as_u64()
        .ok_or_else(|| CorpusError::MalformedLine {
            line: line_no,
            reason: "record_id must be a non-negative integer".into(),
        })?;
    let split_text = text("split")?;
    let split = split_text
        .parse::<Split>()
        .map_err(|_| CorpusError::MalformedLine {
            line: line_no,
            reason: format!("unknown split `{split_text}`"),
        })?;
    Ok(EmbeddingRecord {
        record_id,
        identity: text("identity")?,
        media_id: text("media_id")?,
        camera_id: text("camera_id")?,
        clothes_id: text("clothes_id")?,
        dataset: text("dataset")?,
        split,
    })
}

/// Parses metadata lines and returns records ordered by `record_id`.
///
/// The ids must form a permutation of `0..N`. When `expected_rows` is given
/// (the embedding row count), N must match it.
pub fn parse_metadata(
    reader: impl BufRead,
    expected_rows: Option<usize>,
) -> Result<Vec<EmbeddingRecord>, CorpusError> {
    let mut by_id: BTreeMap<u64, EmbeddingRecord> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(line_no, &line)?;
        let id = record.record_id;
        if by_id.insert(id, record).is_some() {
            return Err(CorpusError::DuplicateRecordId { record_id: id });
        }
    }
    let n = by_id.len();
    if let Some(rows) = expected_rows {
        if rows != n {
            return Err(CorpusError::RowCountMismatch {
                metadata: n,
                embeddings: rows,
            });
        }
    }
    if let Some((&max_id, _)) = by_id.last_key_value() {
        if max_id as usize >= n {
            return Err(CorpusError::RecordIdOutOfRange {
                record_id: max_id,
                rows: n,
            });
        }
    }
    Ok(by_id.into_values().collect())
}

pub fn read_metadata(
    path: impl AsRef<Path>,
    expected_rows: Option<usize>,
) -> Result<Vec<EmbeddingRecord>, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    parse_metadata(BufReader::new(file), expected_rows)
}

pub fn record_to_line(record: &EmbeddingRecord) -> String {
    let mut obj = Map::new();
    obj.insert("record_id".into(), Value::from(record.record_id));
    obj.insert("identity".into(), Value::from(record.identity.as_str()));
    obj.insert("media_id".into(), Value::from(record.media_id.as_str()));
    obj.insert("camera_id".into(), Value::from(record.camera_id.as_str()));
    obj.insert("clothes_id".into(), Value::from(record.clothes_id.as_str()));
    obj.insert("dataset".into(), Value::from(record.dataset.as_str()));
    obj.insert("split".into(), Value::from(record.split.as_str()));
    Value::Object(obj).to_string()
}

pub fn write_metadata(
    path: impl AsRef<Path>,
    records: &[EmbeddingRecord],
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", record_to_line(r)).map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}
