//! Little-endian binary checkpoint format.
//!
//! ```text
//! "T2TB" | u32 version | u32 record_count | record*
//! record = u32 name_len | name (utf-8) | u8 kind | u32 ndim | u64 dim* | payload
//! kind 0 = f64 array, 1 = u64 array, 2 = utf-8 text (dims = [byte_len])
//! ```
//!
//! Records are written in a fixed order, so saving the same state twice
//! produces identical bytes.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"T2TB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes {0:?})")]
    BadMagic([u8; 4]),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint file is truncated")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint is missing record `{0}`")]
    MissingRecord(String),
    #[error("checkpoint record `{name}` has shape {found:?}, current config expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint I/O: {0}")]
    Io(#[source] io::Error),
}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            CheckpointError::Truncated
        } else {
            CheckpointError::Io(e)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F64 { dims: Vec<usize>, data: Vec<f64> },
    U64 { dims: Vec<usize>, data: Vec<u64> },
    Text(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub payload: Payload,
}

impl Record {
    pub fn f64(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        Record {
            name: name.into(),
            payload: Payload::F64 { dims, data },
        }
    }

    pub fn u64(name: impl Into<String>, data: Vec<u64>) -> Self {
        Record {
            name: name.into(),
            payload: Payload::U64 {
                dims: vec![data.len()],
                data,
            },
        }
    }

    pub fn text(name: impl Into<String>, text: impl Into<String>) -> Self {
        Record {
            name: name.into(),
            payload: Payload::Text(text.into()),
        }
    }
}

pub fn encode_records(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        let (kind, dims): (u8, Vec<usize>) = match &r.payload {
            Payload::F64 { dims, .. } => (0, dims.clone()),
            Payload::U64 { dims, .. } => (1, dims.clone()),
            Payload::Text(s) => (2, vec![s.len()]),
        };
        out.push(kind);
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in &dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        match &r.payload {
            Payload::F64 { data, .. } => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Payload::U64 { data, .. } => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            Payload::Text(s) => out.extend_from_slice(s.as_bytes()),
        }
    }
    out
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Guards allocations against corrupted length fields.
fn checked_len(count: u64, elem: usize, remaining: usize) -> Result<usize, CheckpointError> {
    let bytes = count.checked_mul(elem as u64).ok_or(CheckpointError::Truncated)?;
    if bytes > remaining as u64 {
        return Err(CheckpointError::Truncated);
    }
    Ok(count as usize)
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<Record>, CheckpointError> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = read_u32(&mut r)?;
    let mut records = Vec::new();
    for _ in 0..count {
        let name_len = checked_len(read_u32(&mut r)? as u64, 1, r.len())?;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Malformed("record name is not utf-8".into()))?;
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let ndim = checked_len(read_u32(&mut r)? as u64, 8, r.len())?;
        let dims = (0..ndim)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let numel = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| CheckpointError::Malformed(format!("record `{name}` has an overflowing shape")))?;
        let payload = match kind[0] {
            0 => {
                let n = checked_len(numel, 8, r.len())?;
                let data = (0..n).map(|_| read_u64(&mut r).map(f64::from_bits)).collect::<Result<_, _>>()?;
                Payload::F64 { dims, data }
            }
            1 => {
                let n = checked_len(numel, 8, r.len())?;
                let data = (0..n).map(|_| read_u64(&mut r)).collect::<Result<_, _>>()?;
                Payload::U64 { dims, data }
            }
            2 => {
                let n = checked_len(numel, 1, r.len())?;
                let mut text = vec![0u8; n];
                r.read_exact(&mut text)?;
                Payload::Text(
                    String::from_utf8(text).map_err(|_| CheckpointError::Malformed(format!("record `{name}` is not utf-8")))?,
                )
            }
            other => return Err(CheckpointError::Malformed(format!("record `{name}` has unknown kind {other}"))),
        };
        records.push(Record { name, payload });
    }
    if !r.is_empty() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", r.len())));
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<(), CheckpointError> {
    let bytes = encode_records(records);
    let mut file = fs::File::create(path).map_err(CheckpointError::Io)?;
    file.write_all(&bytes).map_err(CheckpointError::Io)?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<Record>, CheckpointError> {
    let bytes = fs::read(path).map_err(CheckpointError::Io)?;
    decode_records(&bytes)
}

/// Name-indexed view over decoded records.
pub struct Records(Vec<Record>);

impl Records {
    pub fn new(records: Vec<Record>) -> Self {
        Records(records)
    }

    fn get(&self, name: &str) -> Result<&Payload, CheckpointError> {
        self.0
            .iter()
            .find(|r| r.name == name)
            .map(|r| &r.payload)
            .ok_or_else(|| CheckpointError::MissingRecord(name.to_string()))
    }

    pub fn text(&self, name: &str) -> Result<&str, CheckpointError> {
        match self.get(name)? {
            Payload::Text(s) => Ok(s),
            _ => Err(CheckpointError::Malformed(format!("record `{name}` is not text"))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64], CheckpointError> {
        match self.get(name)? {
            Payload::U64 { data, .. } => Ok(data),
            _ => Err(CheckpointError::Malformed(format!("record `{name}` is not a u64 array"))),
        }
    }

    /// An f64 array whose shape must equal `expected`.
    pub fn f64s(&self, name: &str, expected: &[usize]) -> Result<&[f64], CheckpointError> {
        match self.get(name)? {
            Payload::F64 { dims, data } if dims == expected => Ok(data),
            Payload::F64 { dims, .. } => Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: expected.to_vec(),
                found: dims.clone(),
            }),
            _ => Err(CheckpointError::Malformed(format!("record `{name}` is not an f64 array"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Record> {
        vec![
            Record::text("config", "a = 1\n"),
            Record::f64("w", vec![2, 2], vec![1.0, -0.5, f64::MIN_POSITIVE, 3.25]),
            Record::u64("step", vec![7]),
        ]
    }

    #[test]
    fn roundtrip_is_bit_exact_and_byte_stable() {
        let bytes = encode_records(&sample());
        assert_eq!(decode_records(&bytes).unwrap(), sample());
        assert_eq!(encode_records(&decode_records(&bytes).unwrap()), bytes);
    }

    #[test]
    fn corruption_maps_to_distinct_errors() {
        let mut bytes = encode_records(&sample());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_records(truncated), Err(CheckpointError::Truncated)));

        let mut versioned = bytes.clone();
        versioned[4] = 9;
        assert!(matches!(
            decode_records(&versioned),
            Err(CheckpointError::VersionMismatch { found: 9, .. })
        ));

        bytes[0] = b'X';
        assert!(matches!(decode_records(&bytes), Err(CheckpointError::BadMagic(_))));
    }

    #[test]
    fn shape_check_on_lookup() {
        let recs = Records::new(sample());
        assert!(recs.f64s("w", &[2, 2]).is_ok());
        assert!(matches!(recs.f64s("w", &[4]), Err(CheckpointError::ShapeMismatch { .. })));
        assert!(matches!(recs.text("missing"), Err(CheckpointError::MissingRecord(_))));
    }
}
