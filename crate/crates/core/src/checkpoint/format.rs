//! Byte layout of checkpoint files. All integers are little-endian.
//!
//! ```text
//! magic        8 bytes  "LNKT0001"
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON (CheckpointMetadata)
//! entry_count  u32
//! entry_count times:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   dtype      u8       0 = f32
//!   rank       u8
//!   extents    rank × u32
//!   payload    4 · Π extents bytes, f32 row-major
//! checksum     u32      CRC-32 (IEEE) of every preceding byte
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PreprocessSpec;
use crate::error::{CheckpointError, Error, Result};
use crate::model::ModelConfig;

pub const MAGIC: &[u8; 8] = b"LNKT0001";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub format_version: u32,
    /// Absent in backbone-only files that carry no head configuration.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub preprocess: Option<PreprocessSpec>,
    /// Free-form provenance, e.g. the identifier of converted source weights.
    #[serde(default)]
    pub source: Option<String>,
}

impl CheckpointMetadata {
    pub fn new(model: ModelConfig, class_names: Vec<String>, seed: u64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            preprocess: Some(PreprocessSpec::new(model.input_resolution)),
            model: Some(model),
            class_names,
            seed,
            source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: CheckpointMetadata,
    pub entries: Vec<CheckpointEntry>,
}

fn malformed(msg: impl Into<String>) -> Error {
    CheckpointError::Malformed(msg.into()).into()
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| malformed(format!("{what} {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl Checkpoint {
    pub fn entry(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let header = serde_json::to_vec(&self.metadata).map_err(|e| malformed(format!("header: {e}")))?;
        put_u32(&mut out, header.len(), "header length")?;
        out.extend_from_slice(&header);
        put_u32(&mut out, self.entries.len(), "entry count")?;
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.name.as_str()) {
                return Err(CheckpointError::DuplicateName(e.name.clone()).into());
            }
            if e.shape.iter().product::<usize>() != e.data.len() {
                return Err(malformed(format!(
                    "{}: shape {:?} does not match {} values",
                    e.name,
                    e.shape,
                    e.data.len()
                )));
            }
            put_u32(&mut out, e.name.len(), "name length")?;
            out.extend_from_slice(e.name.as_bytes());
            out.push(DTYPE_F32);
            let rank = u8::try_from(e.shape.len()).map_err(|_| malformed(format!("{}: rank too large", e.name)))?;
            out.push(rank);
            for &d in &e.shape {
                put_u32(&mut out, d, "extent")?;
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Checks the magic, then the checksum, then parses the body.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let magic = &bytes[..bytes.len().min(MAGIC.len())];
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic {
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            }
            .into());
        }
        if bytes.len() < MAGIC.len() + 4 {
            return Err(CheckpointError::Checksum { stored: 0, computed: crc32fast::hash(bytes) }.into());
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CheckpointError::Checksum { stored, computed }.into());
        }

        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let header_len = r.u32("header length")? as usize;
        let metadata: CheckpointMetadata =
            serde_json::from_slice(r.take(header_len, "header")?).map_err(|e| malformed(format!("header: {e}")))?;
        if metadata.format_version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(metadata.format_version).into());
        }
        let count = r.u32("entry count")? as usize;
        let mut entries = Vec::with_capacity(count.min(4096));
        let mut seen = HashSet::new();
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| malformed("tensor name is not UTF-8"))?
                .to_owned();
            let dtype = r.take(1, "dtype")?[0];
            if dtype != DTYPE_F32 {
                return Err(malformed(format!("{name}: unsupported dtype tag {dtype}")));
            }
            let rank = r.take(1, "rank")?[0] as usize;
            let shape = (0..rank).map(|_| r.u32("extent").map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| malformed(format!("{name}: payload size overflows")))?;
            let data = r
                .take(n, "payload")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if !seen.insert(name.clone()) {
                return Err(CheckpointError::DuplicateName(name).into());
            }
            entries.push(CheckpointEntry { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(malformed(format!("{} trailing bytes before checksum", body.len() - r.pos)));
        }
        Ok(Self { metadata, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed(format!("unexpected end of data while reading {what}")))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}
