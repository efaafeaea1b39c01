//! The `AFV1` feature file format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes   "AFV1"
//! version      u32       1
//! dim          u32       feature width D
//! count        u64       number of records N
//! tag count    u16       T
//! T times:     u16 byte length, then that many bytes of UTF-8
//! N times:     label u8 (0 real, 1 generated), tag index u16, D x f32
//! ```
//!
//! Tags are stored in order of first appearance, so saving the same dataset
//! twice produces identical bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::dataset::{FeatureDataset, FeatureRecord, Label};
use crate::error::{Error, Result};

pub const AFV_MAGIC: &[u8; 4] = b"AFV1";
pub const AFV_VERSION: u32 = 1;

/// Everything before the record payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AfvHeader {
    pub version: u32,
    pub dim: u32,
    pub count: u64,
    pub tags: Vec<String>,
}

pub fn save_features(dataset: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_features(dataset)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    decode_features(&fs::read(path)?)
}

/// Reads and parses just the header of a feature file.
pub fn read_features_header(path: impl AsRef<Path>) -> Result<AfvHeader> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor::new(&bytes);
    read_header(&mut cur)
}

pub fn encode_features(dataset: &FeatureDataset) -> Result<Vec<u8>> {
    let dim = u32::try_from(dataset.dim())
        .map_err(|_| Error::argument(format!("dimension {} exceeds u32", dataset.dim())))?;
    let tags = dataset.tags();
    let tag_count = u16::try_from(tags.len())
        .map_err(|_| Error::argument(format!("{} source tags exceed the u16 table", tags.len())))?;

    let mut out = Vec::with_capacity(22 + dataset.len() * (3 + 4 * dataset.dim()));
    out.extend_from_slice(AFV_MAGIC);
    out.extend_from_slice(&AFV_VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    out.extend_from_slice(&tag_count.to_le_bytes());
    for tag in &tags {
        let len = u16::try_from(tag.len())
            .map_err(|_| Error::argument(format!("source tag of {} bytes is too long", tag.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(tag.as_bytes());
    }
    for r in dataset.records() {
        let tag_index = tags.iter().position(|t| *t == r.source).expect("tag table built from records") as u16;
        out.push(r.label.as_u8());
        out.extend_from_slice(&tag_index.to_le_bytes());
        for v in &r.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureDataset> {
    let mut cur = Cursor::new(bytes);
    let header = read_header(&mut cur)?;
    let dim = header.dim as usize;

    let record_size = 3 + 4 * dim as u64;
    let remaining = (bytes.len() - cur.pos) as u64;
    if header.count.checked_mul(record_size).is_none_or(|need| need > remaining) {
        let complete = remaining / record_size;
        return Err(Error::corruption(
            cur.pos as u64 + complete * record_size,
            format!("payload truncated after {complete} of {} records", header.count),
        ));
    }

    let mut records = Vec::with_capacity(header.count as usize);
    for index in 0..header.count as usize {
        let at = cur.pos as u64;
        let raw_label = cur.u8()?;
        let label = Label::from_u8(raw_label).ok_or_else(|| {
            Error::validation(format!("record {index} has label {raw_label}, expected 0 or 1"))
        })?;
        let tag_index = cur.u16()? as usize;
        let source = header.tags.get(tag_index).ok_or_else(|| {
            Error::corruption(at + 1, format!("record {index} references missing tag {tag_index}"))
        })?;
        let mut features = Vec::with_capacity(dim);
        for _ in 0..dim {
            features.push(f32::from_le_bytes(cur.array()?));
        }
        if let Some(j) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "record {index} has a non-finite value at feature {j}"
            )));
        }
        records.push(FeatureRecord {
            features,
            label,
            source: source.clone(),
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::corruption(
            cur.pos as u64,
            format!("{} trailing bytes after the last record", bytes.len() - cur.pos),
        ));
    }
    FeatureDataset::new(dim, records)
}

fn read_header(cur: &mut Cursor<'_>) -> Result<AfvHeader> {
    let magic: [u8; 4] = cur.array()?;
    if &magic != AFV_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, not an AFV1 feature file")));
    }
    let version = u32::from_le_bytes(cur.array()?);
    if version != AFV_VERSION {
        return Err(Error::format(format!("unsupported AFV version {version}")));
    }
    let dim = u32::from_le_bytes(cur.array()?);
    let count = u64::from_le_bytes(cur.array()?);
    let tag_count = cur.u16()?;
    let mut tags = Vec::with_capacity(tag_count as usize);
    for _ in 0..tag_count {
        let at = cur.pos as u64;
        let len = cur.u16()? as usize;
        let raw = cur.take(len)?;
        let tag = std::str::from_utf8(raw)
            .map_err(|_| Error::corruption(at + 2, "source tag is not UTF-8"))?;
        tags.push(tag.to_owned());
    }
    Ok(AfvHeader {
        version,
        dim,
        count,
        tags,
    })
}

/// Byte reader that reports the offset of any truncation.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::corruption(
                self.pos as u64,
                format!("needed {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("took N bytes"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}
