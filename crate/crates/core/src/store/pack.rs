//! The binary embedding pack.
//!
//! ```text
//! magic "STEMPAK1"        8 bytes
//! format version          u16 LE
//! dimension D             u32 LE
//! record count            u64 LE
//! metadata length         u64 LE
//! metadata                UTF-8, "segment_id\tstem\tencoder_id\tsource\n" per record
//! payload                 count * D float32 LE, in metadata order
//! CRC-32 of payload       u32 LE
//! ```

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{EmbeddingRecord, EmbeddingStore, RecordKey};
use crate::error::{Error, Result};

pub const PACK_MAGIC: &[u8; 8] = b"STEMPAK1";
pub const PACK_VERSION: u16 = 1;

const HEADER_LEN: usize = 8 + 2 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PackSummary {
    pub count: u64,
    pub dimension: u32,
    pub checksum: u32,
}

/// Serializes records, in the given order, to pack bytes.
pub fn encode_pack(records: &[EmbeddingRecord], dimension: usize) -> Result<(Vec<u8>, PackSummary)> {
    let dim32 = u32::try_from(dimension)
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::InvalidInput(format!("pack dimension {dimension} out of range")))?;
    let mut seen = HashSet::with_capacity(records.len());
    let mut metadata = String::new();
    for record in records {
        if record.dimension() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: record.dimension(),
                context: record.key().to_string(),
            });
        }
        if record.vector().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(record.key().to_string()));
        }
        if !seen.insert(record.key()) {
            return Err(Error::DuplicateRecord(record.key().to_string()));
        }
        let k = record.key();
        metadata.push_str(&format!("{}\t{}\t{}\t{}\n", k.segment_id, k.stem, k.encoder_id, k.source));
    }

    let payload_len = records.len() * dimension * 4;
    let mut out = Vec::with_capacity(HEADER_LEN + metadata.len() + payload_len + 4);
    out.extend_from_slice(PACK_MAGIC);
    out.extend_from_slice(&PACK_VERSION.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    out.extend_from_slice(&(metadata.len() as u64).to_le_bytes());
    out.extend_from_slice(metadata.as_bytes());
    let payload_start = out.len();
    for record in records {
        for v in record.vector() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let checksum = crc32fast::hash(&out[payload_start..]);
    out.extend_from_slice(&checksum.to_le_bytes());
    let summary = PackSummary {
        count: records.len() as u64,
        dimension: dim32,
        checksum,
    };
    Ok((out, summary))
}

/// Writes a pack to `path`. The file is written beside the target and renamed
/// into place, so readers never see a partial pack.
pub fn write_pack(records: &[EmbeddingRecord], dimension: usize, path: impl AsRef<Path>) -> Result<PackSummary> {
    let path = path.as_ref();
    let (bytes, summary) = encode_pack(records, dimension)?;
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(summary)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::CorruptPack(format!("truncated while reading {what}")))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("slice length checked"))
    }
}

/// Parses pack bytes into a store, verifying the checksum.
pub fn decode_pack(bytes: &[u8]) -> Result<EmbeddingStore> {
    if bytes.len() < PACK_MAGIC.len() {
        return Err(if PACK_MAGIC.starts_with(bytes) && !bytes.is_empty() {
            Error::CorruptPack("truncated inside magic".into())
        } else {
            Error::UnsupportedFormat("missing STEMPAK1 magic".into())
        });
    }
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8, "magic")? != PACK_MAGIC {
        return Err(Error::UnsupportedFormat("missing STEMPAK1 magic".into()));
    }
    let version = u16::from_le_bytes(cur.array("version")?);
    if version != PACK_VERSION {
        return Err(Error::UnsupportedFormat(format!("format version {version}")));
    }
    let dimension = u32::from_le_bytes(cur.array("dimension")?) as usize;
    let count = u64::from_le_bytes(cur.array("record count")?);
    let meta_len = u64::from_le_bytes(cur.array("metadata length")?);
    if dimension == 0 {
        return Err(Error::CorruptPack("dimension is zero".into()));
    }

    let count = usize::try_from(count).map_err(|_| Error::CorruptPack("record count overflows".into()))?;
    let meta_len = usize::try_from(meta_len).map_err(|_| Error::CorruptPack("metadata length overflows".into()))?;
    let payload_len = count
        .checked_mul(dimension)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::CorruptPack("payload size overflows".into()))?;
    let expected_len = [HEADER_LEN, meta_len, payload_len, 4]
        .into_iter()
        .try_fold(0usize, usize::checked_add)
        .ok_or_else(|| Error::CorruptPack("pack size overflows".into()))?;
    if bytes.len() < expected_len {
        return Err(Error::CorruptPack(format!(
            "truncated: {} bytes, header declares {expected_len}",
            bytes.len()
        )));
    }
    if bytes.len() > expected_len {
        return Err(Error::CorruptPack(format!(
            "{} trailing bytes after checksum",
            bytes.len() - expected_len
        )));
    }

    let metadata = cur.take(meta_len, "metadata")?;
    let payload = cur.take(payload_len, "payload")?;
    let stored = u32::from_le_bytes(cur.array("checksum")?);
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(Error::CorruptPack(format!(
            "payload checksum {actual:08x} does not match stored {stored:08x}"
        )));
    }

    let metadata = std::str::from_utf8(metadata).map_err(|e| Error::CorruptPack(format!("metadata is not UTF-8: {e}")))?;
    let lines: Vec<&str> = match metadata.strip_suffix('\n') {
        Some(body) => body.split('\n').collect(),
        None if metadata.is_empty() => Vec::new(),
        None => return Err(Error::CorruptPack("metadata does not end with a newline".into())),
    };
    if lines.len() != count {
        return Err(Error::CorruptPack(format!(
            "{} metadata lines for {count} records",
            lines.len()
        )));
    }

    let mut store = EmbeddingStore::new(dimension);
    for (i, (line, chunk)) in lines.iter().zip(payload.chunks_exact(dimension * 4)).enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let [segment_id, stem, encoder_id, source] = fields[..] else {
            return Err(Error::CorruptPack(format!(
                "metadata line {}: expected 4 fields, found {}",
                i + 1,
                fields.len()
            )));
        };
        let key = RecordKey::new(segment_id, stem.parse()?, encoder_id, source.parse()?);
        let vector = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("chunk of 4")))
            .collect();
        store.insert(EmbeddingRecord::new(key, vector)?)?;
    }
    Ok(store)
}

pub fn read_pack(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    decode_pack(&fs::read(path)?)
}

/// Reads several packs into a single store.
pub fn load_packs<P: AsRef<Path>>(paths: &[P]) -> Result<EmbeddingStore> {
    let mut stores = paths.iter().map(read_pack);
    let first = match stores.next() {
        Some(store) => store?,
        None => return Err(Error::InvalidInput("no embedding packs given".into())),
    };
    stores.try_fold(first, |acc, next| acc.merge(next?))
}
