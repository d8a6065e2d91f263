//! Embedding records, the immutable in-memory store, and stem resolution for
//! triplets.
//!
//! Vectors are kept exactly as produced by the encoder (float32, not
//! normalized) together with a cached double-precision L2 norm.

mod manifest;
mod pack;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use manifest::{format_triplets, load_triplets, parse_triplets, write_triplets, Configuration, TripletRecord};
pub use pack::{decode_pack, encode_pack, load_packs, read_pack, write_pack, PackSummary, PACK_MAGIC, PACK_VERSION};

use crate::error::{Error, MissingKey, Result};
use crate::similarity::l2_norm;
use crate::stem::{StemConfig, StemKind};

/// Default embedding dimension of the text-audio encoders.
pub const DEFAULT_DIMENSION: usize = 512;

/// Where the audio behind an embedding came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Automatic music source separation output.
    Mss,
    /// Isolated multitrack stems rendered by the dataset.
    GroundTruth,
    /// The unseparated audio itself.
    MixNative,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Mss => "mss",
            Source::GroundTruth => "ground_truth",
            Source::MixNative => "mix_native",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mss" => Ok(Source::Mss),
            "ground_truth" => Ok(Source::GroundTruth),
            "mix_native" => Ok(Source::MixNative),
            other => Err(Error::InvalidRecord(format!("unknown source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub segment_id: String,
    pub stem: StemKind,
    pub encoder_id: String,
    pub source: Source,
}

impl RecordKey {
    pub fn new(segment_id: impl Into<String>, stem: StemKind, encoder_id: impl Into<String>, source: Source) -> Self {
        RecordKey {
            segment_id: segment_id.into(),
            stem,
            encoder_id: encoder_id.into(),
            source,
        }
    }

    fn validate(&self) -> Result<()> {
        for (field, value) in [("segment_id", &self.segment_id), ("encoder_id", &self.encoder_id)] {
            if value.is_empty() || value.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidRecord(format!(
                    "{field} {value:?} must be non-empty and free of tabs and newlines"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.segment_id, self.stem, self.encoder_id, self.source)
    }
}

/// One embedding vector and its cached L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    key: RecordKey,
    vector: Vec<f32>,
    norm: f64,
}

impl EmbeddingRecord {
    /// Validates the key and vector and caches the norm.
    pub fn new(key: RecordKey, vector: Vec<f32>) -> Result<Self> {
        key.validate()?;
        if vector.is_empty() {
            return Err(Error::InvalidVector(format!("{key}: empty vector")));
        }
        if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!("{key}: entry {i} is not finite")));
        }
        let norm = l2_norm(&vector);
        Ok(EmbeddingRecord { key, vector, norm })
    }

    pub fn key(&self) -> &RecordKey {
        &self.key
    }

    pub fn segment_id(&self) -> &str {
        &self.key.segment_id
    }

    pub fn stem(&self) -> StemKind {
        self.key.stem
    }

    pub fn encoder_id(&self) -> &str {
        &self.key.encoder_id
    }

    pub fn source(&self) -> Source {
        self.key.source
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dimension(&self) -> usize {
        self.vector.len()
    }
}

/// Immutable, key-ordered set of embeddings sharing one dimension.
///
/// Iteration order is the key order, so a store assembled from several packs
/// is the same regardless of the order they were loaded in.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    records: BTreeMap<RecordKey, EmbeddingRecord>,
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Self {
        EmbeddingStore {
            dimension,
            records: BTreeMap::new(),
        }
    }

    pub fn from_records(dimension: usize, records: impl IntoIterator<Item = EmbeddingRecord>) -> Result<Self> {
        let mut store = EmbeddingStore::new(dimension);
        for record in records {
            store.insert(record)?;
        }
        Ok(store)
    }

    /// Adds a record. Existing keys are never overwritten.
    pub fn insert(&mut self, record: EmbeddingRecord) -> Result<()> {
        if record.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: record.dimension(),
                context: record.key.to_string(),
            });
        }
        if self.records.contains_key(&record.key) {
            return Err(Error::DuplicateRecord(record.key.to_string()));
        }
        self.records.insert(record.key.clone(), record);
        Ok(())
    }

    /// Combines two stores. Overlapping keys are rejected.
    pub fn merge(mut self, other: EmbeddingStore) -> Result<Self> {
        if self.is_empty() && self.dimension != other.dimension {
            self.dimension = other.dimension;
        }
        for record in other.records.into_values() {
            self.insert(record)?;
        }
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &RecordKey) -> Option<&EmbeddingRecord> {
        self.records.get(key)
    }

    pub fn lookup(&self, segment_id: &str, stem: StemKind, encoder_id: &str, source: Source) -> Option<&EmbeddingRecord> {
        self.records.get(&RecordKey::new(segment_id, stem, encoder_id, source))
    }

    /// Records in key order.
    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingRecord> {
        self.records.values()
    }

    pub fn into_records(self) -> impl Iterator<Item = EmbeddingRecord> {
        self.records.into_values()
    }

    /// Distinct segment ids carrying at least one record for the encoder and source.
    pub fn segments(&self, encoder_id: &str, source: Source) -> BTreeSet<&str> {
        self.iter()
            .filter(|r| r.encoder_id() == encoder_id && r.source() == source)
            .map(EmbeddingRecord::segment_id)
            .collect()
    }

    /// Distinct `(encoder_id, source)` pairs present in the store.
    pub fn namespaces(&self) -> BTreeSet<(&str, Source)> {
        self.iter().map(|r| (r.encoder_id(), r.source())).collect()
    }

    /// Gathers `X^(k)`, `A^(k)` and `B^(k)` for every channel of `config`.
    ///
    /// Either the full bundle of `3 * K` embeddings is returned or a
    /// [`Error::MissingStem`] naming every absent `(segment, stem)` pair.
    pub fn resolve_stems(
        &self,
        triplet: &TripletRecord,
        config: &StemConfig,
        encoder_id: &str,
        source: Source,
    ) -> Result<StemBundle<'_>> {
        let mut missing = Vec::new();
        let mut gather = |segment: &str| -> Vec<&EmbeddingRecord> {
            config
                .channels()
                .iter()
                .filter_map(|&stem| {
                    let found = self.lookup(segment, stem, encoder_id, source);
                    if found.is_none() {
                        missing.push(MissingKey {
                            segment_id: segment.to_string(),
                            stem,
                        });
                    }
                    found
                })
                .collect()
        };
        let x = gather(&triplet.x_segment);
        let a = gather(&triplet.a_segment);
        let b = gather(&triplet.b_segment);
        if !missing.is_empty() {
            return Err(Error::MissingStem {
                triplet_id: Some(triplet.triplet_id.clone()),
                missing,
            });
        }
        StemBundle::new(config.clone(), vectors(x), vectors(a), vectors(b))
    }
}

fn vectors(records: Vec<&EmbeddingRecord>) -> Vec<&[f32]> {
    records.into_iter().map(EmbeddingRecord::vector).collect()
}

/// Which member of an ABX triplet a vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    X,
    A,
    B,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::X => "X",
            Role::A => "A",
            Role::B => "B",
        })
    }
}

/// Per-channel embeddings of the reference and both candidates, in config
/// channel order.
#[derive(Debug, Clone)]
pub struct StemBundle<'a> {
    config: StemConfig,
    x: Vec<&'a [f32]>,
    a: Vec<&'a [f32]>,
    b: Vec<&'a [f32]>,
}

impl<'a> StemBundle<'a> {
    pub fn new(config: StemConfig, x: Vec<&'a [f32]>, a: Vec<&'a [f32]>, b: Vec<&'a [f32]>) -> Result<Self> {
        for (role, v) in [(Role::X, &x), (Role::A, &a), (Role::B, &b)] {
            if v.len() != config.k() {
                return Err(Error::InvalidInput(format!(
                    "role {role}: {} vectors for a config with K={}",
                    v.len(),
                    config.k()
                )));
            }
        }
        Ok(StemBundle { config, x, a, b })
    }

    pub fn config(&self) -> &StemConfig {
        &self.config
    }

    /// Number of embeddings held (always `3 * K`).
    pub fn len(&self) -> usize {
        self.x.len() + self.a.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn role(&self, role: Role) -> &[&'a [f32]] {
        match role {
            Role::X => &self.x,
            Role::A => &self.a,
            Role::B => &self.b,
        }
    }

    /// `(stem, X, A, B)` per channel.
    pub fn channels(&self) -> impl Iterator<Item = (StemKind, &'a [f32], &'a [f32], &'a [f32])> + '_ {
        self.config
            .channels()
            .iter()
            .enumerate()
            .map(|(i, &stem)| (stem, self.x[i], self.a[i], self.b[i]))
    }

    /// Same bundle with candidates A and B exchanged.
    pub fn swapped(&self) -> Self {
        StemBundle {
            config: self.config.clone(),
            x: self.x.clone(),
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }
}
