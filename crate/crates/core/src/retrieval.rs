//! Query-by-example retrieval ranked by the instrument-wise weighted score
//! `score(c) = Σ_k w_k · cos(ref(k), c(k))` over the active channels.
//!
//! The index is an exhaustive scan over contiguous float32 storage with
//! precomputed norms. Results are sorted by score, descending, with ties
//! broken by ascending segment id.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{PresetRegistry, WeightPreset};
use crate::similarity::{cosine_with_norms, l2_norm, WeightVector, NORM_EPSILON};
use crate::stem::{StemConfig, StemKind};
use crate::store::{EmbeddingStore, Source};

/// Libraries smaller than this are scanned on the calling thread.
const PARALLEL_SCAN_MIN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EntryMetadata {
    pub title: String,
    pub track: String,
    pub span: String,
}

impl EntryMetadata {
    /// Splits a `track:span` segment id; ids without a colon are all track.
    pub fn from_segment_id(segment_id: &str) -> Self {
        let (track, span) = segment_id.rsplit_once(':').unwrap_or((segment_id, ""));
        EntryMetadata {
            title: segment_id.to_string(),
            track: track.to_string(),
            span: span.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    pub segment_id: String,
    pub embeddings: BTreeMap<StemKind, Vec<f32>>,
    pub metadata: EntryMetadata,
}

/// Immutable retrieval index over one stem configuration.
#[derive(Debug, Clone)]
pub struct Index {
    config: StemConfig,
    dimension: usize,
    ids: Vec<String>,
    metadata: Vec<EntryMetadata>,
    /// `n × K × D`, entry-major then channel-major.
    vectors: Vec<f32>,
    /// `n × K`.
    norms: Vec<f64>,
    positions: HashMap<String, usize>,
}

/// Builds an index, ordering entries by segment id.
pub fn build_index(mut entries: Vec<LibraryEntry>, config: &StemConfig) -> Result<Index> {
    let Some(first) = entries.first() else {
        return Err(Error::InvalidInput("cannot index an empty library".into()));
    };
    let dimension = first.embeddings.values().next().map_or(0, Vec::len);
    entries.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
    let k = config.k();
    let n = entries.len();
    let mut index = Index {
        config: config.clone(),
        dimension,
        ids: Vec::with_capacity(n),
        metadata: Vec::with_capacity(n),
        vectors: Vec::with_capacity(n * k * dimension),
        norms: Vec::with_capacity(n * k),
        positions: HashMap::with_capacity(n),
    };
    for entry in entries {
        let invalid = |message: String| Error::InvalidEntry {
            segment_id: entry.segment_id.clone(),
            message,
        };
        if dimension == 0 {
            return Err(invalid("empty embedding".into()));
        }
        if index.positions.contains_key(&entry.segment_id) {
            return Err(invalid("duplicate segment id".into()));
        }
        for &stem in config.channels() {
            let v = entry
                .embeddings
                .get(&stem)
                .ok_or_else(|| invalid(format!("missing {stem} under {config}")))?;
            if v.len() != dimension {
                return Err(invalid(format!("{stem} has dimension {}, index uses {dimension}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("{stem} has non-finite entries")));
            }
            let norm = l2_norm(v);
            if norm < NORM_EPSILON {
                return Err(invalid(format!("{stem} is a zero vector")));
            }
            index.vectors.extend_from_slice(v);
            index.norms.push(norm);
        }
        index.positions.insert(entry.segment_id.clone(), index.ids.len());
        index.ids.push(entry.segment_id);
        index.metadata.push(entry.metadata);
    }
    Ok(index)
}

impl Index {
    /// Indexes every segment of `(encoder_id, source)` that has all channels
    /// of `config`. Returns the index and the ids of incomplete segments.
    pub fn from_store(
        store: &EmbeddingStore,
        config: &StemConfig,
        encoder_id: &str,
        source: Source,
    ) -> Result<(Index, Vec<String>)> {
        let mut entries = Vec::new();
        let mut skipped = Vec::new();
        for segment in store.segments(encoder_id, source) {
            let embeddings: Option<BTreeMap<StemKind, Vec<f32>>> = config
                .channels()
                .iter()
                .map(|&stem| {
                    store
                        .lookup(segment, stem, encoder_id, source)
                        .map(|r| (stem, r.vector().to_vec()))
                })
                .collect();
            match embeddings {
                Some(embeddings) => entries.push(LibraryEntry {
                    segment_id: segment.to_string(),
                    embeddings,
                    metadata: EntryMetadata::from_segment_id(segment),
                }),
                None => skipped.push(segment.to_string()),
            }
        }
        Ok((build_index(entries, config)?, skipped))
    }

    pub fn config(&self) -> &StemConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, segment_id: &str) -> bool {
        self.positions.contains_key(segment_id)
    }

    /// Entries in segment-id order, for paging.
    pub fn entries(&self, offset: usize, limit: usize) -> impl Iterator<Item = (&str, &EntryMetadata)> {
        self.ids
            .iter()
            .zip(&self.metadata)
            .skip(offset)
            .take(limit)
            .map(|(id, m)| (id.as_str(), m))
    }

    pub fn metadata(&self, segment_id: &str) -> Option<&EntryMetadata> {
        self.positions.get(segment_id).map(|&i| &self.metadata[i])
    }

    /// Stored vector of one entry channel.
    pub fn vector(&self, segment_id: &str, stem: StemKind) -> Option<&[f32]> {
        let entry = *self.positions.get(segment_id)?;
        let channel = self.config.position(stem)?;
        Some(self.slot(entry, channel))
    }

    /// Cached norm of one entry channel.
    pub fn norm(&self, segment_id: &str, stem: StemKind) -> Option<f64> {
        let entry = *self.positions.get(segment_id)?;
        let channel = self.config.position(stem)?;
        Some(self.norms[entry * self.config.k() + channel])
    }

    fn slot(&self, entry: usize, channel: usize) -> &[f32] {
        let start = (entry * self.config.k() + channel) * self.dimension;
        &self.vectors[start..start + self.dimension]
    }
}

/// The query example: an indexed segment or raw per-stem embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryReference {
    Segment(String),
    Inline(BTreeMap<StemKind, Vec<f32>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub reference: QueryReference,
    pub weights: WeightVector,
    pub top_k: usize,
    /// Restricts scoring to these channels when present.
    pub channel_filter: Option<BTreeSet<StemKind>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemScore {
    pub stem: StemKind,
    pub weight: f64,
    pub cosine: f64,
    /// `weight * cosine`.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryHit {
    pub segment_id: String,
    pub score: f64,
    /// Active channels in config order; contributions sum to `score`.
    pub breakdown: Vec<StemScore>,
}

/// Ranks the library against the reference. The reference itself is part of
/// the result when it is indexed.
pub fn query(index: &Index, spec: &QuerySpec) -> Result<Vec<QueryHit>> {
    index.config.ensure_same(spec.weights.config())?;
    if spec.top_k == 0 {
        return Err(Error::InvalidQuery("top_k must be at least 1".into()));
    }
    let active: Vec<(usize, StemKind, f64)> = match &spec.channel_filter {
        Some(filter) => {
            if let Some(stray) = filter.iter().find(|s| !index.config.contains(**s)) {
                return Err(Error::InvalidQuery(format!("{stray} is not a channel of {}", index.config)));
            }
            spec.weights
                .iter()
                .enumerate()
                .filter(|(_, (s, _))| filter.contains(s))
                .map(|(i, (s, w))| (i, s, w))
                .collect()
        }
        None => spec.weights.iter().enumerate().map(|(i, (s, w))| (i, s, w)).collect(),
    };
    if active.iter().all(|&(_, _, w)| w == 0.0) {
        return Err(Error::DegenerateQuery);
    }

    let reference: Vec<(&[f32], f64)> = match &spec.reference {
        QueryReference::Segment(id) => {
            let entry = *index.positions.get(id).ok_or_else(|| Error::UnknownSegment(id.clone()))?;
            active
                .iter()
                .map(|&(c, _, _)| (index.slot(entry, c), index.norms[entry * index.config.k() + c]))
                .collect()
        }
        QueryReference::Inline(stems) => active
            .iter()
            .map(|&(_, stem, _)| {
                let v = stems
                    .get(&stem)
                    .ok_or_else(|| Error::InvalidQuery(format!("inline reference lacks {stem}")))?;
                if v.len() != index.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: index.dimension,
                        found: v.len(),
                        context: format!("inline reference {stem}"),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidVector(format!("inline reference {stem}")));
                }
                let norm = l2_norm(v);
                if norm < NORM_EPSILON {
                    return Err(Error::DegenerateVector(format!("inline reference {stem}")));
                }
                Ok((v.as_slice(), norm))
            })
            .collect::<Result<_>>()?,
    };

    let k = index.config.k();
    let score_entry = |entry: usize| -> QueryHit {
        let breakdown: Vec<StemScore> = active
            .iter()
            .zip(&reference)
            .map(|(&(c, stem, weight), &(ref_vec, ref_norm))| {
                let cosine = cosine_with_norms(ref_vec, index.slot(entry, c), ref_norm, index.norms[entry * k + c]);
                StemScore {
                    stem,
                    weight,
                    cosine,
                    contribution: weight * cosine,
                }
            })
            .collect();
        QueryHit {
            segment_id: index.ids[entry].clone(),
            score: breakdown.iter().map(|s| s.contribution).sum(),
            breakdown,
        }
    };
    let mut hits: Vec<QueryHit> = if index.len() >= PARALLEL_SCAN_MIN {
        (0..index.len()).into_par_iter().map(score_entry).collect()
    } else {
        (0..index.len()).map(score_entry).collect()
    };
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.segment_id.cmp(&b.segment_id)));
    hits.truncate(spec.top_k);
    Ok(hits)
}

/// Built-in presets for the index config followed by matching fitted presets.
pub fn weight_presets(index: &Index, registry: &PresetRegistry) -> Vec<WeightPreset> {
    registry.for_config(&index.config)
}
