//! Instrument-aware perceptual music similarity.
//!
//! Per-stem embeddings are compared with cosine similarity, combined with a
//! learned linear weighting over stems, evaluated against listening-test
//! triplets and used for query-by-example retrieval.

pub mod error;
pub mod eval;
pub mod fit;
pub mod retrieval;
pub mod similarity;
pub mod stem;
pub mod store;
pub mod synth;

pub use error::{Error, MissingKey, Result};
pub use eval::{
    aggregate, agreement_score, cross_validate, evaluate_standard, labeled_samples, stratified_splits,
    AggregatedTriplet, CellScore, DatasetTag, EvalConfig, FitReport, LabeledSample, Provenance, Split, TiePolicy,
};
pub use fit::{build_design, condition_report, fit, DesignMatrix, FitConfig, FitMethod, PresetRegistry, WeightPreset};
pub use retrieval::{build_index, query, Index, LibraryEntry, QueryHit, QueryReference, QuerySpec, StemScore};
pub use similarity::{
    cosine, predict_standard, predict_weighted, triplet_features, Choice, FeatureVector, Prediction, Preference,
    WeightVector,
};
pub use stem::{StemConfig, StemKind};
pub use store::{
    Configuration, EmbeddingRecord, EmbeddingStore, RecordKey, Source, StemBundle, TripletRecord,
};
pub use synth::{generate, perturb_stems, Perturbation, SynthConfig, SynthDataset};
