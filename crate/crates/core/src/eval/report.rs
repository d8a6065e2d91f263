use serde::{Deserialize, Serialize};

use super::{EvalConfig, TiePolicy};
use crate::error::Result;
use crate::fit::{FitConfig, FitMethod};
use crate::similarity::WeightVector;
use crate::stem::{StemConfig, StemKind};
use crate::store::{Configuration, Source};

/// Which embeddings a dataset was scored on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetTag {
    pub encoder_id: String,
    pub source: Source,
}

impl DatasetTag {
    pub fn new(encoder_id: impl Into<String>, source: Source) -> Self {
        DatasetTag {
            encoder_id: encoder_id.into(),
            source,
        }
    }
}

/// Everything needed to rerun a fit report exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub encoder_id: String,
    pub source: Source,
    pub stem_config: String,
    pub channels: Vec<StemKind>,
    pub cutoff: f64,
    pub method: FitMethod,
    pub lambda: f64,
    pub seed: u64,
    pub iterations: usize,
    pub train_fraction: f64,
    pub tie_policy: TiePolicy,
    pub std_convention: String,
    pub intercept: bool,
    pub standardized_features: bool,
}

impl Provenance {
    pub fn new(dataset: &DatasetTag, config: &StemConfig, fit: &FitConfig, eval: &EvalConfig) -> Self {
        Provenance {
            encoder_id: dataset.encoder_id.clone(),
            source: dataset.source,
            stem_config: config.name().to_string(),
            channels: config.channels().to_vec(),
            cutoff: eval.cutoff,
            method: fit.method,
            lambda: fit.effective_lambda(),
            seed: eval.seed,
            iterations: eval.iterations,
            train_fraction: eval.train_fraction,
            tie_policy: eval.tie_policy,
            std_convention: "sample (n-1)".into(),
            intercept: false,
            standardized_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub index: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub failure: Option<String>,
}

/// Result of a cross-validated fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub provenance: Provenance,
    pub n_triplets: usize,
    pub n_majority_a: usize,
    pub n_majority_b: usize,
    /// Element-wise mean of `weights_per_split`.
    pub weights_mean: WeightVector,
    /// One fit on every sample; absent when that system is singular.
    pub weights_full_data: Option<WeightVector>,
    pub accuracy_mean: f64,
    /// Sample standard deviation (n − 1) of `accuracy_per_split`.
    pub accuracy_std: f64,
    /// Indices of the splits that entered the aggregates.
    pub successful_splits: Vec<usize>,
    pub failed_splits: Vec<usize>,
    pub accuracy_per_split: Vec<f64>,
    pub weights_per_split: Vec<WeightVector>,
    pub splits: Vec<SplitOutcome>,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Agreement of the global cosine model on one dataset cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub encoder_id: String,
    pub source: Source,
    pub instrument_class: StemKind,
    pub configuration: Configuration,
    pub n_triplets: usize,
    pub agreement: f64,
    pub cutoff: f64,
    pub tie_policy: TiePolicy,
}

/// One row per split: index, sizes, accuracy, then one weight column per channel.
pub fn splits_to_csv(report: &FitReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["split".to_string(), "train_size".into(), "test_size".into(), "accuracy".into()];
    header.extend(report.provenance.channels.iter().map(|c| format!("w_{c}")));
    header.push("failure".into());
    w.write_record(&header)?;
    for s in &report.splits {
        let mut row = vec![
            s.index.to_string(),
            s.train_size.to_string(),
            s.test_size.to_string(),
            s.accuracy.map(|a| a.to_string()).unwrap_or_default(),
        ];
        match &s.weights {
            Some(ws) => row.extend(ws.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), report.provenance.channels.len())),
        }
        row.push(s.failure.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    finish(w)
}

/// One row per `(instrument_class, configuration)` cell.
pub fn cells_to_csv(cells: &[CellScore]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "encoder_id",
        "source",
        "instrument_class",
        "configuration",
        "n_triplets",
        "agreement",
        "cutoff",
        "tie_policy",
    ])?;
    for c in cells {
        w.write_record([
            c.encoder_id.clone(),
            c.source.to_string(),
            c.instrument_class.to_string(),
            c.configuration.to_string(),
            c.n_triplets.to_string(),
            c.agreement.to_string(),
            c.cutoff.to_string(),
            c.tie_policy.to_string(),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| crate::error::Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| crate::error::Error::Serialization(e.to_string()))
}
