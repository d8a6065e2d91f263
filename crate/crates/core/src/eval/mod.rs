//! Listening-test evaluation: majority-vote aggregation with agreement
//! cutoffs, perceptual agreement scoring, stratified shuffle-split
//! cross-validation of the weighted model, and the per-cell evaluation of the
//! global cosine model.

mod report;

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{cells_to_csv, splits_to_csv, CellScore, DatasetTag, FitReport, Provenance, SplitOutcome};

use crate::error::{Error, MissingKey, Result};
use crate::fit::{build_design, condition_report, fit, DesignMatrix, FitConfig};
use crate::similarity::{dot, predict_standard, FeatureVector, Prediction, Preference, WeightVector};
use crate::stem::StemConfig;
use crate::store::{EmbeddingStore, Source, TripletRecord};

/// A triplet that survived majority-vote filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedTriplet {
    pub triplet: TripletRecord,
    pub majority: Preference,
    /// `max(votes) / total votes`, always above one half.
    pub agreement: f64,
}

fn check_cutoff(cutoff: f64) -> Result<()> {
    if (0.5..=1.0).contains(&cutoff) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("cutoff {cutoff} outside [0.5, 1]")))
    }
}

/// Majority vote with an inclusive agreement cutoff. Exact vote ties never
/// survive. Input order is preserved.
pub fn aggregate(triplets: &[TripletRecord], cutoff: f64) -> Result<Vec<AggregatedTriplet>> {
    check_cutoff(cutoff)?;
    Ok(triplets
        .iter()
        .filter_map(|t| {
            let majority = match t.votes_a.cmp(&t.votes_b) {
                std::cmp::Ordering::Greater => Preference::A,
                std::cmp::Ordering::Less => Preference::B,
                std::cmp::Ordering::Equal => return None,
            };
            let agreement = t.votes_a.max(t.votes_b) as f64 / t.total_votes() as f64;
            (agreement >= cutoff).then(|| AggregatedTriplet {
                triplet: t.clone(),
                majority,
                agreement,
            })
        })
        .collect())
}

/// How a predicted tie is scored against the human majority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// A tie earns half a match.
    #[default]
    HalfCredit,
    /// A tie is a miss.
    CountWrong,
    /// Ties leave both the numerator and the denominator.
    Exclude,
}

impl TiePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            TiePolicy::HalfCredit => "half_credit",
            TiePolicy::CountWrong => "count_wrong",
            TiePolicy::Exclude => "exclude",
        }
    }
}

impl std::fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TiePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half_credit" => Ok(TiePolicy::HalfCredit),
            "count_wrong" => Ok(TiePolicy::CountWrong),
            "exclude" => Ok(TiePolicy::Exclude),
            other => Err(Error::InvalidConfig(format!("unknown tie policy {other:?}"))),
        }
    }
}

/// Fraction of predictions that match the majority label.
///
/// With [`TiePolicy::Exclude`], a set made only of ties has nothing left to
/// score and yields [`Error::EmptyDataset`].
pub fn agreement_score(predictions: &[Prediction], truths: &[Preference], policy: TiePolicy) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    let mut credit = 0.0;
    let mut total = 0usize;
    for (p, &truth) in predictions.iter().zip(truths) {
        match (p.choice.agrees_with(truth), policy) {
            (Some(hit), _) => {
                credit += if hit { 1.0 } else { 0.0 };
                total += 1;
            }
            (None, TiePolicy::HalfCredit) => {
                credit += 0.5;
                total += 1;
            }
            (None, TiePolicy::CountWrong) => total += 1,
            (None, TiePolicy::Exclude) => {}
        }
    }
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(credit / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub cutoff: f64,
    pub iterations: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub tie_policy: TiePolicy,
    /// Evaluate splits on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cutoff: 0.75,
            iterations: 100,
            train_fraction: 0.7,
            seed: 0,
            tie_policy: TiePolicy::HalfCredit,
            parallel: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        check_cutoff(self.cutoff)?;
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Train and test row indices of one split, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Snaps products like `0.7 * 60` that land a few ulps off an integer.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Per-class training counts: floors of `fraction * size`, topped up by
/// largest remainder (earlier classes win ties) until the total equals
/// `round(fraction * N)`.
pub fn train_allocation(class_sizes: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = class_sizes.iter().sum();
    let total = snap(fraction * n as f64).round() as usize;
    let quotas: Vec<f64> = class_sizes.iter().map(|&c| snap(fraction * c as f64)).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&i, &j| {
        let (ri, rj) = (quotas[i] - quotas[i].floor(), quotas[j] - quotas[j].floor());
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    let deficit = total.saturating_sub(alloc.iter().sum());
    for &i in order.iter().take(deficit) {
        alloc[i] += 1;
    }
    alloc
}

/// Stratified shuffle splits over the majority labels.
///
/// Split `i` draws from a ChaCha8 stream selected by `i` under `cfg.seed`, so
/// each split is reproducible on its own and independent of evaluation order.
pub fn stratified_splits(labels: &[Preference], cfg: &EvalConfig) -> Result<Vec<Split>> {
    cfg.validate()?;
    let classes = [Preference::A, Preference::B];
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    for (class, m) in classes.iter().zip(&members) {
        if m.len() < 2 {
            return Err(Error::StratificationError(format!(
                "class {class:?} has {} member(s), need at least 2",
                m.len()
            )));
        }
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let alloc = train_allocation(&sizes, cfg.train_fraction);
    let train_total: usize = alloc.iter().sum();
    if train_total == 0 || train_total == labels.len() {
        return Err(Error::StratificationError(format!(
            "train fraction {} leaves an empty side with {} samples",
            cfg.train_fraction,
            labels.len()
        )));
    }

    Ok((0..cfg.iterations)
        .map(|split| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(split as u64);
            let mut train = Vec::with_capacity(train_total);
            let mut test = Vec::with_capacity(labels.len() - train_total);
            for (m, &take) in members.iter().zip(&alloc) {
                let mut shuffled = m.clone();
                shuffled.shuffle(&mut rng);
                train.extend_from_slice(&shuffled[..take]);
                test.extend_from_slice(&shuffled[take..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            Split { train, test }
        })
        .collect())
}

/// Global-cosine agreement for every `(instrument_class, configuration)` cell.
///
/// Each triplet is scored on the embeddings of its own instrument class
/// (`mix` for the full-mix subset). No fitting is involved.
pub fn evaluate_standard(
    triplets: &[TripletRecord],
    cutoff: f64,
    store: &EmbeddingStore,
    dataset: &DatasetTag,
    tie_policy: TiePolicy,
) -> Result<Vec<CellScore>> {
    let mut cells: BTreeMap<_, (Vec<Prediction>, Vec<Preference>)> = BTreeMap::new();
    for agg in aggregate(triplets, cutoff)? {
        let t = &agg.triplet;
        let stem = t.instrument_class;
        let mut missing = Vec::new();
        let mut fetch = |segment: &str| {
            let found = store.lookup(segment, stem, &dataset.encoder_id, dataset.source);
            if found.is_none() {
                missing.push(MissingKey {
                    segment_id: segment.to_string(),
                    stem,
                });
            }
            found
        };
        let (x, a, b) = (fetch(&t.x_segment), fetch(&t.a_segment), fetch(&t.b_segment));
        let (Some(x), Some(a), Some(b)) = (x, a, b) else {
            return Err(Error::MissingStem {
                triplet_id: Some(t.triplet_id.clone()),
                missing,
            });
        };
        let prediction = predict_standard(x.vector(), a.vector(), b.vector()).map_err(|e| match e {
            Error::DegenerateVector(msg) => Error::DegenerateVector(format!("triplet {}: {msg}", t.triplet_id)),
            other => other,
        })?;
        let cell = cells.entry((stem, t.configuration)).or_default();
        cell.0.push(prediction);
        cell.1.push(agg.majority);
    }
    cells
        .into_iter()
        .map(|((instrument_class, configuration), (predictions, truths))| {
            Ok(CellScore {
                encoder_id: dataset.encoder_id.clone(),
                source: dataset.source,
                instrument_class,
                configuration,
                n_triplets: predictions.len(),
                agreement: agreement_score(&predictions, &truths, tie_policy)?,
                cutoff,
                tie_policy,
            })
        })
        .collect()
}

/// One row of the weighted-model dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub triplet_id: String,
    pub features: FeatureVector,
    pub label: Preference,
}

/// Resolves stems and features for every aggregated triplet.
pub fn labeled_samples(
    triplets: &[AggregatedTriplet],
    store: &EmbeddingStore,
    config: &StemConfig,
    encoder_id: &str,
    source: Source,
) -> Result<Vec<LabeledSample>> {
    triplets
        .iter()
        .map(|agg| {
            let bundle = store.resolve_stems(&agg.triplet, config, encoder_id, source)?;
            let features = crate::similarity::triplet_features(&bundle).map_err(|e| match e {
                Error::DegenerateVector(msg) => {
                    Error::DegenerateVector(format!("triplet {}: {msg}", agg.triplet.triplet_id))
                }
                other => other,
            })?;
            Ok(LabeledSample {
                triplet_id: agg.triplet.triplet_id.clone(),
                features,
                label: agg.majority,
            })
        })
        .collect()
}

fn score_rows(design: &DesignMatrix, rows: &[usize], weights: &WeightVector, policy: TiePolicy) -> Result<f64> {
    let mut predictions = Vec::with_capacity(rows.len());
    let mut truths = Vec::with_capacity(rows.len());
    for &i in rows {
        predictions.push(Prediction::from_score(dot(weights.values(), design.row(i))));
        truths.push(if design.labels()[i] > 0.0 { Preference::A } else { Preference::B });
    }
    agreement_score(&predictions, &truths, policy)
}

fn run_split(design: &DesignMatrix, index: usize, split: &Split, fit_cfg: &FitConfig, policy: TiePolicy) -> Result<SplitOutcome> {
    let train = design.select(&split.train)?;
    let outcome = match fit(&train, fit_cfg) {
        Ok(weights) => SplitOutcome {
            index,
            train_size: split.train.len(),
            test_size: split.test.len(),
            accuracy: Some(score_rows(design, &split.test, &weights, policy)?),
            weights: Some(weights.values().to_vec()),
            failure: None,
        },
        Err(Error::SingularSystem { condition }) => SplitOutcome {
            index,
            train_size: split.train.len(),
            test_size: split.test.len(),
            accuracy: None,
            weights: None,
            failure: Some(format!("SingularSystem (condition {condition:e})")),
        },
        Err(other) => return Err(other),
    };
    Ok(outcome)
}

/// Mean and sample (n − 1) standard deviation. A single value has zero spread.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Repeated stratified shuffle-split evaluation of the weighted model.
///
/// Samples are sorted by `triplet_id` first, so the report depends only on
/// the set of samples and the seed. Splits whose training system is singular
/// are listed in the report and left out of every aggregate.
pub fn cross_validate(
    samples: &[LabeledSample],
    fit_cfg: &FitConfig,
    eval_cfg: &EvalConfig,
    dataset: &DatasetTag,
) -> Result<FitReport> {
    fit_cfg.validate()?;
    eval_cfg.validate()?;
    let mut sorted: Vec<&LabeledSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.triplet_id.cmp(&b.triplet_id));
    let mut seen = HashSet::with_capacity(sorted.len());
    if let Some(dup) = sorted.iter().find(|s| !seen.insert(s.triplet_id.as_str())) {
        return Err(Error::InvalidInput(format!("duplicate triplet_id {}", dup.triplet_id)));
    }
    let rows: Vec<(FeatureVector, Preference)> = sorted.iter().map(|s| (s.features.clone(), s.label)).collect();
    let design = build_design(&rows)?;
    let labels: Vec<Preference> = rows.iter().map(|(_, l)| *l).collect();
    let splits = stratified_splits(&labels, eval_cfg)?;

    let policy = eval_cfg.tie_policy;
    let outcomes: Vec<SplitOutcome> = if eval_cfg.parallel {
        splits
            .par_iter()
            .enumerate()
            .map(|(i, s)| run_split(&design, i, s, fit_cfg, policy))
            .collect::<Result<_>>()?
    } else {
        splits
            .iter()
            .enumerate()
            .map(|(i, s)| run_split(&design, i, s, fit_cfg, policy))
            .collect::<Result<_>>()?
    };

    let ok: Vec<&SplitOutcome> = outcomes.iter().filter(|o| o.accuracy.is_some()).collect();
    if ok.is_empty() {
        return Err(Error::SingularSystem {
            condition: condition_report(&design),
        });
    }
    let accuracy_per_split: Vec<f64> = ok.iter().filter_map(|o| o.accuracy).collect();
    let (accuracy_mean, accuracy_std) = mean_and_std(&accuracy_per_split);
    let config = design.config().clone();
    let weights_per_split: Vec<WeightVector> = ok
        .iter()
        .filter_map(|o| o.weights.clone())
        .map(|w| WeightVector::new(config.clone(), w))
        .collect::<Result<_>>()?;
    let k = config.k();
    let mean_values: Vec<f64> = (0..k)
        .map(|j| weights_per_split.iter().map(|w| w.values()[j]).sum::<f64>() / weights_per_split.len() as f64)
        .collect();
    let weights_full_data = match fit(&design, fit_cfg) {
        Ok(w) => Some(w),
        Err(Error::SingularSystem { .. }) => None,
        Err(other) => return Err(other),
    };
    let count_a = labels.iter().filter(|&&l| l == Preference::A).count();

    Ok(FitReport {
        provenance: Provenance::new(dataset, &config, fit_cfg, eval_cfg),
        n_triplets: design.n(),
        n_majority_a: count_a,
        n_majority_b: design.n() - count_a,
        weights_mean: WeightVector::new(config, mean_values)?,
        weights_full_data,
        successful_splits: ok.iter().map(|o| o.index).collect(),
        failed_splits: outcomes.iter().filter(|o| o.accuracy.is_none()).map(|o| o.index).collect(),
        accuracy_per_split,
        accuracy_mean,
        accuracy_std,
        weights_per_split,
        splits: outcomes,
    })
}
