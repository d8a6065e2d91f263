//! Synthetic stem embeddings and listener votes with a known ground-truth
//! weight vector.
//!
//! Every stem of every segment is an independent direction drawn uniformly
//! from the unit sphere. Labels come from `sign(w*ᵀf)`, optionally flipped
//! with probability `label_noise`, and are turned into a panel vote whose
//! agreement level is uniform in `[0.6, 1]`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, MissingKey, Result};
use crate::similarity::{dot, l2_norm, triplet_features, Preference, WeightVector, NORM_EPSILON};
use crate::stem::{StemConfig, StemKind};
use crate::store::{
    Configuration, EmbeddingRecord, EmbeddingStore, RecordKey, Source, StemBundle, TripletRecord, DEFAULT_DIMENSION,
};

/// Margins below this absolute value are always redrawn.
pub const MIN_ABS_MARGIN: f64 = 1e-9;

const MAX_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_triplets: usize,
    pub dimension: usize,
    pub config: StemConfig,
    pub true_weights: WeightVector,
    /// Probability that a triplet's majority label is flipped.
    pub label_noise: f64,
    /// Synthetic listeners per triplet.
    pub panel_size: u32,
    /// Triplets whose feature vector makes an angle with `w*` of cosine below
    /// this (in absolute value) are redrawn. Zero keeps everything except
    /// margins below [`MIN_ABS_MARGIN`].
    pub min_margin_cos: f64,
    pub encoder_id: String,
    pub source: Source,
}

impl SynthConfig {
    pub fn new(true_weights: WeightVector, seed: u64) -> Self {
        SynthConfig {
            seed,
            n_triplets: 500,
            dimension: DEFAULT_DIMENSION,
            config: true_weights.config().clone(),
            true_weights,
            label_noise: 0.0,
            panel_size: 10,
            min_margin_cos: 0.1,
            encoder_id: "synthetic".into(),
            source: Source::Mss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_triplets == 0 || self.dimension == 0 || self.panel_size == 0 {
            return bad("n_triplets, dimension and panel_size must be positive".into());
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad(format!("label_noise {} outside [0, 0.5)", self.label_noise));
        }
        if !(0.0..1.0).contains(&self.min_margin_cos) {
            return bad(format!("min_margin_cos {} outside [0, 1)", self.min_margin_cos));
        }
        self.config.ensure_same(self.true_weights.config())?;
        if self.true_weights.norm() == 0.0 {
            return bad("true weights are all zero".into());
        }
        Ok(())
    }
}

/// Ground truth behind one synthetic triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub triplet_id: String,
    /// `w*ᵀf`.
    pub margin: f64,
    pub clean_label: Preference,
    pub label: Preference,
    pub flipped: bool,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub store: EmbeddingStore,
    pub triplets: Vec<TripletRecord>,
    pub truth: Vec<SynthTruth>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dimension: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
        let n = l2_norm(&v);
        if n > NORM_EPSILON {
            return v.into_iter().map(|x| (x / n) as f32).collect();
        }
    }
}

struct Generated {
    triplet: TripletRecord,
    truth: SynthTruth,
    records: Vec<EmbeddingRecord>,
}

fn generate_one(cfg: &SynthConfig, index: usize) -> Result<Generated> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let k = cfg.config.k();
    let w_norm = cfg.true_weights.norm();

    let configuration = if rng.random_bool(0.5) {
        Configuration::Xab
    } else {
        Configuration::Xyc
    };
    let triplet_id = format!("syn{index:06}");
    let x_segment = format!("{triplet_id}-x:0-5");
    let (a_segment, b_segment) = match configuration {
        Configuration::Xab => (format!("{triplet_id}-a:0-5"), format!("{triplet_id}-b:0-5")),
        // one candidate is another span of the reference track
        Configuration::Xyc if rng.random_bool(0.5) => (format!("{triplet_id}-x:5-10"), format!("{triplet_id}-b:0-5")),
        Configuration::Xyc => (format!("{triplet_id}-a:0-5"), format!("{triplet_id}-x:5-10")),
    };

    let mut draws = 0;
    let (vectors, margin) = loop {
        draws += 1;
        if draws > MAX_DRAWS {
            return Err(Error::InvalidConfig(format!(
                "no triplet met the margin floor after {MAX_DRAWS} draws"
            )));
        }
        let vectors: Vec<Vec<f32>> = (0..3 * k).map(|_| unit_vector(&mut rng, cfg.dimension)).collect();
        let role = |r: usize| vectors[r * k..(r + 1) * k].iter().map(Vec::as_slice).collect();
        let bundle = StemBundle::new(cfg.config.clone(), role(0), role(1), role(2))?;
        let features = triplet_features(&bundle)?;
        let margin = dot(cfg.true_weights.values(), features.values());
        let floor = cfg.min_margin_cos * w_norm * l2_norm(features.values());
        if margin.abs() >= MIN_ABS_MARGIN && margin.abs() >= floor {
            break (vectors, margin);
        }
    };

    let clean_label = if margin > 0.0 { Preference::A } else { Preference::B };
    let flipped = cfg.label_noise > 0.0 && rng.random_bool(cfg.label_noise);
    let label = if flipped { clean_label.flipped() } else { clean_label };

    let panel = cfg.panel_size;
    let agreement: f64 = rng.random_range(0.6..=1.0);
    let majority = ((agreement * panel as f64).ceil() as u32).clamp(panel / 2 + 1, panel);
    let (votes_a, votes_b) = match label {
        Preference::A => (majority, panel - majority),
        Preference::B => (panel - majority, majority),
    };

    let mut records = Vec::with_capacity(3 * k);
    for (r, segment) in [&x_segment, &a_segment, &b_segment].into_iter().enumerate() {
        for (c, &stem) in cfg.config.channels().iter().enumerate() {
            let key = RecordKey::new(segment.as_str(), stem, cfg.encoder_id.as_str(), cfg.source);
            records.push(EmbeddingRecord::new(key, vectors[r * k + c].clone())?);
        }
    }

    Ok(Generated {
        triplet: TripletRecord {
            triplet_id: triplet_id.clone(),
            configuration,
            instrument_class: StemKind::Mix,
            x_segment,
            a_segment,
            b_segment,
            votes_a,
            votes_b,
        },
        truth: SynthTruth {
            triplet_id,
            margin,
            clean_label,
            label,
            flipped,
        },
        records,
    })
}

/// Generates an embedding store and vote manifest. Triplet `i` uses its own
/// ChaCha8 stream under `cfg.seed`, so output is identical however the work
/// is scheduled.
pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let generated: Vec<Generated> = (0..cfg.n_triplets)
        .into_par_iter()
        .map(|i| generate_one(cfg, i))
        .collect::<Result<_>>()?;
    let mut store = EmbeddingStore::new(cfg.dimension);
    let mut triplets = Vec::with_capacity(generated.len());
    let mut truth = Vec::with_capacity(generated.len());
    for g in generated {
        for r in g.records {
            store.insert(r)?;
        }
        triplets.push(g.triplet);
        truth.push(g.truth);
    }
    Ok(SynthDataset { store, triplets, truth })
}

/// Controlled corruptions of a store's stem embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Leak the mix into every stem: `v ← normalize((1 − α)·v + α·mix)`.
    Bleed(f64),
    /// Remove every record of one stem channel.
    Dropout(StemKind),
    /// Scale one stem's vectors by a positive gain.
    Gain(StemKind, f64),
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Bleed(a) => write!(f, "bleed({a})"),
            Perturbation::Dropout(s) => write!(f, "dropout({s})"),
            Perturbation::Gain(s, g) => write!(f, "gain({s},{g})"),
        }
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    /// Parses `bleed(α)`, `dropout(stem)` or `gain(stem,g)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidPerturbation(format!("cannot parse {s:?}"));
        let (name, rest) = s.trim().split_once('(').ok_or_else(bad)?;
        let args: Vec<&str> = rest.strip_suffix(')').ok_or_else(bad)?.split(',').map(str::trim).collect();
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
        match (name.trim(), &args[..]) {
            ("bleed", [alpha]) => Ok(Perturbation::Bleed(num(alpha)?)),
            ("dropout", [stem]) => Ok(Perturbation::Dropout(stem.parse()?)),
            ("gain", [stem, g]) => Ok(Perturbation::Gain(stem.parse()?, num(g)?)),
            _ => Err(bad()),
        }
    }
}

/// Applies a perturbation, returning a new store.
pub fn perturb_stems(store: &EmbeddingStore, perturbation: Perturbation) -> Result<EmbeddingStore> {
    match perturbation {
        Perturbation::Bleed(alpha) => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::InvalidPerturbation(format!("bleed {alpha} outside [0, 1]")));
            }
            if alpha == 0.0 {
                return Ok(store.clone());
            }
            let records = store
                .iter()
                .map(|r| {
                    if r.stem() == StemKind::Mix {
                        return Ok(r.clone());
                    }
                    let mix = store
                        .lookup(r.segment_id(), StemKind::Mix, r.encoder_id(), r.source())
                        .ok_or_else(|| Error::MissingStem {
                            triplet_id: None,
                            missing: vec![MissingKey {
                                segment_id: r.segment_id().to_string(),
                                stem: StemKind::Mix,
                            }],
                        })?;
                    let blended: Vec<f64> = r
                        .vector()
                        .iter()
                        .zip(mix.vector())
                        .map(|(&v, &m)| (1.0 - alpha) * v as f64 + alpha * m as f64)
                        .collect();
                    let n = l2_norm(&blended);
                    if n < NORM_EPSILON {
                        return Err(Error::DegenerateVector(format!("bleed cancelled {}", r.key())));
                    }
                    EmbeddingRecord::new(r.key().clone(), blended.iter().map(|v| (v / n) as f32).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            EmbeddingStore::from_records(store.dimension(), records)
        }
        Perturbation::Dropout(stem) => {
            EmbeddingStore::from_records(store.dimension(), store.iter().filter(|r| r.stem() != stem).cloned())
        }
        Perturbation::Gain(stem, gain) => {
            if !(gain > 0.0 && gain.is_finite()) {
                return Err(Error::InvalidPerturbation(format!("gain {gain} must be positive and finite")));
            }
            let records = store
                .iter()
                .map(|r| {
                    if r.stem() != stem {
                        return Ok(r.clone());
                    }
                    let scaled = r.vector().iter().map(|&v| (v as f64 * gain) as f32).collect();
                    EmbeddingRecord::new(r.key().clone(), scaled)
                })
                .collect::<Result<Vec<_>>>()?;
            EmbeddingStore::from_records(store.dimension(), records)
        }
    }
}
