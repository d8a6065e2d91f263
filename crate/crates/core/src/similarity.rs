//! Cosine similarity, the global-embedding choice model and the
//! instrument-wise weighted model.
//!
//! All arithmetic runs in `f64`, whatever the storage type: features are
//! differences of nearly equal cosines and single precision erases them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stem::{StemConfig, StemKind};
use crate::store::{Role, StemBundle};

/// Norms below this are treated as zero vectors.
pub const NORM_EPSILON: f64 = 1e-12;

pub fn dot<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a.into() * b.into()).sum()
}

pub fn l2_norm<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    v.iter()
        .map(|&a| {
            let a: f64 = a.into();
            a * a
        })
        .sum::<f64>()
        .sqrt()
}

/// Cosine given already-validated norms. Produces exactly the same value as
/// [`cosine`] when handed the norms computed by [`l2_norm`].
pub(crate) fn cosine_with_norms<T: Copy + Into<f64>>(u: &[T], v: &[T], norm_u: f64, norm_v: f64) -> f64 {
    (dot(u, v) / (norm_u * norm_v)).clamp(-1.0, 1.0)
}

/// `u·v / (‖u‖‖v‖)` clamped to `[-1, 1]`.
pub fn cosine<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if nu < NORM_EPSILON || nv < NORM_EPSILON {
        return Err(Error::DegenerateVector(format!(
            "norm below {NORM_EPSILON:e} ({nu:e}, {nv:e})"
        )));
    }
    Ok(cosine_with_norms(u, v, nu, nv))
}

/// A listener's (or model's) binary preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Preference {
    A,
    B,
}

impl Preference {
    /// Regression target: `+1` for A, `-1` for B.
    pub fn sign(self) -> f64 {
        match self {
            Preference::A => 1.0,
            Preference::B => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Preference::A => Preference::B,
            Preference::B => Preference::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    #[serde(rename = "tie")]
    Tie,
}

impl Choice {
    pub fn agrees_with(self, truth: Preference) -> Option<bool> {
        match self {
            Choice::A => Some(truth == Preference::A),
            Choice::B => Some(truth == Preference::B),
            Choice::Tie => None,
        }
    }
}

/// Signed margin and the choice it implies. A score of exactly zero is a tie.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub choice: Choice,
    pub score: f64,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        let (choice, score) = if score > 0.0 {
            (Choice::A, score)
        } else if score < 0.0 {
            (Choice::B, score)
        } else {
            // folds -0.0
            (Choice::Tie, 0.0)
        };
        Prediction { choice, score }
    }
}

/// Picks the candidate whose global embedding has the larger cosine to the
/// reference. `score = cos(x, a) - cos(x, b)`.
pub fn predict_standard<T: Copy + Into<f64>>(x: &[T], a: &[T], b: &[T]) -> Result<Prediction> {
    Ok(Prediction::from_score(cosine(x, a)? - cosine(x, b)?))
}

fn check_entries(config: &StemConfig, values: &[f64], what: &str) -> Result<()> {
    if values.len() != config.k() {
        return Err(Error::InvalidInput(format!(
            "{what} has {} entries for config {config} with K={}",
            values.len(),
            config.k()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} entry {i} is not finite")));
    }
    Ok(())
}

/// Per-channel cosine differences `f(k) = cos(X(k), A(k)) - cos(X(k), B(k))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    config: StemConfig,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(config: StemConfig, values: Vec<f64>) -> Result<Self> {
        check_entries(&config, &values, "feature vector")?;
        if let Some(v) = values.iter().find(|v| v.abs() > 2.0) {
            return Err(Error::InvalidInput(format!("feature {v} outside [-2, 2]")));
        }
        Ok(FeatureVector { config, values })
    }

    pub fn zeros(config: StemConfig) -> Self {
        let values = vec![0.0; config.k()];
        FeatureVector { config, values }
    }

    pub fn config(&self) -> &StemConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn negated(&self) -> Self {
        FeatureVector {
            config: self.config.clone(),
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Per-channel importance weights of the weighted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    config: StemConfig,
    values: Vec<f64>,
}

impl WeightVector {
    pub fn new(config: StemConfig, values: Vec<f64>) -> Result<Self> {
        check_entries(&config, &values, "weight vector")?;
        Ok(WeightVector { config, values })
    }

    /// Weight 1 on `stem`, 0 elsewhere.
    pub fn one_hot(config: StemConfig, stem: StemKind) -> Result<Self> {
        let at = config
            .position(stem)
            .ok_or_else(|| Error::InvalidInput(format!("{stem} is not a channel of {config}")))?;
        let mut values = vec![0.0; config.k()];
        values[at] = 1.0;
        Ok(WeightVector { config, values })
    }

    /// Equal weights summing to one.
    pub fn uniform(config: StemConfig) -> Self {
        let k = config.k();
        WeightVector {
            values: vec![1.0 / k as f64; k],
            config,
        }
    }

    pub fn config(&self) -> &StemConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, stem: StemKind) -> Option<f64> {
        self.config.position(stem).map(|i| self.values[i])
    }

    /// `(stem, weight)` pairs in channel order.
    pub fn iter(&self) -> impl Iterator<Item = (StemKind, f64)> + '_ {
        self.config.channels().iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

/// Builds the feature vector of one triplet from its stem bundle.
pub fn triplet_features(bundle: &StemBundle<'_>) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(bundle.config().k());
    for (stem, x, a, b) in bundle.channels() {
        let norms = [(Role::X, l2_norm(x)), (Role::A, l2_norm(a)), (Role::B, l2_norm(b))];
        if let Some((role, n)) = norms.iter().find(|(_, n)| *n < NORM_EPSILON) {
            return Err(Error::DegenerateVector(format!("role {role} stem {stem}: norm {n:e}")));
        }
        if a.len() != x.len() || b.len() != x.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: if a.len() != x.len() { a.len() } else { b.len() },
            });
        }
        let [(_, nx), (_, na), (_, nb)] = norms;
        values.push(cosine_with_norms(x, a, nx, na) - cosine_with_norms(x, b, nx, nb));
    }
    FeatureVector::new(bundle.config().clone(), values)
}

/// `score = wᵀf`. A zero feature vector always yields a tie.
pub fn predict_weighted(features: &FeatureVector, weights: &WeightVector) -> Result<Prediction> {
    weights.config.ensure_same(&features.config)?;
    Ok(Prediction::from_score(dot(&weights.values, &features.values)))
}
