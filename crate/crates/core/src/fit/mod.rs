//! Zero-intercept least-squares and ridge fits of per-stem weights.
//!
//! The model is `ŷ = wᵀf` with labels `y ∈ {-1, +1}`. There is no intercept,
//! so identical candidates (`f = 0`) always predict a neutral score.
//!
//! Ridge is solved as ordinary least squares on the augmented system
//! `[F; √λ·I] w ≈ [y; 0]` through a Householder QR factorization, so
//! `FᵀF` is never formed on the solver path.

mod preset;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use preset::{
    builtin_presets, format_preset, load_preset, parse_preset, write_preset, Estimate, PresetProvenance, PresetRegistry,
    WeightPreset, MIX_ONLY_PRESET, PRESET_EXTENSION, UNIFORM_PRESET,
};

use crate::error::{Error, Result};
use crate::similarity::{FeatureVector, Preference, WeightVector};
use crate::stem::StemConfig;

/// Condition estimates of `FᵀF` above this make an unregularized fit fail.
pub const MAX_CONDITION: f64 = 1e12;

/// Ridge penalty used when none is configured.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

/// Row-stacked feature vectors and their ±1 labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    config: StemConfig,
    rows: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl DesignMatrix {
    /// Builds a design from raw rows. Each row must be a valid feature vector
    /// for `config` and each label exactly `+1` or `-1`.
    pub fn new(config: StemConfig, rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidInput(format!("label {bad} is not ±1")));
        }
        let n = rows.len();
        let mut features = Vec::with_capacity(n * config.k());
        for row in rows {
            let row = FeatureVector::new(config.clone(), row)?;
            features.extend_from_slice(row.values());
        }
        Ok(DesignMatrix {
            config,
            rows: n,
            features,
            labels,
        })
    }

    pub fn config(&self) -> &StemConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.config.k()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.k();
        &self.features[i * k..(i + 1) * k]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Sub-design made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let k = self.k();
        let mut features = Vec::with_capacity(indices.len() * k);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(DesignMatrix {
            config: self.config.clone(),
            rows: indices.len(),
            features,
            labels,
        })
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.k(), &self.features)
    }
}

/// Stacks labelled feature vectors into a design, preserving order.
pub fn build_design(samples: &[(FeatureVector, Preference)]) -> Result<DesignMatrix> {
    let Some((first, _)) = samples.first() else {
        return Err(Error::EmptyDataset);
    };
    let config = first.config().clone();
    let mut features = Vec::with_capacity(samples.len() * config.k());
    let mut labels = Vec::with_capacity(samples.len());
    for (f, label) in samples {
        config.ensure_same(f.config())?;
        features.extend_from_slice(f.values());
        labels.push(label.sign());
    }
    Ok(DesignMatrix {
        config,
        rows: samples.len(),
        features,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Ols,
    Ridge,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Ols => "ols",
            FitMethod::Ridge => "ridge",
        }
    }
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(FitMethod::Ols),
            "ridge" => Ok(FitMethod::Ridge),
            other => Err(Error::InvalidConfig(format!("unknown fit method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    /// Ridge penalty. Ignored by OLS.
    pub lambda: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig::ridge(DEFAULT_RIDGE_LAMBDA)
    }
}

impl FitConfig {
    pub fn ols() -> Self {
        FitConfig {
            method: FitMethod::Ols,
            lambda: 0.0,
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        FitConfig {
            method: FitMethod::Ridge,
            lambda,
        }
    }

    /// The penalty actually applied to the system.
    pub fn effective_lambda(&self) -> f64 {
        match self.method {
            FitMethod::Ols => 0.0,
            FitMethod::Ridge => self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == FitMethod::Ridge && !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("ridge lambda {} must be finite and ≥ 0", self.lambda)));
        }
        Ok(())
    }
}

/// Condition-number estimate of `FᵀF`, `(σ_max / σ_min)²` from the singular
/// values of `F`. Infinite when `F` has fewer rows than columns or a zero
/// singular value.
pub fn condition_report(design: &DesignMatrix) -> f64 {
    if design.n() < design.k() {
        return f64::INFINITY;
    }
    let sv = design.matrix().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        return f64::INFINITY;
    }
    (max / min).powi(2)
}

/// Fits weights with no intercept term.
///
/// Unregularized systems (OLS, or ridge with `λ = 0`) whose condition
/// estimate exceeds [`MAX_CONDITION`] fail with [`Error::SingularSystem`].
pub fn fit(design: &DesignMatrix, cfg: &FitConfig) -> Result<WeightVector> {
    cfg.validate()?;
    if design.features.iter().chain(&design.labels).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("design contains non-finite values".into()));
    }
    let lambda = cfg.effective_lambda();
    let (n, k) = (design.n(), design.k());
    if lambda == 0.0 {
        let condition = condition_report(design);
        if condition > MAX_CONDITION {
            return Err(Error::SingularSystem { condition });
        }
    }

    let rows = if lambda > 0.0 { n + k } else { n };
    let mut a = DMatrix::zeros(rows, k);
    a.rows_mut(0, n).copy_from(&design.matrix());
    let mut b = DVector::zeros(rows);
    b.rows_mut(0, n).copy_from_slice(&design.labels);
    if lambda > 0.0 {
        let s = lambda.sqrt();
        for j in 0..k {
            a[(n + j, j)] = s;
        }
    }

    let qr = a.qr();
    qr.q_tr_mul(&mut b);
    let r = qr.r();
    let rhs = b.rows(0, k).into_owned();
    let w = r
        .solve_upper_triangular(&rhs)
        .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { condition: f64::INFINITY });
    }
    WeightVector::new(design.config().clone(), w.iter().copied().collect())
}

/// `‖(FᵀF + λI)w − Fᵀy‖ / ‖Fᵀy‖`, the relative residual of the normal
/// equations at `w`. Returns the absolute residual when `Fᵀy = 0`.
pub fn normal_equation_residual(design: &DesignMatrix, lambda: f64, weights: &WeightVector) -> f64 {
    let f = design.matrix();
    let w = DVector::from_column_slice(weights.values());
    let y = DVector::from_column_slice(design.labels());
    let fty = f.tr_mul(&y);
    let lhs = f.tr_mul(&(&f * &w)) + &w * lambda;
    let residual = (lhs - &fty).norm();
    let scale = fty.norm();
    if scale > 0.0 {
        residual / scale
    } else {
        residual
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stem::StemKind;

    fn config2() -> StemConfig {
        StemConfig::new("drums_mix", vec![StemKind::Drums, StemKind::Mix]).unwrap()
    }

    #[test]
    fn build_design_preserves_order_and_shape() {
        let config = StemConfig::four_stem();
        let f1 = FeatureVector::new(config.clone(), vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let f2 = FeatureVector::new(config.clone(), vec![-0.1, 0.0, 0.0, 0.0, 1.5]).unwrap();
        let d = build_design(&[(f1.clone(), Preference::A), (f2.clone(), Preference::B)]).unwrap();
        assert_eq!((d.n(), d.k()), (2, 5));
        assert_eq!(d.labels(), &[1.0, -1.0]);
        assert_eq!(d.row(0), f1.values());
        assert_eq!(d.row(1), f2.values());

        assert!(matches!(build_design(&[]), Err(Error::EmptyDataset)));
        let other = FeatureVector::zeros(StemConfig::six_stem());
        assert!(matches!(
            build_design(&[(f1, Preference::A), (other, Preference::A)]),
            Err(Error::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn design_validation() {
        let c = config2();
        assert!(matches!(DesignMatrix::new(c.clone(), vec![], vec![]), Err(Error::EmptyDataset)));
        assert!(DesignMatrix::new(c.clone(), vec![vec![0.0, 0.0]], vec![0.5]).is_err());
        assert!(DesignMatrix::new(c.clone(), vec![vec![3.0, 0.0]], vec![1.0]).is_err());
        assert!(DesignMatrix::new(c, vec![vec![0.0, 0.0]], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn exactly_determined_ols() {
        let d = DesignMatrix::new(config2(), vec![vec![1.0, 0.0], vec![0.0, 2.0]], vec![1.0, 1.0]).unwrap();
        let w = fit(&d, &FitConfig::ols()).unwrap();
        assert!((w.values()[0] - 1.0).abs() < 1e-15);
        assert!((w.values()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ridge_on_identity_halves_labels() {
        let d = DesignMatrix::new(config2(), vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, -1.0]).unwrap();
        let w = fit(&d, &FitConfig::ridge(1.0)).unwrap();
        assert!((w.values()[0] - 0.5).abs() < 1e-15);
        assert!((w.values()[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn ridge_zero_is_ols() {
        let d = DesignMatrix::new(
            config2(),
            vec![vec![0.3, -0.2], vec![0.1, 0.9], vec![-1.2, 0.4]],
            vec![1.0, -1.0, 1.0],
        )
        .unwrap();
        let ols = fit(&d, &FitConfig::ols()).unwrap();
        let ridge = fit(&d, &FitConfig::ridge(0.0)).unwrap();
        assert_eq!(ols.values(), ridge.values());
    }

    #[test]
    fn condition_examples() {
        let d = DesignMatrix::new(config2(), vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        assert!((condition_report(&d) - 1.0).abs() < 1e-12);

        let dup = DesignMatrix::new(
            config2(),
            vec![vec![0.5, 0.5], vec![-0.2, -0.2], vec![1.0, 1.0]],
            vec![1.0, -1.0, 1.0],
        )
        .unwrap();
        assert!(condition_report(&dup) > MAX_CONDITION);
        assert!(matches!(fit(&dup, &FitConfig::ols()), Err(Error::SingularSystem { .. })));
        assert!(fit(&dup, &FitConfig::ridge(0.5)).is_ok());

        let short = DesignMatrix::new(StemConfig::four_stem(), vec![vec![0.1; 5]], vec![1.0]).unwrap();
        assert_eq!(condition_report(&short), f64::INFINITY);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let d = DesignMatrix::new(config2(), vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        assert!(matches!(fit(&d, &FitConfig::ridge(-1.0)), Err(Error::InvalidInput(_))));
        assert!(matches!(fit(&d, &FitConfig::ridge(f64::NAN)), Err(Error::InvalidInput(_))));
        // OLS ignores lambda entirely.
        let ols = FitConfig {
            method: FitMethod::Ols,
            lambda: -5.0,
        };
        assert!(fit(&d, &ols).is_ok());
    }
}
