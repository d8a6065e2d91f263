//! Oracles and fixtures shared by the integration tests. The oracles do not
//! call into the library's numeric code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stemsim_core::{
    aggregate, cross_validate, generate, labeled_samples, DatasetTag, DesignMatrix, EvalConfig, FitConfig, FitReport,
    LabeledSample, StemConfig, SynthConfig, SynthDataset, WeightVector,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rows uniform in `[-1, 1]^K` with random ±1 labels.
pub fn random_design(rng: &mut ChaCha8Rng, config: &StemConfig, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = config.k();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    (rows, labels)
}

pub fn design(config: &StemConfig, rows: &[Vec<f64>], labels: &[f64]) -> DesignMatrix {
    DesignMatrix::new(config.clone(), rows.to_vec(), labels.to_vec()).unwrap()
}

/// `FᵀF + λI` and `Fᵀy` by explicit loops.
pub fn normal_equations(rows: &[Vec<f64>], labels: &[f64], lambda: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for (row, y) in rows.iter().zip(labels) {
        for i in 0..k {
            b[i] += row[i] * y;
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for (i, r) in a.iter_mut().enumerate() {
        r[i] += lambda;
    }
    (a, b)
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= factor * a[col][c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    x
}

pub fn oracle_fit(rows: &[Vec<f64>], labels: &[f64], lambda: f64) -> Vec<f64> {
    let (a, b) = normal_equations(rows, labels, lambda);
    gauss_solve(a, b)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(f64::MIN_POSITIVE)
}

/// Scalar cosine in f64 with a plain accumulation loop.
pub fn scalar_cosine(u: &[f32], v: &[f32]) -> f64 {
    let (mut d, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        d += a * b;
        nu += a * a;
        nv += b * b;
    }
    (d / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0)
}

pub fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| (x / n) as f32).collect();
        }
    }
}

/// The seven-channel ground truth used by the synthetic suites.
pub fn true_weights() -> WeightVector {
    WeightVector::new(StemConfig::six_stem(), vec![0.32, 0.83, 0.61, 0.27, 0.33, 1.27, 1.64]).unwrap()
}

pub fn synth(seed: u64, n: usize, noise: f64) -> (SynthConfig, SynthDataset) {
    let mut cfg = SynthConfig::new(true_weights(), seed);
    cfg.n_triplets = n;
    cfg.label_noise = noise;
    let ds = generate(&cfg).unwrap();
    (cfg, ds)
}

pub fn samples(cfg: &SynthConfig, ds: &SynthDataset, cutoff: f64) -> Vec<LabeledSample> {
    let agg = aggregate(&ds.triplets, cutoff).unwrap();
    labeled_samples(&agg, &ds.store, &cfg.config, &cfg.encoder_id, cfg.source).unwrap()
}

pub fn cv(samples: &[LabeledSample], fit: FitConfig, eval: EvalConfig) -> FitReport {
    cross_validate(samples, &fit, &eval, &DatasetTag::new("synthetic", stemsim_core::Source::Mss)).unwrap()
}

pub fn cosine64(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (norm(u) * norm(v))
}
