//! Seeded synthetic datasets for tests and benchmarks.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Example, LabelMap};
use crate::error::{Error, Result};
use crate::sparse::SparseVector;
use crate::weights::WeightMatrix;

/// Unit prototype of toy class `k`: angle `2πk/3`.
fn toy_angle(k: usize) -> f64 {
    2.0 * PI * k as f64 / 3.0
}

/// Separable 3-class set in the plane: 20 points per class at angle within
/// ±30° of the class prototype and radius in `[0.8, 1]`. Under the unit
/// prototype matrix (see [`toy_prototypes`]) every margin is at least
/// `0.8·(cos 30° − cos 90°) ≈ 0.69`.
pub fn toy(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_dev = PI / 6.0;
    let mut examples = Vec::with_capacity(60);
    for i in 0..60 {
        let k = i % 3;
        let theta = toy_angle(k) + rng.random_range(-max_dev..=max_dev);
        let r = rng.random_range(0.8..=1.0);
        examples.push(Example {
            label: k,
            features: SparseVector::from_dense(&[r * theta.cos(), r * theta.sin()]),
        });
    }
    let labels = LabelMap::from_names((1..=3).map(|k| k.to_string())).expect("distinct names");
    Dataset::with_labels(examples, 2, 3, labels).expect("valid toy set")
}

/// Rows are the unit class prototypes of [`toy`].
pub fn toy_prototypes() -> WeightMatrix {
    let rows = (0..3)
        .map(|k| SparseVector::from_dense(&[toy_angle(k).cos(), toy_angle(k).sin()]))
        .collect();
    WeightMatrix::from_rows(2, rows).expect("2-d rows")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub examples: usize,
    /// Features characteristic of each class.
    pub signature: usize,
    /// Probability that a signature feature appears in an example.
    pub keep: f64,
    /// Uniformly drawn noise features per example.
    pub noise: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 50,
            dim: 100,
            examples: 5000,
            signature: 6,
            keep: 0.7,
            noise: 5,
            seed: 0,
        }
    }
}

/// Sparse bag-of-features data: each class owns `signature` random feature
/// ids with random weights, and an example keeps each of them with
/// probability `keep`, adds `noise` random features, and is scaled to unit
/// norm. Classes are drawn uniformly.
pub fn synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.classes < 2 || cfg.dim == 0 || cfg.signature == 0 || cfg.signature > cfg.dim {
        return Err(Error::invalid(format!(
            "synthetic data needs classes >= 2 and 1 <= signature <= dim, got {cfg:?}"
        )));
    }
    if !(0.0..=1.0).contains(&cfg.keep) || cfg.noise > cfg.dim {
        return Err(Error::invalid("keep must be in [0, 1] and noise <= dim"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let signatures: Vec<Vec<(u32, f64)>> = (0..cfg.classes)
        .map(|_| {
            sample(&mut rng, cfg.dim, cfg.signature)
                .into_iter()
                .map(|i| (i as u32, rng.random_range(0.5..1.5)))
                .collect()
        })
        .collect();
    let mut examples = Vec::with_capacity(cfg.examples);
    for _ in 0..cfg.examples {
        let label = rng.random_range(0..cfg.classes);
        let mut dense = vec![0.0; cfg.dim];
        for &(i, v) in &signatures[label] {
            if rng.random_bool(cfg.keep) {
                dense[i as usize] += v * rng.random_range(0.5..1.5);
            }
        }
        for i in sample(&mut rng, cfg.dim, cfg.noise) {
            dense[i] += rng.random_range(0.0..1.0);
        }
        let mut x = SparseVector::from_dense(&dense);
        let norm = x.norm();
        if norm > 0.0 {
            x.scale_in_place(1.0 / norm);
        }
        examples.push(Example { label, features: x });
    }
    Dataset::new(examples, cfg.dim, cfg.classes)
}

/// `n` random rows of dimension `dim` scaled to unit norm, with `nnz`
/// Gaussian entries each (dense when `nnz >= dim`).
pub fn random_unit_rows(n: usize, dim: usize, nnz: usize, seed: u64) -> Vec<SparseVector> {
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = nnz.min(dim);
    (0..n)
        .map(|_| {
            let mut dense = vec![0.0; dim];
            for i in sample(&mut rng, dim, k) {
                dense[i] = rng.sample(StandardNormal);
            }
            let mut v = SparseVector::from_dense(&dense);
            let norm = v.norm();
            if norm > 0.0 {
                v.scale_in_place(1.0 / norm);
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::margin::exact_margin;

    #[test]
    fn toy_is_separated_with_margin() {
        let d = toy(7);
        assert_eq!((d.len(), d.dim(), d.num_classes()), (60, 2, 3));
        let w = toy_prototypes();
        for ex in d.examples() {
            let m = exact_margin(&w, &ex.features, ex.label).unwrap();
            assert!(m.margin >= 0.5, "{m:?}");
            let r = ex.features.norm();
            assert!((0.8 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
        assert_eq!(toy(7), d);
    }

    #[test]
    fn synthetic_shape() {
        let cfg = SynthConfig {
            examples: 300,
            ..SynthConfig::default()
        };
        let d = synthetic(&cfg).unwrap();
        assert_eq!((d.len(), d.dim(), d.num_classes()), (300, 100, 50));
        for ex in d.examples() {
            assert!((ex.features.norm() - 1.0).abs() < 1e-12);
            assert!(ex.features.nnz() <= cfg.signature + cfg.noise);
        }
        assert_eq!(synthetic(&cfg).unwrap(), d);
    }

    #[test]
    fn unit_rows() {
        let rows = random_unit_rows(20, 16, 5, 3);
        assert!(rows
            .iter()
            .all(|r| r.nnz() <= 5 && (r.norm() - 1.0).abs() < 1e-12));
    }
}
