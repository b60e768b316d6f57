//! Exact prediction and the accuracy / macro-F1 metrics.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mips::Best;
use crate::sparse::SparseVector;
use crate::weights::WeightMatrix;

/// `argmax_c ω_c^⊤x` over all classes, ties to the smallest id.
pub fn predict(w: &WeightMatrix, x: &SparseVector) -> Result<usize> {
    if w.num_classes() == 0 {
        return Err(Error::invalid("model has no classes"));
    }
    if x.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: x.dim(),
        });
    }
    let mut best = Best::default();
    for c in 0..w.num_classes() {
        best.offer(c, w.row_dot_unchecked(c, x));
    }
    Ok(best.hit.expect("nonempty").0)
}

/// Predictions for every example, computed in parallel on the current
/// rayon pool and returned in dataset order.
pub fn predict_all(w: &WeightMatrix, data: &Dataset) -> Result<Vec<usize>> {
    data.examples()
        .par_iter()
        .map(|ex| predict(w, &ex.features))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    true_labels: Vec<usize>,
    predicted: Vec<usize>,
    num_classes: usize,
}

impl PredictionSet {
    pub fn new(true_labels: Vec<usize>, predicted: Vec<usize>, num_classes: usize) -> Result<Self> {
        if true_labels.len() != predicted.len() {
            return Err(Error::invalid(format!(
                "{} true labels but {} predictions",
                true_labels.len(),
                predicted.len()
            )));
        }
        if let Some(&bad) = true_labels
            .iter()
            .chain(&predicted)
            .find(|&&l| l >= num_classes)
        {
            return Err(Error::ClassOutOfRange {
                class: bad,
                num_classes,
            });
        }
        Ok(Self {
            true_labels,
            predicted,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn true_labels(&self) -> &[usize] {
        &self.true_labels
    }

    pub fn predicted(&self) -> &[usize] {
        &self.predicted
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Per-class true-positive / predicted / actual counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    pub true_positive: Vec<u64>,
    pub predicted: Vec<u64>,
    pub actual: Vec<u64>,
}

impl ClassCounts {
    pub fn from_predictions(p: &PredictionSet) -> Self {
        let c = p.num_classes;
        let mut counts = Self {
            true_positive: vec![0; c],
            predicted: vec![0; c],
            actual: vec![0; c],
        };
        for (&t, &y) in p.true_labels.iter().zip(&p.predicted) {
            counts.actual[t] += 1;
            counts.predicted[y] += 1;
            if t == y {
                counts.true_positive[t] += 1;
            }
        }
        counts
    }

    /// Classes that appear in the truth or the predictions.
    pub fn present(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.actual.len()).filter(|&c| self.actual[c] > 0 || self.predicted[c] > 0)
    }
}

/// How per-class precision and recall are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Mode {
    /// Harmonic mean of macro precision and macro recall.
    #[default]
    Harmonic,
    /// Mean of per-class F1 scores.
    MeanF1,
}

impl FromStr for F1Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(F1Mode::Harmonic),
            "mean-f1" | "mean" => Ok(F1Mode::MeanF1),
            other => Err(Error::invalid(format!("unknown f1 mode '{other}'"))),
        }
    }
}

pub fn accuracy(p: &PredictionSet) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let hits = p
        .true_labels
        .iter()
        .zip(&p.predicted)
        .filter(|(t, y)| t == y)
        .count();
    Ok(hits as f64 / p.len() as f64)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro-averaged F1 over the classes present in truth or predictions.
/// Precision (recall) of a class with no predictions (no true examples)
/// counts as 0.
pub fn macro_f1(p: &PredictionSet) -> Result<f64> {
    macro_f1_with(p, F1Mode::Harmonic)
}

pub fn macro_f1_with(p: &PredictionSet, mode: F1Mode) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = ClassCounts::from_predictions(p);
    let classes: Vec<usize> = counts.present().collect();
    let k = classes.len() as f64;
    match mode {
        F1Mode::Harmonic => {
            let map: f64 = classes
                .iter()
                .map(|&c| ratio(counts.true_positive[c], counts.predicted[c]))
                .sum::<f64>()
                / k;
            let mar: f64 = classes
                .iter()
                .map(|&c| ratio(counts.true_positive[c], counts.actual[c]))
                .sum::<f64>()
                / k;
            Ok(if map + mar == 0.0 {
                0.0
            } else {
                2.0 * map * mar / (map + mar)
            })
        }
        F1Mode::MeanF1 => Ok(classes
            .iter()
            .map(|&c| {
                let tp = counts.true_positive[c];
                ratio(2 * tp, counts.predicted[c] + counts.actual[c])
            })
            .sum::<f64>()
            / k),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub predict_seconds: f64,
}

/// Predicts every example of `data` and scores the result.
pub fn evaluate(w: &WeightMatrix, data: &Dataset, mode: F1Mode) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let start = Instant::now();
    let predicted = predict_all(w, data)?;
    let predict_seconds = start.elapsed().as_secs_f64();
    let truth: Vec<usize> = data.examples().iter().map(|e| e.label).collect();
    let classes = data.num_classes().max(w.num_classes());
    let p = PredictionSet::new(truth, predicted, classes)?;
    Ok(EvalReport {
        n: p.len(),
        accuracy: accuracy(&p)?,
        macro_f1: macro_f1_with(&p, mode)?,
        predict_seconds,
    })
}
