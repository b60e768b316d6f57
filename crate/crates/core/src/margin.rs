//! Exact and inexact multi-class margins and the hinge ρ-loss.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mips::{Best, MipsIndex};
use crate::sparse::SparseVector;
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginResult {
    pub margin: f64,
    /// Competing class `y′ ≠ y`.
    pub rival: usize,
    pub score_true: f64,
    pub score_rival: f64,
}

impl MarginResult {
    fn new(score_true: f64, rival: usize, score_rival: f64) -> Self {
        Self {
            margin: score_true - score_rival,
            rival,
            score_true,
            score_rival,
        }
    }

    /// Misclassified when the margin is not strictly positive.
    pub fn is_error(&self) -> bool {
        !(self.margin > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskReport {
    pub n: usize,
    pub rho: f64,
    /// Mean hinge ρ-loss.
    pub empirical_hinge: f64,
    /// Fraction of examples with margin `≤ 0`.
    pub zero_one: f64,
}

fn check_label(w: &WeightMatrix, y: usize) -> Result<()> {
    if w.num_classes() < 2 {
        return Err(Error::invalid(format!(
            "margins need at least 2 classes, got {}",
            w.num_classes()
        )));
    }
    if y >= w.num_classes() {
        return Err(Error::ClassOutOfRange {
            class: y,
            num_classes: w.num_classes(),
        });
    }
    Ok(())
}

/// `f(x,y) − max_{y′≠y} f(x,y′)` with ties broken toward the smallest id.
pub fn exact_margin(w: &WeightMatrix, x: &SparseVector, y: usize) -> Result<MarginResult> {
    check_label(w, y)?;
    if x.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: x.dim(),
        });
    }
    let mut best = Best::default();
    let mut score_true = 0.0;
    for c in 0..w.num_classes() {
        let s = w.row_dot_unchecked(c, x);
        if c == y {
            score_true = s;
        } else {
            best.offer(c, s);
        }
    }
    let (rival, score_rival) = best.hit.expect("at least one rival");
    Ok(MarginResult::new(score_true, rival, score_rival))
}

/// `f(x,y) − f(x,y′)` where `y′` comes from the index. Both scores are
/// recomputed exactly against `w`; the index only selects the rival.
pub fn inexact_margin<I: MipsIndex + ?Sized>(
    index: &I,
    w: &WeightMatrix,
    x: &SparseVector,
    y: usize,
) -> Result<MarginResult> {
    check_label(w, y)?;
    let (rival, _) = index.query(x, Some(y))?;
    if rival == y {
        return Err(Error::invalid("index returned the excluded class"));
    }
    let score_true = w.row_dot(y, x)?;
    let score_rival = w.row_dot(rival, x)?;
    Ok(MarginResult::new(score_true, rival, score_rival))
}

/// `(1 − margin/ρ)₊`.
pub fn hinge_loss(margin: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    Ok((1.0 - margin / rho).max(0.0))
}

/// Mean hinge ρ-loss and 0/1 error over `data`, with exact margins when
/// `index` is `None` and index-selected rivals otherwise.
pub fn empirical_risk(
    w: &WeightMatrix,
    data: &Dataset,
    rho: f64,
    index: Option<&dyn MipsIndex>,
) -> Result<RiskReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    hinge_loss(0.0, rho)?;
    let margins: Vec<MarginResult> = data
        .examples()
        .par_iter()
        .map(|ex| match index {
            None => exact_margin(w, &ex.features, ex.label),
            Some(idx) => inexact_margin(idx, w, &ex.features, ex.label),
        })
        .collect::<Result<_>>()?;
    let n = margins.len();
    let mut hinge = 0.0;
    let mut errors = 0usize;
    for m in &margins {
        hinge += (1.0 - m.margin / rho).max(0.0);
        errors += usize::from(m.is_error());
    }
    Ok(RiskReport {
        n,
        rho,
        empirical_hinge: hinge / n as f64,
        zero_one: errors as f64 / n as f64,
    })
}
