//! Empirical check of how far index-selected rivals are from exact ones.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::margin::{exact_margin, inexact_margin};
use crate::mips::MipsIndex;
use crate::weights::WeightMatrix;

/// Upper bin edges after the dedicated `gap == 0` bin.
const GAP_EDGES: [f64; 9] = [1e-3, 1e-2, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, f64::INFINITY];

/// Counts of `m̄ − m`. Bin 0 holds exact zeros, bin `i ≥ 1` holds gaps in
/// `(edges[i-1], edges[i]]` with `edges[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl GapHistogram {
    fn new() -> Self {
        let mut edges = vec![0.0];
        edges.extend_from_slice(&GAP_EDGES);
        Self {
            counts: vec![0; edges.len()],
            edges,
        }
    }

    fn add(&mut self, gap: f64) {
        if gap <= 0.0 {
            self.counts[0] += 1;
            return;
        }
        let last = self.counts.len() - 1;
        let bin = self.edges[1..].partition_point(|&e| e < gap) + 1;
        self.counts[bin.min(last)] += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub n: usize,
    pub epsilon: f64,
    /// Fraction of queries with `m̄ − m > ε`.
    pub delta_hat: f64,
    /// Fraction of queries whose rival equals the exact argmax.
    pub recall_at_1: f64,
    pub mean_gap: f64,
    pub max_gap: f64,
    /// Fraction of queries answered by a full-scan fallback.
    pub fallback_rate: f64,
    /// Mean number of rows scored exactly per query.
    pub mean_candidates: f64,
    pub histogram: GapHistogram,
}

/// Runs exact and index-backed margins side by side over `queries`.
pub fn audit_inexactness<I: MipsIndex + ?Sized>(
    index: &I,
    w: &WeightMatrix,
    queries: &Dataset,
    epsilon: f64,
) -> Result<AuditReport> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    let rows: Vec<(f64, bool, bool, usize)> = queries
        .examples()
        .par_iter()
        .map(|ex| {
            let exact = exact_margin(w, &ex.features, ex.label)?;
            let outcome = index.query_detailed(&ex.features, Some(ex.label))?;
            let inexact = inexact_margin(index, w, &ex.features, ex.label)?;
            Ok((
                inexact.margin - exact.margin,
                inexact.rival == exact.rival,
                outcome.fallback,
                outcome.candidates,
            ))
        })
        .collect::<Result<_>>()?;

    let n = rows.len();
    let mut histogram = GapHistogram::new();
    let (mut exceed, mut hits, mut fallbacks, mut cands) = (0usize, 0usize, 0usize, 0usize);
    let (mut sum_gap, mut max_gap) = (0.0, 0.0f64);
    for &(gap, hit, fb, c) in &rows {
        histogram.add(gap);
        exceed += usize::from(gap > epsilon);
        hits += usize::from(hit);
        fallbacks += usize::from(fb);
        cands += c;
        sum_gap += gap;
        max_gap = max_gap.max(gap);
    }
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(AuditReport {
        n,
        epsilon,
        delta_hat: frac(exceed),
        recall_at_1: frac(hits),
        mean_gap: if n == 0 { 0.0 } else { sum_gap / n as f64 },
        max_gap,
        fallback_rate: frac(fallbacks),
        mean_candidates: if n == 0 { 0.0 } else { cands as f64 / n as f64 },
        histogram,
    })
}
