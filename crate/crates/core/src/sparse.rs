//! Sorted index/value sparse vectors.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A sparse vector in `R^dim` stored as strictly increasing feature ids with
/// parallel values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "indices not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let Some(&last) = indices.last() {
            if last as usize >= dim {
                return Err(Error::invalid(format!(
                    "index {last} out of range for dimension {dim}"
                )));
            }
        }
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    /// Builds a vector from unordered pairs. Duplicate ids are rejected.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut pairs: Vec<(u32, f64)> = pairs.into_iter().collect();
        pairs.sort_unstable_by_key(|p| p.0);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!("duplicate feature id {}", w[0].0)));
        }
        let (indices, values) = pairs.into_iter().unzip();
        Self::new(dim, indices, values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Keeps only the nonzero coordinates of a dense slice.
    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        Self {
            dim: dense.len(),
            indices,
            values,
        }
    }

    /// Trusted constructor for callers that already hold sorted data.
    pub(crate) fn from_sorted_unchecked(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.last().is_none_or(|&i| (i as usize) < dim));
        Self {
            dim,
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn dot(&self, other: &SparseVector) -> Result<f64> {
        dot(self, other)
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> SparseVector {
        let mut out = self.clone();
        out.scale_in_place(alpha);
        out
    }

    /// Drops explicit zeros.
    pub fn purge_zeros(&mut self) {
        let mut keep = 0;
        for i in 0..self.indices.len() {
            if self.values[i] != 0.0 {
                self.indices[keep] = self.indices[i];
                self.values[keep] = self.values[i];
                keep += 1;
            }
        }
        self.indices.truncate(keep);
        self.values.truncate(keep);
    }

    /// Soft-thresholds every coordinate at `tau` and removes the zeros this
    /// creates. Returns the number of removed entries.
    pub fn soft_threshold(&mut self, tau: f64) -> usize {
        soft_threshold_parts(&mut self.indices, &mut self.values, tau)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i as usize] = v;
        }
        out
    }

    /// Returns a copy living in a space of dimension `dim`, dropping any
    /// coordinate that does not fit. The second value counts dropped entries.
    pub fn restricted(&self, dim: usize) -> (SparseVector, usize) {
        let keep = self.indices.partition_point(|&i| (i as usize) < dim);
        let v = SparseVector {
            dim,
            indices: self.indices[..keep].to_vec(),
            values: self.values[..keep].to_vec(),
        };
        (v, self.nnz() - keep)
    }

    pub(crate) fn into_parts(self) -> (usize, Vec<u32>, Vec<f64>) {
        (self.dim, self.indices, self.values)
    }
}

/// Exact sparse inner product.
pub fn dot(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    Ok(dot_raw(&a.indices, &a.values, &b.indices, &b.values, 1.0))
}

/// Sums `(alpha * va[i]) * vb[j]` over matching ids in increasing id order.
///
/// Every caller that needs bit-identical scores (materialized rows vs lazily
/// scaled rows) goes through this one routine.
pub(crate) fn dot_raw(ia: &[u32], va: &[f64], ib: &[u32], vb: &[f64], alpha: f64) -> f64 {
    if ia.is_empty() || ib.is_empty() {
        return 0.0;
    }
    // Binary search the long side when lengths are very lopsided.
    if ia.len() * 16 < ib.len() {
        return gallop_dot(ia, va, ib, vb, alpha, true);
    }
    if ib.len() * 16 < ia.len() {
        return gallop_dot(ib, vb, ia, va, alpha, false);
    }
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < ia.len() && j < ib.len() {
        match ia[i].cmp(&ib[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                sum += (alpha * va[i]) * vb[j];
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

fn gallop_dot(
    short_i: &[u32],
    short_v: &[f64],
    long_i: &[u32],
    long_v: &[f64],
    alpha: f64,
    short_is_scaled: bool,
) -> f64 {
    let mut sum = 0.0;
    let mut lo = 0;
    for (k, &idx) in short_i.iter().enumerate() {
        if lo >= long_i.len() {
            break;
        }
        match long_i[lo..].binary_search(&idx) {
            Ok(off) => {
                let pos = lo + off;
                sum += if short_is_scaled {
                    (alpha * short_v[k]) * long_v[pos]
                } else {
                    (alpha * long_v[pos]) * short_v[k]
                };
                lo = pos + 1;
            }
            Err(off) => lo += off,
        }
    }
    sum
}

pub(crate) fn soft_threshold_value(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

pub(crate) fn soft_threshold_parts(
    indices: &mut Vec<u32>,
    values: &mut Vec<f64>,
    tau: f64,
) -> usize {
    let before = indices.len();
    let mut keep = 0;
    for i in 0..before {
        let v = soft_threshold_value(values[i], tau);
        if v != 0.0 {
            indices[keep] = indices[i];
            values[keep] = v;
            keep += 1;
        }
    }
    indices.truncate(keep);
    values.truncate(keep);
    before - keep
}

/// Merges `row + coeff * x` for sorted inputs, returning new sorted arrays.
pub(crate) fn merge_axpy(
    ri: &[u32],
    rv: &[f64],
    coeff: f64,
    xi: &[u32],
    xv: &[f64],
) -> (Vec<u32>, Vec<f64>) {
    let mut oi = Vec::with_capacity(ri.len() + xi.len());
    let mut ov = Vec::with_capacity(ri.len() + xi.len());
    let (mut i, mut j) = (0, 0);
    while i < ri.len() || j < xi.len() {
        let take_row = j >= xi.len() || (i < ri.len() && ri[i] < xi[j]);
        let take_x = i >= ri.len() || (j < xi.len() && xi[j] < ri[i]);
        if take_row {
            oi.push(ri[i]);
            ov.push(rv[i]);
            i += 1;
        } else if take_x {
            oi.push(xi[j]);
            ov.push(coeff * xv[j]);
            j += 1;
        } else {
            oi.push(ri[i]);
            ov.push(rv[i] + coeff * xv[j]);
            i += 1;
            j += 1;
        }
    }
    (oi, ov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(dim: usize, pairs: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_pairs(dim, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&sv(2, &[(0, 1.0)]), &sv(2, &[(1, 1.0)])).unwrap(), 0.0);
        let a = sv(4, &[(0, 2.0), (3, 1.0)]);
        let b = sv(4, &[(0, 0.5), (3, 4.0)]);
        assert_eq!(dot(&a, &b).unwrap(), 5.0);
        assert_eq!(dot(&sv(1, &[]), &sv(1, &[(0, 7.0)])).unwrap(), 0.0);
    }

    #[test]
    fn dot_dimension_mismatch() {
        let err = dot(&sv(2, &[]), &sv(3, &[])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn gallop_matches_merge() {
        let long: Vec<(u32, f64)> = (0..400).map(|i| (i * 3, i as f64 * 0.25 - 7.0)).collect();
        let short = [(3u32, 1.5), (300, -2.0), (1197, 0.5), (1198, 9.0)];
        let a = sv(1200, &long);
        let b = sv(1200, &short);
        let naive: f64 = short.iter().map(|&(i, v)| v * a.get(i)).sum();
        assert!((a.dot(&b).unwrap() - naive).abs() < 1e-12);
        assert_eq!(a.dot(&b).unwrap(), b.dot(&a).unwrap());
    }

    #[test]
    fn constructor_validation() {
        assert!(SparseVector::new(3, vec![1, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseVector::new(3, vec![2, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseVector::new(3, vec![3], vec![1.0]).is_err());
        assert!(SparseVector::new(3, vec![0], vec![]).is_err());
        assert!(SparseVector::from_pairs(3, [(1, 1.0), (1, 2.0)]).is_err());
        let v = SparseVector::from_pairs(5, [(4, 1.0), (0, 2.0)]).unwrap();
        assert_eq!(v.indices(), &[0, 4]);
    }

    #[test]
    fn purge_and_merge() {
        let mut v = SparseVector::new(4, vec![0, 1, 2], vec![1.0, 0.0, -1.0]).unwrap();
        v.purge_zeros();
        assert_eq!(v.indices(), &[0, 2]);
        let (i, val) = merge_axpy(&[0, 2], &[1.0, -1.0], 2.0, &[1, 2, 3], &[1.0, 0.5, 1.0]);
        assert_eq!(i, vec![0, 1, 2, 3]);
        assert_eq!(val, vec![1.0, 2.0, 0.0, 2.0]);
    }

    #[test]
    fn restricted_drops_tail() {
        let v = sv(10, &[(1, 1.0), (5, 2.0), (9, 3.0)]);
        let (r, dropped) = v.restricted(6);
        assert_eq!(r.dim(), 6);
        assert_eq!(r.indices(), &[1, 5]);
        assert_eq!(dropped, 1);
    }
}
