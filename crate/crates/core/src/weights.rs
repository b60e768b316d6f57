//! Per-class sparse weight matrix with a shared lazy scale.
//!
//! The logical matrix is `scale * stored`. Multiplying the whole matrix by a
//! scalar only touches `scale`; additions divide the increment by `scale`
//! before writing it into the stored row. Cached squared norms are kept in
//! the stored (unscaled) frame.

use crate::error::{Error, Result};
use crate::sparse::{self, SparseVector};

/// Lower edge of the range the accumulated scale may occupy before it is
/// folded into the stored rows.
pub const SCALE_FOLD_MIN: f64 = 1e-8;
/// Upper edge of the same range.
pub const SCALE_FOLD_MAX: f64 = 1e8;

#[derive(Debug, Clone, Default, PartialEq)]
struct Row {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Row {
    fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// One pending row update: `row[class] += coeff * x` on logical values.
#[derive(Debug, Clone, Copy)]
pub struct RowUpdate<'a> {
    pub class: usize,
    pub coeff: f64,
    pub x: &'a SparseVector,
}

#[derive(Debug, Clone)]
pub struct WeightMatrix {
    dim: usize,
    rows: Vec<Row>,
    scale: f64,
    row_sq_norms: Vec<f64>,
    frob_sq: f64,
    /// Largest cached Frobenius value since the last re-sum.
    frob_peak: f64,
    folds: u64,
    row_writes_since_resum: usize,
}

impl WeightMatrix {
    /// The zero matrix.
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            dim,
            rows: vec![Row::default(); num_classes],
            scale: 1.0,
            row_sq_norms: vec![0.0; num_classes],
            frob_sq: 0.0,
            frob_peak: 0.0,
            folds: 0,
            row_writes_since_resum: 0,
        }
    }

    /// Builds a matrix whose logical rows are exactly `rows`.
    pub fn from_rows(dim: usize, rows: Vec<SparseVector>) -> Result<Self> {
        let mut w = Self::zeros(rows.len(), dim);
        for (c, row) in rows.into_iter().enumerate() {
            if row.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.dim(),
                });
            }
            let (_, indices, values) = row.into_parts();
            w.rows[c] = Row { indices, values };
        }
        w.recompute_caches();
        Ok(w)
    }

    pub fn num_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Number of stored entries across all rows.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.indices.len()).sum()
    }

    /// Increments every time the scale is folded into the stored rows.
    /// Consumers holding copies of stored rows use it to detect that their
    /// copies changed frame.
    pub fn fold_count(&self) -> u64 {
        self.folds
    }

    fn check_class(&self, c: usize) -> Result<()> {
        if c >= self.rows.len() {
            return Err(Error::ClassOutOfRange {
                class: c,
                num_classes: self.rows.len(),
            });
        }
        Ok(())
    }

    fn check_dim(&self, x: &SparseVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.dim(),
            });
        }
        Ok(())
    }

    /// Logical score `ω_c^⊤x`.
    pub fn row_dot(&self, c: usize, x: &SparseVector) -> Result<f64> {
        self.check_class(c)?;
        self.check_dim(x)?;
        Ok(self.row_dot_unchecked(c, x))
    }

    pub(crate) fn row_dot_unchecked(&self, c: usize, x: &SparseVector) -> f64 {
        let r = &self.rows[c];
        sparse::dot_raw(&r.indices, &r.values, x.indices(), x.values(), self.scale)
    }

    /// Logical scores of `x` against every class.
    pub fn scores(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok((0..self.rows.len())
            .map(|c| self.row_dot_unchecked(c, x))
            .collect())
    }

    /// `row[c] += coeff * x` on logical values.
    pub fn add_to_row(&mut self, c: usize, coeff: f64, x: &SparseVector) -> Result<()> {
        self.check_class(c)?;
        self.check_dim(x)?;
        if coeff == 0.0 || x.is_empty() {
            return Ok(());
        }
        let stored_coeff = coeff / self.scale;
        let row = &self.rows[c];
        let (indices, values) = sparse::merge_axpy(
            &row.indices,
            &row.values,
            stored_coeff,
            x.indices(),
            x.values(),
        );
        self.replace_stored_row(c, Row { indices, values });
        Ok(())
    }

    /// Applies a list of row updates, merging all pending updates of a row in
    /// a single pass over that row. Returns the distinct touched classes in
    /// ascending order.
    pub fn apply_updates(&mut self, updates: &[RowUpdate<'_>]) -> Result<Vec<usize>> {
        for u in updates {
            self.check_class(u.class)?;
            self.check_dim(u.x)?;
        }
        let mut order: Vec<usize> = (0..updates.len()).collect();
        order.sort_by_key(|&k| updates[k].class);
        let mut touched = Vec::new();
        let mut pending: Vec<(u32, f64)> = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let class = updates[order[start]].class;
            let mut end = start;
            while end < order.len() && updates[order[end]].class == class {
                end += 1;
            }
            pending.clear();
            for &k in &order[start..end] {
                let u = &updates[k];
                if u.coeff == 0.0 {
                    continue;
                }
                let stored_coeff = u.coeff / self.scale;
                pending.extend(u.x.iter().map(|(i, v)| (i, stored_coeff * v)));
            }
            if !pending.is_empty() {
                // Stable sort keeps the sampled order of contributions per id.
                pending.sort_by_key(|p| p.0);
                let mut di: Vec<u32> = Vec::with_capacity(pending.len());
                let mut dv: Vec<f64> = Vec::with_capacity(pending.len());
                for &(i, v) in &pending {
                    if di.last() == Some(&i) {
                        *dv.last_mut().unwrap() += v;
                    } else {
                        di.push(i);
                        dv.push(v);
                    }
                }
                let row = &self.rows[class];
                let (indices, values) =
                    sparse::merge_axpy(&row.indices, &row.values, 1.0, &di, &dv);
                self.replace_stored_row(class, Row { indices, values });
                touched.push(class);
            }
            start = end;
        }
        Ok(touched)
    }

    fn replace_stored_row(&mut self, c: usize, row: Row) {
        let new_sq = row.sq_norm();
        self.frob_sq += new_sq - self.row_sq_norms[c];
        self.row_sq_norms[c] = new_sq;
        self.rows[c] = row;
        self.row_writes_since_resum += 1;
        self.frob_peak = self.frob_peak.max(self.frob_sq);
        // Re-sum the Frobenius cache every C row writes so incremental drift
        // stays bounded at amortized O(1) cost, and whenever the total has
        // collapsed far below the magnitudes that were subtracted from it.
        if self.row_writes_since_resum >= self.rows.len().max(1)
            || self.frob_sq < 1e-3 * self.frob_peak
        {
            self.frob_sq = self.row_sq_norms.iter().sum();
            self.frob_peak = self.frob_sq;
            self.row_writes_since_resum = 0;
        }
    }

    /// `W <- alpha * W` in O(1), folding the scale into the rows when it
    /// leaves `[SCALE_FOLD_MIN, SCALE_FOLD_MAX]`.
    pub fn global_scale(&mut self, alpha: f64) -> Result<()> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!(
                "scale factor must be positive and finite, got {alpha}"
            )));
        }
        self.scale *= alpha;
        if !(SCALE_FOLD_MIN..=SCALE_FOLD_MAX).contains(&self.scale) {
            self.fold_scale();
        }
        Ok(())
    }

    /// Multiplies the stored rows by the current scale and resets it to 1.
    /// Explicit zeros are purged.
    pub fn fold_scale(&mut self) {
        let s = self.scale;
        for row in &mut self.rows {
            let mut v = SparseVector::from_sorted_unchecked(
                self.dim,
                std::mem::take(&mut row.indices),
                std::mem::take(&mut row.values),
            );
            v.scale_in_place(s);
            v.purge_zeros();
            let (_, indices, values) = v.into_parts();
            *row = Row { indices, values };
        }
        self.scale = 1.0;
        self.folds += 1;
        self.recompute_caches();
    }

    /// Scales `W` onto the ball `‖W‖_F ≤ 1/√λ` and returns the applied factor
    /// `min(1, 1/(√λ‖W‖_F))`. A zero matrix is left untouched (factor 1).
    pub fn project_to_ball(&mut self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return Ok(1.0);
        }
        let phi = (1.0 / (lambda.sqrt() * norm)).min(1.0);
        if phi < 1.0 {
            self.global_scale(phi)?;
        }
        Ok(phi)
    }

    /// Logical row `c` with the scale folded in.
    pub fn materialize_row(&self, c: usize) -> Result<SparseVector> {
        self.check_class(c)?;
        let r = &self.rows[c];
        let values = r.values.iter().map(|v| self.scale * v).collect();
        Ok(SparseVector::from_sorted_unchecked(
            self.dim,
            r.indices.clone(),
            values,
        ))
    }

    /// Stored row `c` without the scale. Argmax over stored rows equals
    /// argmax over logical rows because the scale is shared and positive.
    pub fn stored_row(&self, c: usize) -> Result<SparseVector> {
        self.check_class(c)?;
        let r = &self.rows[c];
        Ok(SparseVector::from_sorted_unchecked(
            self.dim,
            r.indices.clone(),
            r.values.clone(),
        ))
    }

    pub fn row_nnz(&self, c: usize) -> Result<usize> {
        self.check_class(c)?;
        Ok(self.rows[c].indices.len())
    }

    /// Logical `‖ω_c‖₂`.
    pub fn row_norm(&self, c: usize) -> Result<f64> {
        self.check_class(c)?;
        Ok(self.scale * self.row_sq_norms[c].sqrt())
    }

    /// Logical Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.scale * self.frob_sq.max(0.0).sqrt()
    }

    /// Logical entrywise ℓ1 norm.
    pub fn l1_norm(&self) -> f64 {
        let stored: f64 = self
            .rows
            .iter()
            .flat_map(|r| r.values.iter())
            .map(|v| v.abs())
            .sum();
        self.scale * stored
    }

    /// Soft-thresholds logical row `c` at `tau` and purges the resulting
    /// zeros. Returns the number of removed entries.
    pub fn truncate_row(&mut self, c: usize, tau: f64) -> Result<usize> {
        self.check_class(c)?;
        if !(tau >= 0.0) {
            return Err(Error::invalid(format!(
                "truncation threshold must be >= 0, got {tau}"
            )));
        }
        let stored_tau = tau / self.scale;
        let mut row = std::mem::take(&mut self.rows[c]);
        let removed = sparse::soft_threshold_parts(&mut row.indices, &mut row.values, stored_tau);
        self.replace_stored_row(c, row);
        Ok(removed)
    }

    /// Cached squared norms of the stored rows.
    pub fn cached_row_sq_norms(&self) -> &[f64] {
        &self.row_sq_norms
    }

    /// Cached squared Frobenius norm of the stored rows.
    pub fn cached_frob_sq(&self) -> f64 {
        self.frob_sq
    }

    /// Recomputes the norm caches from the stored rows.
    pub fn recompute_caches(&mut self) {
        self.row_sq_norms = self.rows.iter().map(Row::sq_norm).collect();
        self.frob_sq = self.row_sq_norms.iter().sum();
        self.frob_peak = self.frob_sq;
        self.row_writes_since_resum = 0;
    }

    /// Stored squared norms recomputed from scratch, leaving caches alone.
    pub fn fresh_row_sq_norms(&self) -> Vec<f64> {
        self.rows.iter().map(Row::sq_norm).collect()
    }

    /// Logical matrix as dense rows. Meant for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.rows.len())
            .map(|c| self.materialize_row(c).expect("class in range").to_dense())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(dim: usize, pairs: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_pairs(dim, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn zero_coefficient_is_noop() {
        let mut w = WeightMatrix::zeros(2, 3);
        w.add_to_row(0, 1.0, &sv(3, &[(1, 2.0)])).unwrap();
        let before = w.to_dense();
        w.add_to_row(1, 0.0, &sv(3, &[(0, 5.0)])).unwrap();
        assert_eq!(w.to_dense(), before);
        assert_eq!(w.row_nnz(1).unwrap(), 0);
    }

    #[test]
    fn add_respects_lazy_scale() {
        let mut w = WeightMatrix::from_rows(2, vec![sv(2, &[(0, 2.0)])]).unwrap();
        w.global_scale(0.5).unwrap();
        assert_eq!(w.materialize_row(0).unwrap(), sv(2, &[(0, 1.0)]));
        w.add_to_row(0, 1.0, &sv(2, &[(0, 1.0)])).unwrap();
        assert_eq!(w.materialize_row(0).unwrap(), sv(2, &[(0, 2.0)]));
        assert_eq!(w.stored_row(0).unwrap(), sv(2, &[(0, 4.0)]));
    }

    #[test]
    fn global_scale_arithmetic() {
        let mut w = WeightMatrix::from_rows(2, vec![sv(2, &[(1, 3.0)])]).unwrap();
        w.global_scale(1.0).unwrap();
        assert_eq!(w.scale(), 1.0);
        for _ in 0..3 {
            w.global_scale(0.9).unwrap();
        }
        assert!((w.scale() - 0.729).abs() < 1e-15);
        assert_eq!(w.stored_row(0).unwrap(), sv(2, &[(1, 3.0)]));
        assert!(w.global_scale(0.0).is_err());
        assert!(w.global_scale(-1.0).is_err());
        assert!(w.global_scale(f64::NAN).is_err());
    }

    #[test]
    fn scale_folds_outside_range() {
        let mut w = WeightMatrix::from_rows(2, vec![sv(2, &[(1, 3.0)])]).unwrap();
        w.global_scale(1e-5).unwrap();
        assert_eq!(w.fold_count(), 0);
        w.global_scale(1e-5).unwrap();
        assert_eq!(w.fold_count(), 1);
        assert_eq!(w.scale(), 1.0);
        let v = w.materialize_row(0).unwrap();
        assert!((v.values()[0] - 3e-10).abs() < 1e-24);
    }

    #[test]
    fn projection_examples() {
        // ‖W‖_F = 3
        let rows = vec![sv(2, &[(0, 3.0)]), sv(2, &[])];
        let mut w = WeightMatrix::from_rows(2, rows.clone()).unwrap();
        let phi = w.project_to_ball(1.0).unwrap();
        assert!((phi - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.frobenius_norm() - 1.0).abs() < 1e-12);

        let mut w = WeightMatrix::from_rows(2, rows).unwrap();
        assert_eq!(w.project_to_ball(0.01).unwrap(), 1.0);
        assert_eq!(w.scale(), 1.0);

        let mut z = WeightMatrix::zeros(3, 4);
        assert_eq!(z.project_to_ball(1.0).unwrap(), 1.0);
        assert_eq!(z.scale(), 1.0);
        assert!(z.project_to_ball(0.0).is_err());
    }

    #[test]
    fn materialize_examples() {
        let mut w = WeightMatrix::from_rows(2, vec![sv(2, &[(1, 3.0)]), sv(2, &[])]).unwrap();
        w.global_scale(2.0).unwrap();
        assert_eq!(w.materialize_row(0).unwrap(), sv(2, &[(1, 6.0)]));
        assert!(w.materialize_row(1).unwrap().is_empty());
        assert!(w.materialize_row(2).is_err());
    }

    #[test]
    fn materialized_dot_is_bitwise_row_dot() {
        let mut w =
            WeightMatrix::from_rows(5, vec![sv(5, &[(0, 0.3), (2, -1.7), (4, 2.2)])]).unwrap();
        w.global_scale(0.37).unwrap();
        let x = sv(5, &[(0, 1.1), (2, 0.9), (3, 4.0), (4, -0.2)]);
        let a = w.materialize_row(0).unwrap().dot(&x).unwrap();
        let b = w.row_dot(0, &x).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn out_of_range_errors() {
        let mut w = WeightMatrix::zeros(2, 2);
        let x = sv(2, &[(0, 1.0)]);
        assert!(matches!(
            w.add_to_row(2, 1.0, &x),
            Err(Error::ClassOutOfRange { .. })
        ));
        assert!(matches!(
            w.add_to_row(0, 1.0, &sv(3, &[])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn batched_updates_match_sequential() {
        let xs = [
            sv(6, &[(0, 1.0), (3, 2.0)]),
            sv(6, &[(3, -1.0), (5, 0.5)]),
            sv(6, &[(1, 4.0)]),
        ];
        let mut a = WeightMatrix::zeros(3, 6);
        let mut b = WeightMatrix::zeros(3, 6);
        a.global_scale(0.5).unwrap();
        b.global_scale(0.5).unwrap();
        let ups = [
            RowUpdate {
                class: 2,
                coeff: 0.1,
                x: &xs[0],
            },
            RowUpdate {
                class: 0,
                coeff: -0.1,
                x: &xs[1],
            },
            RowUpdate {
                class: 2,
                coeff: 0.3,
                x: &xs[1],
            },
            RowUpdate {
                class: 1,
                coeff: 0.0,
                x: &xs[2],
            },
        ];
        let touched = a.apply_updates(&ups).unwrap();
        assert_eq!(touched, vec![0, 2]);
        for u in &ups {
            b.add_to_row(u.class, u.coeff, u.x).unwrap();
        }
        for (ra, rb) in a.to_dense().iter().zip(b.to_dense()) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn truncate_row_in_logical_frame() {
        let mut w =
            WeightMatrix::from_rows(4, vec![sv(4, &[(0, 1.0), (1, -0.1), (2, 0.16), (3, -0.6)])])
                .unwrap();
        w.global_scale(0.5).unwrap();
        // logical [0.5, -0.05, 0.08, -0.3], tau 0.1
        let removed = w.truncate_row(0, 0.1).unwrap();
        assert_eq!(removed, 2);
        let row = w.materialize_row(0).unwrap();
        assert_eq!(row.indices(), &[0, 3]);
        assert!((row.values()[0] - 0.4).abs() < 1e-15);
        assert!((row.values()[1] + 0.2).abs() < 1e-15);
    }
}
