//! SimpleLSH: MIPS reduced to angular LSH by norm augmentation.
//!
//! Data rows are scaled by a common bound `U ≥ max ‖ω‖` and lifted to the
//! unit sphere in `R^{d+1}` with an extra coordinate `sqrt(1 − ‖ω/U‖²)`.
//! Queries are normalized and padded with a zero. Inner products in the
//! lifted space are then `ω^⊤x / (U‖x‖)`, so the angular order matches the
//! inner product order. Each of the `L` tables hashes the lifted vector with
//! `K` signed Gaussian projections.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mips::{
    check_dim, dot_same_dim, BackendKind, Best, LshFallback, LshParams, MipsIndex, QueryOutcome,
    RowStore,
};
use crate::sparse::SparseVector;

/// Slack on the `‖w‖ ≤ U` precondition for rounding.
const NORM_SLACK: f64 = 1e-12;

/// When an update overflows `U`, the new bound is this multiple of the
/// largest row norm, so growing rows do not trigger a rehash every step.
const RENORM_HEADROOM: f64 = 2.0;

/// Lifts a data row: `[w/U ; sqrt(1 − ‖w/U‖²)]`.
pub fn simplelsh_transform(w: &SparseVector, bound: f64) -> Result<SparseVector> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::invalid(format!(
            "norm bound must be positive, got {bound}"
        )));
    }
    let norm = w.norm();
    if norm > bound * (1.0 + NORM_SLACK) {
        return Err(Error::NormExceedsBound { norm, bound });
    }
    let d = w.dim();
    let mut indices = w.indices().to_vec();
    let mut values: Vec<f64> = w.values().iter().map(|v| v / bound).collect();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    let tail = (1.0 - sq).max(0.0).sqrt();
    if tail > 0.0 {
        indices.push(d as u32);
        values.push(tail);
    }
    Ok(SparseVector::from_sorted_unchecked(d + 1, indices, values))
}

/// Lifts a query: `[x/‖x‖ ; 0]`. The zero vector stays zero.
pub fn simplelsh_query_transform(x: &SparseVector) -> SparseVector {
    let norm = x.norm();
    let (d, indices, values) = x.clone().into_parts();
    let values = if norm > 0.0 {
        values.iter().map(|v| v / norm).collect()
    } else {
        values
    };
    SparseVector::from_sorted_unchecked(d + 1, indices, values)
}

/// Packs the sign pattern of up to 64 projections: bit `k` is set when
/// projection `k` is `≥ 0`.
pub fn bits_from_projections(projections: &[f64]) -> u64 {
    debug_assert!(projections.len() <= 64);
    projections.iter().enumerate().fold(
        0u64,
        |code, (k, &p)| if p >= 0.0 { code | (1 << k) } else { code },
    )
}

/// Sign-projection hash of a dense vector against `planes.len() ≤ 64`
/// directions.
pub fn hash_code(z: &[f64], planes: &[Vec<f64>]) -> u64 {
    let proj: Vec<f64> = planes
        .iter()
        .map(|p| p.iter().zip(z).map(|(a, b)| a * b).sum())
        .collect();
    bits_from_projections(&proj)
}

/// `log(1 − π⁻¹cos(S)) / log(1 − π⁻¹cos(cS))`, evaluated exactly as
/// written. Note the formula takes `cos` of the similarity thresholds
/// themselves rather than of an angle, so it is a diagnostic and not the
/// collision-probability ratio of the sign-projection hash.
pub fn hashing_quality(c: f64, s: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!("c must lie in (0, 1), got {c}")));
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!("S must be positive, got {s}")));
    }
    let num = (1.0 - s.cos() / PI).ln();
    let den = (1.0 - (c * s).cos() / PI).ln();
    if den == 0.0 || !num.is_finite() || !den.is_finite() {
        return Err(Error::invalid(format!(
            "hashing quality undefined at c = {c}, S = {s}"
        )));
    }
    Ok(num / den)
}

/// Gaussian projection directions generated one coordinate at a time, so
/// memory follows the set of coordinates that actually occur.
#[derive(Debug, Clone)]
struct PlaneBank {
    seed: u64,
    width: usize,
    columns: HashMap<u32, Box<[f32]>>,
}

impl PlaneBank {
    fn new(seed: u64, width: usize) -> Self {
        Self {
            seed,
            width,
            columns: HashMap::new(),
        }
    }

    fn generate(&self, coord: u32) -> Box<[f32]> {
        let mix = self.seed ^ (u64::from(coord) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(mix);
        (0..self.width)
            .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
            .collect()
    }

    fn ensure(&mut self, z: &SparseVector) {
        for &j in z.indices() {
            if !self.columns.contains_key(&j) {
                let col = self.generate(j);
                self.columns.insert(j, col);
            }
        }
    }

    fn project(&self, z: &SparseVector, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, v) in z.iter() {
            let owned;
            let col: &[f32] = match self.columns.get(&j) {
                Some(c) => c,
                None => {
                    owned = self.generate(j);
                    &owned
                }
            };
            for (o, &p) in out.iter_mut().zip(col.iter()) {
                *o += v * f64::from(p);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimpleLshIndex {
    dim: usize,
    params: LshParams,
    rows: RowStore,
    norms: Vec<f64>,
    bound: f64,
    codes: Vec<Option<Vec<u64>>>,
    tables: Vec<HashMap<u64, Vec<u32>>>,
    planes: PlaneBank,
    rebuilds: u64,
}

impl SimpleLshIndex {
    pub fn new(dim: usize, params: LshParams, seed: u64) -> Result<Self> {
        if !(1..=64).contains(&params.bits) || params.tables == 0 {
            return Err(Error::InvalidConfig(format!(
                "lsh needs 1..=64 bits and >= 1 table, got {} bits, {} tables",
                params.bits, params.tables
            )));
        }
        Ok(Self {
            dim,
            params,
            rows: RowStore::default(),
            norms: Vec::new(),
            bound: 1.0,
            codes: Vec::new(),
            tables: vec![HashMap::new(); params.tables],
            planes: PlaneBank::new(seed, params.bits * params.tables),
            rebuilds: 0,
        })
    }

    pub fn from_rows(
        dim: usize,
        rows: Vec<(usize, SparseVector)>,
        params: LshParams,
        seed: u64,
    ) -> Result<Self> {
        let mut index = Self::new(dim, params, seed)?;
        let max_norm = rows.iter().map(|(_, r)| r.norm()).fold(0.0, f64::max);
        index.bound = if max_norm > 0.0 { max_norm } else { 1.0 };
        for (c, row) in rows {
            check_dim(dim, &row)?;
            if index.rows.contains(c) {
                return Err(Error::DuplicateClass(c));
            }
            index.insert_fresh(c, row)?;
        }
        Ok(index)
    }

    /// The normalization constant `U`.
    pub fn norm_bound(&self) -> f64 {
        self.bound
    }

    /// How many times the augmentation was rebuilt after `U` overflowed.
    pub fn rebuild_count(&self) -> u64 {
        self.rebuilds
    }

    pub fn params(&self) -> LshParams {
        self.params
    }

    /// Hash codes of an indexed row, one per table.
    pub fn row_codes(&self, class: usize) -> Option<&[u64]> {
        self.codes.get(class).and_then(|c| c.as_deref())
    }

    /// Class ids sharing a bucket in `table`.
    pub fn bucket(&self, table: usize, code: u64) -> &[u32] {
        self.tables
            .get(table)
            .and_then(|t| t.get(&code))
            .map_or(&[], |b| b.as_slice())
    }

    fn codes_for(&self, lifted: &SparseVector) -> Vec<u64> {
        let k = self.params.bits;
        let mut proj = vec![0.0; k * self.params.tables];
        self.planes.project(lifted, &mut proj);
        proj.chunks(k).map(bits_from_projections).collect()
    }

    /// Hash codes of a query vector.
    pub fn query_codes(&self, x: &SparseVector) -> Vec<u64> {
        self.codes_for(&simplelsh_query_transform(x))
    }

    fn hash_row(&mut self, row: &SparseVector) -> Result<Vec<u64>> {
        let lifted = simplelsh_transform(row, self.bound)?;
        self.planes.ensure(&lifted);
        Ok(self.codes_for(&lifted))
    }

    fn insert_fresh(&mut self, class: usize, row: SparseVector) -> Result<()> {
        let codes = self.hash_row(&row)?;
        self.link(class, codes);
        if class >= self.norms.len() {
            self.norms.resize(class + 1, 0.0);
        }
        self.norms[class] = row.norm();
        self.rows.insert(class, row);
        Ok(())
    }

    fn link(&mut self, class: usize, codes: Vec<u64>) {
        for (table, &code) in self.tables.iter_mut().zip(&codes) {
            table.entry(code).or_default().push(class as u32);
        }
        if class >= self.codes.len() {
            self.codes.resize(class + 1, None);
        }
        self.codes[class] = Some(codes);
    }

    fn unlink(&mut self, class: usize) {
        let Some(codes) = self.codes.get_mut(class).and_then(Option::take) else {
            return;
        };
        for (table, code) in self.tables.iter_mut().zip(codes) {
            if let Some(bucket) = table.get_mut(&code) {
                if let Some(pos) = bucket.iter().position(|&c| c as usize == class) {
                    bucket.swap_remove(pos);
                }
                if bucket.is_empty() {
                    table.remove(&code);
                }
            }
        }
    }

    /// Re-derives `U` from the current rows and rehashes everything.
    fn rebuild(&mut self, min_norm: f64) -> Result<()> {
        let max_norm = self.norms.iter().copied().fold(min_norm, f64::max);
        self.bound = if max_norm > 0.0 {
            max_norm * RENORM_HEADROOM
        } else {
            1.0
        };
        self.tables.iter_mut().for_each(HashMap::clear);
        self.codes.iter_mut().for_each(|c| *c = None);
        let rows: Vec<(usize, SparseVector)> =
            self.rows.iter().map(|(c, r)| (c, r.clone())).collect();
        for (c, row) in rows {
            let codes = self.hash_row(&row)?;
            self.link(c, codes);
        }
        self.rebuilds += 1;
        Ok(())
    }

    fn hamming_candidates(&self, qcodes: &[u64], exclude: Option<usize>, k: usize) -> Vec<usize> {
        let mut ranked: Vec<(u32, usize)> = self
            .codes
            .iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != exclude)
            .filter_map(|(c, codes)| {
                codes.as_ref().map(|codes| {
                    let dist = codes
                        .iter()
                        .zip(qcodes)
                        .map(|(a, b)| (a ^ b).count_ones())
                        .sum::<u32>();
                    (dist, c)
                })
            })
            .collect();
        let k = k.min(ranked.len());
        if k == 0 {
            return Vec::new();
        }
        ranked.select_nth_unstable(k - 1);
        ranked.truncate(k);
        ranked.into_iter().map(|(_, c)| c).collect()
    }
}

impl MipsIndex for SimpleLshIndex {
    fn kind(&self) -> BackendKind {
        BackendKind::SimpleLsh
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.rows.len()
    }

    fn contains(&self, class: usize) -> bool {
        self.rows.contains(class)
    }

    fn query_detailed(&self, x: &SparseVector, exclude: Option<usize>) -> Result<QueryOutcome> {
        check_dim(self.dim, x)?;
        let qcodes = self.query_codes(x);
        let mut candidates: Vec<usize> = Vec::new();
        for (table, code) in self.tables.iter().zip(&qcodes) {
            if let Some(bucket) = table.get(code) {
                candidates.extend(
                    bucket
                        .iter()
                        .map(|&c| c as usize)
                        .filter(|&c| Some(c) != exclude),
                );
            }
        }
        candidates.sort_unstable();
        candidates.dedup();

        let mut fallback = false;
        if candidates.is_empty() {
            fallback = true;
            match self.params.fallback {
                LshFallback::ExactScan => {
                    let (class, score, scored) =
                        self.rows.scan(x, exclude).ok_or(Error::NoCandidate)?;
                    return Ok(QueryOutcome {
                        class,
                        score,
                        candidates: scored,
                        fallback,
                    });
                }
                LshFallback::Hamming(k) => {
                    candidates = self.hamming_candidates(&qcodes, exclude, k);
                    candidates.sort_unstable();
                }
            }
        }

        let mut best = Best::default();
        for &c in &candidates {
            let row = self.rows.get(c).expect("bucket entries are indexed rows");
            best.offer(c, dot_same_dim(row, x));
        }
        let (class, score) = best.hit.ok_or(Error::NoCandidate)?;
        Ok(QueryOutcome {
            class,
            score,
            candidates: candidates.len(),
            fallback,
        })
    }

    fn update_row(&mut self, class: usize, row: SparseVector) -> Result<()> {
        check_dim(self.dim, &row)?;
        self.unlink(class);
        let norm = row.norm();
        if norm > self.bound * (1.0 + NORM_SLACK) {
            if class >= self.norms.len() {
                self.norms.resize(class + 1, 0.0);
            }
            self.norms[class] = norm;
            self.rows.insert(class, row);
            return self.rebuild(norm);
        }
        self.insert_fresh(class, row)
    }
}
