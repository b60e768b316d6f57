//! Maximum-inner-product search over the class rows.
//!
//! Three interchangeable backends sit behind [`MipsIndex`]:
//!
//! * [`ExactIndex`]: brute-force scan, the oracle every other backend is
//!   measured against.
//! * [`SimpleLshIndex`]: norm augmentation plus multi-table signed random
//!   projections; bucket hits are re-ranked with exact inner products.
//! * [`SwGraphIndex`]: navigable small-world proximity graph with inner
//!   product similarity, supporting incremental delete and insert.
//!
//! All backends keep their own snapshot of each row. Callers must call
//! [`MipsIndex::update_row`] after changing a row and before the next query
//! that should see the change. Queries take `&self` and may run
//! concurrently; updates take `&mut self`.

mod audit;
mod exact;
mod simplelsh;
mod swgraph;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

pub use audit::{audit_inexactness, AuditReport, GapHistogram};
pub use exact::ExactIndex;
pub use simplelsh::{
    bits_from_projections, hash_code, hashing_quality, simplelsh_query_transform,
    simplelsh_transform, SimpleLshIndex,
};
pub use swgraph::SwGraphIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Exact,
    SimpleLsh,
    SwGraph,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Exact => "exact",
            BackendKind::SimpleLsh => "simplelsh",
            BackendKind::SwGraph => "swgraph",
        })
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(BackendKind::Exact),
            "simplelsh" | "lsh" => Ok(BackendKind::SimpleLsh),
            "swgraph" | "sw-graph" => Ok(BackendKind::SwGraph),
            other => Err(Error::invalid(format!("unknown backend '{other}'"))),
        }
    }
}

/// What SimpleLSH does when no bucket holds a usable candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LshFallback {
    /// Scan every row exactly.
    ExactScan,
    /// Re-rank the given number of rows with the smallest summed Hamming
    /// distance between their codes and the query codes.
    Hamming(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    /// Bits per hash code, at most 64.
    pub bits: usize,
    /// Number of hash tables.
    pub tables: usize,
    pub fallback: LshFallback,
}

impl Default for LshParams {
    fn default() -> Self {
        Self {
            bits: 64,
            tables: 32,
            fallback: LshFallback::ExactScan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwGraphParams {
    /// Maximum neighbors per node.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Number of random entry points a search starts from.
    pub entry_points: usize,
}

impl Default for SwGraphParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 100,
            ef_search: 64,
            entry_points: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub kind: BackendKind,
    pub lsh: LshParams,
    pub swg: SwGraphParams,
    pub seed: u64,
}

impl IndexParams {
    pub fn new(kind: BackendKind) -> Self {
        Self {
            kind,
            lsh: LshParams::default(),
            swg: SwGraphParams::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::SimpleLsh {
            if !(1..=64).contains(&self.lsh.bits) {
                return Err(Error::InvalidConfig(format!(
                    "lsh bits must be in 1..=64, got {}",
                    self.lsh.bits
                )));
            }
            if self.lsh.tables == 0 {
                return Err(Error::InvalidConfig("lsh tables must be >= 1".into()));
            }
            if self.lsh.fallback == LshFallback::Hamming(0) {
                return Err(Error::InvalidConfig(
                    "hamming fallback needs at least one candidate".into(),
                ));
            }
        }
        if self.kind == BackendKind::SwGraph {
            let p = &self.swg;
            if p.m == 0 || p.ef_construction == 0 || p.ef_search == 0 || p.entry_points == 0 {
                return Err(Error::InvalidConfig(
                    "swgraph m, ef_construction, ef_search and entry_points must be >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Result of one search, with provenance for audits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOutcome {
    pub class: usize,
    /// Exact inner product of the query with the returned row snapshot.
    pub score: f64,
    /// Number of rows that were scored exactly.
    pub candidates: usize,
    /// True when the backend fell back to a full scan.
    pub fallback: bool,
}

pub trait MipsIndex: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn dim(&self) -> usize;

    /// Number of indexed rows.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn contains(&self, class: usize) -> bool;

    /// Approximate `argmax_{c ≠ exclude} ω_c^⊤x`.
    fn query_detailed(&self, x: &SparseVector, exclude: Option<usize>) -> Result<QueryOutcome>;

    fn query(&self, x: &SparseVector, exclude: Option<usize>) -> Result<(usize, f64)> {
        self.query_detailed(x, exclude).map(|o| (o.class, o.score))
    }

    /// Inserts row `class` or replaces its previous snapshot.
    fn update_row(&mut self, class: usize, row: SparseVector) -> Result<()>;
}

/// Any of the built-in backends.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum AnyIndex {
    Exact(ExactIndex),
    SimpleLsh(SimpleLshIndex),
    SwGraph(SwGraphIndex),
}

impl AnyIndex {
    fn inner(&self) -> &dyn MipsIndex {
        match self {
            AnyIndex::Exact(i) => i,
            AnyIndex::SimpleLsh(i) => i,
            AnyIndex::SwGraph(i) => i,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn MipsIndex {
        match self {
            AnyIndex::Exact(i) => i,
            AnyIndex::SimpleLsh(i) => i,
            AnyIndex::SwGraph(i) => i,
        }
    }
}

impl MipsIndex for AnyIndex {
    fn kind(&self) -> BackendKind {
        self.inner().kind()
    }

    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn len(&self) -> usize {
        self.inner().len()
    }

    fn contains(&self, class: usize) -> bool {
        self.inner().contains(class)
    }

    fn query_detailed(&self, x: &SparseVector, exclude: Option<usize>) -> Result<QueryOutcome> {
        self.inner().query_detailed(x, exclude)
    }

    fn update_row(&mut self, class: usize, row: SparseVector) -> Result<()> {
        self.inner_mut().update_row(class, row)
    }
}

/// Builds an index over exactly the given rows.
pub fn build(
    rows: Vec<(usize, SparseVector)>,
    dim: usize,
    params: &IndexParams,
) -> Result<AnyIndex> {
    params.validate()?;
    validate_rows(&rows, dim)?;
    Ok(match params.kind {
        BackendKind::Exact => AnyIndex::Exact(ExactIndex::from_rows(dim, rows)?),
        BackendKind::SimpleLsh => AnyIndex::SimpleLsh(SimpleLshIndex::from_rows(
            dim,
            rows,
            params.lsh,
            params.seed,
        )?),
        BackendKind::SwGraph => {
            AnyIndex::SwGraph(SwGraphIndex::from_rows(dim, rows, params.swg, params.seed)?)
        }
    })
}

fn validate_rows(rows: &[(usize, SparseVector)], dim: usize) -> Result<()> {
    let mut ids: Vec<usize> = rows.iter().map(|r| r.0).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateClass(w[0]));
    }
    for (_, row) in rows {
        check_dim(dim, row)?;
    }
    Ok(())
}

pub(crate) fn check_dim(dim: usize, x: &SparseVector) -> Result<()> {
    if x.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: x.dim(),
        });
    }
    Ok(())
}

/// Running argmax with ties going to the smaller class id. NaN scores never
/// win.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Best {
    pub(crate) hit: Option<(usize, f64)>,
}

impl Best {
    pub(crate) fn offer(&mut self, class: usize, score: f64) {
        if score.is_nan() {
            if self.hit.is_none() {
                self.hit = Some((class, f64::NEG_INFINITY));
            }
            return;
        }
        match self.hit {
            Some((c, s)) if score < s || (score == s && class > c) => {}
            _ => self.hit = Some((class, score)),
        }
    }
}

/// Dense slot storage for row snapshots keyed by class id.
#[derive(Debug, Clone, Default)]
pub(crate) struct RowStore {
    rows: Vec<Option<SparseVector>>,
    len: usize,
}

impl RowStore {
    pub(crate) fn get(&self, class: usize) -> Option<&SparseVector> {
        self.rows.get(class).and_then(|r| r.as_ref())
    }

    pub(crate) fn contains(&self, class: usize) -> bool {
        self.get(class).is_some()
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn capacity(&self) -> usize {
        self.rows.len()
    }

    /// Stores a row, returning the previous snapshot.
    pub(crate) fn insert(&mut self, class: usize, row: SparseVector) -> Option<SparseVector> {
        if class >= self.rows.len() {
            self.rows.resize(class + 1, None);
        }
        let old = self.rows[class].replace(row);
        if old.is_none() {
            self.len += 1;
        }
        old
    }

    pub(crate) fn remove(&mut self, class: usize) -> Option<SparseVector> {
        let old = self.rows.get_mut(class).and_then(Option::take);
        if old.is_some() {
            self.len -= 1;
        }
        old
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = (usize, &SparseVector)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(c, r)| r.as_ref().map(|r| (c, r)))
    }

    /// Exact scan in ascending class order.
    pub(crate) fn scan(
        &self,
        x: &SparseVector,
        exclude: Option<usize>,
    ) -> Option<(usize, f64, usize)> {
        let mut best = Best::default();
        let mut scored = 0;
        for (c, row) in self.iter() {
            if Some(c) == exclude {
                continue;
            }
            scored += 1;
            best.offer(c, dot_same_dim(row, x));
        }
        best.hit.map(|(c, s)| (c, s, scored))
    }
}

/// Inner product of two vectors already known to share a dimension.
pub(crate) fn dot_same_dim(a: &SparseVector, b: &SparseVector) -> f64 {
    crate::sparse::dot_raw(a.indices(), a.values(), b.indices(), b.values(), 1.0)
}
