use crate::error::{Error, Result};
use crate::mips::{check_dim, BackendKind, MipsIndex, QueryOutcome, RowStore};
use crate::sparse::SparseVector;

/// Brute-force MIPS. Ties go to the smallest class id.
#[derive(Debug, Clone)]
pub struct ExactIndex {
    dim: usize,
    rows: RowStore,
}

impl ExactIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: RowStore::default(),
        }
    }

    pub fn from_rows(dim: usize, rows: Vec<(usize, SparseVector)>) -> Result<Self> {
        let mut index = Self::new(dim);
        for (c, row) in rows {
            check_dim(dim, &row)?;
            if index.rows.insert(c, row).is_some() {
                return Err(Error::DuplicateClass(c));
            }
        }
        Ok(index)
    }

    pub fn row(&self, class: usize) -> Option<&SparseVector> {
        self.rows.get(class)
    }
}

impl MipsIndex for ExactIndex {
    fn kind(&self) -> BackendKind {
        BackendKind::Exact
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
        let (class, score, candidates) = self.rows.scan(x, exclude).ok_or(Error::NoCandidate)?;
        Ok(QueryOutcome {
            class,
            score,
            candidates,
            fallback: false,
        })
    }

    fn update_row(&mut self, class: usize, row: SparseVector) -> Result<()> {
        check_dim(self.dim, &row)?;
        self.rows.insert(class, row);
        Ok(())
    }
}
