//! Navigable small-world graph over the class rows, searched greedily with
//! inner product as the (non-metric) similarity.
//!
//! Links are undirected. Inserting a node links it to the `M` most similar
//! nodes found by a best-first search; neighbors that overflow `M` are
//! pruned. Pruning never removes a bridge, so the graph stays connected.
//! Deleting a node cross-links its former neighbors and prunes them again.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet, VecDeque};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mips::{
    check_dim, dot_same_dim, BackendKind, Best, MipsIndex, QueryOutcome, RowStore, SwGraphParams,
};
use crate::sparse::SparseVector;

/// Visit budget of the reachability probe run before dropping an edge.
const BRIDGE_PROBE_BUDGET: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    sim: f64,
    id: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    // Higher similarity first, then smaller id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct SwGraphIndex {
    dim: usize,
    params: SwGraphParams,
    rows: RowStore,
    adj: Vec<Vec<u32>>,
    entries: Vec<u32>,
    rng: ChaCha8Rng,
}

impl SwGraphIndex {
    pub fn new(dim: usize, params: SwGraphParams, seed: u64) -> Self {
        Self {
            dim,
            params,
            rows: RowStore::default(),
            adj: Vec::new(),
            entries: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_rows(
        dim: usize,
        rows: Vec<(usize, SparseVector)>,
        params: SwGraphParams,
        seed: u64,
    ) -> Result<Self> {
        let mut index = Self::new(dim, params, seed);
        for (c, row) in rows {
            check_dim(dim, &row)?;
            if index.rows.contains(c) {
                return Err(Error::DuplicateClass(c));
            }
            index.insert(c, row);
        }
        Ok(index)
    }

    pub fn params(&self) -> SwGraphParams {
        self.params
    }

    /// Changes the query-time candidate list size.
    pub fn set_ef_search(&mut self, ef: usize) {
        self.params.ef_search = ef.max(1);
    }

    pub fn neighbors(&self, class: usize) -> &[u32] {
        self.adj.get(class).map_or(&[], |a| a.as_slice())
    }

    pub fn entry_points(&self) -> &[u32] {
        &self.entries
    }

    /// Whether every inserted node is reachable from every other one.
    pub fn is_connected(&self) -> bool {
        let Some((start, _)) = self.rows.iter().next() else {
            return true;
        };
        let mut seen = vec![false; self.rows.capacity()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                let v = v as usize;
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.rows.len()
    }

    fn sim(&self, a: usize, b: usize) -> f64 {
        match (self.rows.get(a), self.rows.get(b)) {
            (Some(x), Some(y)) => dot_same_dim(x, y),
            _ => f64::NEG_INFINITY,
        }
    }

    fn linked(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&(b as u32))
    }

    fn link(&mut self, a: usize, b: usize) {
        if a != b && !self.linked(a, b) {
            self.adj[a].push(b as u32);
            self.adj[b].push(a as u32);
        }
    }

    fn unlink(&mut self, a: usize, b: usize) {
        self.adj[a].retain(|&v| v as usize != b);
        self.adj[b].retain(|&v| v as usize != a);
    }

    /// Best-first search from the entry points. The excluded node is
    /// traversed but never reported. Results are sorted best first.
    fn search(&self, q: &SparseVector, ef: usize, exclude: Option<usize>) -> (Vec<Scored>, usize) {
        let mut visited = vec![false; self.rows.capacity()];
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut results: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::new();
        let mut scored = 0;

        for &e in &self.entries {
            let e = e as usize;
            if visited[e] {
                continue;
            }
            visited[e] = true;
            let s = Scored {
                sim: dot_same_dim(self.rows.get(e).expect("entry is indexed"), q),
                id: e as u32,
            };
            scored += 1;
            candidates.push(s);
            if Some(e) != exclude {
                results.push(std::cmp::Reverse(s));
                if results.len() > ef {
                    results.pop();
                }
            }
        }

        while let Some(cur) = candidates.pop() {
            if results.len() >= ef {
                if let Some(std::cmp::Reverse(worst)) = results.peek() {
                    if cur < *worst {
                        break;
                    }
                }
            }
            for &nb in &self.adj[cur.id as usize] {
                let nb = nb as usize;
                if visited[nb] {
                    continue;
                }
                visited[nb] = true;
                let s = Scored {
                    sim: dot_same_dim(self.rows.get(nb).expect("neighbor is indexed"), q),
                    id: nb as u32,
                };
                scored += 1;
                let admit =
                    results.len() < ef || results.peek().is_none_or(|std::cmp::Reverse(w)| s > *w);
                if admit {
                    candidates.push(s);
                    if Some(nb) != exclude {
                        results.push(std::cmp::Reverse(s));
                        if results.len() > ef {
                            results.pop();
                        }
                    }
                }
            }
        }

        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        (out, scored)
    }

    fn insert(&mut self, class: usize, row: SparseVector) {
        let found = if self.rows.len() > 0 {
            self.search(&row, self.params.ef_construction, None).0
        } else {
            Vec::new()
        };
        self.rows.insert(class, row);
        if class >= self.adj.len() {
            self.adj.resize(class + 1, Vec::new());
        }
        for s in found.iter().take(self.params.m) {
            self.link(class, s.id as usize);
        }
        for s in found.iter().take(self.params.m) {
            self.prune(s.id as usize);
        }
        if self.entries.len() < self.params.entry_points {
            self.entries.push(class as u32);
        }
    }

    fn delete(&mut self, class: usize) {
        let nbrs: Vec<usize> = std::mem::take(&mut self.adj[class])
            .into_iter()
            .map(|v| v as usize)
            .collect();
        for &u in &nbrs {
            self.adj[u].retain(|&v| v as usize != class);
        }
        for (i, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[i + 1..] {
                self.link(u, w);
            }
        }
        for &u in &nbrs {
            self.prune(u);
        }
        self.rows.remove(class);
        if let Some(pos) = self.entries.iter().position(|&e| e as usize == class) {
            self.entries.remove(pos);
            let pool: Vec<u32> = self
                .rows
                .iter()
                .map(|(c, _)| c as u32)
                .filter(|c| !self.entries.contains(c))
                .collect();
            if let Some(&pick) = pool.choose(&mut self.rng) {
                self.entries.push(pick);
            }
        }
    }

    /// Drops links of `a` until its degree is at most `M`, worst similarity
    /// first, skipping any link whose removal could disconnect the graph.
    fn prune(&mut self, a: usize) {
        while self.adj[a].len() > self.params.m {
            let mut order: Vec<(f64, usize)> = self.adj[a]
                .iter()
                .map(|&b| (self.sim(a, b as usize), b as usize))
                .collect();
            order.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
            let mut progressed = false;
            for &(_, b) in &order {
                if self.has_detour(a, b) {
                    self.unlink(a, b);
                    progressed = true;
                    break;
                }
                if let Some(c) = self.rewire_target(a, b) {
                    self.unlink(a, b);
                    self.link(b, c);
                    progressed = true;
                    break;
                }
            }
            if !progressed {
                break;
            }
        }
    }

    /// A neighbor `c` of `a` that can adopt `b` without overflowing.
    fn rewire_target(&self, a: usize, b: usize) -> Option<usize> {
        self.adj[a]
            .iter()
            .map(|&c| c as usize)
            .filter(|&c| c != b && self.adj[c].len() < self.params.m && !self.linked(b, c))
            .max_by(|&x, &y| self.sim(b, x).total_cmp(&self.sim(b, y)).then(y.cmp(&x)))
    }

    /// True if `b` reaches `a` without the direct edge `a`–`b`.
    fn has_detour(&self, a: usize, b: usize) -> bool {
        if self.adj[a].iter().any(|&z| self.adj[b].contains(&z)) {
            return true;
        }
        let mut seen: HashSet<usize> = HashSet::from([b]);
        let mut queue = VecDeque::from([b]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                let v = v as usize;
                if u == b && v == a {
                    continue;
                }
                if v == a {
                    return true;
                }
                if seen.insert(v) {
                    if seen.len() > BRIDGE_PROBE_BUDGET {
                        return false;
                    }
                    queue.push_back(v);
                }
            }
        }
        false
    }
}

impl MipsIndex for SwGraphIndex {
    fn kind(&self) -> BackendKind {
        BackendKind::SwGraph
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
        if self.rows.len() == 0 {
            return Err(Error::NoCandidate);
        }
        let (found, scored) = self.search(x, self.params.ef_search, exclude);
        let mut best = Best::default();
        for s in &found {
            best.offer(s.id as usize, s.sim);
        }
        let (class, score) = best.hit.ok_or(Error::NoCandidate)?;
        Ok(QueryOutcome {
            class,
            score,
            candidates: scored,
            fallback: false,
        })
    }

    fn update_row(&mut self, class: usize, row: SparseVector) -> Result<()> {
        check_dim(self.dim, &row)?;
        if self.rows.contains(class) {
            self.delete(class);
        }
        self.insert(class, row);
        Ok(())
    }
}
