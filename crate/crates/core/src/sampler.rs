//! Pair selection from a utility graph.
//!
//! * GM picks the single pair with the largest gain.
//! * MST picks the `n - 1` edges of the minimum spanning tree under edge
//!   weights `1 / max(U_ij, UTILITY_FLOOR)`, a batch that can be annotated in
//!   parallel and keeps the comparison graph connected.
//! * The hybrid rule uses GM while the observed vote count is at most one
//!   standard trial (`n(n-1)/2`) and MST afterwards.
//!
//! Ties are broken lexicographically on `(i, j)` everywhere so that selection
//! is reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info_gain::UtilityGraph;

/// Utilities below this value are raised to it before inversion.
pub const UTILITY_FLOOR: f64 = 1e-12;

/// Non-empty list of distinct pairs `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairBatch {
    pairs: Vec<(usize, usize)>,
}

impl PairBatch {
    pub fn new(pairs: Vec<(usize, usize)>, n: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("a pair batch cannot be empty"));
        }
        let mut seen = std::collections::HashSet::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            if i >= j || j >= n {
                return Err(Error::invalid(format!(
                    "pair ({i},{j}) is not a canonical pair of {n} items"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::invalid(format!("pair ({i},{j}) appears twice")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn single(i: usize, j: usize) -> Self {
        debug_assert!(i < j);
        Self { pairs: vec![(i, j)] }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn into_pairs(self) -> Vec<(usize, usize)> {
        self.pairs
    }
}

/// Selection mode implied by the observed vote count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Gm,
    Mst,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Gm => "GM",
            Mode::Mst => "MST",
        })
    }
}

/// `n(n-1)/2`, the number of comparisons in one full round.
pub fn standard_trial(n: usize) -> u64 {
    (n * n.saturating_sub(1) / 2) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerState {
    pub n: usize,
    /// Votes collected so far, pseudo-counts excluded.
    pub observed_votes: u64,
}

impl SamplerState {
    pub fn new(n: usize, observed_votes: u64) -> Self {
        Self { n, observed_votes }
    }

    pub fn mode(&self) -> Mode {
        if self.observed_votes <= standard_trial(self.n) {
            Mode::Gm
        } else {
            Mode::Mst
        }
    }
}

fn require_pairs(g: &UtilityGraph) -> Result<()> {
    if g.n() < 2 {
        return Err(Error::invalid(format!(
            "pair selection needs at least 2 items, got {}",
            g.n()
        )));
    }
    Ok(())
}

/// Pair with the largest gain; first in lexicographic order among ties.
pub fn select_gm(g: &UtilityGraph) -> Result<(usize, usize)> {
    require_pairs(g)?;
    let n = g.n();
    let mut best = (0, 1);
    let mut best_u = g.get(0, 1);
    for i in 0..n {
        for j in (i + 1)..n {
            let u = g.get(i, j);
            if u > best_u {
                best_u = u;
                best = (i, j);
            }
        }
    }
    Ok(best)
}

/// Edge weight used by the spanning tree.
#[inline]
pub fn edge_weight(utility: f64) -> f64 {
    1.0 / utility.max(UTILITY_FLOOR)
}

/// Sum of edge weights, accumulated in the order given.
pub fn tree_weight(g: &UtilityGraph, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| edge_weight(g.get(i, j))).sum()
}

/// Minimum spanning tree of the complete graph, by dense Prim in `O(n^2)`.
///
/// Returned pairs are sorted lexicographically.
pub fn select_mst(g: &UtilityGraph) -> Result<PairBatch> {
    require_pairs(g)?;
    let n = g.n();
    let canonical = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };

    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    in_tree[0] = true;
    for v in 1..n {
        key[v] = edge_weight(g.get(0, v));
        parent[v] = 0;
    }

    let mut pairs = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick = usize::MAX;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let better = pick == usize::MAX
                || key[v] < key[pick]
                || (key[v] == key[pick] && canonical(parent[v], v) < canonical(parent[pick], pick));
            if better {
                pick = v;
            }
        }
        in_tree[pick] = true;
        pairs.push(canonical(parent[pick], pick));
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = edge_weight(g.get(pick, v));
            if w < key[v] || (w == key[v] && canonical(pick, v) < canonical(parent[v], v)) {
                key[v] = w;
                parent[v] = pick;
            }
        }
    }
    pairs.sort_unstable();
    Ok(PairBatch { pairs })
}

/// Hybrid selection: GM pair while `observed_votes <= n(n-1)/2`, MST batch after.
pub fn next_batch(g: &UtilityGraph, st: &SamplerState) -> Result<PairBatch> {
    if st.n != g.n() {
        return Err(Error::invalid(format!(
            "sampler state is for {} items but the utility graph has {}",
            st.n,
            g.n()
        )));
    }
    match st.mode() {
        Mode::Gm => select_gm(g).map(|(i, j)| PairBatch::single(i, j)),
        Mode::Mst => select_mst(g),
    }
}
