//! CART decision trees and the split finder shared with the forest and
//! boosting learners.
//!
//! Trees grow level by level. For each level, every candidate feature's
//! column is scanned once in ascending value order and all nodes of the
//! level are evaluated together. Absent sparse entries are exact zeros, and
//! zero takes part in threshold enumeration like any observed value.
//! Candidate thresholds are midpoints between consecutive distinct values
//! seen in the node; rows with `x[f] <= threshold` go left. The best split
//! maximizes the criterion's gain, with ties going to the lowest feature
//! and then the lowest threshold.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{CoarseLabel, ProbDist, NUM_CLASSES};
use crate::sparse::{CsrMatrix, RowView};

const NONE: u32 = u32::MAX;

/// Column-major copy of a CSR matrix with each column sorted by value.
#[derive(Debug, Clone)]
pub(crate) struct ColumnIndex {
    indptr: Vec<usize>,
    rows: Vec<u32>,
    values: Vec<f64>,
}

impl ColumnIndex {
    pub fn new(x: &CsrMatrix) -> Self {
        let d = x.n_cols();
        let mut counts = vec![0usize; d + 1];
        for row in x.rows() {
            for &j in row.indices {
                counts[j as usize + 1] += 1;
            }
        }
        for j in 0..d {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut fill = counts;
        let mut rows = vec![0u32; x.nnz()];
        let mut values = vec![0.0; x.nnz()];
        for (i, row) in x.rows().enumerate() {
            for (j, v) in row.iter() {
                rows[fill[j]] = i as u32;
                values[fill[j]] = v;
                fill[j] += 1;
            }
        }
        for j in 0..d {
            let (s, e) = (indptr[j], indptr[j + 1]);
            let mut pairs: Vec<(f64, u32)> = values[s..e].iter().copied().zip(rows[s..e].iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (k, (v, r)) in pairs.into_iter().enumerate() {
                values[s + k] = v;
                rows[s + k] = r;
            }
        }
        ColumnIndex { indptr, rows, values }
    }

    fn n_cols(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_nonempty_cols(&self) -> usize {
        self.indptr.windows(2).filter(|w| w[1] > w[0]).count()
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.indptr[j], self.indptr[j + 1]);
        self.rows[s..e]
            .iter()
            .map(|&r| r as usize)
            .zip(self.values[s..e].iter().copied())
    }
}

/// Node statistics and split scoring for one kind of tree.
pub(crate) trait Criterion: Sync {
    type Stats: Copy + Default;
    type Leaf;

    fn add_row(&self, s: &mut Self::Stats, row: usize);
    fn add(&self, a: &mut Self::Stats, b: &Self::Stats);
    fn sub(&self, a: &Self::Stats, b: &Self::Stats) -> Self::Stats;
    /// Weight compared against `min_split_weight`.
    fn weight(&self, s: &Self::Stats) -> f64;
    fn child_ok(&self, s: &Self::Stats) -> bool;
    fn is_pure(&self, s: &Self::Stats) -> bool;
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> f64;
    fn leaf(&self, s: &Self::Stats) -> Self::Leaf;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_split_weight: f64,
    pub min_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<L> {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(L),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub nodes: Vec<Node<L>>,
}

impl<L> Tree<L> {
    pub fn leaf_index(&self, x: RowView<'_>) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature as usize) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf(_) => return i,
            }
        }
    }

    pub fn leaf(&self, x: RowView<'_>) -> &L {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf(l) => l,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk<L>(t: &Tree<L>, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left as usize).max(walk(t, *right as usize)),
            }
        }
        walk(self, 0)
    }

    pub fn map_leaves<M>(self, mut f: impl FnMut(L) -> M) -> Tree<M> {
        Tree {
            nodes: self
                .nodes
                .into_iter()
                .map(|n| match n {
                    Node::Leaf(l) => Node::Leaf(f(l)),
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    },
                })
                .collect(),
        }
    }

    /// Structural check for deserialized trees: every split references a
    /// feature below `dim` and children that come later in `nodes`.
    pub(crate) fn check(&self, dim: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("tree has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature, left, right, ..
            } = n
            {
                let (l, r) = (*left as usize, *right as usize);
                if *feature as usize >= dim || l <= i || r <= i || l >= self.nodes.len() || r >= self.nodes.len() {
                    return Err(Error::Format(format!("tree node {i} is malformed")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Candidate<S> {
    feature: u32,
    threshold: f64,
    gain: f64,
    left: S,
}

struct Frontier<S> {
    id: usize,
    stats: S,
    n_rows: usize,
    depth: usize,
}

/// Grows one tree over `active` rows (each must appear once). With
/// `sampler = Some((rng, k))` every node considers a uniform random subset
/// of `k` of the features that are non-constant within it. Returns the tree
/// and, per row, the index of the leaf it ended in (`u32::MAX` for rows not
/// in `active`).
pub(crate) fn grow<C: Criterion>(
    x: &CsrMatrix,
    cols: &ColumnIndex,
    active: &[usize],
    crit: &C,
    params: GrowParams,
    mut sampler: Option<(&mut ChaCha8Rng, usize)>,
) -> (Tree<C::Leaf>, Vec<u32>) {
    let mut node_of = vec![NONE; x.n_rows()];
    let mut row_leaf = vec![NONE; x.n_rows()];
    let mut root = C::Stats::default();
    for &r in active {
        node_of[r] = 0;
        crit.add_row(&mut root, r);
    }
    let mut nodes: Vec<Option<Node<C::Leaf>>> = vec![None];
    let mut level = vec![Frontier {
        id: 0,
        stats: root,
        n_rows: active.len(),
        depth: 0,
    }];
    let mut live: Vec<usize> = active.to_vec();

    while !level.is_empty() {
        let splittable: Vec<bool> = level
            .iter()
            .map(|f| {
                f.depth < params.max_depth
                    && f.n_rows >= 2
                    && crit.weight(&f.stats) >= params.min_split_weight
                    && !crit.is_pure(&f.stats)
            })
            .collect();
        let best = if splittable.iter().any(|s| *s) {
            let features = match sampler.as_mut() {
                Some((rng, k)) => Some(sample_features(cols, &node_of, &level, &splittable, rng, *k)),
                None => None,
            };
            find_splits(cols, &node_of, &level, &splittable, crit, features.as_deref())
        } else {
            vec![None; level.len()]
        };

        // Level index -> (left, right) level indices in the next frontier.
        let mut routes: Vec<Option<(u32, f64, u32, u32)>> = vec![None; level.len()];
        let mut next = Vec::new();
        for (j, f) in level.iter().enumerate() {
            match best[j].filter(|c| c.gain.is_finite() && c.gain >= params.min_gain) {
                Some(c) => {
                    let (l_id, r_id) = (nodes.len(), nodes.len() + 1);
                    nodes.push(None);
                    nodes.push(None);
                    nodes[f.id] = Some(Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: l_id as u32,
                        right: r_id as u32,
                    });
                    let right = crit.sub(&f.stats, &c.left);
                    routes[j] = Some((c.feature, c.threshold, next.len() as u32, next.len() as u32 + 1));
                    for (id, stats) in [(l_id, c.left), (r_id, right)] {
                        next.push(Frontier {
                            id,
                            stats,
                            n_rows: 0,
                            depth: f.depth + 1,
                        });
                    }
                }
                None => nodes[f.id] = Some(Node::Leaf(crit.leaf(&f.stats))),
            }
        }
        live.retain(|&r| {
            let j = node_of[r] as usize;
            match routes[j] {
                Some((feature, threshold, l, rr)) => {
                    let dest = if x.row(r).get(feature as usize) <= threshold {
                        l
                    } else {
                        rr
                    };
                    node_of[r] = dest;
                    next[dest as usize].n_rows += 1;
                    true
                }
                None => {
                    row_leaf[r] = level[j].id as u32;
                    node_of[r] = NONE;
                    false
                }
            }
        });
        level = next;
    }
    let nodes = nodes.into_iter().map(|n| n.expect("every node is resolved")).collect();
    (Tree { nodes }, row_leaf)
}

/// For each splittable node, `k` features drawn uniformly without
/// replacement from those that are non-constant in it. Returns, per
/// feature, the level nodes that may split on it.
fn sample_features<S>(
    cols: &ColumnIndex,
    node_of: &[u32],
    level: &[Frontier<S>],
    splittable: &[bool],
    rng: &mut ChaCha8Rng,
    k: usize,
) -> Vec<Vec<u32>> {
    let d = cols.n_cols();
    let mut stamp = vec![NONE; level.len()];
    let mut count = vec![0usize; level.len()];
    let mut first = vec![0.0; level.len()];
    let mut varied = vec![false; level.len()];
    let mut touched = Vec::new();
    let mut nonconstant: Vec<Vec<u32>> = vec![Vec::new(); level.len()];
    for f in 0..d {
        for (r, v) in cols.column(f) {
            let j = node_of[r];
            if j == NONE || !splittable[j as usize] {
                continue;
            }
            let j = j as usize;
            if stamp[j] != f as u32 {
                stamp[j] = f as u32;
                count[j] = 0;
                first[j] = v;
                varied[j] = false;
                touched.push(j);
            }
            count[j] += 1;
            varied[j] |= v != first[j];
        }
        for &j in &touched {
            if varied[j] || count[j] < level[j].n_rows {
                nonconstant[j].push(f as u32);
            }
        }
        touched.clear();
    }
    let mut per_feature = vec![Vec::new(); d];
    for (j, feats) in nonconstant.iter().enumerate() {
        if feats.len() <= k {
            for &f in feats {
                per_feature[f as usize].push(j as u32);
            }
        } else {
            for i in sample(rng, feats.len(), k).into_iter() {
                per_feature[feats[i] as usize].push(j as u32);
            }
        }
    }
    for nodes in &mut per_feature {
        nodes.sort_unstable();
    }
    per_feature
}

fn find_splits<C: Criterion>(
    cols: &ColumnIndex,
    node_of: &[u32],
    level: &[Frontier<C::Stats>],
    splittable: &[bool],
    crit: &C,
    features: Option<&[Vec<u32>]>,
) -> Vec<Option<Candidate<C::Stats>>> {
    let m = level.len();
    let mut best: Vec<Option<Candidate<C::Stats>>> = vec![None; m];
    let mut allowed = vec![NONE; m];
    let mut stamp = vec![NONE; m];
    let mut nz = vec![C::Stats::default(); m];
    let mut nz_n = vec![0usize; m];
    let mut left = vec![C::Stats::default(); m];
    let mut last: Vec<Option<f64>> = vec![None; m];
    let mut zero_done = vec![false; m];
    let mut touched: Vec<usize> = Vec::new();

    let consider = |j: usize, f: usize, lo: f64, hi: f64, left: &C::Stats, best: &mut [Option<Candidate<C::Stats>>]| {
        let right = crit.sub(&level[j].stats, left);
        if !crit.child_ok(left) || !crit.child_ok(&right) {
            return;
        }
        let gain = crit.gain(&level[j].stats, left, &right);
        if best[j].is_none_or(|b| gain > b.gain) {
            let mid = lo + (hi - lo) / 2.0;
            best[j] = Some(Candidate {
                feature: f as u32,
                threshold: if mid < hi { mid } else { lo },
                gain,
                left: *left,
            });
        }
    };

    for f in 0..cols.n_cols() {
        let f32 = f as u32;
        if let Some(per_feature) = features {
            if per_feature[f].is_empty() {
                continue;
            }
            for &j in &per_feature[f] {
                allowed[j as usize] = f32;
            }
        }
        let is_allowed = |j: usize, allowed: &[u32]| match features {
            Some(_) => allowed[j] == f32,
            None => splittable[j],
        };
        for (r, _) in cols.column(f) {
            let j = node_of[r];
            if j == NONE || !is_allowed(j as usize, &allowed) {
                continue;
            }
            let j = j as usize;
            if stamp[j] != f32 {
                stamp[j] = f32;
                nz[j] = C::Stats::default();
                nz_n[j] = 0;
                touched.push(j);
            }
            crit.add_row(&mut nz[j], r);
            nz_n[j] += 1;
        }
        for &j in &touched {
            left[j] = C::Stats::default();
            last[j] = None;
            zero_done[j] = false;
        }
        let zero_stats = |j: usize, nz: &[C::Stats]| crit.sub(&level[j].stats, &nz[j]);
        for (r, v) in cols.column(f) {
            let j = node_of[r];
            if j == NONE || stamp[j as usize] != f32 || !is_allowed(j as usize, &allowed) {
                continue;
            }
            let j = j as usize;
            if v > 0.0 && !zero_done[j] {
                zero_done[j] = true;
                if nz_n[j] < level[j].n_rows {
                    if let Some(l) = last[j] {
                        consider(j, f, l, 0.0, &left[j], &mut best);
                    }
                    let z = zero_stats(j, &nz);
                    crit.add(&mut left[j], &z);
                    last[j] = Some(0.0);
                }
            }
            if let Some(l) = last[j] {
                if v != l {
                    consider(j, f, l, v, &left[j], &mut best);
                }
            }
            crit.add_row(&mut left[j], r);
            last[j] = Some(v);
        }
        for &j in &touched {
            if !zero_done[j] && nz_n[j] < level[j].n_rows {
                if let Some(l) = last[j] {
                    consider(j, f, l, 0.0, &left[j], &mut best);
                }
            }
        }
        touched.clear();
    }
    best
}

/// Gini impurity over weighted class counts.
pub(crate) struct Gini<'a> {
    pub labels: &'a [CoarseLabel],
    /// Per-row multiplicity (bootstrap counts); `None` means all ones.
    pub weights: Option<&'a [f64]>,
    pub total_weight: f64,
}

fn gini(s: &[f64; NUM_CLASSES]) -> (f64, f64) {
    let n: f64 = s.iter().sum();
    if n <= 0.0 {
        return (0.0, 0.0);
    }
    let sq: f64 = s.iter().map(|c| (c / n) * (c / n)).sum();
    (1.0 - sq, n)
}

impl Criterion for Gini<'_> {
    type Stats = [f64; NUM_CLASSES];
    type Leaf = [f64; NUM_CLASSES];

    fn add_row(&self, s: &mut Self::Stats, row: usize) {
        s[self.labels[row].index()] += self.weights.map_or(1.0, |w| w[row]);
    }

    fn add(&self, a: &mut Self::Stats, b: &Self::Stats) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }

    fn sub(&self, a: &Self::Stats, b: &Self::Stats) -> Self::Stats {
        std::array::from_fn(|k| a[k] - b[k])
    }

    fn weight(&self, s: &Self::Stats) -> f64 {
        s.iter().sum()
    }

    fn child_ok(&self, s: &Self::Stats) -> bool {
        self.weight(s) > 0.0
    }

    fn is_pure(&self, s: &Self::Stats) -> bool {
        s.iter().filter(|c| **c > 0.0).count() <= 1
    }

    /// Weighted impurity decrease as a fraction of the root weight.
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> f64 {
        let (gp, n) = gini(parent);
        let (gl, nl) = gini(left);
        let (gr, nr) = gini(right);
        (n * gp - nl * gl - nr * gr) / self.total_weight
    }

    fn leaf(&self, s: &Self::Stats) -> Self::Leaf {
        *s
    }
}

/// Laplace-smoothed leaf distribution `(c_k + 1) / (n + 7)`.
pub fn smoothed(counts: &[f64; NUM_CLASSES]) -> ProbDist {
    let n: f64 = counts.iter().sum();
    ProbDist(counts.map(|c| (c + 1.0) / (n + NUM_CLASSES as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_gain: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 40,
            min_samples_split: 2,
            min_gain: 1e-7,
        }
    }
}

impl TreeConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::Config("tree min_samples_split must be at least 2".into()));
        }
        if !(self.min_gain >= 0.0) {
            return Err(Error::Config("tree min_gain must be >= 0".into()));
        }
        Ok(())
    }

    pub(crate) fn grow_params(&self) -> GrowParams {
        GrowParams {
            max_depth: self.max_depth,
            min_split_weight: self.min_samples_split as f64,
            min_gain: self.min_gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    /// Leaves hold weighted class counts.
    pub tree: Tree<[f64; NUM_CLASSES]>,
    pub dim: usize,
}

impl TreeModel {
    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn predict_proba(&self, x: RowView<'_>) -> ProbDist {
        smoothed(self.tree.leaf(x))
    }
}

pub(crate) fn fit(x: &CsrMatrix, y: &[CoarseLabel], config: &TreeConfig) -> TreeModel {
    let cols = ColumnIndex::new(x);
    let rows: Vec<usize> = (0..y.len()).collect();
    let crit = Gini {
        labels: y,
        weights: None,
        total_weight: y.len() as f64,
    };
    let (tree, _) = grow(x, &cols, &rows, &crit, config.grow_params(), None);
    TreeModel { tree, dim: x.n_cols() }
}
