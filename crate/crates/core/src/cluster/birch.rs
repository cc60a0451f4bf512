//! BIRCH: a clustering-feature tree condenses the points into leaf
//! subclusters, then weighted Ward agglomeration groups the leaf centroids
//! into `k` clusters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agglomerative::{cut, linkage_merges, Linkage};
use super::{canonical_labels, sq_dist, to_f64, ClusterError, Clustering, Method};
use crate::dataio::FeatureMatrix;

pub const DEFAULT_BRANCHING: usize = 50;
const THRESHOLD_FLOOR: f64 = 1e-6;
const THRESHOLD_PAIRS: usize = 100;

/// Clustering feature `(N, LS, SS)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cf {
    pub n: u64,
    pub ls: Vec<f64>,
    pub ss: f64,
}

impl Cf {
    pub fn from_point(p: &[f64]) -> Self {
        Cf { n: 1, ls: p.to_vec(), ss: p.iter().map(|v| v * v).sum() }
    }

    pub fn empty(dim: usize) -> Self {
        Cf { n: 0, ls: vec![0.0; dim], ss: 0.0 }
    }

    pub fn add(&mut self, other: &Cf) {
        self.n += other.n;
        self.ls.iter_mut().zip(&other.ls).for_each(|(a, b)| *a += b);
        self.ss += other.ss;
    }

    pub fn merged(&self, other: &Cf) -> Cf {
        let mut out = self.clone();
        out.add(other);
        out
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.ls.iter().map(|v| v / n).collect()
    }

    /// Root-mean-square distance of the members to their centroid.
    pub fn radius(&self) -> f64 {
        let n = self.n as f64;
        let c2: f64 = self.ls.iter().map(|v| (v / n) * (v / n)).sum();
        (self.ss / n - c2).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub cf: Cf,
    /// Child node for interior entries.
    pub child: Option<usize>,
    /// Point indices absorbed by a leaf entry.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub leaf: bool,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone)]
pub struct CfTree {
    pub nodes: Vec<Node>,
    pub root: usize,
    pub threshold: f64,
    pub branching: usize,
    dim: usize,
}

impl CfTree {
    pub fn build(data: &[f64], dim: usize, threshold: f64, branching: usize) -> Result<Self, ClusterError> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(ClusterError::BadThreshold(threshold));
        }
        if branching < 2 {
            return Err(ClusterError::BadBranching(branching));
        }
        let mut tree =
            CfTree { nodes: vec![Node { leaf: true, entries: Vec::new() }], root: 0, threshold, branching, dim };
        for (i, p) in data.chunks_exact(dim).enumerate() {
            tree.insert(i, p);
        }
        Ok(tree)
    }

    fn insert(&mut self, index: usize, point: &[f64]) {
        let cf = Cf::from_point(point);
        if let Some((left, right)) = self.insert_into(self.root, index, &cf) {
            self.nodes.push(Node { leaf: false, entries: vec![left, right] });
            self.root = self.nodes.len() - 1;
        }
    }

    /// Inserts into the subtree at `node`; returns the two replacement
    /// entries if the node had to split.
    fn insert_into(&mut self, node: usize, index: usize, cf: &Cf) -> Option<(Entry, Entry)> {
        let closest = self.closest_entry(node, &cf.ls);
        if self.nodes[node].leaf {
            let absorbed = closest.is_some_and(|e| {
                let entry = &mut self.nodes[node].entries[e];
                let merged = entry.cf.merged(cf);
                if merged.radius() <= self.threshold {
                    entry.cf = merged;
                    entry.members.push(index);
                    true
                } else {
                    false
                }
            });
            if !absorbed {
                self.nodes[node].entries.push(Entry { cf: cf.clone(), child: None, members: vec![index] });
            }
        } else {
            let e = closest.expect("interior nodes are never empty");
            let child = self.nodes[node].entries[e].child.expect("interior entry has a child");
            match self.insert_into(child, index, cf) {
                Some((left, right)) => {
                    self.nodes[node].entries.splice(e..=e, [left, right]);
                }
                None => self.nodes[node].entries[e].cf.add(cf),
            }
        }
        if self.nodes[node].entries.len() > self.branching {
            Some(self.split(node))
        } else {
            None
        }
    }

    fn closest_entry(&self, node: usize, point_ls: &[f64]) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, e) in self.nodes[node].entries.iter().enumerate() {
            let d = sq_dist(&e.cf.centroid(), point_ls);
            if best.is_none_or(|b| d < b.0) {
                best = Some((d, i));
            }
        }
        best.map(|b| b.1)
    }

    /// Splits `node` around its farthest pair of entry centroids. The node
    /// keeps the first half; a new node takes the second.
    fn split(&mut self, node: usize) -> (Entry, Entry) {
        let entries = std::mem::take(&mut self.nodes[node].entries);
        let leaf = self.nodes[node].leaf;
        let centroids: Vec<Vec<f64>> = entries.iter().map(|e| e.cf.centroid()).collect();
        let mut seeds = (0, 1, f64::NEG_INFINITY);
        for i in 0..centroids.len() {
            for j in i + 1..centroids.len() {
                let d = sq_dist(&centroids[i], &centroids[j]);
                if d > seeds.2 {
                    seeds = (i, j, d);
                }
            }
        }
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for (i, entry) in entries.into_iter().enumerate() {
            let to_first = if i == seeds.0 {
                true
            } else if i == seeds.1 {
                false
            } else {
                sq_dist(&centroids[i], &centroids[seeds.0]) <= sq_dist(&centroids[i], &centroids[seeds.1])
            };
            if to_first {
                first.push(entry);
            } else {
                second.push(entry);
            }
        }
        let summary = |entries: &[Entry], id: usize| {
            let mut cf = Cf::empty(self.dim);
            entries.iter().for_each(|e| cf.add(&e.cf));
            Entry { cf, child: Some(id), members: Vec::new() }
        };
        let left = summary(&first, node);
        let new_id = self.nodes.len();
        let right = summary(&second, new_id);
        self.nodes[node].entries = first;
        self.nodes.push(Node { leaf, entries: second });
        (left, right)
    }

    /// Leaf entries in depth-first order.
    pub fn leaf_entries(&self) -> Vec<&Entry> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.leaf {
                out.extend(node.entries.iter());
            } else {
                stack.extend(node.entries.iter().rev().filter_map(|e| e.child));
            }
        }
        out
    }
}

pub fn birch(x: &FeatureMatrix, k: usize, threshold: f64, branching: usize) -> Result<Clustering, ClusterError> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let dim = x.cols();
    let tree = CfTree::build(&to_f64(x), dim, threshold, branching)?;
    let leaves = tree.leaf_entries();
    if k > leaves.len() {
        return Err(ClusterError::KTooLargeForLeaves { k, leaves: leaves.len() });
    }
    let centroids: Vec<f64> = leaves.iter().flat_map(|e| e.cf.centroid()).collect();
    let weights: Vec<f64> = leaves.iter().map(|e| e.cf.n as f64).collect();
    let merges = linkage_merges(&centroids, dim, &weights, Linkage::Ward, k);
    let group = cut(leaves.len(), &merges);
    let mut raw = vec![usize::MAX; n];
    for (entry, &g) in leaves.iter().zip(&group) {
        for &i in &entry.members {
            raw[i] = g;
        }
    }
    let (assignment, found) = canonical_labels(&raw);
    debug_assert_eq!(found, k);
    Ok(Clustering { method: Method::Birch, k, seed: 0, assignment, inertia: None })
}

/// Half the mean Euclidean distance over 100 seeded random pairs of
/// distinct rows, floored at 1e-6.
pub fn auto_threshold(x: &FeatureMatrix, seed: u64) -> f64 {
    let n = x.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..THRESHOLD_PAIRS {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let d2: f64 = x
            .row(i)
            .iter()
            .zip(x.row(j))
            .map(|(a, b)| {
                let d = f64::from(*a) - f64::from(*b);
                d * d
            })
            .sum();
        total += d2.sqrt();
    }
    (0.5 * total / THRESHOLD_PAIRS as f64).max(THRESHOLD_FLOOR)
}
