//! Bottom-up agglomerative clustering with Lance–Williams distance updates.
//!
//! Clusters live in slots `0..n`; merging slots `a < b` stores the result in
//! `a` and retires `b`. At each step the pair with the smallest linkage cost
//! is merged, ties going to the lexicographically smallest `(a, b)`.
//! Each row caches its nearest active neighbour, so a step costs O(n) plus a
//! row rescan for every row whose cached neighbour was touched by the merge.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{canonical_labels, sq_dist, to_f64, ClusterError, Clustering, Method};
use crate::dataio::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Linkage {
    /// Increase in within-cluster sum of squares caused by the merge.
    #[default]
    #[serde(rename = "WARD")]
    Ward,
    #[serde(rename = "AVERAGE")]
    Average,
    #[serde(rename = "COMPLETE")]
    Complete,
    #[serde(rename = "SINGLE")]
    Single,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Ward => "WARD",
            Linkage::Average => "AVERAGE",
            Linkage::Complete => "COMPLETE",
            Linkage::Single => "SINGLE",
        })
    }
}

impl FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "WARD" => Ok(Linkage::Ward),
            "AVERAGE" => Ok(Linkage::Average),
            "COMPLETE" => Ok(Linkage::Complete),
            "SINGLE" => Ok(Linkage::Single),
            other => Err(format!("unknown linkage {other:?}")),
        }
    }
}

/// One dendrogram step: slot `b` merged into slot `a` (`a < b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    /// Total weight of the merged cluster.
    pub size: f64,
}

/// Condensed upper-triangular storage of pairwise costs.
struct Condensed {
    n: usize,
    values: Vec<f64>,
}

impl Condensed {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.idx(i, j);
        self.values[idx] = v;
    }
}

/// Initial pairwise cost between singleton clusters of weights `wi`, `wj`.
fn initial_cost(linkage: Linkage, d2: f64, wi: f64, wj: f64) -> f64 {
    match linkage {
        Linkage::Ward => wi * wj / (wi + wj) * d2,
        _ => d2.sqrt(),
    }
}

/// Lance–Williams update of `d(k, a ∪ b)`.
fn lance_williams(linkage: Linkage, dka: f64, dkb: f64, dab: f64, nk: f64, na: f64, nb: f64) -> f64 {
    match linkage {
        Linkage::Ward => ((nk + na) * dka + (nk + nb) * dkb - nk * dab) / (nk + na + nb),
        Linkage::Average => (na * dka + nb * dkb) / (na + nb),
        Linkage::Complete => dka.max(dkb),
        Linkage::Single => dka.min(dkb),
    }
}

/// Runs `n - stop_at` merges over the weighted points in `data` (row-major,
/// width `dim`). `weights[i]` is the number of samples point `i` stands for.
pub fn linkage_merges(data: &[f64], dim: usize, weights: &[f64], linkage: Linkage, stop_at: usize) -> Vec<Merge> {
    let n = weights.len();
    if n < 2 || stop_at >= n {
        return Vec::new();
    }
    let mut dist = Condensed { n, values: vec![0.0; n * (n - 1) / 2] };
    for i in 0..n {
        for j in i + 1..n {
            let d2 = sq_dist(&data[i * dim..(i + 1) * dim], &data[j * dim..(j + 1) * dim]);
            dist.set(i, j, initial_cost(linkage, d2, weights[i], weights[j]));
        }
    }
    let mut size = weights.to_vec();
    let mut active = vec![true; n];
    let rescan = |i: usize, dist: &Condensed, active: &[bool]| {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in (0..n).filter(|&j| j != i && active[j]) {
            let d = dist.get(i, j);
            if d < best.0 {
                best = (d, j);
            }
        }
        best
    };
    let mut nearest: Vec<(f64, usize)> = (0..n).map(|i| rescan(i, &dist, &active)).collect();

    let mut merges = Vec::with_capacity(n - stop_at);
    let mut remaining = n;
    while remaining > stop_at {
        // global minimum over rows of (cost, smaller slot, larger slot)
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            let (d, j) = nearest[i];
            if j == usize::MAX {
                continue;
            }
            let cand = (d, i.min(j), i.max(j));
            let better = match pick {
                None => true,
                Some(p) => cand.0 < p.0 || (cand.0 == p.0 && (cand.1, cand.2) < (p.1, p.2)),
            };
            if better {
                pick = Some(cand);
            }
        }
        let (cost, a, b) = pick.expect("two active clusters remain");
        let (na, nb) = (size[a], size[b]);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let updated = lance_williams(linkage, dist.get(k, a), dist.get(k, b), cost, size[k], na, nb);
            dist.set(k, a, updated);
        }
        active[b] = false;
        size[a] = na + nb;
        merges.push(Merge { a, b, cost, size: size[a] });
        remaining -= 1;

        nearest[b] = (f64::INFINITY, usize::MAX);
        nearest[a] = rescan(a, &dist, &active);
        for k in (0..n).filter(|&k| active[k] && k != a) {
            let (d, j) = nearest[k];
            if j == a || j == b {
                nearest[k] = rescan(k, &dist, &active);
            } else {
                let da = dist.get(k, a);
                if da < d || (da == d && a < j) {
                    nearest[k] = (da, a);
                }
            }
        }
    }
    merges
}

/// Replays `merges` over `n` singletons and returns each point's final slot.
pub fn cut(n: usize, merges: &[Merge]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    for m in merges {
        parent[m.b] = m.a;
    }
    (0..n)
        .map(|mut i| {
            while parent[i] != i {
                i = parent[i];
            }
            i
        })
        .collect()
}

pub fn agglomerative(x: &FeatureMatrix, k: usize, linkage: Linkage) -> Result<Clustering, ClusterError> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let data = to_f64(x);
    let merges = linkage_merges(&data, x.cols(), &vec![1.0; n], linkage, k);
    let (assignment, found) = canonical_labels(&cut(n, &merges));
    debug_assert_eq!(found, k);
    Ok(Clustering { method: Method::Agglomerative, k, seed: 0, assignment, inertia: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::generated_ids;

    fn line(xs: &[f64]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        FeatureMatrix::from_rows(&rows, generated_ids(xs.len())).unwrap()
    }

    #[test]
    fn two_point_ward_cost() {
        let data = [1.0, 2.0, 4.0, 6.0];
        let merges = linkage_merges(&data, 2, &[1.0, 1.0], Linkage::Ward, 1);
        assert_eq!(merges.len(), 1);
        // |x1 - x2|^2 / 2 = (9 + 16) / 2
        assert_eq!(merges[0].cost, 12.5);
    }

    #[test]
    fn line_0_1_10() {
        let c = agglomerative(&line(&[0.0, 1.0, 10.0]), 2, Linkage::Ward).unwrap();
        assert_eq!(c.assignment, vec![0, 0, 1]);
        let merges = linkage_merges(&[0.0, 1.0, 10.0], 1, &[1.0; 3], Linkage::Ward, 1);
        // {0,1} at 1/2; then {0,1} vs {10}: 2·1/3 · (10 - 0.5)^2
        assert_eq!(merges[0].cost, 0.5);
        assert!((merges[1].cost - 2.0 / 3.0 * 90.25).abs() < 1e-12);
    }

    #[test]
    fn exactly_n_minus_k_merges() {
        let xs: Vec<f64> = (0..12).map(|i| ((i * 37) % 11) as f64 * 0.7).collect();
        let merges = linkage_merges(&xs, 1, &[1.0; 12], Linkage::Ward, 4);
        assert_eq!(merges.len(), 8);
        let c = agglomerative(&line(&xs), 4, Linkage::Ward).unwrap();
        assert_eq!(c.sizes().iter().sum::<usize>(), 12);
        assert!(c.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn ties_go_to_smallest_pair() {
        // equally spaced: first merge must be (0,1)
        let merges = linkage_merges(&[0.0, 1.0, 2.0, 3.0], 1, &[1.0; 4], Linkage::Ward, 3);
        assert_eq!((merges[0].a, merges[0].b), (0, 1));
    }

    #[test]
    fn other_linkages_run() {
        let xs = [0.0, 0.5, 5.0, 5.2, 9.0];
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Single] {
            let c = agglomerative(&line(&xs), 3, linkage).unwrap();
            assert_eq!(c.assignment, vec![0, 0, 1, 1, 2], "{linkage}");
        }
    }

    #[test]
    fn k_too_large() {
        assert_eq!(
            agglomerative(&line(&[0.0, 1.0]), 3, Linkage::Ward).unwrap_err(),
            ClusterError::KTooLarge { k: 3, n: 2 }
        );
    }
}
