//! Fuzzy membership graph: directed kNN memberships combined by fuzzy union.

use rayon::prelude::*;
use serde::Serialize;

use super::calibrate::{calibrate, membership, Calibration};
use super::knn::KnnGraph;

/// Symmetric weighted neighbour graph. `neighbors[i]` is sorted by index
/// and holds every `j` with a nonzero union weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipGraph {
    pub n: usize,
    pub k: usize,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    pub clamped: Vec<bool>,
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

impl MembershipGraph {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.neighbors[i].binary_search_by_key(&j, |&(idx, _)| idx).map_or(0.0, |pos| self.neighbors[i][pos].1)
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |(j, _)| *j > i).map(move |&(j, w)| (i, j, w)))
            .collect()
    }

    /// JSON edge-list dump for debugging.
    pub fn to_json_edges(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Edge {
            source: usize,
            target: usize,
            weight: f64,
        }
        let edges: Vec<Edge> =
            self.edges().into_iter().map(|(source, target, weight)| Edge { source, target, weight }).collect();
        serde_json::json!({ "n": self.n, "k": self.k, "edges": edges })
    }
}

/// Directed memberships `w(i → j)` for every kNN edge; zero weights are dropped.
pub fn directed_memberships(knn: &KnnGraph) -> (Vec<Calibration>, Vec<Vec<(usize, f64)>>) {
    (0..knn.n)
        .into_par_iter()
        .map(|i| {
            let dists = knn.distances(i);
            let cal = calibrate(dists, knn.k);
            let row = knn
                .neighbors(i)
                .iter()
                .zip(dists)
                .map(|(&j, &d)| (j, membership(d, cal.rho, cal.sigma)))
                .filter(|&(_, w)| w > 0.0)
                .collect();
            (cal, row)
        })
        .unzip()
}

/// `w(i, j) = a + b − a·b` with `a = w(i → j)`, `b = w(j → i)` (0 if absent).
pub fn fuzzy_union(directed: &[Vec<(usize, f64)>]) -> Vec<Vec<(usize, f64)>> {
    let n = directed.len();
    let mut lookup: Vec<Vec<(usize, f64)>> = directed
        .iter()
        .map(|row| {
            let mut row: Vec<(usize, f64)> = row.iter().copied().filter(|&(j, _)| j < n).collect();
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect();
    for (i, row) in lookup.iter_mut().enumerate() {
        row.retain(|&(j, _)| j != i);
    }
    let get = |rows: &[Vec<(usize, f64)>], i: usize, j: usize| {
        rows[i].binary_search_by_key(&j, |&(idx, _)| idx).map_or(0.0, |p| rows[i][p].1)
    };
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, _) in &lookup[i] {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            // each unordered pair is computed once, from the lower endpoint
            // or from whichever side holds the only directed edge
            if i == hi && get(&lookup, lo, hi) > 0.0 {
                continue;
            }
            let a = get(&lookup, lo, hi);
            let b = get(&lookup, hi, lo);
            let w = a + b - a * b;
            if w > 0.0 {
                out[lo].push((hi, w));
                out[hi].push((lo, w));
            }
        }
    }
    for row in &mut out {
        row.sort_by_key(|&(j, _)| j);
    }
    out
}

pub fn membership_graph(knn: &KnnGraph) -> MembershipGraph {
    let (cals, directed) = directed_memberships(knn);
    MembershipGraph {
        n: knn.n,
        k: knn.k,
        rho: cals.iter().map(|c| c.rho).collect(),
        sigma: cals.iter().map(|c| c.sigma).collect(),
        clamped: cals.iter().map(|c| c.clamped).collect(),
        neighbors: fuzzy_union(&directed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn union_weight(a: f64, b: f64) -> f64 {
        let mut directed = vec![Vec::new(), Vec::new()];
        if a > 0.0 {
            directed[0].push((1, a));
        }
        if b > 0.0 {
            directed[1].push((0, b));
        }
        let g = fuzzy_union(&directed);
        assert_eq!(g[0].first().map(|e| e.1), g[1].first().map(|e| e.1));
        g[0].first().map_or(0.0, |e| e.1)
    }

    #[test]
    fn union_formula() {
        assert_eq!(union_weight(1.0, 0.0), 1.0);
        assert_eq!(union_weight(0.0, 1.0), 1.0);
        assert_eq!(union_weight(0.5, 0.5), 0.75);
        assert_eq!(union_weight(0.0, 0.0), 0.0);
    }

    #[test]
    fn self_edges_dropped() {
        let g = fuzzy_union(&[vec![(0, 1.0), (1, 0.5)], vec![]]);
        assert_eq!(g[0], vec![(1, 0.5)]);
        assert_eq!(g[1], vec![(0, 0.5)]);
    }
}
