use rayon::prelude::*;

use super::UmapError;
use crate::dataio::FeatureMatrix;

/// Exact k-nearest-neighbour lists, `k` entries per point, self excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub n: usize,
    pub k: usize,
    /// Row-major `n × k` neighbour indices.
    pub indices: Vec<usize>,
    /// Euclidean distances matching `indices`, ascending per row.
    pub distances: Vec<f64>,
}

impl KnnGraph {
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

/// Brute-force kNN; equal distances are ordered by neighbour index.
pub fn knn_graph(x: &FeatureMatrix, k: usize) -> Result<KnnGraph, UmapError> {
    let n = x.rows();
    if k < 2 || k >= n {
        return Err(UmapError::KTooLarge { k, n });
    }
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = x.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = p
                        .iter()
                        .zip(x.row(j))
                        .map(|(a, b)| {
                            let d = f64::from(*a) - f64::from(*b);
                            d * d
                        })
                        .sum();
                    (d2, j)
                })
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
            cand.sort_by(cmp);
            cand.into_iter().map(|(d2, j)| (j, d2.sqrt())).unzip()
        })
        .collect();
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for (idx, dist) in rows {
        indices.extend(idx);
        distances.extend(dist);
    }
    Ok(KnnGraph { n, k, indices, distances })
}
