//! k-means++ seeding followed by Lloyd iterations, best of `n_init` restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sq_dist, to_f64, ClusterError, Clustering, Method};
use crate::dataio::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub n_init: usize,
    pub max_iter: usize,
    /// Lloyd stops once no center moves farther than this (Euclidean).
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams { n_init: 10, max_iter: 300, tol: 1e-4 }
    }
}

/// Result of a single seeded restart.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub centers: Vec<f64>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step, in order.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

pub fn kmeans(x: &FeatureMatrix, k: usize, seed: u64, params: &KMeansParams) -> Result<Clustering, ClusterError> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let data = to_f64(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansRun> = None;
    for _ in 0..params.n_init.max(1) {
        let run = lloyd(&data, x.cols(), k, &mut rng, params);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(Clustering { method: Method::KMeans, k, seed, assignment: best.assignment, inertia: Some(best.inertia) })
}

/// One k-means++ seeded Lloyd run on row-major `data` of width `dim`.
pub fn lloyd(data: &[f64], dim: usize, k: usize, rng: &mut impl Rng, params: &KMeansParams) -> KMeansRun {
    let n = data.len() / dim;
    let mut centers = plus_plus(data, dim, k, rng);
    let mut assignment = vec![0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut inertia = assign(data, dim, &centers, &mut assignment);
        if repair_empty(data, dim, &mut centers, &assignment, k) {
            inertia = assign(data, dim, &centers, &mut assignment);
        }
        trace.push(inertia);
        if iterations >= params.max_iter {
            return KMeansRun { centers, assignment, inertia, inertia_trace: trace, iterations };
        }
        iterations += 1;
        let updated = update_centers(data, dim, k, &assignment, &centers);
        let max_shift = (0..k)
            .map(|c| sq_dist(&centers[c * dim..(c + 1) * dim], &updated[c * dim..(c + 1) * dim]))
            .fold(0.0_f64, f64::max)
            .sqrt();
        centers = updated;
        if max_shift < params.tol {
            let inertia = assign(data, dim, &centers, &mut assignment);
            trace.push(inertia);
            return KMeansRun { centers, assignment, inertia, inertia_trace: trace, iterations };
        }
    }
}

fn plus_plus(data: &[f64], dim: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = data.len() / dim;
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(&data[i * dim..(i + 1) * dim], &centers[..dim])).collect();
    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centers.len();
        centers.extend_from_slice(&data[pick * dim..(pick + 1) * dim]);
        for (i, c) in closest.iter_mut().enumerate() {
            let d = sq_dist(&data[i * dim..(i + 1) * dim], &centers[start..start + dim]);
            if d < *c {
                *c = d;
            }
        }
    }
    centers
}

/// Nearest-center assignment (ties to the lower center index); returns inertia.
fn assign(data: &[f64], dim: usize, centers: &[f64], assignment: &mut [usize]) -> f64 {
    let k = centers.len() / dim;
    let mut inertia = 0.0;
    for (i, slot) in assignment.iter_mut().enumerate() {
        let point = &data[i * dim..(i + 1) * dim];
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let d = sq_dist(point, &centers[c * dim..(c + 1) * dim]);
            if d < best.0 {
                best = (d, c);
            }
        }
        *slot = best.1;
        inertia += best.0;
    }
    inertia
}

/// Moves each empty cluster's center onto the point farthest from its own
/// center. Returns whether anything moved.
fn repair_empty(data: &[f64], dim: usize, centers: &mut [f64], assignment: &[usize], k: usize) -> bool {
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    if sizes.iter().all(|&s| s > 0) {
        return false;
    }
    let mut dists: Vec<(f64, usize)> = assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| (sq_dist(&data[i * dim..(i + 1) * dim], &centers[c * dim..(c + 1) * dim]), i))
        .collect();
    // farthest first, lower index on ties
    dists.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut donors = dists.into_iter().map(|(_, i)| i);
    for c in (0..k).filter(|&c| sizes[c] == 0) {
        if let Some(i) = donors.next() {
            centers[c * dim..(c + 1) * dim].copy_from_slice(&data[i * dim..(i + 1) * dim]);
        }
    }
    true
}

fn update_centers(data: &[f64], dim: usize, k: usize, assignment: &[usize], old: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(&data[i * dim..(i + 1) * dim]) {
            *s += v;
        }
    }
    for c in 0..k {
        let slot = &mut sums[c * dim..(c + 1) * dim];
        if counts[c] == 0 {
            slot.copy_from_slice(&old[c * dim..(c + 1) * dim]);
        } else {
            slot.iter_mut().for_each(|s| *s /= counts[c] as f64);
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::generated_ids;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, generated_ids(rows.len())).unwrap()
    }

    #[test]
    fn k1_is_the_mean() {
        let rows = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 3.0], vec![2.0, 1.0]];
        let x = matrix(&rows);
        let c = kmeans(&x, 1, 7, &KMeansParams::default()).unwrap();
        assert!(c.assignment.iter().all(|&a| a == 0));
        // mean (2, 1): squared deviations 5 + 1 + 8 + 0
        assert!((c.inertia.unwrap() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn two_points_two_clusters() {
        let x = matrix(&[vec![0.0, 1.0], vec![5.0, -1.0]]);
        let c = kmeans(&x, 2, 1, &KMeansParams::default()).unwrap();
        assert_ne!(c.assignment[0], c.assignment[1]);
        assert_eq!(c.inertia, Some(0.0));
    }

    #[test]
    fn k_out_of_range() {
        let x = matrix(&[vec![0.0], vec![1.0]]);
        assert_eq!(kmeans(&x, 3, 0, &KMeansParams::default()).unwrap_err(), ClusterError::KTooLarge { k: 3, n: 2 });
        assert!(kmeans(&x, 0, 0, &KMeansParams::default()).is_err());
    }

    #[test]
    fn duplicates_keep_k_live_clusters() {
        let x = matrix(&[vec![1.0], vec![1.0], vec![1.0], vec![2.0]]);
        let c = kmeans(&x, 3, 3, &KMeansParams::default()).unwrap();
        assert!(c.assignment.iter().all(|&a| a < 3));
        assert_eq!(c.inertia, Some(0.0));
    }

    #[test]
    fn deterministic_for_seed() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64]).collect();
        let x = matrix(&rows);
        let a = kmeans(&x, 4, 99, &KMeansParams::default()).unwrap();
        let b = kmeans(&x, 4, 99, &KMeansParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
