//! Negative-sampling SGD layout of a membership graph.
//!
//! Edges are sampled in proportion to their weight: an edge of weight `w`
//! fires every `w_max / w` epochs. Each firing pulls both endpoints
//! together along the fitted `1 / (1 + a·d^(2b))` curve and pushes the head
//! away from `negative_sample_rate` uniformly drawn vertices. Gradient
//! components are clipped to ±4 and the learning rate decays linearly to 0.
//! Everything runs on one thread so a seed fixes the output bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::curve::fit_ab;
use super::graph::MembershipGraph;

pub const CLIP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub d_out: usize,
    pub epochs: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub negative_sample_rate: usize,
    pub repulsion_strength: f64,
    pub learning_rate: f64,
    /// Half-width of the uniform initial layout box.
    pub init_scale: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            d_out: 200,
            epochs: 200,
            min_dist: 0.1,
            spread: 1.0,
            negative_sample_rate: 5,
            repulsion_strength: 1.0,
            learning_rate: 1.0,
            init_scale: 10.0,
        }
    }
}

#[inline]
fn clip(v: f64) -> f64 {
    v.clamp(-CLIP, CLIP)
}

/// Uniform `[-scale, scale]` initial coordinates, row-major `n × d_out`.
pub fn random_init(n: usize, d_out: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n * d_out).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Lays out `graph` in `params.d_out` dimensions. Returns the row-major
/// coordinates.
pub fn optimize_layout(graph: &MembershipGraph, params: &LayoutParams, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = random_init(graph.n, params.d_out, params.init_scale, &mut rng);
    optimize_from(graph, params, init, &mut rng)
}

pub fn optimize_from(
    graph: &MembershipGraph,
    params: &LayoutParams,
    mut embedding: Vec<f64>,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let n = graph.n;
    let dim = params.d_out;
    let epochs = params.epochs.max(1);
    let (a, b) = fit_ab(params.min_dist, params.spread);

    // both directions of every undirected edge
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (i, row) in graph.neighbors.iter().enumerate() {
        edges.extend(row.iter().map(|&(j, w)| (i, j, w)));
    }
    let w_max = edges.iter().map(|e| e.2).fold(0.0_f64, f64::max);
    edges.retain(|e| e.2 >= w_max / epochs as f64);
    if edges.is_empty() {
        return embedding;
    }
    let per_sample: Vec<f64> = edges.iter().map(|e| w_max / e.2).collect();
    let neg_rate = params.negative_sample_rate as f64;
    let per_negative: Vec<f64> = per_sample.iter().map(|p| p / neg_rate.max(f64::MIN_POSITIVE)).collect();
    let mut next_sample = per_sample.clone();
    let mut next_negative = per_negative.clone();

    let mut diff = vec![0.0; dim];
    for epoch in 0..epochs {
        let alpha = params.learning_rate * (1.0 - epoch as f64 / epochs as f64);
        let now = epoch as f64;
        for (e, &(head, tail, _)) in edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let d2 = row_diff(&embedding, head, tail, dim, &mut diff);
            let coeff = if d2 > 0.0 { -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0) } else { 0.0 };
            for (d, delta) in diff.iter().enumerate() {
                let g = clip(coeff * delta) * alpha;
                embedding[head * dim + d] += g;
                embedding[tail * dim + d] -= g;
            }
            next_sample[e] += per_sample[e];

            let negatives = if params.negative_sample_rate == 0 {
                0
            } else {
                ((now - next_negative[e]) / per_negative[e]) as usize
            };
            for _ in 0..negatives {
                let other = rng.random_range(0..n);
                if other == head {
                    continue;
                }
                let d2 = row_diff(&embedding, head, other, dim, &mut diff);
                let coeff = if d2 > 0.0 {
                    2.0 * params.repulsion_strength * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else {
                    0.0
                };
                for (d, delta) in diff.iter().enumerate() {
                    let g = if coeff > 0.0 { clip(coeff * delta) } else { CLIP };
                    embedding[head * dim + d] += g * alpha;
                }
            }
            next_negative[e] += negatives as f64 * per_negative[e];
        }
    }
    embedding
}

#[inline]
fn row_diff(embedding: &[f64], i: usize, j: usize, dim: usize, out: &mut [f64]) -> f64 {
    let mut d2 = 0.0;
    for d in 0..dim {
        let v = embedding[i * dim + d] - embedding[j * dim + d];
        out[d] = v;
        d2 += v * v;
    }
    d2
}
