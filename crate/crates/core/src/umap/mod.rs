//! UMAP from scratch: exact kNN, `(rho, sigma)` calibration, fuzzy union and
//! a seeded single-threaded SGD layout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, FeatureMatrix};

pub mod calibrate;
pub mod curve;
pub mod graph;
pub mod knn;
pub mod layout;

pub use calibrate::{calibrate, Calibration};
pub use curve::fit_ab;
pub use graph::{fuzzy_union, membership_graph, MembershipGraph};
pub use knn::{knn_graph, KnnGraph};
pub use layout::{optimize_layout, LayoutParams};

#[derive(Debug, Error, PartialEq)]
pub enum UmapError {
    #[error("n_neighbors = {k} is out of range for {n} samples (need 2 <= k < n)")]
    KTooLarge { k: usize, n: usize },
    #[error("output dimension must be at least 1")]
    ZeroDims,
}

/// An `n × d′` embedding plus the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedEmbedding {
    pub matrix: FeatureMatrix,
    pub seed: u64,
}

impl ReducedEmbedding {
    pub fn new(matrix: FeatureMatrix, seed: u64) -> Self {
        ReducedEmbedding { matrix, seed }
    }

    /// Wraps `n × dim` row-major coordinates, rounding to `f32`.
    pub fn from_coords(source: &FeatureMatrix, dim: usize, coords: &[f64], seed: u64) -> Result<Self, DataError> {
        let data = coords.iter().map(|&v| v as f32).collect();
        let matrix = FeatureMatrix::new(source.rows(), dim, data, source.ids().to_vec())?;
        Ok(ReducedEmbedding { matrix, seed })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapParams {
    pub k: usize,
    pub d_out: usize,
    pub epochs: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub negative_sample_rate: usize,
}

impl Default for UmapParams {
    fn default() -> Self {
        UmapParams { k: 15, d_out: 200, epochs: 200, min_dist: 0.1, spread: 1.0, negative_sample_rate: 5 }
    }
}

impl UmapParams {
    pub fn layout(&self) -> LayoutParams {
        LayoutParams {
            d_out: self.d_out,
            epochs: self.epochs,
            min_dist: self.min_dist,
            spread: self.spread,
            negative_sample_rate: self.negative_sample_rate,
            ..LayoutParams::default()
        }
    }
}

/// Full UMAP: graph construction then layout. Returns the graph too so
/// callers can inspect or dump it.
pub fn umap_with_graph(
    x: &FeatureMatrix,
    params: &UmapParams,
    seed: u64,
) -> Result<(ReducedEmbedding, MembershipGraph), UmapError> {
    if params.d_out == 0 {
        return Err(UmapError::ZeroDims);
    }
    let knn = knn_graph(x, params.k)?;
    let graph = membership_graph(&knn);
    let coords = optimize_layout(&graph, &params.layout(), seed);
    let embedding = ReducedEmbedding::from_coords(x, params.d_out, &coords, seed)
        .expect("layout coordinates are finite and shaped like the input");
    Ok((embedding, graph))
}

pub fn umap(x: &FeatureMatrix, params: &UmapParams, seed: u64) -> Result<ReducedEmbedding, UmapError> {
    umap_with_graph(x, params, seed).map(|(e, _)| e)
}
