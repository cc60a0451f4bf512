//! The three clusterers voted over by [`crate::consensus`]: k-means,
//! agglomerative (Ward by default) and BIRCH. All of them work on Euclidean
//! distances in the reduced embedding and are deterministic given their seed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::FeatureMatrix;

pub mod agglomerative;
pub mod birch;
pub mod kmeans;

pub use agglomerative::{agglomerative, linkage_merges, Linkage, Merge};
pub use birch::{auto_threshold, birch, Cf, CfTree};
pub use kmeans::{kmeans, KMeansParams};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} is out of range for {n} samples")]
    KTooLarge { k: usize, n: usize },
    #[error("k = {k} exceeds the {leaves} leaf entries of the CF tree")]
    KTooLargeForLeaves { k: usize, leaves: usize },
    #[error("BIRCH threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("branching factor must be at least 2, got {0}")]
    BadBranching(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "KMEANS")]
    KMeans,
    #[serde(rename = "AGG")]
    Agglomerative,
    #[serde(rename = "BIRCH")]
    Birch,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::KMeans, Method::Agglomerative, Method::Birch];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::KMeans => "KMEANS",
            Method::Agglomerative => "AGG",
            Method::Birch => "BIRCH",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "KMEANS" | "K-MEANS" => Ok(Method::KMeans),
            "AGG" | "AGGLOMERATIVE" => Ok(Method::Agglomerative),
            "BIRCH" => Ok(Method::Birch),
            other => Err(format!("unknown clustering method {other:?}")),
        }
    }
}

/// One method's hard assignment of every sample to a cluster in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
}

impl Clustering {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Row-major `f64` copy of a matrix, the working precision of every clusterer.
pub(crate) fn to_f64(x: &FeatureMatrix) -> Vec<f64> {
    x.data().iter().map(|&v| f64::from(v)).collect()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Renumbers labels in order of first appearance so equal partitions get
/// equal assignment vectors.
pub(crate) fn canonical_labels(raw: &[usize]) -> (Vec<usize>, usize) {
    let mut remap = std::collections::HashMap::new();
    let labels = raw
        .iter()
        .map(|r| {
            let next = remap.len();
            *remap.entry(*r).or_insert(next)
        })
        .collect();
    (labels, remap.len())
}
