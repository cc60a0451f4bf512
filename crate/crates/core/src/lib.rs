//! Unsupervised labeling of image feature matrices.
//!
//! The pipeline takes an `n × d` matrix of per-image feature vectors (one row
//! per sample), reduces it with UMAP (optionally after a PCA pass whose
//! dimension is picked by an eigen-ratio elbow), clusters the embedding with
//! three different algorithms, and keeps only the samples on which all
//! clusterers agree once their cluster indices have been aligned. The retained
//! clusters are deliberately more numerous than the real classes, so a person
//! (or, in benchmark mode, a majority-label oracle) can name each cluster and
//! merge them into the final labeled dataset.
//!
//! Modules:
//!
//! * [`dataio`]: FMAT matrices, sample manifests, label maps and exports.
//! * [`pca`]: PCA fit/transform and elbow dimension selection.
//! * [`umap`]: exact kNN graph, fuzzy membership graph and SGD layout.
//! * [`cluster`]: k-means, Ward agglomerative and BIRCH.
//! * [`consensus`]: contingency tables, Hungarian alignment and the vote.
//! * [`evaluation`]: synthetic blobs, majority oracle and scoring.
//! * [`annotate`]: per-cluster review manifests, label board and sweeps.
//! * [`pipeline`]: configuration and end-to-end stage wiring.

pub mod annotate;
pub mod cluster;
pub mod consensus;
pub mod dataio;
pub mod evaluation;
pub mod pca;
pub mod pipeline;
pub mod umap;

pub use cluster::{Clustering, Method};
pub use consensus::{ConsensusResult, SampleStatus};
pub use dataio::{FeatureMatrix, LabelMap, Provenance, SampleId, SampleManifest};
pub use umap::ReducedEmbedding;
