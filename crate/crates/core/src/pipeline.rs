//! Pipeline configuration and the stage functions shared by the CLI, the
//! comparison/sweep studies and the acceptance suite.

use std::path::PathBuf;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{self, ClusterError, Clustering, KMeansParams, Linkage, Method};
use crate::consensus::{self, Alignment, ConsensusError, ConsensusResult};
use crate::dataio::{DataError, FeatureMatrix, LabelMap, SampleId, SampleManifest};
use crate::evaluation::{self, EvalError, EvaluationReport};
use crate::pca::{self, PcaError, PcaModel};
use crate::umap::{self, MembershipGraph, ReducedEmbedding, UmapError, UmapParams};

/// Halvings tried when an automatic BIRCH threshold yields too few leaves.
const BIRCH_RETRIES: usize = 40;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataio: {0}")]
    Data(#[from] DataError),
    #[error("pca: {0}")]
    Pca(#[from] PcaError),
    #[error("umap: {0}")]
    Umap(#[from] UmapError),
    #[error("cluster ({method}): {source}")]
    Cluster { method: Method, source: ClusterError },
    #[error("vote: {0}")]
    Consensus(#[from] ConsensusError),
    #[error("evaluate: {0}")]
    Evaluation(#[from] EvalError),
}

impl PipelineError {
    /// Name of the stage that failed.
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Data(_) => "dataio",
            PipelineError::Pca(_) => "pca",
            PipelineError::Umap(_) => "umap",
            PipelineError::Cluster { .. } => "cluster",
            PipelineError::Consensus(_) => "vote",
            PipelineError::Evaluation(_) => "evaluate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    pub features: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcaConfig {
    pub enabled: bool,
    pub min_dims: usize,
    /// Upper end of the elbow search; defaults to `min(n - 1, d) - 1`.
    pub max_dims: Option<usize>,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig { enabled: false, min_dims: pca::DEFAULT_MIN_DIMS, max_dims: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k_over: usize,
    pub methods: Vec<Method>,
    pub birch_threshold: Option<f64>,
    pub birch_branching: usize,
    pub linkage: Linkage,
    pub kmeans: KMeansParams,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k_over: 20,
            methods: Method::ALL.to_vec(),
            birch_threshold: None,
            birch_branching: cluster::birch::DEFAULT_BRANCHING,
            linkage: Linkage::Ward,
            kmeans: KMeansParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoteConfig {
    pub reference: Method,
    pub alignment: Alignment,
}

impl Default for VoteConfig {
    fn default() -> Self {
        VoteConfig { reference: Method::KMeans, alignment: Alignment::Optimal }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub pca: PcaConfig,
    pub umap: UmapParams,
    pub cluster: ClusterConfig,
    pub vote: VoteConfig,
    pub seed: u64,
    pub trials: usize,
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: InputConfig::default(),
            pca: PcaConfig::default(),
            umap: UmapParams::default(),
            cluster: ClusterConfig::default(),
            vote: VoteConfig::default(),
            seed: 0,
            trials: 1,
            output: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        let methods = &self.cluster.methods;
        if methods.len() < 2 {
            return bad(format!("need at least two clustering methods, got {}", methods.len()));
        }
        for (i, m) in methods.iter().enumerate() {
            if methods[..i].contains(m) {
                return bad(format!("method {m} listed twice"));
            }
        }
        if !methods.contains(&self.vote.reference) {
            return bad(format!("reference method {} is not among the configured methods", self.vote.reference));
        }
        if self.cluster.k_over < 1 {
            return bad("k_over must be at least 1".into());
        }
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        if let Some(t) = self.cluster.birch_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("birch_threshold must be positive, got {t}"));
            }
        }
        if self.umap.d_out == 0 || self.umap.epochs == 0 {
            return bad("umap d_out and epochs must be at least 1".into());
        }
        Ok(())
    }

    /// Checks `k_over` against the number of distinct true classes.
    pub fn check_k_over(&self, truth: &SampleManifest) -> Result<(), PipelineError> {
        if let Some(labels) = truth.true_labels() {
            let classes = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
            if self.cluster.k_over < classes {
                return Err(PipelineError::Config(format!(
                    "k_over = {} is below the {classes} true classes",
                    self.cluster.k_over
                )));
            }
        }
        Ok(())
    }

    fn reference_index(&self) -> usize {
        self.cluster.methods.iter().position(|m| *m == self.vote.reference).unwrap_or(0)
    }
}

pub struct Reduction {
    pub embedding: ReducedEmbedding,
    /// Fitted PCA model and the elbow-selected dimension, when PCA ran.
    pub pca: Option<(PcaModel, usize)>,
    pub graph: MembershipGraph,
}

/// Optional PCA (dimension picked by the elbow rule) followed by UMAP.
pub fn reduce(x: &FeatureMatrix, config: &PipelineConfig, seed: u64) -> Result<Reduction, PipelineError> {
    let (input, pca_fit) = if config.pca.enabled {
        let full = (x.rows() - 1).min(x.cols());
        let model = pca::pca_fit(x, full)?;
        let max = config.pca.max_dims.unwrap_or(full.saturating_sub(1)).min(full.saturating_sub(1));
        let min = config.pca.min_dims.min(max).max(1);
        let m = pca::elbow_select(&model.eigenvalues, min, max)?;
        info!("pca: elbow selected {m} of {full} components");
        let reduced = pca::pca_transform(&model, x, m)?;
        (reduced.matrix, Some((model, m)))
    } else {
        (x.clone(), None)
    };
    let (embedding, graph) = umap::umap_with_graph(&input, &config.umap, seed)?;
    debug!("umap: {} x {} -> {} x {}", input.rows(), input.cols(), embedding.rows(), embedding.cols());
    Ok(Reduction { embedding, pca: pca_fit, graph })
}

/// Runs one clusterer. BIRCH without a configured threshold starts from
/// [`cluster::auto_threshold`] and halves it until the tree has at least
/// `k` leaf entries.
pub fn run_method(
    x: &FeatureMatrix,
    method: Method,
    k: usize,
    config: &PipelineConfig,
    seed: u64,
) -> Result<Clustering, PipelineError> {
    let wrap = |source| PipelineError::Cluster { method, source };
    let mut result = match method {
        Method::KMeans => cluster::kmeans(x, k, seed, &config.cluster.kmeans).map_err(wrap)?,
        Method::Agglomerative => cluster::agglomerative(x, k, config.cluster.linkage).map_err(wrap)?,
        Method::Birch => {
            let branching = config.cluster.birch_branching;
            match config.cluster.birch_threshold {
                Some(t) => cluster::birch(x, k, t, branching).map_err(wrap)?,
                None => {
                    let mut threshold = cluster::auto_threshold(x, seed);
                    let mut attempt = 0;
                    loop {
                        match cluster::birch(x, k, threshold, branching) {
                            Err(ClusterError::KTooLargeForLeaves { leaves, .. }) if attempt < BIRCH_RETRIES => {
                                debug!("birch: threshold {threshold:.4} gave {leaves} leaves, halving");
                                threshold *= 0.5;
                                attempt += 1;
                            }
                            other => break other.map_err(wrap)?,
                        }
                    }
                }
            }
        }
    };
    result.seed = seed;
    Ok(result)
}

pub fn cluster_all(
    x: &FeatureMatrix,
    config: &PipelineConfig,
    k: usize,
    seed: u64,
) -> Result<Vec<Clustering>, PipelineError> {
    config.cluster.methods.iter().map(|&m| run_method(x, m, k, config, seed)).collect()
}

pub fn vote_all(
    clusterings: &[Clustering],
    config: &PipelineConfig,
    ids: &[SampleId],
) -> Result<ConsensusResult, PipelineError> {
    Ok(consensus::vote(clusterings, config.reference_index(), config.vote.alignment, ids)?)
}

pub struct RunOutcome {
    pub reduction: Reduction,
    pub clusterings: Vec<Clustering>,
    pub consensus: ConsensusResult,
    /// Majority-oracle labels and report, when true labels are available.
    pub oracle: Option<(LabelMap, EvaluationReport)>,
}

/// reduce → cluster → vote (→ oracle evaluation when `truth` has labels).
pub fn run_once(
    x: &FeatureMatrix,
    truth: Option<&SampleManifest>,
    config: &PipelineConfig,
    seed: u64,
) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    let reduction = reduce(x, config, seed)?;
    let clusterings = cluster_all(&reduction.embedding.matrix, config, config.cluster.k_over, seed)?;
    let consensus = vote_all(&clusterings, config, x.ids())?;
    info!(
        "vote: retained {}/{} (reject {:.1}%)",
        consensus.retained_count(),
        consensus.len(),
        100.0 * consensus.reject_rate
    );
    let oracle = match truth.filter(|t| t.true_labels().is_some()) {
        Some(t) => {
            let map = evaluation::majority_label_map(&consensus, t)?;
            let report = evaluation::evaluate(&consensus, &map, t)?;
            Some((map, report))
        }
        None => None,
    };
    Ok(RunOutcome { reduction, clusterings, consensus, oracle })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSweepRow {
    pub d_out: usize,
    pub accuracy: Option<f64>,
    pub reject_rate: f64,
}

/// Repeats the whole pipeline for each UMAP output dimension.
pub fn sweep_dims(
    x: &FeatureMatrix,
    truth: Option<&SampleManifest>,
    dims: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<Vec<DimSweepRow>, PipelineError> {
    dims.iter()
        .map(|&d_out| {
            let mut cfg = config.clone();
            cfg.umap.d_out = d_out;
            let out = run_once(x, truth, &cfg, seed)?;
            Ok(DimSweepRow {
                d_out,
                accuracy: out.oracle.as_ref().map(|(_, r)| r.overall_accuracy),
                reject_rate: 100.0 * out.consensus.reject_rate,
            })
        })
        .collect()
}
