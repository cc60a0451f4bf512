//! Post-hoc labeling support: per-cluster review manifests, the label board
//! edited by the reviewer, label application and the cluster-count sweep.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ConsensusResult, SampleStatus};
use crate::dataio::{self, DataError, FeatureMatrix, LabelMap, Provenance, SampleId, SampleManifest};
use crate::pipeline::{self, PipelineConfig, PipelineError};

pub const MAX_EXEMPLARS: usize = 16;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("cluster {0} has no retained members")]
    UnknownCluster(usize),
    #[error("label must be non-empty")]
    EmptyLabel,
    #[error("no label for cluster {0}")]
    MissingLabel(usize),
    #[error("unlabeled clusters: {0:?}")]
    Unlabeled(Vec<usize>),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: SampleId,
    pub thumbnail_path: Option<String>,
    pub distance: f64,
}

/// Everything a reviewer needs to name one consensus cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterManifest {
    pub cluster_index: usize,
    pub size: usize,
    pub members: Vec<SampleId>,
    /// Up to 16 members nearest to the cluster centroid, nearest first.
    pub exemplars: Vec<Exemplar>,
    pub assigned_label: Option<String>,
}

/// One manifest per nonempty consensus cluster, in cluster order.
pub fn build_manifests(
    consensus: &ConsensusResult,
    embedding: &FeatureMatrix,
    manifest: &SampleManifest,
) -> Result<Vec<ClusterManifest>, AnnotateError> {
    if embedding.ids() != consensus.ids.as_slice() {
        return Err(DataError::IdMismatch("embedding and consensus ids differ".into()).into());
    }
    manifest.check_ids(&consensus.ids)?;
    let dim = embedding.cols();
    let mut out = Vec::new();
    for (cluster, members) in consensus.members().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut centroid = vec![0.0; dim];
        for &i in &members {
            for (c, v) in centroid.iter_mut().zip(embedding.row(i)) {
                *c += f64::from(*v);
            }
        }
        centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
        let mut ranked: Vec<(f64, usize)> = members
            .iter()
            .map(|&i| {
                let d2: f64 = embedding.row(i).iter().zip(&centroid).map(|(v, c)| (f64::from(*v) - c).powi(2)).sum();
                (d2.sqrt(), i)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let exemplars = ranked
            .iter()
            .take(MAX_EXEMPLARS)
            .map(|&(distance, i)| Exemplar {
                id: consensus.ids[i].clone(),
                thumbnail_path: manifest.entries[i].thumbnail_path.clone(),
                distance,
            })
            .collect();
        out.push(ClusterManifest {
            cluster_index: cluster,
            size: members.len(),
            members: members.iter().map(|&i| consensus.ids[i].clone()).collect(),
            exemplars,
            assigned_label: None,
        });
    }
    Ok(out)
}

/// Labels every retained sample through its cluster. Rejected samples are
/// skipped; clusters sharing a label merge.
pub fn apply_label_map(
    consensus: &ConsensusResult,
    labels: &LabelMap,
) -> Result<Vec<(SampleId, String)>, AnnotateError> {
    consensus
        .ids
        .iter()
        .zip(&consensus.per_sample)
        .filter_map(|(id, s)| match s {
            SampleStatus::Retained(c) => {
                Some(labels.get(*c).map(|l| (id.clone(), l.to_owned())).ok_or(AnnotateError::MissingLabel(*c)))
            }
            SampleStatus::Rejected => None,
        })
        .collect()
}

/// Reviewer's labels with a revision counter bumped on every change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBoard {
    clusters: Vec<usize>,
    labels: BTreeMap<usize, String>,
    revision: u64,
}

impl LabelBoard {
    /// A board over the nonempty clusters of `consensus`.
    pub fn new(consensus: &ConsensusResult) -> Self {
        LabelBoard { clusters: consensus.nonempty_clusters(), labels: BTreeMap::new(), revision: 0 }
    }

    /// Seeds the board from an earlier label map (entries for unknown
    /// clusters are ignored).
    pub fn with_labels(consensus: &ConsensusResult, map: &LabelMap) -> Self {
        let mut board = Self::new(consensus);
        for (c, l) in &map.entries {
            if board.clusters.contains(c) && !l.is_empty() {
                board.labels.insert(*c, l.clone());
            }
        }
        board
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn clusters(&self) -> &[usize] {
        &self.clusters
    }

    pub fn label(&self, cluster: usize) -> Option<&str> {
        self.labels.get(&cluster).map(String::as_str)
    }

    fn check(&self, cluster: usize) -> Result<(), AnnotateError> {
        if self.clusters.binary_search(&cluster).is_err() {
            return Err(AnnotateError::UnknownCluster(cluster));
        }
        Ok(())
    }

    pub fn set(&mut self, cluster: usize, label: &str) -> Result<u64, AnnotateError> {
        self.check(cluster)?;
        let label = label.trim();
        if label.is_empty() {
            return Err(AnnotateError::EmptyLabel);
        }
        self.labels.insert(cluster, label.to_owned());
        self.revision += 1;
        Ok(self.revision)
    }

    pub fn clear(&mut self, cluster: usize) -> Result<u64, AnnotateError> {
        self.check(cluster)?;
        self.labels.remove(&cluster);
        self.revision += 1;
        Ok(self.revision)
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.len()
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        self.clusters.iter().copied().filter(|c| !self.labels.contains_key(c)).collect()
    }

    pub fn label_map(&self) -> LabelMap {
        LabelMap { provenance: Provenance::Human, entries: self.labels.clone() }
    }
}

/// Writes the labeled dataset, refusing while any nonempty cluster is
/// unlabeled. Returns the number of labeled samples.
pub fn finalize(
    manifest: &SampleManifest,
    consensus: &ConsensusResult,
    board: &LabelBoard,
    path: &Path,
) -> Result<usize, AnnotateError> {
    let missing = board.unlabeled();
    if !missing.is_empty() {
        return Err(AnnotateError::Unlabeled(missing));
    }
    Ok(dataio::write_labeled_dataset(manifest, consensus, &board.label_map(), path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub clusters: usize,
    pub accuracy: Option<f64>,
    pub reject_rate: f64,
    pub manifests: usize,
}

/// Cluster + vote (+ oracle scoring with truth) at each cluster count on a
/// fixed embedding.
pub fn sweep_clusters(
    embedding: &FeatureMatrix,
    truth: Option<&SampleManifest>,
    counts: &[usize],
    config: &PipelineConfig,
    seed: u64,
) -> Result<Vec<SweepRow>, PipelineError> {
    let truth = truth.filter(|t| t.true_labels().is_some());
    counts
        .iter()
        .map(|&k| {
            if k < 2 {
                return Err(PipelineError::Config(format!("cluster count {k} is below 2")));
            }
            let clusterings = pipeline::cluster_all(embedding, config, k, seed)?;
            let consensus = pipeline::vote_all(&clusterings, config, embedding.ids())?;
            let accuracy = match truth {
                Some(t) => Some(crate::evaluation::score(&consensus, t)?.overall_accuracy),
                None => None,
            };
            Ok(SweepRow {
                clusters: k,
                accuracy,
                reject_rate: 100.0 * consensus.reject_rate,
                manifests: consensus.nonempty_clusters().len(),
            })
        })
        .collect()
}
