//! Benchmark-mode scoring: majority-label oracle, per-class precision,
//! overall accuracy over retained samples, reject rate and confusion matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ConsensusResult, SampleStatus};
use crate::dataio::{DataError, FeatureMatrix, LabelMap, Provenance, SampleManifest};
use crate::pipeline::{self, PipelineConfig, PipelineError};

pub mod blobs;

pub use blobs::{make_blobs, noisy_benchmark, standard_benchmark, BlobSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no retained samples to label")]
    NoRetainedSamples,
    #[error("no true label for sample {0}")]
    MissingTruth(String),
    #[error("no label for cluster {0}")]
    MissingLabel(usize),
    #[error("invalid blob spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn truth_labels<'a>(consensus: &ConsensusResult, truth: &'a SampleManifest) -> Result<Vec<&'a str>, EvalError> {
    truth.check_ids(&consensus.ids)?;
    Ok(truth.entries.iter().map(|e| e.true_label.as_deref().unwrap_or("")).collect())
}

/// Names each consensus cluster after the most frequent true label among its
/// retained members (lexicographically smallest label on ties).
pub fn majority_label_map(consensus: &ConsensusResult, truth: &SampleManifest) -> Result<LabelMap, EvalError> {
    let labels = truth_labels(consensus, truth)?;
    let mut histograms: BTreeMap<usize, BTreeMap<&str, usize>> = BTreeMap::new();
    for (i, status) in consensus.per_sample.iter().enumerate() {
        if let SampleStatus::Retained(c) = status {
            if truth.entries[i].true_label.is_none() {
                return Err(EvalError::MissingTruth(consensus.ids[i].to_string()));
            }
            *histograms.entry(*c).or_default().entry(labels[i]).or_default() += 1;
        }
    }
    if histograms.is_empty() {
        return Err(EvalError::NoRetainedSamples);
    }
    let mut map = LabelMap::new(Provenance::MajorityOracle);
    for (cluster, hist) in histograms {
        // BTreeMap iterates labels ascending, so `>` keeps the smallest on ties
        let mut best: Option<(&str, usize)> = None;
        for (label, count) in hist {
            if best.is_none_or(|b| count > b.1) {
                best = Some((label, count));
            }
        }
        map.entries.insert(cluster, best.expect("nonempty histogram").0.to_owned());
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Assigned label → percentage of its retained samples whose true label matches.
    pub per_class_precision: BTreeMap<String, f64>,
    pub overall_accuracy: f64,
    pub reject_rate: f64,
    /// Axis of the confusion matrix (rows: true label, columns: assigned label).
    pub labels: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub retained_count: usize,
    pub total_count: usize,
}

pub fn evaluate(
    consensus: &ConsensusResult,
    label_map: &LabelMap,
    truth: &SampleManifest,
) -> Result<EvaluationReport, EvalError> {
    let labels = truth_labels(consensus, truth)?;
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for (i, status) in consensus.per_sample.iter().enumerate() {
        if let SampleStatus::Retained(c) = status {
            let assigned = label_map.get(*c).ok_or(EvalError::MissingLabel(*c))?;
            if truth.entries[i].true_label.is_none() {
                return Err(EvalError::MissingTruth(consensus.ids[i].to_string()));
            }
            pairs.push((labels[i], assigned));
        }
    }
    let axis: Vec<String> =
        pairs.iter().flat_map(|(t, a)| [*t, *a]).collect::<BTreeSet<_>>().into_iter().map(str::to_owned).collect();
    let pos = |l: &str| axis.binary_search_by(|x| x.as_str().cmp(l)).expect("label on axis");
    let mut confusion = vec![vec![0u64; axis.len()]; axis.len()];
    for (t, a) in &pairs {
        confusion[pos(t)][pos(a)] += 1;
    }
    let retained = pairs.len();
    let total = consensus.len();
    let correct: u64 = (0..axis.len()).map(|i| confusion[i][i]).sum();
    let mut per_class_precision = BTreeMap::new();
    for (j, label) in axis.iter().enumerate() {
        let assigned: u64 = confusion.iter().map(|row| row[j]).sum();
        if assigned > 0 {
            per_class_precision.insert(label.clone(), 100.0 * confusion[j][j] as f64 / assigned as f64);
        }
    }
    Ok(EvaluationReport {
        per_class_precision,
        overall_accuracy: if retained == 0 { 0.0 } else { 100.0 * correct as f64 / retained as f64 },
        reject_rate: if total == 0 { 0.0 } else { 100.0 * (total - retained) as f64 / total as f64 },
        labels: axis,
        confusion,
        retained_count: retained,
        total_count: total,
    })
}

impl EvaluationReport {
    /// Fixed-width table: one precision column per label, then overall and reject.
    pub fn render_text(&self) -> String {
        let mut header = String::new();
        let mut values = String::new();
        for (label, p) in &self.per_class_precision {
            let w = label.len().max(7);
            let _ = write!(header, "{label:>w$} ");
            let _ = write!(values, "{p:>w$.1} ");
        }
        let _ = write!(header, "{:>8} {:>8}", "Overall", "Reject%");
        let _ = write!(values, "{:>8.1} {:>8.1}", self.overall_accuracy, self.reject_rate);
        format!("{header}\n{values}\nretained {}/{}\n", self.retained_count, self.total_count)
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\assigned");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            out.push_str(l);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub accuracy: f64,
    pub reject_rate: f64,
}

/// Single clusterers against the vote on the same embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn vote(&self) -> &ComparisonRow {
        self.rows.last().expect("vote row is always present")
    }

    pub fn singles(&self) -> &[ComparisonRow] {
        &self.rows[..self.rows.len() - 1]
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("{:<10} {:>9} {:>8}\n", "Method", "Accuracy", "Reject%");
        for r in &self.rows {
            let _ = writeln!(out, "{:<10} {:>9.1} {:>8.1}", r.name, r.accuracy, r.reject_rate);
        }
        out
    }
}

/// Reduces `x`, then scores each configured clusterer alone (each with its
/// own majority oracle) and the unanimity vote.
pub fn compare_single_vs_vote(
    x: &FeatureMatrix,
    truth: &SampleManifest,
    config: &PipelineConfig,
    seed: u64,
) -> Result<ComparisonTable, PipelineError> {
    let reduction = pipeline::reduce(x, config, seed)?;
    compare_on_embedding(&reduction.embedding.matrix, truth, config, seed)
}

pub fn compare_on_embedding(
    embedding: &FeatureMatrix,
    truth: &SampleManifest,
    config: &PipelineConfig,
    seed: u64,
) -> Result<ComparisonTable, PipelineError> {
    let clusterings = pipeline::cluster_all(embedding, config, config.cluster.k_over, seed)?;
    let ids = embedding.ids();
    let mut rows = Vec::with_capacity(clusterings.len() + 1);
    for c in &clusterings {
        let single = ConsensusResult::from_single(c, ids);
        let report = score(&single, truth)?;
        rows.push(ComparisonRow { name: c.method.to_string(), accuracy: report.overall_accuracy, reject_rate: 0.0 });
    }
    let consensus = pipeline::vote_all(&clusterings, config, ids)?;
    let report = score(&consensus, truth)?;
    rows.push(ComparisonRow {
        name: "VOTE".into(),
        accuracy: report.overall_accuracy,
        reject_rate: report.reject_rate,
    });
    Ok(ComparisonTable { rows })
}

/// Majority oracle followed by [`evaluate`].
pub fn score(consensus: &ConsensusResult, truth: &SampleManifest) -> Result<EvaluationReport, PipelineError> {
    let map = majority_label_map(consensus, truth).map_err(PipelineError::Evaluation)?;
    evaluate(consensus, &map, truth).map_err(PipelineError::Evaluation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Method;
    use crate::dataio::{generated_ids, ManifestEntry};

    fn truth(labels: &[&str]) -> SampleManifest {
        let ids = generated_ids(labels.len());
        SampleManifest {
            entries: ids
                .into_iter()
                .zip(labels)
                .map(|(id, l)| ManifestEntry {
                    source_path: id.to_string(),
                    id,
                    thumbnail_path: None,
                    true_label: Some((*l).to_owned()),
                })
                .collect(),
        }
    }

    fn consensus(statuses: Vec<SampleStatus>, k: usize) -> ConsensusResult {
        let n = statuses.len();
        let rejected = statuses.iter().filter(|s| **s == SampleStatus::Rejected).count();
        ConsensusResult {
            reference: Method::KMeans,
            k,
            ids: generated_ids(n),
            per_sample: statuses,
            reject_rate: rejected as f64 / n as f64,
            digest: String::new(),
        }
    }

    use SampleStatus::{Rejected, Retained};

    #[test]
    fn perfect_consensus() {
        let t = truth(&["A", "A", "B", "B"]);
        let c = consensus(vec![Retained(0), Retained(0), Retained(1), Retained(1)], 2);
        let map = majority_label_map(&c, &t).unwrap();
        let r = evaluate(&c, &map, &t).unwrap();
        assert_eq!(r.overall_accuracy, 100.0);
        assert_eq!(r.reject_rate, 0.0);
        assert!(r.per_class_precision.values().all(|&p| p == 100.0));
    }

    #[test]
    fn majority_and_ties() {
        let t = truth(&["A", "A", "A", "B", "B", "C", "B"]);
        let c = consensus(
            vec![Retained(0), Retained(0), Retained(0), Retained(0), Retained(0), Retained(1), Retained(1)],
            2,
        );
        let map = majority_label_map(&c, &t).unwrap();
        assert_eq!(map.get(0), Some("A"));
        // cluster 1 has one B and one C: lexicographic tie-break
        assert_eq!(map.get(1), Some("B"));
        assert_eq!(map.provenance, Provenance::MajorityOracle);
    }

    #[test]
    fn hand_filled_fixture() {
        // 10 retained: cluster 0 → A holds 4 A; cluster 1 → B holds 5 B and
        // one A. precision(A) = 100, precision(B) = 500/6, overall 90.
        let labels = ["A", "A", "A", "A", "B", "B", "B", "B", "B", "A"];
        let t = truth(&labels);
        let statuses = (0..10).map(|i| Retained(usize::from(i >= 4))).collect();
        let c = consensus(statuses, 2);
        let mut map = LabelMap::new(Provenance::Human);
        map.entries.insert(0, "A".into());
        map.entries.insert(1, "B".into());
        let r = evaluate(&c, &map, &t).unwrap();
        assert_eq!(r.per_class_precision["A"], 100.0);
        assert!((r.per_class_precision["B"] - 500.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.overall_accuracy, 90.0);
        assert_eq!(r.confusion, vec![vec![4, 1], vec![0, 5]]);
    }

    #[test]
    fn reject_rate_percent() {
        let labels = vec!["A"; 20];
        let t = truth(&labels);
        let statuses = (0..20).map(|i| if i % 5 == 0 { Rejected } else { Retained(0) }).collect();
        let c = consensus(statuses, 1);
        let map = majority_label_map(&c, &t).unwrap();
        let r = evaluate(&c, &map, &t).unwrap();
        assert_eq!(r.reject_rate, 20.0);
        assert_eq!(r.retained_count, 16);
    }

    #[test]
    fn errors() {
        let t = truth(&["A", "B"]);
        let c = consensus(vec![Rejected, Rejected], 1);
        assert!(matches!(majority_label_map(&c, &t), Err(EvalError::NoRetainedSamples)));
        let c = consensus(vec![Retained(0), Retained(1)], 2);
        let mut map = LabelMap::new(Provenance::Human);
        map.entries.insert(0, "A".into());
        assert!(matches!(evaluate(&c, &map, &t), Err(EvalError::MissingLabel(1))));
        let mut no_truth = t.clone();
        no_truth.entries[1].true_label = None;
        assert!(matches!(majority_label_map(&c, &no_truth), Err(EvalError::MissingTruth(_))));
    }

    #[test]
    fn text_and_csv_render() {
        let t = truth(&["A", "B"]);
        let c = consensus(vec![Retained(0), Retained(1)], 2);
        let r = evaluate(&c, &majority_label_map(&c, &t).unwrap(), &t).unwrap();
        assert!(r.render_text().contains("Overall"));
        assert_eq!(r.confusion_csv(), "true\\assigned,A,B\nA,1,0\nB,0,1\n");
    }
}
