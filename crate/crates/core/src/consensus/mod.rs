//! Cross-method label alignment and the unanimity vote.
//!
//! Every non-reference clustering is relabeled into the reference's index
//! space through an alignment of their contingency table; a sample is kept
//! only if all aligned labels agree, otherwise it is rejected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cluster::{Clustering, Method};
use crate::dataio::SampleId;

pub mod hungarian;

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("clusterings cover {expected} and {found} samples")]
    LengthMismatch { expected: usize, found: usize },
    #[error("clusterings have k = {expected} and k = {found}")]
    MismatchedK { expected: usize, found: usize },
    #[error("alignment needs a square table, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("vote needs at least two clusterings, got {0}")]
    TooFewClusterings(usize),
    #[error("reference index {index} out of range for {count} clusterings")]
    BadReference { index: usize, count: usize },
    #[error("cluster index {index} out of range for k = {k}")]
    IndexOutOfRange { index: usize, k: usize },
}

/// `k_ref × k_other` co-occurrence counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<u64>,
}

impl ContingencyTable {
    pub fn get(&self, a: usize, b: usize) -> u64 {
        self.counts[a * self.cols + b]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.cols.max(1)).map(|r| r.iter().sum()).collect()
    }

    /// `Σ_b table[map(b)][b]`.
    pub fn matched_mass(&self, map: &AlignmentMap) -> u64 {
        map.0.iter().enumerate().map(|(b, &a)| self.get(a, b)).sum()
    }
}

pub fn contingency(reference: &Clustering, other: &Clustering) -> Result<ContingencyTable, ConsensusError> {
    if reference.len() != other.len() {
        return Err(ConsensusError::LengthMismatch { expected: reference.len(), found: other.len() });
    }
    let (rows, cols) = (reference.k, other.k);
    let mut counts = vec![0u64; rows * cols];
    for (&a, &b) in reference.assignment.iter().zip(&other.assignment) {
        if a >= rows {
            return Err(ConsensusError::IndexOutOfRange { index: a, k: rows });
        }
        if b >= cols {
            return Err(ConsensusError::IndexOutOfRange { index: b, k: cols });
        }
        counts[a * cols + b] += 1;
    }
    Ok(ContingencyTable { rows, cols, counts })
}

/// Bijection from the other clustering's indices to the reference's:
/// `map[b] = a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentMap(pub Vec<usize>);

impl AlignmentMap {
    pub fn apply(&self, b: usize) -> usize {
        self.0[b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Alignment {
    /// Maximum matched mass (Hungarian), lexicographically smallest on ties.
    #[default]
    #[serde(rename = "OPTIMAL")]
    Optimal,
    /// Repeatedly match the largest remaining cell.
    #[serde(rename = "GREEDY")]
    Greedy,
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alignment::Optimal => "optimal",
            Alignment::Greedy => "greedy",
        })
    }
}

impl FromStr for Alignment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "optimal" => Ok(Alignment::Optimal),
            "greedy" => Ok(Alignment::Greedy),
            other => Err(format!("unknown alignment {other:?}")),
        }
    }
}

fn check_square(table: &ContingencyTable) -> Result<usize, ConsensusError> {
    if table.rows != table.cols {
        return Err(ConsensusError::NonSquare { rows: table.rows, cols: table.cols });
    }
    Ok(table.rows)
}

pub fn align(table: &ContingencyTable) -> Result<AlignmentMap, ConsensusError> {
    let k = check_square(table)?;
    // matching rows are the other clustering's clusters
    let weights: Vec<i64> = (0..k).flat_map(|b| (0..k).map(move |a| table.get(a, b) as i64)).collect();
    let (map, _) = hungarian::lexicographic_max_matching(&weights, k);
    Ok(AlignmentMap(map))
}

pub fn align_greedy(table: &ContingencyTable) -> Result<AlignmentMap, ConsensusError> {
    let k = check_square(table)?;
    let mut cells: Vec<(u64, usize, usize)> =
        (0..k).flat_map(|a| (0..k).map(move |b| (table.get(a, b), a, b))).collect();
    cells.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut map = vec![usize::MAX; k];
    let mut ref_used = vec![false; k];
    for (_, a, b) in cells {
        if map[b] == usize::MAX && !ref_used[a] {
            map[b] = a;
            ref_used[a] = true;
        }
    }
    Ok(AlignmentMap(map))
}

pub fn align_with(table: &ContingencyTable, alignment: Alignment) -> Result<AlignmentMap, ConsensusError> {
    match alignment {
        Alignment::Optimal => align(table),
        Alignment::Greedy => align_greedy(table),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStatus {
    /// Kept, with its cluster in the reference index space.
    Retained(usize),
    Rejected,
}

impl SampleStatus {
    pub fn cluster(self) -> Option<usize> {
        match self {
            SampleStatus::Retained(c) => Some(c),
            SampleStatus::Rejected => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusResult {
    pub reference: Method,
    pub k: usize,
    pub ids: Vec<SampleId>,
    pub per_sample: Vec<SampleStatus>,
    pub reject_rate: f64,
    /// SHA-256 over the source clusterings' configuration and vote settings.
    pub digest: String,
}

impl ConsensusResult {
    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }

    pub fn retained_count(&self) -> usize {
        self.per_sample.iter().filter(|s| s.cluster().is_some()).count()
    }

    pub fn rejected_count(&self) -> usize {
        self.len() - self.retained_count()
    }

    /// Cluster indices with at least one retained member, ascending.
    pub fn nonempty_clusters(&self) -> Vec<usize> {
        let mut seen = vec![false; self.k];
        for c in self.per_sample.iter().filter_map(|s| s.cluster()) {
            seen[c] = true;
        }
        (0..self.k).filter(|&c| seen[c]).collect()
    }

    /// Members of every cluster, by sample index.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, s) in self.per_sample.iter().enumerate() {
            if let SampleStatus::Retained(c) = s {
                out[*c].push(i);
            }
        }
        out
    }

    /// Treats a single clustering as a consensus where every sample is kept.
    pub fn from_single(clustering: &Clustering, ids: &[SampleId]) -> Self {
        let per_sample = clustering.assignment.iter().map(|&c| SampleStatus::Retained(c)).collect();
        ConsensusResult {
            reference: clustering.method,
            k: clustering.k,
            ids: ids.to_vec(),
            per_sample,
            reject_rate: 0.0,
            digest: digest(std::slice::from_ref(clustering), 0, Alignment::Optimal),
        }
    }
}

/// Digest of the run configuration behind a vote: each source clustering's
/// method, k and seed, plus the reference and alignment. Cluster indices are
/// not hashed, so relabeling a source leaves it unchanged.
fn digest(clusterings: &[Clustering], reference: usize, alignment: Alignment) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("reference={reference};alignment={alignment};"));
    for c in clusterings {
        hasher.update(format!("{}:{}:{}:{};", c.method, c.k, c.seed, c.len()));
    }
    hex::encode(hasher.finalize())
}

/// Aligns every clustering to `clusterings[reference]` and keeps the samples
/// on which all aligned labels agree.
pub fn vote(
    clusterings: &[Clustering],
    reference: usize,
    alignment: Alignment,
    ids: &[SampleId],
) -> Result<ConsensusResult, ConsensusError> {
    if clusterings.len() < 2 {
        return Err(ConsensusError::TooFewClusterings(clusterings.len()));
    }
    if reference >= clusterings.len() {
        return Err(ConsensusError::BadReference { index: reference, count: clusterings.len() });
    }
    let base = &clusterings[reference];
    let n = base.len();
    if ids.len() != n {
        return Err(ConsensusError::LengthMismatch { expected: n, found: ids.len() });
    }
    for c in clusterings {
        if c.len() != n {
            return Err(ConsensusError::LengthMismatch { expected: n, found: c.len() });
        }
        if c.k != base.k {
            return Err(ConsensusError::MismatchedK { expected: base.k, found: c.k });
        }
    }
    let aligned = aligned_labels(clusterings, reference, alignment)?;
    let per_sample: Vec<SampleStatus> = (0..n)
        .map(|i| {
            let a = base.assignment[i];
            if aligned.iter().all(|labels| labels[i] == a) {
                SampleStatus::Retained(a)
            } else {
                SampleStatus::Rejected
            }
        })
        .collect();
    let rejected = per_sample.iter().filter(|s| **s == SampleStatus::Rejected).count();
    Ok(ConsensusResult {
        reference: base.method,
        k: base.k,
        ids: ids.to_vec(),
        per_sample,
        reject_rate: rejected as f64 / n as f64,
        digest: digest(clusterings, reference, alignment),
    })
}

/// Every clustering's labels mapped into the reference index space (the
/// reference itself is returned unchanged).
pub fn aligned_labels(
    clusterings: &[Clustering],
    reference: usize,
    alignment: Alignment,
) -> Result<Vec<Vec<usize>>, ConsensusError> {
    let base = &clusterings[reference];
    clusterings
        .iter()
        .enumerate()
        .map(|(m, c)| {
            if m == reference {
                return Ok(c.assignment.clone());
            }
            let map = align_with(&contingency(base, c)?, alignment)?;
            Ok(c.assignment.iter().map(|&b| map.apply(b)).collect())
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct WireSample {
    id: SampleId,
    status: WireStatus,
    cluster: Option<usize>,
}

#[derive(Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum WireStatus {
    Retained,
    Rejected,
}

#[derive(Serialize, Deserialize)]
struct WireConsensus {
    reference: Method,
    k: usize,
    digest: String,
    reject_rate: f64,
    per_sample: Vec<WireSample>,
}

impl Serialize for ConsensusResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let per_sample = self
            .ids
            .iter()
            .zip(&self.per_sample)
            .map(|(id, s)| WireSample {
                id: id.clone(),
                status: if s.cluster().is_some() { WireStatus::Retained } else { WireStatus::Rejected },
                cluster: s.cluster(),
            })
            .collect();
        WireConsensus {
            reference: self.reference,
            k: self.k,
            digest: self.digest.clone(),
            reject_rate: self.reject_rate,
            per_sample,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ConsensusResult {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wire = WireConsensus::deserialize(deserializer)?;
        let mut ids = Vec::with_capacity(wire.per_sample.len());
        let mut per_sample = Vec::with_capacity(wire.per_sample.len());
        for s in wire.per_sample {
            let status = match (s.status, s.cluster) {
                (WireStatus::Retained, Some(c)) if c < wire.k => SampleStatus::Retained(c),
                (WireStatus::Retained, Some(c)) => {
                    return Err(D::Error::custom(format!("cluster {c} out of range for k = {}", wire.k)))
                }
                (WireStatus::Retained, None) => {
                    return Err(D::Error::custom(format!("retained sample {} has no cluster", s.id)))
                }
                (WireStatus::Rejected, _) => SampleStatus::Rejected,
            };
            ids.push(s.id);
            per_sample.push(status);
        }
        let rejected = per_sample.iter().filter(|s| **s == SampleStatus::Rejected).count();
        let expected = if per_sample.is_empty() { 0.0 } else { rejected as f64 / per_sample.len() as f64 };
        if expected != wire.reject_rate {
            return Err(D::Error::custom(format!(
                "reject_rate {} does not match {rejected} rejected of {}",
                wire.reject_rate,
                per_sample.len()
            )));
        }
        Ok(ConsensusResult {
            reference: wire.reference,
            k: wire.k,
            ids,
            per_sample,
            reject_rate: wire.reject_rate,
            digest: wire.digest,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{self, generated_ids};

    fn clustering(method: Method, k: usize, assignment: Vec<usize>) -> Clustering {
        Clustering { method, k, seed: 0, assignment, inertia: None }
    }

    #[test]
    fn contingency_basics() {
        let a = clustering(Method::KMeans, 3, vec![0, 1, 2, 1]);
        let t = contingency(&a, &a).unwrap();
        assert_eq!(t.counts, vec![1, 0, 0, 0, 2, 0, 0, 0, 1]);
        let z = clustering(Method::KMeans, 1, vec![0; 5]);
        assert_eq!(contingency(&z, &z).unwrap().counts, vec![5]);
        let short = clustering(Method::Birch, 1, vec![0; 4]);
        assert_eq!(contingency(&z, &short).unwrap_err(), ConsensusError::LengthMismatch { expected: 5, found: 4 });
    }

    #[test]
    fn align_identity_and_swap() {
        let id = ContingencyTable { rows: 2, cols: 2, counts: vec![3, 0, 0, 4] };
        assert_eq!(align(&id).unwrap(), AlignmentMap(vec![0, 1]));
        let swap = ContingencyTable { rows: 2, cols: 2, counts: vec![0, 5, 5, 0] };
        assert_eq!(align(&swap).unwrap(), AlignmentMap(vec![1, 0]));
        assert_eq!(align_greedy(&swap).unwrap(), AlignmentMap(vec![1, 0]));
        let rect = ContingencyTable { rows: 2, cols: 3, counts: vec![0; 6] };
        assert_eq!(align(&rect).unwrap_err(), ConsensusError::NonSquare { rows: 2, cols: 3 });
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        // greedy takes the 10, leaving 0 + 0; optimal takes 9 + 9
        let t = ContingencyTable { rows: 2, cols: 2, counts: vec![10, 9, 9, 0] };
        assert_eq!(t.matched_mass(&align_greedy(&t).unwrap()), 10);
        assert_eq!(t.matched_mass(&align(&t).unwrap()), 18);
    }

    #[test]
    fn unanimity_and_single_dissent() {
        let ids = generated_ids(6);
        let base = vec![0, 0, 1, 1, 2, 2];
        let a = clustering(Method::KMeans, 3, base.clone());
        let b = clustering(Method::Agglomerative, 3, base.clone());
        let c = clustering(Method::Birch, 3, base.clone());
        let r = vote(&[a.clone(), b.clone(), c], 0, Alignment::Optimal, &ids).unwrap();
        assert_eq!(r.reject_rate, 0.0);
        assert!(r.per_sample.iter().zip(&base).all(|(s, &x)| *s == SampleStatus::Retained(x)));

        let mut flipped = base.clone();
        flipped[3] = 2;
        let c = clustering(Method::Birch, 3, flipped);
        let r = vote(&[a, b, c], 0, Alignment::Optimal, &ids).unwrap();
        assert_eq!(r.rejected_count(), 1);
        assert_eq!(r.per_sample[3], SampleStatus::Rejected);
        assert_eq!(r.reject_rate, 1.0 / 6.0);
    }

    #[test]
    fn vote_errors() {
        let ids = generated_ids(3);
        let a = clustering(Method::KMeans, 2, vec![0, 1, 0]);
        let b = clustering(Method::Birch, 3, vec![0, 1, 2]);
        assert_eq!(
            vote(&[a.clone(), b], 0, Alignment::Optimal, &ids).unwrap_err(),
            ConsensusError::MismatchedK { expected: 2, found: 3 }
        );
        let short = clustering(Method::Birch, 2, vec![0, 1]);
        assert!(matches!(
            vote(&[a.clone(), short], 0, Alignment::Optimal, &ids),
            Err(ConsensusError::LengthMismatch { .. })
        ));
        assert_eq!(
            vote(std::slice::from_ref(&a), 0, Alignment::Optimal, &ids).unwrap_err(),
            ConsensusError::TooFewClusterings(1)
        );
    }

    #[test]
    fn json_shape_and_round_trip() {
        let ids = generated_ids(3);
        let a = clustering(Method::KMeans, 2, vec![0, 1, 1]);
        let b = clustering(Method::Birch, 2, vec![1, 0, 1]);
        let r = vote(&[a, b], 0, Alignment::Optimal, &ids).unwrap();
        let bytes = dataio::to_json_bytes(&r);
        let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(value["reference"], "KMEANS");
        assert_eq!(value["per_sample"][2]["status"], "rejected");
        assert!(value["per_sample"][2]["cluster"].is_null());
        let back: ConsensusResult = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, r);
        assert_eq!(dataio::to_json_bytes(&back), bytes);
    }
}
