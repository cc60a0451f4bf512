use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clustervote::annotate::sweep_clusters;
use clustervote::dataio::{generated_ids, ManifestEntry};
use clustervote::evaluation::{evaluate, majority_label_map, make_blobs, BlobSpec};
use clustervote::pipeline::PipelineConfig;
use clustervote::{ConsensusResult, Method, SampleManifest, SampleStatus};

fn consensus(per_sample: Vec<SampleStatus>, k: usize) -> ConsensusResult {
    let n = per_sample.len();
    let rejected = per_sample.iter().filter(|s| s.cluster().is_none()).count();
    ConsensusResult {
        reference: Method::KMeans,
        k,
        ids: generated_ids(n),
        per_sample,
        reject_rate: rejected as f64 / n as f64,
        digest: String::new(),
    }
}

fn truth(labels: &[&str]) -> SampleManifest {
    SampleManifest {
        entries: generated_ids(labels.len())
            .into_iter()
            .zip(labels)
            .map(|(id, l)| ManifestEntry {
                source_path: format!("img/{id}.png"),
                id,
                thumbnail_path: None,
                true_label: Some((*l).to_owned()),
            })
            .collect(),
    }
}

fn random_case(seed: u64, n: usize, k: usize) -> (ConsensusResult, SampleManifest) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["ant", "bee", "cat", "dog"];
    let statuses =
        (0..n)
            .map(|_| {
                if rng.random_bool(0.2) {
                    SampleStatus::Rejected
                } else {
                    SampleStatus::Retained(rng.random_range(0..k))
                }
            })
            .collect();
    let labels: Vec<&str> = (0..n).map(|_| names[rng.random_range(0..4)]).collect();
    (consensus(statuses, k), truth(&labels))
}

#[test]
fn majority_matches_histogram_oracle() {
    for seed in 0..20 {
        let (c, t) = random_case(seed, 50, 6);
        let map = majority_label_map(&c, &t).unwrap();
        for cluster in 0..6 {
            let mut hist: BTreeMap<String, usize> = BTreeMap::new();
            for (i, s) in c.per_sample.iter().enumerate() {
                if s.cluster() == Some(cluster) {
                    *hist.entry(t.entries[i].true_label.clone().unwrap()).or_default() += 1;
                }
            }
            let top = hist.values().copied().max();
            let expected = hist.iter().find(|(_, &v)| Some(v) == top).map(|(l, _)| l.as_str());
            assert_eq!(map.get(cluster), expected, "seed {seed} cluster {cluster}");
        }
    }
}

#[test]
fn perfect_consensus_scores_one_hundred() {
    let labels = ["a", "a", "b", "b", "c"];
    let c = consensus(vec![0, 0, 1, 1, 2].into_iter().map(SampleStatus::Retained).collect(), 3);
    let t = truth(&labels);
    let r = evaluate(&c, &majority_label_map(&c, &t).unwrap(), &t).unwrap();
    assert_eq!(r.overall_accuracy, 100.0);
    assert!(r.per_class_precision.values().all(|&p| p == 100.0));
    assert_eq!(r.reject_rate, 0.0);
}

#[test]
fn imbalanced_and_balanced_specs_both_evaluate() {
    for counts in [vec![80, 80, 80, 80], vec![150, 60, 30, 10]] {
        let spec = BlobSpec { n_per_class: counts.clone(), dim: 6, seed: 3, ..BlobSpec::default() };
        let (x, t) = make_blobs(&spec).unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.umap.d_out = 3;
        cfg.umap.epochs = 50;
        let rows = sweep_clusters(&x, Some(&t), &[4, 8], &cfg, 0).unwrap();
        assert_eq!(rows.len(), 2);
        for row in rows {
            let acc = row.accuracy.unwrap();
            assert!((0.0..=100.0).contains(&acc) && (0.0..=100.0).contains(&row.reject_rate));
        }
    }
}

#[test]
fn matched_k_on_clean_blobs_is_perfect() {
    let spec =
        BlobSpec { n_per_class: vec![40; 4], dim: 8, center_box: 20.0, sigma: 0.5, seed: 5, ..BlobSpec::default() };
    let (x, t) = make_blobs(&spec).unwrap();
    let rows = sweep_clusters(&x, Some(&t), &[4], &PipelineConfig::default(), 0).unwrap();
    assert_eq!(rows[0].accuracy, Some(100.0));
    assert!(rows[0].reject_rate < 10.0);
    assert_eq!(rows[0].manifests, 4);
}

proptest! {
    #[test]
    fn report_invariants(seed in 0u64..10_000, n in 5usize..80, k in 1usize..8) {
        let (c, t) = random_case(seed, n, k);
        prop_assume!(c.retained_count() > 0);
        let map = majority_label_map(&c, &t).unwrap();
        let r = evaluate(&c, &map, &t).unwrap();
        let diag: u64 = (0..r.labels.len()).map(|i| r.confusion[i][i]).sum();
        let grand: u64 = r.confusion.iter().flatten().sum();
        prop_assert_eq!(grand as usize, r.retained_count);
        prop_assert_eq!(r.overall_accuracy, 100.0 * diag as f64 / r.retained_count as f64);
        prop_assert_eq!(r.reject_rate, 100.0 * (r.total_count - r.retained_count) as f64 / r.total_count as f64);
        for (i, label) in r.labels.iter().enumerate() {
            let retained_true = c.per_sample.iter().enumerate()
                .filter(|(j, s)| s.cluster().is_some() && t.entries[*j].true_label.as_deref() == Some(label.as_str()))
                .count() as u64;
            prop_assert_eq!(r.confusion[i].iter().sum::<u64>(), retained_true);
        }
        prop_assert!(r.per_class_precision.values().all(|p| (0.0..=100.0).contains(p)));
    }

    #[test]
    fn relabeling_clusters_leaves_report_unchanged(seed in 0u64..10_000, k in 2usize..8) {
        let (c, t) = random_case(seed, 60, k);
        prop_assume!(c.retained_count() > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let mut perm: Vec<usize> = (0..k).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let moved = consensus(
            c.per_sample.iter().map(|s| match s {
                SampleStatus::Retained(x) => SampleStatus::Retained(perm[*x]),
                SampleStatus::Rejected => SampleStatus::Rejected,
            }).collect(),
            k,
        );
        let a = evaluate(&c, &majority_label_map(&c, &t).unwrap(), &t).unwrap();
        let b = evaluate(&moved, &majority_label_map(&moved, &t).unwrap(), &t).unwrap();
        prop_assert_eq!(a, b);
    }
}
