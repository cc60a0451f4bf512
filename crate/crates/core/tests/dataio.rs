use proptest::prelude::*;

use clustervote::dataio::{
    self, generated_ids, load_labeled_dataset, write_labeled_dataset, DataError, FmatBlock, LabelMap, LabeledSample,
    ManifestEntry, Provenance, SampleId,
};
use clustervote::{ConsensusResult, FeatureMatrix, Method, SampleManifest, SampleStatus};

use SampleStatus::{Rejected, Retained};

fn consensus(per_sample: Vec<SampleStatus>, k: usize) -> ConsensusResult {
    let n = per_sample.len();
    let rejected = per_sample.iter().filter(|s| s.cluster().is_none()).count();
    ConsensusResult {
        reference: Method::KMeans,
        k,
        ids: generated_ids(n),
        per_sample,
        reject_rate: rejected as f64 / n as f64,
        digest: "d".into(),
    }
}

fn labels(pairs: &[(usize, &str)]) -> LabelMap {
    let mut map = LabelMap::new(Provenance::Human);
    for (c, l) in pairs {
        map.entries.insert(*c, (*l).to_owned());
    }
    map
}

#[test]
fn labeled_dataset_counts_and_order() {
    let c = consensus(vec![Retained(0), Rejected, Retained(3), Retained(0), Rejected, Retained(1)], 4);
    let manifest = SampleManifest::bare(&c.ids);
    let map = labels(&[(0, "amanita"), (1, "boletus"), (3, "amanita")]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out/labeled.json");
    assert_eq!(write_labeled_dataset(&manifest, &c, &map, &path).unwrap(), 4);
    let back = load_labeled_dataset(&path).unwrap();
    let want: Vec<LabeledSample> = [(0, "amanita"), (2, "amanita"), (3, "amanita"), (5, "boletus")]
        .iter()
        .map(|&(i, l)| LabeledSample { id: c.ids[i].clone(), label: l.into() })
        .collect();
    assert_eq!(back.labeled, want);
    assert_eq!(back.rejected, vec![c.ids[1].clone(), c.ids[4].clone()]);
    let first = std::fs::read(&path).unwrap();
    write_labeled_dataset(&manifest, &c, &map, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn labeled_dataset_needs_every_nonempty_cluster() {
    let c = consensus(vec![Retained(0), Retained(3), Rejected], 4);
    let map = labels(&[(0, "a")]);
    let dir = tempfile::tempdir().unwrap();
    let err = write_labeled_dataset(&SampleManifest::bare(&c.ids), &c, &map, dir.path().join("x.json")).unwrap_err();
    assert!(matches!(err, DataError::MissingLabel(3)), "{err}");
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn labeled_dataset_json_shape() {
    let c = consensus(vec![Retained(0), Rejected], 1);
    let dataset = dataio::LabeledDataset::build(&SampleManifest::bare(&c.ids), &c, &labels(&[(0, "x")])).unwrap();
    let v = serde_json::to_value(&dataset).unwrap();
    assert_eq!(v, serde_json::json!({"labeled": [{"id": "s00000", "label": "x"}], "rejected": ["s00001"]}));
}

#[test]
fn consensus_json_shape() {
    let c = consensus(vec![Retained(2), Rejected], 3);
    let v = serde_json::to_value(&c).unwrap();
    assert_eq!(v["reference"], "KMEANS");
    assert_eq!(v["reject_rate"], 0.5);
    assert_eq!(v["per_sample"][0], serde_json::json!({"id": "s00000", "status": "retained", "cluster": 2}));
    assert_eq!(v["per_sample"][1], serde_json::json!({"id": "s00001", "status": "rejected", "cluster": null}));
}

#[test]
fn manifest_round_trip_and_mismatch() {
    let ids = generated_ids(3);
    let manifest = SampleManifest {
        entries: ids
            .iter()
            .map(|id| ManifestEntry {
                id: id.clone(),
                source_path: format!("raw/{id}.jpg"),
                thumbnail_path: Some(format!("thumbs/{id}.png")),
                true_label: None,
            })
            .collect(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    dataio::write_json(&path, &manifest).unwrap();
    assert_eq!(dataio::load_manifest(&path).unwrap(), manifest);
    assert!(manifest.check_ids(&generated_ids(2)).is_err());
    assert!(manifest.true_labels().is_none());
}

#[test]
fn missing_file_is_an_io_error_naming_the_path() {
    let err = dataio::load_feature_matrix("/nonexistent/x.fmat").unwrap_err();
    assert!(matches!(err, DataError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/x.fmat"));
}

#[test]
fn ids_with_newlines_are_refused() {
    assert!(SampleId::new("a\nb").is_err());
    assert!(SampleId::new("").is_err());
    assert!(SampleId::new("fungi/IMG_0001.jpg").is_ok());
}

fn matrices() -> impl Strategy<Value = FeatureMatrix> {
    (2usize..12, 1usize..9).prop_flat_map(|(n, d)| {
        prop::collection::vec(-1e6f32..1e6, n * d).prop_map(move |data| {
            let ids = (0..n).map(|i| SampleId::new(format!("img/{i:03}.jpg")).unwrap()).collect();
            FeatureMatrix::new(n, d, data, ids).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn fmat_round_trips_byte_identically(x in matrices()) {
        let bytes = x.to_bytes();
        let back = FeatureMatrix::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &x);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn every_truncation_is_reported(x in matrices(), cut in 0usize..1000) {
        let bytes = x.to_bytes();
        let cut = cut % bytes.len();
        let err = FmatBlock::decode(&bytes[..cut]).unwrap_err();
        prop_assert!(matches!(err, DataError::TruncatedFile { .. }), "{}", err);
    }

    #[test]
    fn non_finite_value_offset_is_exact(x in matrices(), pick in 0usize..1000) {
        let mut bytes = x.to_bytes();
        let idx = pick % (x.rows() * x.cols());
        let offset = 24 + 4 * idx;
        bytes[offset..offset + 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
        match FeatureMatrix::from_bytes(&bytes).unwrap_err() {
            DataError::NonFiniteValue { offset: o, row, col } => {
                prop_assert_eq!(o as usize, offset);
                prop_assert_eq!((row, col), (idx / x.cols(), idx % x.cols()));
            }
            other => prop_assert!(false, "unexpected {}", other),
        }
    }

    #[test]
    fn label_map_round_trips(entries in prop::collection::btree_map(0usize..50, "[a-z]{1,8}( [a-z]{1,8})?", 0..10)) {
        let map = LabelMap { provenance: Provenance::MajorityOracle, entries };
        let bytes = dataio::to_json_bytes(&map);
        let back: LabelMap = serde_json::from_slice(&bytes).unwrap();
        prop_assert_eq!(&back, &map);
        prop_assert_eq!(dataio::to_json_bytes(&back), bytes);
    }
}
