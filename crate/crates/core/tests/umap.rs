use proptest::prelude::*;

use clustervote::dataio::generated_ids;
use clustervote::evaluation::{make_blobs, BlobSpec};
use clustervote::umap::calibrate::{calibrate, membership_sum};
use clustervote::umap::{
    fit_ab, knn_graph, membership_graph, optimize_layout, umap, LayoutParams, MembershipGraph, UmapParams,
};
use clustervote::FeatureMatrix;

fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows, generated_ids(rows.len())).unwrap()
}

#[test]
fn sigma_for_one_two_three_has_closed_form() {
    // 1 + u + u^2 = log2(3) with u = exp(-1/sigma)
    let c = 3f64.log2() - 1.0;
    let u = (-1.0 + (1.0 + 4.0 * c).sqrt()) / 2.0;
    let expected = -1.0 / u.ln();
    let cal = calibrate(&[1.0, 2.0, 3.0], 3);
    assert_eq!(cal.rho, 1.0);
    assert!(!cal.clamped);
    assert!((cal.sigma - expected).abs() < 1e-8, "{} vs {expected}", cal.sigma);
}

#[test]
fn curve_matches_scipy_curve_fit() {
    // scipy.optimize.curve_fit on the same 300-point grid
    for (min_dist, spread, a, b) in [
        (0.1, 1.0, 1.5769434602697652, 0.8950608778515733),
        (0.5, 1.0, 0.5830300203414425, 1.3341669924314914),
        (0.01, 2.0, 0.6353444078965497, 0.7955528900090268),
    ] {
        let (fa, fb) = fit_ab(min_dist, spread);
        assert!((fa - a).abs() / a < 1e-4, "a {fa} vs {a}");
        assert!((fb - b).abs() / b < 1e-4, "b {fb} vs {b}");
    }
}

#[test]
fn knn_matches_brute_force() {
    let spec = BlobSpec { n_per_class: vec![20, 20], dim: 5, seed: 3, ..BlobSpec::default() };
    let (x, _) = make_blobs(&spec).unwrap();
    let knn = knn_graph(&x, 6).unwrap();
    for i in 0..x.rows() {
        let mut all: Vec<(f64, usize)> = (0..x.rows())
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2)).sum();
                (d.sqrt(), j)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<usize> = all.iter().take(6).map(|p| p.1).collect();
        assert_eq!(knn.neighbors(i), want.as_slice());
        for (d, w) in knn.distances(i).iter().zip(&all) {
            assert!((d - w.0).abs() < 1e-9);
        }
    }
}

#[test]
fn two_connected_points_end_no_farther_apart() {
    // kNN needs k >= 2, so the single-edge graph is built by hand
    let graph = MembershipGraph {
        n: 2,
        k: 1,
        rho: vec![1.0; 2],
        sigma: vec![1.0; 2],
        clamped: vec![false; 2],
        neighbors: vec![vec![(1, 1.0)], vec![(0, 1.0)]],
    };
    let params = LayoutParams { d_out: 2, epochs: 50, ..LayoutParams::default() };
    for seed in 0..10 {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let init = clustervote::umap::layout::random_init(2, 2, params.init_scale, &mut rng);
        let start = ((init[0] - init[2]).powi(2) + (init[1] - init[3]).powi(2)).sqrt();
        let out = optimize_layout(&graph, &params, seed);
        let end = ((out[0] - out[2]).powi(2) + (out[1] - out[3]).powi(2)).sqrt();
        assert!(end <= start.max(2.0 * params.min_dist), "seed {seed}: {start} -> {end}");
    }
}

#[test]
fn two_blobs_stay_apart() {
    let spec = BlobSpec {
        n_per_class: vec![40, 40],
        dim: 10,
        centers: Some(vec![vec![0.0; 10], vec![20.0; 10]]),
        sigma: 1.0,
        seed: 1,
        ..BlobSpec::default()
    };
    let (x, _) = make_blobs(&spec).unwrap();
    let emb = umap(&x, &UmapParams { d_out: 2, ..UmapParams::default() }, 5).unwrap();
    let centroid = |range: std::ops::Range<usize>| {
        let len = range.len() as f64;
        range.fold([0.0, 0.0], |acc, i| {
            let r = emb.matrix.row(i);
            [acc[0] + f64::from(r[0]) / len, acc[1] + f64::from(r[1]) / len]
        })
    };
    let (a, b) = (centroid(0..40), centroid(40..80));
    let between = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let spread = |c: [f64; 2], range: std::ops::Range<usize>| {
        range
            .map(|i| {
                let r = emb.matrix.row(i);
                ((f64::from(r[0]) - c[0]).powi(2) + (f64::from(r[1]) - c[1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    };
    assert!(between > spread(a, 0..40) && between > spread(b, 40..80));
}

#[test]
fn small_n_smoke() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64 * 0.1, 1.0]).collect();
    let emb = umap(&matrix(&rows), &UmapParams { k: 9, d_out: 3, ..UmapParams::default() }, 0).unwrap();
    assert_eq!((emb.rows(), emb.cols()), (10, 3));
    assert!(emb.matrix.data().iter().all(|v| v.is_finite()));
}

#[test]
fn k_too_large_is_an_error() {
    let x = matrix(&[vec![0.0], vec![1.0], vec![2.0]]);
    assert!(knn_graph(&x, 3).is_err());
    assert!(umap(&x, &UmapParams { d_out: 0, k: 1, ..UmapParams::default() }, 0).is_err());
}

#[test]
fn different_seeds_differ() {
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 7) as f64, (i / 7) as f64]).collect();
    let x = matrix(&rows);
    let p = UmapParams { k: 5, d_out: 2, epochs: 20, ..UmapParams::default() };
    assert_ne!(umap(&x, &p, 1).unwrap().matrix.to_bytes(), umap(&x, &p, 2).unwrap().matrix.to_bytes());
}

fn distances() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..50.0, 2..20).prop_map(|mut d| {
        d.sort_by(f64::total_cmp);
        d
    })
}

proptest! {
    #[test]
    fn calibration_hits_log2_k(d in distances()) {
        let k = d.len();
        let cal = calibrate(&d, k);
        if !cal.clamped {
            prop_assert!((membership_sum(&d, cal.rho, cal.sigma) - (k as f64).log2()).abs() <= 1e-5);
        }
    }

    #[test]
    fn calibration_scales_with_distances(d in distances(), c in 0.01f64..100.0) {
        let k = d.len();
        let base = calibrate(&d, k);
        let scaled_d: Vec<f64> = d.iter().map(|v| v * c).collect();
        let scaled = calibrate(&scaled_d, k);
        prop_assert_eq!(base.clamped, scaled.clamped);
        prop_assert!((scaled.rho - c * base.rho).abs() <= 1e-9 * c * base.rho);
        if !base.clamped {
            prop_assert!((scaled.sigma - c * base.sigma).abs() <= 1e-4 * c * base.sigma);
        }
    }

    #[test]
    fn graph_is_symmetric_with_weights_in_unit_interval(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 6..40),
        k in 2usize..6,
    ) {
        let x = matrix(&rows);
        let knn = knn_graph(&x, k).unwrap();
        let g = membership_graph(&knn);
        for i in 0..g.n {
            for &(j, w) in &g.neighbors[i] {
                prop_assert!(j != i);
                prop_assert!(w > 0.0 && w <= 1.0);
                prop_assert_eq!(g.weight(j, i), w);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 8..20), seed in 0u64..1000) {
        let x = matrix(&rows);
        let p = UmapParams { k: 4, d_out: 2, epochs: 15, ..UmapParams::default() };
        prop_assert_eq!(umap(&x, &p, seed).unwrap().matrix.to_bytes(), umap(&x, &p, seed).unwrap().matrix.to_bytes());
    }
}
