use proptest::prelude::*;

use clustervote::dataio::generated_ids;
use clustervote::pca::{elbow_select, load_model, pca_fit, pca_transform, project, reconstruct, save_model};
use clustervote::FeatureMatrix;

fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows, generated_ids(rows.len())).unwrap()
}

/// Four points whose sample covariance is diag(4, 1), rotated by `angle`.
fn rotated_box(angle: f64) -> (Vec<Vec<f64>>, [f64; 2]) {
    let (a, b) = (3f64.sqrt(), 3f64.sqrt() / 2.0);
    let (c, s) = (angle.cos(), angle.sin());
    let rows = [(a, b), (a, -b), (-a, b), (-a, -b)]
        .iter()
        .map(|&(u, v)| vec![c * u - s * v + 5.0, s * u + c * v - 2.0])
        .collect();
    (rows, [c, s])
}

#[test]
fn covariance_oracle_four_and_one() {
    let (rows, axis) = rotated_box(0.5);
    let model = pca_fit(&matrix(&rows), 2).unwrap();
    // f32 storage limits agreement to ~1e-6
    assert!((model.eigenvalues[0] - 4.0).abs() < 1e-5, "{:?}", model.eigenvalues);
    assert!((model.eigenvalues[1] - 1.0).abs() < 1e-5);
    let dot = (model.components[0][0] * axis[0] + model.components[0][1] * axis[1]).abs();
    assert!((dot - 1.0).abs() < 1e-6);
    assert!((model.mean[0] - 5.0).abs() < 1e-6 && (model.mean[1] + 2.0).abs() < 1e-6);
}

#[test]
fn full_rank_reconstruction_is_identity() {
    let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i % 7) as f64, (i % 3) as f64 - 1.0]).collect();
    let x = matrix(&rows);
    let model = pca_fit(&x, 3).unwrap();
    let coords = project(&model, &x, 3);
    let back = reconstruct(&model, &coords, 3);
    for (got, want) in back.iter().zip(rows.iter().flatten()) {
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
}

#[test]
fn transformed_columns_have_eigenvalue_variance() {
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let t = i as f64 * 0.37;
            vec![t.sin() * 3.0, t.cos(), (t * 1.7).sin() * 0.5, t * 0.01]
        })
        .collect();
    let x = matrix(&rows);
    let model = pca_fit(&x, 3).unwrap();
    let emb = pca_transform(&model, &x, 3).unwrap();
    for c in 0..3 {
        let col: Vec<f64> = (0..40).map(|i| f64::from(emb.matrix.row(i)[c])).collect();
        let mean = col.iter().sum::<f64>() / 40.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 39.0;
        assert!((var - model.eigenvalues[c]).abs() <= 1e-4 * model.eigenvalues[0]);
    }
}

#[test]
fn model_round_trips_through_disk() {
    let (rows, _) = rotated_box(1.1);
    let model = pca_fit(&matrix(&rows), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_model(&model, dir.path(), "pca").unwrap();
    let back = load_model(dir.path(), "pca").unwrap();
    assert_eq!(back.components.len(), 2);
    for (a, b) in back.eigenvalues.iter().zip(&model.eigenvalues) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
    }
    save_model(&back, dir.path(), "again").unwrap();
    for suffix in ["components.fmat", "eigenvalues.fmat"] {
        let a = std::fs::read(dir.path().join(format!("pca.{suffix}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("again.{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
}

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..1e3, 3..16).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

proptest! {
    #[test]
    fn elbow_is_scale_invariant(eig in spectrum(), c in 1e-3f64..1e3) {
        let max = eig.len() - 1;
        let scaled: Vec<f64> = eig.iter().map(|v| v * c).collect();
        prop_assert_eq!(elbow_select(&scaled, 1, max).unwrap(), elbow_select(&eig, 1, max).unwrap());
    }

    #[test]
    fn elbow_stays_in_range(eig in spectrum(), lo in 1usize..4, width in 0usize..4) {
        let max = (lo + width).min(eig.len() - 1);
        prop_assume!(lo <= max);
        let m = elbow_select(&eig, lo, max).unwrap();
        prop_assert!((lo..=max).contains(&m));
        let ratio = |i: usize| eig[i - 1] / (eig[i] + 1e-12);
        for i in lo..=max {
            prop_assert!(ratio(i) <= ratio(m));
            if i < m {
                prop_assert!(ratio(i) < ratio(m));
            }
        }
    }

    #[test]
    fn eigenvalues_descend_and_sum_to_total_variance(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 5..30)
    ) {
        let x = matrix(&rows);
        let n = rows.len() as f64;
        let data: Vec<f64> = x.data().iter().map(|&v| f64::from(v)).collect();
        let total: f64 = (0..3).map(|c| {
            let col: Vec<f64> = data.iter().skip(c).step_by(3).copied().collect();
            let m = col.iter().sum::<f64>() / n;
            col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
        }).sum();
        prop_assume!(total > 1e-6);
        let model = pca_fit(&x, 3).unwrap();
        prop_assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let sum: f64 = model.eigenvalues.iter().sum();
        prop_assert!((sum - total).abs() <= 1e-6 * total.max(1.0));
    }
}
