//! Seeded Gaussian blobs with optional uniform noise, the desk-scale stand-in
//! for a real image-feature dataset.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataio::{generated_ids, FeatureMatrix, ManifestEntry, SampleManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    /// Samples per class; classes may be imbalanced.
    pub n_per_class: Vec<usize>,
    pub dim: usize,
    /// Explicit `class × dim` centers. When absent, centers are drawn
    /// uniformly from `[-center_box, center_box]^dim`.
    pub centers: Option<Vec<Vec<f64>>>,
    pub center_box: f64,
    /// Gaussian sub-modes per class. Each mode center is the class center
    /// plus a uniform offset in `[-mode_box, mode_box]^dim`; a class's
    /// samples are split evenly over its modes.
    pub modes_per_class: usize,
    pub mode_box: f64,
    pub sigma: f64,
    /// Fraction of points replaced by uniform draws over the data's bounding
    /// box. They keep their original class as true label.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            n_per_class: vec![80, 80, 80, 80],
            dim: 64,
            centers: None,
            center_box: 10.0,
            modes_per_class: 1,
            mode_box: 0.0,
            sigma: 1.0,
            noise_fraction: 0.0,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: &str| Err(EvalError::BadSpec(msg.to_owned()));
        if self.n_per_class.is_empty() || self.n_per_class.contains(&0) {
            return bad("every class needs at least one sample");
        }
        if self.n_per_class.iter().sum::<usize>() < 2 {
            return bad("need at least two samples in total");
        }
        if self.modes_per_class == 0 {
            return bad("modes_per_class must be at least 1");
        }
        if !(self.mode_box >= 0.0 && self.mode_box.is_finite()) {
            return bad("mode_box must be non-negative");
        }
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return bad("noise_fraction must be in [0, 1)");
        }
        if let Some(centers) = &self.centers {
            if centers.len() != self.n_per_class.len() || centers.iter().any(|c| c.len() != self.dim) {
                return bad("centers must be classes × dim");
            }
        }
        Ok(())
    }

    pub fn class_label(class: usize) -> String {
        format!("c{class}")
    }
}

/// Draws the blobs. Rows are grouped by class; ids are `s00000...`.
pub fn make_blobs(spec: &BlobSpec) -> Result<(FeatureMatrix, SampleManifest), EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;
    let centers: Vec<Vec<f64>> = match &spec.centers {
        Some(c) => c.clone(),
        None => (0..spec.n_per_class.len())
            .map(|_| (0..dim).map(|_| rng.random_range(-spec.center_box..=spec.center_box)).collect())
            .collect(),
    };
    let normal = Normal::new(0.0, spec.sigma).expect("sigma validated");
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (class, (&count, center)) in spec.n_per_class.iter().zip(&centers).enumerate() {
        let modes: Vec<Vec<f64>> = (0..spec.modes_per_class)
            .map(|_| {
                center
                    .iter()
                    .map(
                        |c| if spec.mode_box > 0.0 { c + rng.random_range(-spec.mode_box..=spec.mode_box) } else { *c },
                    )
                    .collect()
            })
            .collect();
        for s in 0..count {
            let mode = &modes[s * spec.modes_per_class / count];
            rows.push(mode.iter().map(|c| c + normal.sample(&mut rng)).collect());
            labels.push(class);
        }
    }
    let n = rows.len();
    let noisy = (spec.noise_fraction * n as f64).round() as usize;
    if noisy > 0 {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for row in &rows {
            for (j, v) in row.iter().enumerate() {
                lo[j] = lo[j].min(*v);
                hi[j] = hi[j].max(*v);
            }
        }
        let mut picked = sample(&mut rng, n, noisy).into_vec();
        picked.sort_unstable();
        for i in picked {
            rows[i] = (0..dim).map(|j| if hi[j] > lo[j] { rng.random_range(lo[j]..hi[j]) } else { lo[j] }).collect();
        }
    }
    let ids = generated_ids(n);
    let manifest = SampleManifest {
        entries: ids
            .iter()
            .zip(&labels)
            .map(|(id, &class)| ManifestEntry {
                id: id.clone(),
                source_path: format!("synthetic/{}/{id}", BlobSpec::class_label(class)),
                thumbnail_path: None,
                true_label: Some(BlobSpec::class_label(class)),
            })
            .collect(),
    };
    let matrix = FeatureMatrix::from_rows(&rows, ids).map_err(EvalError::Data)?;
    Ok((matrix, manifest))
}

/// The standard benchmark: 4 × 250 points in 64-D, each class a mixture of
/// four nearby sub-modes, 5% uniform noise.
pub fn standard_benchmark(seed: u64) -> BlobSpec {
    BlobSpec {
        n_per_class: vec![250; 4],
        dim: 64,
        centers: None,
        center_box: 2.0,
        modes_per_class: 4,
        mode_box: 0.6,
        sigma: 0.5,
        noise_fraction: 0.05,
        seed,
    }
}

/// Same geometry with 10% noise.
pub fn noisy_benchmark(seed: u64) -> BlobSpec {
    BlobSpec { noise_fraction: 0.1, ..standard_benchmark(seed) }
}
