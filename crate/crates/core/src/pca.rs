//! PCA with eigen-ratio elbow selection of the output dimension.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{self, DataError, FeatureMatrix, FmatBlock};
use crate::umap::ReducedEmbedding;

pub const ELBOW_EPSILON: f64 = 1e-12;
pub const DEFAULT_MIN_DIMS: usize = 8;
/// Relative size under which an eigenvalue counts as zero when building
/// components from the Gram matrix.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("all rows are identical: zero total variance")]
    DegenerateInput,
    #[error("requested {requested} dimensions but at most {available} are available")]
    DimTooLarge { requested: usize, available: usize },
    #[error("elbow range is empty: min {min} > max {max}")]
    EmptyRange { min: usize, max: usize },
    #[error("invalid elbow range: {0}")]
    BadRange(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `m × d`, orthonormal rows, in order of decreasing eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

fn centered(x: &FeatureMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += f64::from(*v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let xc = DMatrix::from_fn(n, d, |i, j| f64::from(x.row(i)[j]) - mean[j]);
    (mean, xc)
}

/// Eigenpairs sorted by descending eigenvalue (index order on ties).
fn sorted_eigen(sym: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Flips `v` so its largest-magnitude coordinate is positive.
fn orient(v: &mut [f64]) {
    let pivot =
        v.iter().enumerate().fold((0, 0.0_f64), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best }).0;
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fits the first `max_dims` principal axes. Uses the `d × d` covariance
/// when `d <= n`, else the `n × n` Gram matrix.
pub fn pca_fit(x: &FeatureMatrix, max_dims: usize) -> Result<PcaModel, PcaError> {
    let (n, d) = (x.rows(), x.cols());
    let available = (n - 1).min(d);
    if max_dims > available {
        return Err(PcaError::DimTooLarge { requested: max_dims, available });
    }
    let (mean, xc) = centered(x);
    let scale = 1.0 / (n - 1) as f64;
    let total: f64 = xc.iter().map(|v| v * v).sum::<f64>() * scale;
    if total <= 0.0 {
        return Err(PcaError::DegenerateInput);
    }

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(max_dims);
    let mut eigenvalues = Vec::with_capacity(max_dims);
    if d <= n {
        let (values, vectors) = sorted_eigen(xc.transpose() * &xc * scale);
        for (c, value) in values.iter().enumerate().take(max_dims) {
            let mut v: Vec<f64> = vectors.column(c).iter().copied().collect();
            orient(&mut v);
            components.push(v);
            eigenvalues.push(value.max(0.0));
        }
    } else {
        let (values, vectors) = sorted_eigen(&xc * xc.transpose() * scale);
        let top = values.first().copied().unwrap_or(0.0).max(0.0);
        for (c, value) in values.iter().enumerate().take(max_dims) {
            let lambda = value.max(0.0);
            let v = if lambda > RANK_TOL * top {
                let u = vectors.column(c);
                let mut v: Vec<f64> = (xc.transpose() * u).iter().copied().collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                v
            } else {
                complement_vector(&components, d)
            };
            let mut v = v;
            orient(&mut v);
            components.push(v);
            eigenvalues.push(lambda);
        }
    }
    Ok(PcaModel { mean, components, eigenvalues })
}

/// A unit vector orthogonal to `basis`, from Gram–Schmidt on the standard basis.
fn complement_vector(basis: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in 0..d {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().is_none_or(|b| norm > b.0) {
            best = Some((norm, v));
        }
        if norm > 0.5 {
            break;
        }
    }
    let (norm, mut v) = best.expect("d >= 1");
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Picks the 1-based `i` in `[min_dims, max_dims]` maximising
/// `eigenvalues[i] / (eigenvalues[i + 1] + 1e-12)` (1-based), smallest `i`
/// on ties.
pub fn elbow_select(eigenvalues: &[f64], min_dims: usize, max_dims: usize) -> Result<usize, PcaError> {
    if min_dims > max_dims {
        return Err(PcaError::EmptyRange { min: min_dims, max: max_dims });
    }
    if min_dims < 1 {
        return Err(PcaError::BadRange("min_dims must be at least 1".into()));
    }
    if max_dims >= eigenvalues.len() {
        return Err(PcaError::BadRange(format!(
            "max_dims {max_dims} needs at least {} eigenvalues, got {}",
            max_dims + 1,
            eigenvalues.len()
        )));
    }
    let mut best = (f64::NEG_INFINITY, min_dims);
    for i in min_dims..=max_dims {
        let ratio = eigenvalues[i - 1] / (eigenvalues[i] + ELBOW_EPSILON);
        if ratio > best.0 {
            best = (ratio, i);
        }
    }
    Ok(best.1)
}

/// Projects centered rows onto the first `m` components.
pub fn pca_transform(model: &PcaModel, x: &FeatureMatrix, m: usize) -> Result<ReducedEmbedding, PcaError> {
    if m > model.components.len() || m == 0 {
        return Err(PcaError::DimTooLarge { requested: m, available: model.components.len() });
    }
    let coords = project(model, x, m);
    Ok(ReducedEmbedding::from_coords(x, m, &coords, 0)?)
}

/// `n × m` projections in `f64`.
pub fn project(model: &PcaModel, x: &FeatureMatrix, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.rows() * m);
    for i in 0..x.rows() {
        let row = x.row(i);
        for comp in &model.components[..m] {
            let dot: f64 = row.iter().zip(&model.mean).zip(comp).map(|((v, mu), c)| (f64::from(*v) - mu) * c).sum();
            out.push(dot);
        }
    }
    out
}

/// Maps `m`-dimensional projections back to the input space.
pub fn reconstruct(model: &PcaModel, coords: &[f64], m: usize) -> Vec<f64> {
    let d = model.mean.len();
    let n = coords.len() / m;
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        for j in 0..d {
            let mut v = model.mean[j];
            for (c, comp) in model.components[..m].iter().enumerate() {
                v += coords[i * m + c] * comp[j];
            }
            out.push(v);
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct PcaMetadata {
    dims: usize,
    components: usize,
    mean: Vec<f64>,
    components_file: String,
    eigenvalues_file: String,
}

/// Writes `<stem>.components.fmat`, `<stem>.eigenvalues.fmat` and
/// `<stem>.json`. Stored values are `f32`.
pub fn save_model(model: &PcaModel, dir: &Path, stem: &str) -> Result<(), DataError> {
    let m = model.components.len();
    let d = model.mean.len();
    let components = FmatBlock {
        rows: m,
        cols: d,
        data: model.components.iter().flatten().map(|&v| v as f32).collect(),
        ids: (0..m).map(|i| format!("pc{i}")).collect(),
    };
    let eigenvalues = FmatBlock {
        rows: m,
        cols: 1,
        data: model.eigenvalues.iter().map(|&v| v as f32).collect(),
        ids: (0..m).map(|i| format!("ev{i}")).collect(),
    };
    let comp_name = format!("{stem}.components.fmat");
    let eig_name = format!("{stem}.eigenvalues.fmat");
    dataio::write_fmat_block(&components, dir.join(&comp_name))?;
    dataio::write_fmat_block(&eigenvalues, dir.join(&eig_name))?;
    dataio::write_json(
        dir.join(format!("{stem}.json")),
        &PcaMetadata {
            dims: d,
            components: m,
            mean: model.mean.clone(),
            components_file: comp_name,
            eigenvalues_file: eig_name,
        },
    )
}

pub fn load_model(dir: &Path, stem: &str) -> Result<PcaModel, DataError> {
    let meta: PcaMetadata = dataio::read_json(dir.join(format!("{stem}.json")))?;
    let comps = dataio::load_fmat_block(dir.join(&meta.components_file))?;
    let eig = dataio::load_fmat_block(dir.join(&meta.eigenvalues_file))?;
    if comps.rows != meta.components || comps.cols != meta.dims || eig.rows != meta.components {
        return Err(DataError::Shape("PCA model files disagree with metadata".into()));
    }
    Ok(PcaModel {
        mean: meta.mean,
        components: comps.data.chunks(comps.cols.max(1)).map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect(),
        eigenvalues: eig.data.iter().map(|&v| f64::from(v)).collect(),
    })
}
