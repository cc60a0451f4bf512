//! Per-point `(rho, sigma)` so that a point's fuzzy neighbourhood has an
//! effective size of `log2(k)`.

/// Bisection steps; far more than needed to shrink the bracket to f64
/// resolution.
const MAX_STEPS: usize = 200;
const TOLERANCE: f64 = 1e-9;
/// Sigma bracket relative to the mean neighbour distance.
const LOW_FACTOR: f64 = 1e-3;
const HIGH_FACTOR: f64 = 1e3;
/// Absolute floor on sigma for neighbourhoods with zero mean distance.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub rho: f64,
    pub sigma: f64,
    /// Set when no root lay inside the sigma bracket.
    pub clamped: bool,
}

/// `Σ_j exp(-max(0, d_j - rho) / sigma)`.
pub fn membership_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances.iter().map(|&d| membership(d, rho, sigma)).sum()
}

#[inline]
pub fn membership(d: f64, rho: f64, sigma: f64) -> f64 {
    let excess = d - rho;
    if excess <= 0.0 {
        1.0
    } else {
        (-excess / sigma).exp()
    }
}

/// Calibrates one point from its ascending neighbour distances.
pub fn calibrate(distances: &[f64], k: usize) -> Calibration {
    let target = (k as f64).log2();
    let rho = distances.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
    let mean = if distances.is_empty() { 0.0 } else { distances.iter().sum::<f64>() / distances.len() as f64 };
    let mut lo = (LOW_FACTOR * mean).max(SIGMA_FLOOR);
    let mut hi = (HIGH_FACTOR * mean).max(SIGMA_FLOOR);

    // the sum increases with sigma
    if membership_sum(distances, rho, lo) >= target {
        return Calibration { rho, sigma: lo, clamped: true };
    }
    if membership_sum(distances, rho, hi) <= target {
        return Calibration { rho, sigma: hi, clamped: true };
    }
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..MAX_STEPS {
        sigma = 0.5 * (lo + hi);
        let residual = membership_sum(distances, rho, sigma) - target;
        if residual.abs() <= TOLERANCE {
            break;
        }
        if residual > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Calibration { rho, sigma, clamped: false }
}
