//! Fits the low-dimensional similarity `1 / (1 + a·x^(2b))` to the target
//! curve that is 1 up to `min_dist` and decays as `exp(-(x - min_dist) / spread)`.

const GRID_POINTS: usize = 300;
const MAX_ITER: usize = 500;

fn target(x: f64, min_dist: f64, spread: f64) -> f64 {
    if x < min_dist {
        1.0
    } else {
        (-(x - min_dist) / spread).exp()
    }
}

fn residuals(grid: &[(f64, f64)], a: f64, b: f64) -> f64 {
    grid.iter().map(|&(x, y)| (model(x, a, b) - y).powi(2)).sum()
}

#[inline]
fn model(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        1.0 / (1.0 + a * x.powf(2.0 * b))
    }
}

/// Least-squares `(a, b)` on 300 evenly spaced points of `[0, 3·spread]`,
/// by Levenberg–Marquardt from `(1, 1)`.
pub fn fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let grid: Vec<(f64, f64)> = (0..GRID_POINTS)
        .map(|i| {
            let x = 3.0 * spread * i as f64 / (GRID_POINTS - 1) as f64;
            (x, target(x, min_dist, spread))
        })
        .collect();
    let (mut a, mut b) = (1.0_f64, 1.0_f64);
    let mut lambda = 1e-3;
    let mut cost = residuals(&grid, a, b);
    for _ in 0..MAX_ITER {
        // normal equations J^T J and J^T r for the 2 parameters
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in &grid {
            if x <= 0.0 {
                continue;
            }
            let u = x.powf(2.0 * b);
            let denom = 1.0 + a * u;
            let f = 1.0 / denom;
            let r = f - y;
            let da = -u / (denom * denom);
            let db = -a * u * 2.0 * x.ln() / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..50 {
            let (m11, m22) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m11 * m22 - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let new_cost = residuals(&grid, na, nb);
                if new_cost < cost {
                    let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                    a = na;
                    b = nb;
                    cost = new_cost;
                    lambda = (lambda * 0.1).max(1e-12);
                    improved = rel > 1e-15;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}
