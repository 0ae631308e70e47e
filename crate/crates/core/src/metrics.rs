//! Focal-length error metrics.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::solvers::Case;

/// Thresholds on the mAA grid.
pub const MAA_GRID: usize = 100;

/// Relative focal error `|f_est - f_gt| / f_gt`.
pub fn xi_f(f_est: f64, f_gt: f64) -> f64 {
    (f_est - f_gt).abs() / f_gt
}

/// Geometric mean of two relative focal errors.
pub fn xi_pair(f1_est: f64, f2_est: f64, f1_gt: f64, f2_gt: f64) -> f64 {
    (xi_f(f1_est, f1_gt) * xi_f(f2_est, f2_gt)).sqrt()
}

/// Error of the focal lengths estimated in a case: the single unknown for
/// Cases I/II, the geometric mean of the two unknowns for Cases III/IV.
pub fn case_error(case: Case, est: [f64; 3], gt: [f64; 3]) -> f64 {
    match case {
        Case::I => xi_f(est[0], gt[0]),
        Case::II => xi_f(est[1], gt[1]),
        Case::III => xi_pair(est[0], est[1], gt[0], gt[1]),
        Case::IV => xi_pair(est[1], est[2], gt[1], gt[2]),
    }
}

/// Largest relative error over all three focals.
pub fn max_relative_error(est: [f64; 3], gt: [f64; 3]) -> f64 {
    est.iter().zip(&gt).map(|(e, g)| xi_f(*e, *g)).fold(0.0, f64::max)
}

/// Mean average accuracy: area under the empirical CDF of `errors` on
/// `[0, t]` divided by `t`, by the trapezoid rule on a uniform grid of
/// [`MAA_GRID`] thresholds. NaN errors count as failures.
pub fn maa(errors: &[f64], t: f64) -> f64 {
    if errors.is_empty() || !(t > 0.0) {
        return 0.0;
    }
    let mut sorted: Vec<f64> = errors.iter().map(|e| if e.is_nan() { f64::INFINITY } else { *e }).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let cdf = |tau: f64| sorted.partition_point(|e| *e <= tau) as f64 / n;
    let steps = MAA_GRID - 1;
    let mut area = 0.0;
    let mut prev = cdf(0.0);
    for k in 1..=steps {
        let cur = cdf(t * k as f64 / steps as f64);
        area += 0.5 * (prev + cur);
        prev = cur;
    }
    area / steps as f64
}

/// Median of finite-or-infinite values (NaN treated as infinity).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = values.iter().map(|e| if e.is_nan() { f64::INFINITY } else { *e }).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Value at quantile `q` in `[0, 1]` (nearest rank).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = values.iter().map(|e| if e.is_nan() { f64::INFINITY } else { *e }).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((q.clamp(0.0, 1.0) * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}
