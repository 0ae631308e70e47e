//! Levenberg-Marquardt refinement of a three-view model on the pairwise
//! Sampson residuals of its inliers.
//!
//! Parameters: the unknown focal lengths of the case, then a rotation
//! increment (3) and a tangent step of the unit translation (2) for view 2,
//! then a rotation increment (3) and a translation step (3) for view 3.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{rotation_from_axis_angle, skew, Mat3, PointTriplet, Pose, Vec3};
use crate::pose::{ThreeViewModel, PAIRS};
use crate::solvers::Case;

/// Denominator clamp shared with [`crate::pose::sampson_error`].
const MIN_GRADIENT2: f64 = 1e-18;

/// LM schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Stop when the relative cost decrease of an accepted step is below this.
    pub min_relative_change: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 25, initial_lambda: 1e-3, min_relative_change: 1e-10 }
    }
}

/// Number of focal parameters of a case.
pub fn focal_params(case: Case) -> usize {
    match case {
        Case::I | Case::II => 1,
        Case::III | Case::IV => 2,
    }
}

pub fn num_params(case: Case) -> usize {
    focal_params(case) + 11
}

/// `d f_i / d p_m` for the focal parameters.
fn focal_map(case: Case) -> [[f64; 2]; 3] {
    match case {
        Case::I => [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]],
        Case::II => [[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]],
        Case::III => [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]],
        Case::IV => [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
    }
}

/// Orthonormal basis of the plane orthogonal to the unit vector `t`.
fn tangent_basis(t: &Vec3) -> [Vec3; 2] {
    let a = if t.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let b1 = t.cross(&a).normalize();
    let b2 = t.cross(&b1);
    [b1, b2]
}

/// Model moved by the parameter increment `delta`; `None` if a focal length
/// would become non-positive.
pub fn apply_step(model: &ThreeViewModel, delta: &DVector<f64>) -> Option<ThreeViewModel> {
    let nf = focal_params(model.case);
    let map = focal_map(model.case);
    let mut f = model.f;
    for (i, fi) in f.iter_mut().enumerate() {
        for m in 0..nf {
            *fi += map[i][m] * delta[m];
        }
    }
    if f.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return None;
    }
    let d = |k: usize| delta[nf + k];
    let w2 = Vec3::new(d(0), d(1), d(2));
    let b = tangent_basis(&model.pose2.t);
    let t2 = (model.pose2.t + b[0] * d(3) + b[1] * d(4)).normalize();
    let w3 = Vec3::new(d(5), d(6), d(7));
    let t3 = model.pose3.t + Vec3::new(d(8), d(9), d(10));
    let mut out = model.clone();
    out.f = f;
    out.pose2 = Pose::new(rotation_from_axis_angle(&w2) * model.pose2.r, t2);
    out.pose3 = Pose::new(rotation_from_axis_angle(&w3) * model.pose3.r, t3);
    Some(out)
}

/// Unnormalized fundamental matrices `Kj^-T [t]x R Ki^-1` of the three pairs
/// with their essential parts.
fn pair_matrices(model: &ThreeViewModel) -> [(Mat3, Mat3); 3] {
    let poses = model.poses();
    core::array::from_fn(|k| {
        let (i, j) = PAIRS[k];
        let rel = poses[i].relative_to(&poses[j]);
        let e = skew(&rel.t) * rel.r;
        (kinv(model.f[j]) * e * kinv(model.f[i]), e)
    })
}

fn kinv(f: f64) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(1.0 / f, 1.0 / f, 1.0))
}

fn dkinv(f: f64) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(-1.0 / (f * f), -1.0 / (f * f), 0.0))
}

/// Signed Sampson residual and its gradient with respect to `F`.
fn residual_and_gradient(f: &Mat3, t: &PointTriplet, i: usize, j: usize) -> (f64, Mat3) {
    let xi = t.view(i);
    let xj = t.view(j);
    let a = Vec3::new(xi.x, xi.y, 1.0);
    let b = Vec3::new(xj.x, xj.y, 1.0);
    let l = f * a;
    let g = f.transpose() * b;
    let s = b.dot(&l);
    let d = l.x * l.x + l.y * l.y + g.x * g.x + g.y * g.y;
    if d <= MIN_GRADIENT2 {
        return (s / MIN_GRADIENT2.sqrt(), b * a.transpose() / MIN_GRADIENT2.sqrt());
    }
    let sd = d.sqrt();
    let mut dd = Mat3::zeros();
    for m in 0..3 {
        for n in 0..3 {
            let mut v = 0.0;
            if m < 2 {
                v += 2.0 * l[m] * a[n];
            }
            if n < 2 {
                v += 2.0 * g[n] * b[m];
            }
            dd[(m, n)] = v;
        }
    }
    let grad = b * a.transpose() / sd - dd * (s / (2.0 * d * sd));
    (s / sd, grad)
}

/// Signed Sampson residuals of the given triplets, three per triplet in
/// [`PAIRS`] order. Their squares are the pairwise Sampson errors.
pub fn residuals(model: &ThreeViewModel, triplets: &[PointTriplet]) -> DVector<f64> {
    let fs = pair_matrices(model);
    let mut r = DVector::zeros(3 * triplets.len());
    for (n, t) in triplets.iter().enumerate() {
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            r[3 * n + k] = residual_and_gradient(&fs[k].0, t, i, j).0;
        }
    }
    r
}

/// Residuals and their analytic Jacobian with respect to the parameters of
/// [`apply_step`] at zero.
pub fn residuals_and_jacobian(model: &ThreeViewModel, triplets: &[PointTriplet]) -> (DVector<f64>, DMatrix<f64>) {
    let nf = focal_params(model.case);
    let np = num_params(model.case);
    let map = focal_map(model.case);
    let mats = pair_matrices(model);
    let (r2, t2) = (model.pose2.r, model.pose2.t);
    let (r3, t3) = (model.pose3.r, model.pose3.t);
    let r23 = r3 * r2.transpose();
    let t23 = t3 - r23 * t2;
    let basis = tangent_basis(&t2);
    let e = [Vec3::x(), Vec3::y(), Vec3::z()];

    // dE / dparam for each pair, for the 11 pose parameters.
    let mut de = [[Mat3::zeros(); 11]; 3];
    for k in 0..3 {
        let ek = skew(&e[k]);
        // Pair (1, 2).
        de[0][k] = skew(&t2) * ek * r2;
        // Pair (1, 3).
        de[1][5 + k] = skew(&t3) * ek * r3;
        de[1][8 + k] = ek * r3;
        // Pair (2, 3).
        let dr_w2 = -(r23 * ek);
        let dt_w2 = r23 * ek * t2;
        de[2][k] = skew(&dt_w2) * r23 + skew(&t23) * dr_w2;
        let dr_w3 = ek * r23;
        let dt_w3 = -(ek * r23 * t2);
        de[2][5 + k] = skew(&dt_w3) * r23 + skew(&t23) * dr_w3;
        de[2][8 + k] = skew(&e[k]) * r23;
    }
    for (m, bm) in basis.iter().enumerate() {
        de[0][3 + m] = skew(bm) * r2;
        de[2][3 + m] = skew(&(-(r23 * bm))) * r23;
    }

    // dF / dparam.
    let mut dfs: [Vec<Mat3>; 3] = core::array::from_fn(|_| alloc::vec![Mat3::zeros(); np]);
    for (k, &(i, j)) in PAIRS.iter().enumerate() {
        let (ki, kj) = (kinv(model.f[i]), kinv(model.f[j]));
        let ess = mats[k].1;
        let dfi = kj * ess * dkinv(model.f[i]);
        let dfj = dkinv(model.f[j]) * ess * ki;
        for m in 0..nf {
            dfs[k][m] = dfi * map[i][m] + dfj * map[j][m];
        }
        for p in 0..11 {
            dfs[k][nf + p] = kj * de[k][p] * ki;
        }
    }

    let mut r = DVector::zeros(3 * triplets.len());
    let mut jac = DMatrix::zeros(3 * triplets.len(), np);
    for (n, t) in triplets.iter().enumerate() {
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            let (res, grad) = residual_and_gradient(&mats[k].0, t, i, j);
            let row = 3 * n + k;
            r[row] = res;
            for p in 0..np {
                jac[(row, p)] = grad.component_mul(&dfs[k][p]).sum();
            }
        }
    }
    (r, jac)
}

/// Minimizes the sum of squared Sampson residuals over `triplets`.
/// Returns the refined model and its cost; the input when no step helped.
pub fn levenberg_marquardt(model: &ThreeViewModel, triplets: &[PointTriplet], opts: &LmOptions) -> (ThreeViewModel, f64) {
    let mut current = model.clone();
    let mut cost = residuals(&current, triplets).norm_squared();
    if triplets.is_empty() {
        return (current, cost);
    }
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    'outer: while iterations < opts.max_iterations {
        let (r, j) = residuals_and_jacobian(&current, triplets);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * r;
        loop {
            iterations += 1;
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let step = a.cholesky().map(|c| -c.solve(&g));
            let candidate = step.as_ref().and_then(|s| apply_step(&current, s));
            if let Some(next) = candidate {
                let next_cost = residuals(&next, triplets).norm_squared();
                if next_cost < cost {
                    let change = (cost - next_cost) / cost.max(f64::MIN_POSITIVE);
                    current = next;
                    cost = next_cost;
                    lambda = (lambda * 0.1).max(1e-12);
                    if change < opts.min_relative_change {
                        break 'outer;
                    }
                    continue 'outer;
                }
            }
            lambda *= 10.0;
            if lambda > 1e12 || iterations >= opts.max_iterations {
                break 'outer;
            }
        }
    }
    (current, cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, Vec2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v3(rng: &mut impl Rng, s: f64) -> Vec3 {
        Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    fn random_model(rng: &mut impl Rng, case: Case) -> ThreeViewModel {
        let f1 = rng.random_range(500.0..2000.0);
        let f2 = rng.random_range(500.0..2000.0);
        let f3 = rng.random_range(500.0..2000.0);
        let f = match case {
            Case::I => [f1; 3],
            Case::II | Case::III => [f1, f2, f2],
            Case::IV => [f1, f2, f3],
        };
        let t2 = v3(rng, 1.0).normalize();
        ThreeViewModel {
            case,
            f,
            pose2: Pose::new(rotation_from_axis_angle(&v3(rng, 0.2)), t2),
            pose3: Pose::new(rotation_from_axis_angle(&v3(rng, 0.2)), v3(rng, 1.5)),
            score: 0.0,
            inlier_mask: Vec::new(),
        }
    }

    fn observe(rng: &mut impl Rng, m: &ThreeViewModel, n: usize) -> Vec<PointTriplet> {
        let k = m.intrinsics();
        let poses = m.poses();
        let mut out = Vec::new();
        while out.len() < n {
            let x = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(6.0..10.0));
            let p: Option<Vec<Vec2>> = (0..3).map(|i| project(&k[i], &poses[i], &x).ok()).collect();
            if let Some(p) = p {
                out.push(PointTriplet::new(p[0], p[1], p[2]));
            }
        }
        out
    }

    #[test]
    fn residuals_square_to_sampson() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, Case::IV);
        let ts: Vec<PointTriplet> = observe(&mut rng, &m, 10)
            .into_iter()
            .map(|t| PointTriplet::new(t.x1 + Vec2::new(1.0, -2.0), t.x2, t.x3 + Vec2::new(0.5, 0.5)))
            .collect();
        let r = residuals(&m, &ts);
        let fs = m.fundamentals().unwrap();
        for (n, t) in ts.iter().enumerate() {
            let e = crate::pose::triplet_errors(&fs, t);
            for k in 0..3 {
                assert!((r[3 * n + k].powi(2) - e[k]).abs() <= 1e-9 * e[k].max(1e-9));
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 0..100 {
            let case = Case::ALL[n % 4];
            let m = random_model(&mut rng, case);
            let ts: Vec<PointTriplet> = observe(&mut rng, &m, 8)
                .into_iter()
                .map(|t| PointTriplet::new(t.x1, t.x2 + Vec2::new(3.0, 1.0), t.x3 - Vec2::new(2.0, 0.0)))
                .collect();
            let (_, jac) = residuals_and_jacobian(&m, &ts);
            let np = num_params(case);
            for p in 0..np {
                let h = if p < focal_params(case) { 1e-3 } else { 1e-6 };
                let mut d = DVector::zeros(np);
                d[p] = h;
                let plus = residuals(&apply_step(&m, &d).unwrap(), &ts);
                let minus = residuals(&apply_step(&m, &(-d)).unwrap(), &ts);
                let fd = (plus - minus) / (2.0 * h);
                let col = jac.column(p);
                let err = (&fd - col).norm() / fd.norm().max(col.norm()).max(1e-12);
                assert!(err < 1e-5, "case {case} param {p}: {err}");
            }
        }
    }

    #[test]
    fn converges_from_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 0..20 {
            let case = Case::ALL[n % 4];
            let truth = random_model(&mut rng, case);
            let ts = observe(&mut rng, &truth, 60);
            let mut start = truth.clone();
            let nf = focal_params(case);
            let mut d = DVector::zeros(num_params(case));
            let map = focal_map(case);
            for m in 0..nf {
                let i = (0..3).find(|&i| map[i][m] != 0.0).unwrap();
                d[m] = 0.02 * truth.f[i];
            }
            let deg = 1f64.to_radians() / 3f64.sqrt();
            for k in 0..3 {
                d[nf + k] = deg;
                d[nf + 5 + k] = -deg;
            }
            start = apply_step(&start, &d).unwrap();
            let (refined, cost) = levenberg_marquardt(&start, &ts, &LmOptions::default());
            let err = refined.f.iter().zip(&truth.f).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "case {case}: focal error {err}, cost {cost}");
        }
    }

    #[test]
    fn optimum_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model(&mut rng, Case::III);
        let ts = observe(&mut rng, &m, 30);
        let (refined, cost) = levenberg_marquardt(&m, &ts, &LmOptions::default());
        assert!(cost < 1e-20);
        assert!((refined.f[0] - m.f[0]).abs() < 1e-9 * m.f[0]);
    }
}
