//! From focal lengths to metric three-view models: homography decomposition,
//! triangulation, P3P registration of the third view, fundamental matrices
//! and the Sampson error.

use alloc::vec::Vec;
use nalgebra::SymmetricEigen;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::eigen::polynomial_roots;
use crate::error::{Error, Result};
use crate::geometry::{skew, CameraIntrinsics, Homography2D, Mat3, PointTriplet, Pose, Vec2, Vec3};
use crate::poly::UniPoly;
use crate::solvers::{Case, FocalSolution};

/// One solution of `H = R + (t / d) n^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographyCandidate {
    pub r: Mat3,
    pub t_over_d: Vec3,
    pub n: Vec3,
}

/// All candidates of a decomposition. `normal_reliable` is false for a
/// (near) pure rotation, where `t / d = 0` and the normal is arbitrary.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedHomography {
    pub candidates: Vec<HomographyCandidate>,
    pub normal_reliable: bool,
}

/// Relative spread of the singular values below which `H` is a rotation.
const ROTATION_TOL: f64 = 1e-9;
/// Smallest angle between viewing rays accepted by triangulation.
const MIN_RAY_ANGLE: f64 = 1e-6;

/// Euclidean homography `H = K2^-1 G K1` scaled to unit middle singular
/// value, with the sign that maps the support rays forward.
pub fn euclidean_from_image(g: &Homography2D, k1: &CameraIntrinsics, k2: &CameraIntrinsics, support: &[(Vec2, Vec2)]) -> Result<Mat3> {
    let h = k2.inverse() * g.matrix() * k1.matrix();
    let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if !(sv[1] > 0.0) {
        return Err(Error::DecompositionFailed);
    }
    let h = h / sv[1];
    let votes: f64 = support.iter().map(|(x1, x2)| (h * k1.ray(x1)).dot(&k2.ray(x2)).signum()).sum();
    Ok(if votes < 0.0 { -h } else { h })
}

/// Decomposes a Euclidean homography and keeps the candidates that put every
/// support point in front of both cameras (`n . ray1 > 0`).
pub fn decompose_homography(h: &Mat3, support: &[(Vec2, Vec2)], k1: &CameraIntrinsics, k2: &CameraIntrinsics) -> Result<DecomposedHomography> {
    let all = decompose_all(h)?;
    if !all.normal_reliable {
        return Ok(all);
    }
    let candidates: Vec<_> = all
        .candidates
        .into_iter()
        .filter(|c| {
            support.iter().all(|(x1, x2)| {
                let r1 = k1.ray(x1);
                let depth = c.n.dot(&r1);
                // Point on the plane at depth 1 / depth along ray 1.
                depth > 0.0 && (h * r1).dot(&k2.ray(x2)) > 0.0
            })
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::DecompositionFailed);
    }
    Ok(DecomposedHomography { candidates, normal_reliable: true })
}

/// The four analytic solutions of `H = R + T n^T` for `H` with unit middle
/// singular value.
pub fn decompose_all(h: &Mat3) -> Result<DecomposedHomography> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::DecompositionFailed);
    }
    let eig = SymmetricEigen::new(h.transpose() * h);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let s1 = eig.eigenvalues[order[0]];
    let s2 = eig.eigenvalues[order[1]];
    let s3 = eig.eigenvalues[order[2]];
    let h = h / s2.sqrt();
    let (s1, s3) = (s1 / s2, s3 / s2);
    if s1 - s3 <= ROTATION_TOL * s1 {
        let svd = h.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            r = -r;
        }
        return Ok(DecomposedHomography {
            candidates: alloc::vec![HomographyCandidate { r, t_over_d: Vec3::zeros(), n: Vec3::z() }],
            normal_reliable: false,
        });
    }
    let v1: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    let v2: Vec3 = eig.eigenvectors.column(order[1]).into_owned();
    let v3: Vec3 = eig.eigenvectors.column(order[2]).into_owned();
    let a = (1.0 - s3).max(0.0).sqrt();
    let b = (s1 - 1.0).max(0.0).sqrt();
    let c = (s1 - s3).sqrt();
    let u1 = (v1 * a + v3 * b) / c;
    let u2 = (v1 * a - v3 * b) / c;
    let mut candidates = Vec::with_capacity(4);
    for u in [u1, u2] {
        let uu = Mat3::from_columns(&[v2, u, v2.cross(&u)]);
        let (hv, hu) = (h * v2, h * u);
        let ww = Mat3::from_columns(&[hv, hu, hv.cross(&hu)]);
        let r = ww * uu.transpose();
        let n = v2.cross(&u).normalize();
        let t = (h - r) * n;
        candidates.push(HomographyCandidate { r, t_over_d: t, n });
        candidates.push(HomographyCandidate { r, t_over_d: -t, n: -n });
    }
    Ok(DecomposedHomography { candidates, normal_reliable: true })
}

/// Midpoint of the common perpendicular of the two viewing rays, in the
/// first camera's frame.
pub fn triangulate(k1: &CameraIntrinsics, k2: &CameraIntrinsics, pose2: &Pose, x1: &Vec2, x2: &Vec2) -> Result<Vec3> {
    let d1 = k1.ray(x1).normalize();
    let d2 = (pose2.r.transpose() * k2.ray(x2)).normalize();
    let c2 = pose2.center();
    let cross = d1.cross(&d2);
    if cross.norm() < MIN_RAY_ANGLE.sin() {
        return Err(Error::ParallelRays);
    }
    // Solve s d1 - u d2 = c2 in the least-squares sense.
    let b = d1.dot(&d2);
    let (p, q) = (d1.dot(&c2), d2.dot(&c2));
    let den = 1.0 - b * b;
    let s = (p - b * q) / den;
    let u = (b * p - q) / den;
    Ok((d1 * s + c2 + d2 * u) * 0.5)
}

/// Rigid transform `y = R x + t` best aligning three or more point pairs.
pub fn kabsch(x: &[Vec3], y: &[Vec3]) -> Pose {
    let n = x.len() as f64;
    let cx = x.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let cy = y.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let mut m = Mat3::zeros();
    for (p, q) in x.iter().zip(y) {
        m += (p - cx) * (q - cy).transpose();
    }
    let svd = m.svd(true, true);
    let (u, v) = (svd.u.unwrap(), svd.v_t.unwrap().transpose());
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    Pose::new(r, cy - r * cx)
}

/// All real P3P poses (Grunert's quartic, then Kabsch) of a camera with
/// intrinsics `k` observing `world` at `obs`.
pub fn p3p(k: &CameraIntrinsics, world: &[Vec3; 3], obs: &[Vec2; 3]) -> Result<Vec<Pose>> {
    let (p1, p2, p3) = (world[0], world[1], world[2]);
    let area = (p2 - p1).cross(&(p3 - p1)).norm();
    let scale = (p2 - p1).norm().max((p3 - p1).norm()).max((p3 - p2).norm());
    if !(area > 1e-10 * scale * scale) {
        return Err(Error::CollinearPoints);
    }
    let j = obs.map(|x| k.ray(&x).normalize());
    let a2 = (p2 - p3).norm_squared();
    let b2 = (p1 - p3).norm_squared();
    let c2 = (p1 - p2).norm_squared();
    let ca = j[1].dot(&j[2]);
    let cb = j[0].dot(&j[2]);
    let cg = j[0].dot(&j[1]);

    let amc = (a2 - c2) / b2;
    let apc = (a2 + c2) / b2;
    let bmc = (b2 - c2) / b2;
    let bma = (b2 - a2) / b2;
    let c2b = c2 / b2;
    let a2b = a2 / b2;
    let a4 = (amc - 1.0).powi(2) - 4.0 * c2b * ca * ca;
    let a3 = 4.0 * (amc * (1.0 - amc) * cb - (1.0 - apc) * ca * cg + 2.0 * c2b * ca * ca * cb);
    let a2c = 2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cb * cb + 2.0 * bmc * ca * ca - 4.0 * apc * ca * cb * cg
        + 2.0 * bma * cg * cg);
    let a1 = 4.0 * (-amc * (1.0 + amc) * cb + 2.0 * a2b * cg * cg * cb - (1.0 - apc) * ca * cg);
    let a0 = (1.0 + amc).powi(2) - 4.0 * a2b * cg * cg;
    let quartic = UniPoly::new(alloc::vec![a0, a1, a2c, a3, a4]);
    if quartic.is_zero() {
        return Err(Error::NoSolution);
    }
    let roots = polynomial_roots(&quartic).map_err(|_| Error::NoSolution)?;
    let mut real: Vec<f64> = roots.iter().filter(|z| z.im.abs() <= 1e-6 * z.re.abs().max(1.0)).map(|z| z.re).collect();
    real.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // A double root splits into a pair about sqrt(eps) apart whose mean is
    // accurate; simple roots are polished by Newton.
    let mut merged: Vec<f64> = Vec::with_capacity(real.len());
    let mut i = 0;
    while i < real.len() {
        if i + 1 < real.len() && real[i + 1] - real[i] <= 1e-5 * real[i].abs().max(1.0) {
            merged.push(0.5 * (real[i] + real[i + 1]));
            i += 2;
            continue;
        }
        let mut v = real[i];
        for _ in 0..3 {
            let (p, dp) = quartic.eval_with_derivative(v);
            if dp == 0.0 {
                break;
            }
            v -= p / dp;
        }
        merged.push(v);
        i += 1;
    }
    let mut poses = Vec::new();
    for v in merged {
        if v <= 0.0 {
            continue;
        }
        // s2 = u s1, s3 = v s1: the b-equation fixes s1, the c-equation gives
        // two candidates for u and the a-equation picks one.
        let q = 1.0 + v * v - 2.0 * v * cb;
        if !(q > 0.0) {
            continue;
        }
        let s1sq = b2 / q;
        let disc = cg * cg - 1.0 + c2 / s1sq;
        if disc < -1e-9 {
            continue;
        }
        let root = disc.max(0.0).sqrt();
        let Some((u, err)) = [cg + root, cg - root]
            .into_iter()
            .filter(|u| *u > 0.0)
            .map(|u| (u, (s1sq * (u * u + v * v - 2.0 * u * v * ca) - a2).abs() / a2))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
        else {
            continue;
        };
        if err > 1e-4 {
            continue;
        }
        let s1 = s1sq.sqrt();
        let cam = [j[0] * s1, j[1] * (u * s1), j[2] * (v * s1)];
        let pose = kabsch(world, &cam);
        if poses.iter().any(|p: &Pose| (p.r - pose.r).norm() < 1e-9 && (p.t - pose.t).norm() < 1e-9 * pose.t.norm().max(1.0)) {
            continue;
        }
        poses.push(pose);
    }
    if poses.is_empty() {
        return Err(Error::NoSolution);
    }
    Ok(poses)
}

/// `F = Kj^-T [t]x R Ki^-1` for the relative pose `i -> j`, unit Frobenius
/// norm, so that `xj^T F xi = 0`.
pub fn fundamental_from_posed_pair(ki: &CameraIntrinsics, kj: &CameraIntrinsics, rel: &Pose) -> Result<Mat3> {
    if !(rel.t.norm() > 1e-12) {
        return Err(Error::ZeroBaseline);
    }
    let f = kj.inverse().transpose() * skew(&rel.t) * rel.r * ki.inverse();
    Ok(f / f.norm())
}

/// First-order geometric epipolar error (squared, pixels^2) of `xi <-> xj`.
pub fn sampson_error(f: &Mat3, xi: &Vec2, xj: &Vec2) -> f64 {
    let a = Vec3::new(xi.x, xi.y, 1.0);
    let b = Vec3::new(xj.x, xj.y, 1.0);
    let fa = f * a;
    let fb = f.transpose() * b;
    let e = b.dot(&fa);
    let den = fa.x * fa.x + fa.y * fa.y + fb.x * fb.x + fb.y * fb.y;
    e * e / den.max(1e-18)
}

/// Calibrated three-view model. Poses map the first camera's frame to each
/// camera's frame; `pose2.t` has unit norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeViewModel {
    pub case: Case,
    pub f: [f64; 3],
    #[serde(with = "pose_serde")]
    pub pose2: Pose,
    #[serde(with = "pose_serde")]
    pub pose3: Pose,
    pub score: f64,
    pub inlier_mask: Vec<bool>,
}

/// Image pairs `(1, 2)`, `(1, 3)`, `(2, 3)` in the order used throughout.
pub const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

impl ThreeViewModel {
    pub fn intrinsics(&self) -> [CameraIntrinsics; 3] {
        self.f.map(CameraIntrinsics::new)
    }

    pub fn poses(&self) -> [Pose; 3] {
        [Pose::identity(), self.pose2, self.pose3]
    }

    /// Fundamental matrices of the pairs in [`PAIRS`].
    pub fn fundamentals(&self) -> Result<[Mat3; 3]> {
        let k = self.intrinsics();
        let p = self.poses();
        let mut out = [Mat3::zeros(); 3];
        for (o, &(i, j)) in out.iter_mut().zip(&PAIRS) {
            *o = fundamental_from_posed_pair(&k[i], &k[j], &p[i].relative_to(&p[j]))?;
        }
        Ok(out)
    }
}

/// Pairwise Sampson errors of one triplet under the given fundamentals.
pub fn triplet_errors(fs: &[Mat3; 3], t: &PointTriplet) -> [f64; 3] {
    core::array::from_fn(|k| {
        let (i, j) = PAIRS[k];
        sampson_error(&fs[k], t.view(i), t.view(j))
    })
}

/// Indices of the three sample points spanning the largest triangle in the
/// first view.
fn widest_triple(sample: &[PointTriplet; 4]) -> [usize; 3] {
    let mut best = ([0, 1, 2], -1.0);
    for skip in 0..4 {
        let idx: Vec<usize> = (0..4).filter(|&i| i != skip).collect();
        let (a, b, c) = (sample[idx[0]].x1, sample[idx[1]].x1, sample[idx[2]].x1);
        let area = ((b - a).perp(&(c - a))).abs();
        if area > best.1 {
            best = ([idx[0], idx[1], idx[2]], area);
        }
    }
    best.0
}

fn collinear_in_any_view(sample: &[PointTriplet; 4]) -> bool {
    (0..3).any(|v| {
        let p: Vec<Vec2> = sample.iter().map(|t| *t.view(v)).collect();
        let scale = p.iter().map(|x| (x - p[0]).norm()).fold(0.0, f64::max);
        (0..4).any(|skip| {
            let q: Vec<&Vec2> = p.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, x)| x).collect();
            ((q[1] - q[0]).perp(&(q[2] - q[0]))).abs() <= 1e-9 * scale * scale
        })
    })
}

/// Candidate three-view models for a focal solution and its minimal sample:
/// both plane-compatible decompositions of `H2`, three triangulated points
/// and every P3P pose of the third camera. Candidates whose pairwise Sampson
/// error on any sample triplet exceeds `sample_tol` are dropped. Scores are
/// left at infinity.
pub fn build_model(g2: &Homography2D, sol: &FocalSolution, sample: &[PointTriplet; 4], sample_tol: f64) -> Result<Vec<ThreeViewModel>> {
    if collinear_in_any_view(sample) {
        return Err(Error::RejectSample);
    }
    let f = sol.focals();
    if f.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::RejectSample);
    }
    let k = f.map(CameraIntrinsics::new);
    let support: Vec<(Vec2, Vec2)> = sample.iter().map(|t| (t.x1, t.x2)).collect();
    let h2 = euclidean_from_image(g2, &k[0], &k[1], &support).map_err(|_| Error::RejectSample)?;
    let dec = decompose_homography(&h2, &support, &k[0], &k[1]).map_err(|_| Error::RejectSample)?;
    if !dec.normal_reliable {
        return Err(Error::RejectSample);
    }
    let tri = widest_triple(sample);
    let mut models = Vec::new();
    for cand in &dec.candidates {
        let norm = cand.t_over_d.norm();
        if !(norm > 1e-12) {
            continue;
        }
        let pose2 = Pose::new(cand.r, cand.t_over_d / norm);
        let mut pts = [Vec3::zeros(); 4];
        let mut ok = true;
        for (p, t) in pts.iter_mut().zip(sample) {
            match triangulate(&k[0], &k[1], &pose2, &t.x1, &t.x2) {
                Ok(x) if x.z > 0.0 && pose2.transform(&x).z > 0.0 => *p = x,
                _ => ok = false,
            }
        }
        if !ok {
            continue;
        }
        let world = tri.map(|i| pts[i]);
        let obs = tri.map(|i| sample[i].x3);
        let Ok(poses) = p3p(&k[2], &world, &obs) else { continue };
        for pose3 in poses {
            if pts.iter().any(|x| !(pose3.transform(x).z > 0.0)) {
                continue;
            }
            let model = ThreeViewModel {
                case: sol.case,
                f,
                pose2,
                pose3,
                score: f64::INFINITY,
                inlier_mask: Vec::new(),
            };
            let Ok(fs) = model.fundamentals() else { continue };
            if sample.iter().all(|t| triplet_errors(&fs, t).iter().all(|e| *e <= sample_tol)) {
                models.push(model);
            }
        }
    }
    if models.is_empty() {
        return Err(Error::RejectSample);
    }
    Ok(models)
}

mod pose_serde {
    use super::{Mat3, Pose, Vec3};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        r: [[f64; 3]; 3],
        t: [f64; 3],
    }

    pub fn serialize<S: Serializer>(p: &Pose, s: S) -> Result<S::Ok, S::Error> {
        let r = core::array::from_fn(|i| core::array::from_fn(|j| p.r[(i, j)]));
        Repr { r, t: [p.t.x, p.t.y, p.t.z] }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose, D::Error> {
        let Repr { r, t } = Repr::deserialize(d)?;
        Ok(Pose::new(Mat3::from_fn(|i, j| r[i][j]), Vec3::new(t[0], t[1], t[2])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euclidean_homography, image_homography, project, rotation_angle, rotation_from_axis_angle, Plane};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v3(rng: &mut impl Rng, s: f64) -> Vec3 {
        Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    /// Plane in front of camera 1 and two cameras looking roughly at it.
    struct Scene {
        k: [CameraIntrinsics; 3],
        poses: [Pose; 3],
        plane: Plane,
    }

    fn scene(rng: &mut impl Rng) -> Scene {
        let plane = Plane::new(Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0), 4.0 + rng.random_range(0.0..2.0));
        let k = [0, 1, 2].map(|_| CameraIntrinsics::new(rng.random_range(500.0..1500.0)));
        let mut pose = || Pose::new(rotation_from_axis_angle(&v3(rng, 0.15)), v3(rng, 0.6));
        let poses = [Pose::identity(), pose(), pose()];
        Scene { k, poses, plane }
    }

    fn plane_point(rng: &mut impl Rng, plane: &Plane) -> Vec3 {
        let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let z = (plane.d - plane.n.x * x - plane.n.y * y) / plane.n.z;
        Vec3::new(x, y, z)
    }

    fn triplet(s: &Scene, x: &Vec3) -> PointTriplet {
        let p: [Vec2; 3] = core::array::from_fn(|i| project(&s.k[i], &s.poses[i], x).unwrap());
        PointTriplet::new(p[0], p[1], p[2])
    }

    #[test]
    fn decomposition_contains_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = scene(&mut rng);
            let h = euclidean_homography(&s.poses[1], &s.plane);
            let all = decompose_all(&(h / 0.37)).unwrap();
            assert_eq!(all.candidates.len(), 4);
            let scale = {
                let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
                sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
                sv[1]
            };
            for c in &all.candidates {
                let rebuilt = c.r + c.t_over_d * c.n.transpose();
                assert!((rebuilt - h / scale).norm() < 1e-8);
                assert!((c.r.determinant() - 1.0).abs() < 1e-9);
            }
            let truth = all.candidates.iter().any(|c| {
                (c.r - s.poses[1].r).norm() < 1e-8
                    && (c.t_over_d * scale - s.poses[1].t / s.plane.d).norm() < 1e-8
                    && (c.n - s.plane.n).norm() < 1e-8
            });
            assert!(truth);
        }
    }

    #[test]
    fn cheirality_leaves_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut two = 0;
        for _ in 0..100 {
            let s = scene(&mut rng);
            let g = image_homography(&s.k[0], &s.k[1], &euclidean_homography(&s.poses[1], &s.plane));
            let support: Vec<(Vec2, Vec2)> = (0..4)
                .map(|_| {
                    let t = triplet(&s, &plane_point(&mut rng, &s.plane));
                    (t.x1, t.x2)
                })
                .collect();
            let h = euclidean_from_image(&g, &s.k[0], &s.k[1], &support).unwrap();
            let dec = decompose_homography(&h, &support, &s.k[0], &s.k[1]).unwrap();
            // One candidate per sign pair survives; spread-out support can
            // also rule out the mirror solution.
            assert!((1..=2).contains(&dec.candidates.len()));
            two += (dec.candidates.len() == 2) as usize;
            assert!(dec.candidates.iter().any(|c| (c.n - s.plane.n).norm() < 1e-8));
            // With a single support ray both sign pairs leave one candidate.
            let dec = decompose_homography(&h, &support[..1], &s.k[0], &s.k[1]).unwrap();
            assert_eq!(dec.candidates.len(), 2);
        }
        assert!(two >= 50, "{two}");
    }

    #[test]
    fn pure_rotation_flags_normal() {
        let r = rotation_from_axis_angle(&Vec3::new(0.1, -0.2, 0.05));
        let dec = decompose_all(&(r * 2.0)).unwrap();
        assert!(!dec.normal_reliable);
        assert_eq!(dec.candidates.len(), 1);
        assert_eq!(dec.candidates[0].t_over_d, Vec3::zeros());
        assert!((dec.candidates[0].r - r).norm() < 1e-12);
    }

    #[test]
    fn triangulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = scene(&mut rng);
            let x = plane_point(&mut rng, &s.plane) + v3(&mut rng, 0.3);
            let t = triplet(&s, &x);
            let est = triangulate(&s.k[0], &s.k[1], &s.poses[1], &t.x1, &t.x2).unwrap();
            assert!((est - x).norm() < 1e-8);
        }
        // Both optical axes, baseline along x: the point lies in the y = 0 plane.
        let k = CameraIntrinsics::new(100.0);
        let pose2 = Pose::new(rotation_from_axis_angle(&Vec3::new(0.0, -0.2, 0.0)), Vec3::new(-1.0, 0.0, 0.0));
        let x = triangulate(&k, &k, &pose2, &Vec2::zeros(), &Vec2::zeros()).unwrap();
        assert!(x.y.abs() < 1e-12);
        assert_eq!(
            triangulate(&k, &k, &Pose::identity(), &Vec2::new(3.0, 4.0), &Vec2::new(3.0, 4.0)),
            Err(Error::ParallelRays)
        );
    }

    #[test]
    fn p3p_recovers_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let k = CameraIntrinsics::new(rng.random_range(300.0..3000.0));
            let pose = Pose::new(rotation_from_axis_angle(&v3(&mut rng, 1.0)), v3(&mut rng, 1.0));
            let world: [Vec3; 3] = core::array::from_fn(|_| {
                let c = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(4.0..8.0));
                pose.r.transpose() * (c - pose.t)
            });
            let obs = world.map(|x| project(&k, &pose, &x).unwrap());
            let sols = p3p(&k, &world, &obs).unwrap();
            assert!(sols.len() <= 4);
            for p in &sols {
                for (x, o) in world.iter().zip(&obs) {
                    assert!((project(&k, p, x).unwrap() - o).norm() < 1e-6);
                }
            }
            let best = sols
                .iter()
                .map(|p| rotation_angle(&(p.r * pose.r.transpose())) + (p.t - pose.t).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-8, "{best}");
        }
    }

    #[test]
    fn p3p_symmetric_and_collinear() {
        let k = CameraIntrinsics::new(500.0);
        let world = [0.0f64, 120.0, 240.0].map(|a| {
            let a = a.to_radians();
            Vec3::new(a.cos(), a.sin(), 5.0)
        });
        let obs = world.map(|x| project(&k, &Pose::identity(), &x).unwrap());
        let sols = p3p(&k, &world, &obs).unwrap();
        assert!(sols.iter().any(|p| (p.r - Mat3::identity()).norm() < 1e-8 && p.t.norm() < 1e-8));
        // Mirror solutions of an on-axis equilateral triangle come in pairs of
        // equal rotation angle.
        let others: Vec<f64> = sols.iter().map(|p| rotation_angle(&p.r)).filter(|a| *a > 1e-6).collect();
        assert_eq!(others.len() % 2, 0, "{others:?}");

        let line = [Vec3::new(0.0, 0.0, 5.0), Vec3::new(1.0, 0.0, 5.0), Vec3::new(2.0, 0.0, 5.0)];
        let obs = line.map(|x| project(&k, &Pose::identity(), &x).unwrap());
        assert_eq!(p3p(&k, &line, &obs), Err(Error::CollinearPoints));
    }

    #[test]
    fn fundamental_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let s = scene(&mut rng);
            let rel = s.poses[1];
            let f = fundamental_from_posed_pair(&s.k[0], &s.k[1], &rel).unwrap();
            assert!(f.determinant().abs() < 1e-10);
            assert!((f.norm() - 1.0).abs() < 1e-12);
            for _ in 0..10 {
                let t = triplet(&s, &(plane_point(&mut rng, &s.plane) + v3(&mut rng, 0.5)));
                let e = Vec3::new(t.x2.x, t.x2.y, 1.0).dot(&(f * Vec3::new(t.x1.x, t.x1.y, 1.0)));
                assert!(e.abs() < 1e-9);
                assert!(sampson_error(&f, &t.x1, &t.x2) < 1e-12);
            }
            let inv = Pose::new(rel.r.transpose(), -(rel.r.transpose() * rel.t));
            let back2 = fundamental_from_posed_pair(&s.k[1], &s.k[0], &inv).unwrap();
            let ft = f.transpose();
            assert!((back2 - ft).norm() < 1e-10 || (back2 + ft).norm() < 1e-10);
        }
        let k = CameraIntrinsics::new(1.0);
        assert_eq!(fundamental_from_posed_pair(&k, &k, &Pose::identity()), Err(Error::ZeroBaseline));
    }

    #[test]
    fn sampson_unit_shift() {
        // Pure x translation: epipolar lines are horizontal, gradient only in y.
        let f = skew(&Vec3::new(1.0, 0.0, 0.0));
        let x1 = Vec2::new(0.3, 0.0);
        assert_eq!(sampson_error(&f, &x1, &Vec2::new(5.0, 0.0)), 0.0);
        // Each point alone carries a unit gradient: the squared distance of a
        // 1 px offset is split over both images.
        assert!((sampson_error(&f, &x1, &Vec2::new(5.0, 1.0)) - 0.5).abs() < 1e-12);
    }

    /// Exact squared distance to the epipolar variety by Gauss-Newton over
    /// the corrected first point, the second point projected onto its line.
    fn geometric_distance2(f: &Mat3, x1: &Vec2, x2: &Vec2) -> f64 {
        let residuals = |d: &Vec2| {
            let y = x1 + d;
            let l = f * Vec3::new(y.x, y.y, 1.0);
            let e = Vec3::new(x2.x, x2.y, 1.0).dot(&l) / (l.x * l.x + l.y * l.y).sqrt();
            Vec3::new(d.x, d.y, e)
        };
        let mut d = Vec2::zeros();
        for _ in 0..20 {
            let r = residuals(&d);
            let h = 1e-7;
            let jx = (residuals(&(d + Vec2::new(h, 0.0))) - residuals(&(d - Vec2::new(h, 0.0)))) / (2.0 * h);
            let jy = (residuals(&(d + Vec2::new(0.0, h))) - residuals(&(d - Vec2::new(0.0, h)))) / (2.0 * h);
            let j = nalgebra::Matrix3x2::from_columns(&[jx, jy]);
            let step = (j.transpose() * j).try_inverse().unwrap() * (j.transpose() * r);
            d -= step;
        }
        residuals(&d).norm_squared()
    }

    #[test]
    fn sampson_matches_geometric_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let s = scene(&mut rng);
            let f = fundamental_from_posed_pair(&s.k[0], &s.k[1], &s.poses[1]).unwrap();
            let t = triplet(&s, &(plane_point(&mut rng, &s.plane) + v3(&mut rng, 0.5)));
            let x2 = t.x2 + Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 0.05;
            let exact = geometric_distance2(&f, &t.x1, &x2);
            let sampson = sampson_error(&f, &t.x1, &x2);
            assert!((sampson - exact).abs() <= 1e-3 * exact, "{sampson} {exact}");
        }
    }

    #[test]
    fn build_model_recovers_scene() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let s = scene(&mut rng);
            let g2 = image_homography(&s.k[0], &s.k[1], &euclidean_homography(&s.poses[1], &s.plane));
            let sample: [PointTriplet; 4] = core::array::from_fn(|_| triplet(&s, &plane_point(&mut rng, &s.plane)));
            let sol = FocalSolution { f1: s.k[0].f, f2: s.k[1].f, f3: s.k[2].f, case: Case::IV };
            let models = build_model(&g2, &sol, &sample, 1e-8).unwrap();
            assert!(models.len() <= 8);
            let t2 = s.poses[1].t.norm();
            let found = models.iter().any(|m| {
                rotation_angle(&(m.pose2.r * s.poses[1].r.transpose())) < 1e-6
                    && rotation_angle(&(m.pose3.r * s.poses[2].r.transpose())) < 1e-6
                    && (m.pose2.t - s.poses[1].t / t2).norm() < 1e-6
                    && (m.pose3.t - s.poses[2].t / t2).norm() < 1e-6
            });
            assert!(found);
            for m in &models {
                let fs = m.fundamentals().unwrap();
                for t in &sample {
                    assert!(triplet_errors(&fs, t).iter().all(|e| *e < 1e-8));
                }
            }
        }
    }

    #[test]
    fn build_model_rejects_collinear_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = scene(&mut rng);
        let g2 = image_homography(&s.k[0], &s.k[1], &euclidean_homography(&s.poses[1], &s.plane));
        let a = plane_point(&mut rng, &s.plane);
        let b = plane_point(&mut rng, &s.plane);
        let c = plane_point(&mut rng, &s.plane);
        let sample = [a, b, (a + b) * 0.5, c].map(|x| triplet(&s, &x));
        let sol = FocalSolution { f1: s.k[0].f, f2: s.k[1].f, f3: s.k[2].f, case: Case::IV };
        assert_eq!(build_model(&g2, &sol, &sample, 1e-8), Err(Error::RejectSample));
    }
}
