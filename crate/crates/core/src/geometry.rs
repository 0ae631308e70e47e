//! Basic multi-view entities and the exact forward models used by the
//! solvers, the oracles and the synthetic generator.
//!
//! All pixel coordinates are *centered*: the principal point has already been
//! subtracted, so a camera is fully described by one focal length and
//! `K = diag(f, f, 1)`.

use nalgebra::{Matrix3, SMatrix, Vector2, Vector3};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Pinhole intrinsics with square pixels and a centered principal point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub f: f64,
}

impl CameraIntrinsics {
    pub fn new(f: f64) -> Self {
        debug_assert!(f > 0.0, "focal length must be positive");
        Self { f }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(self.f, self.f, 1.0))
    }

    pub fn inverse(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(1.0 / self.f, 1.0 / self.f, 1.0))
    }

    /// Back-projects a pixel to a ray direction with unit depth.
    pub fn ray(&self, x: &Vec2) -> Vec3 {
        Vec3::new(x.x / self.f, x.y / self.f, 1.0)
    }
}

/// Rigid transform taking reference-frame coordinates to camera coordinates:
/// `X_cam = R * X + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub r: Mat3,
    pub t: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self { r: Mat3::identity(), t: Vec3::zeros() }
    }

    pub fn new(r: Mat3, t: Vec3) -> Self {
        Self { r, t }
    }

    pub fn transform(&self, x: &Vec3) -> Vec3 {
        self.r * x + self.t
    }

    /// Pose of `other` relative to `self`, i.e. the map from this camera's
    /// frame to the frame of `other`.
    pub fn relative_to(&self, other: &Pose) -> Pose {
        let r = other.r * self.r.transpose();
        Pose { r, t: other.t - r * self.t }
    }

    pub fn center(&self) -> Vec3 {
        -(self.r.transpose() * self.t)
    }
}

/// Plane `n . X = d` in the reference camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub n: Vec3,
    pub d: f64,
}

impl Plane {
    /// Builds a plane, normalizing `n` and flipping it so that `d > 0`.
    pub fn new(n: Vec3, d: f64) -> Self {
        let norm = n.norm();
        let (n, d) = (n / norm, d / norm);
        if d < 0.0 {
            Self { n: -n, d: -d }
        } else {
            Self { n, d }
        }
    }
}

/// One point observed in all three views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTriplet {
    pub x1: Vec2,
    pub x2: Vec2,
    pub x3: Vec2,
}

impl PointTriplet {
    pub fn new(x1: Vec2, x2: Vec2, x3: Vec2) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn view(&self, i: usize) -> &Vec2 {
        match i {
            0 => &self.x1,
            1 => &self.x2,
            _ => &self.x3,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { x1: self.x1 * s, x2: self.x2 * s, x3: self.x3 * s }
    }
}

/// A 2D homography stored with unit Frobenius norm and its largest-magnitude
/// entry positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography2D(Mat3);

impl Homography2D {
    pub fn from_matrix(m: Mat3) -> Self {
        let norm = m.norm();
        let mut m = m / norm;
        let mut largest = 0.0;
        for v in m.iter() {
            if v.abs() > f64::abs(largest) {
                largest = *v;
            }
        }
        if largest < 0.0 {
            m = -m;
        }
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transfer(&self, x: &Vec2) -> Vec2 {
        let y = self.0 * Vec3::new(x.x, x.y, 1.0);
        Vec2::new(y.x / y.z, y.y / y.z)
    }

    /// Conjugates the map for coordinates scaled by `s` in every view.
    pub fn rescaled(&self, s: f64) -> Self {
        let a = Mat3::from_diagonal(&Vec3::new(s, s, 1.0));
        let b = Mat3::from_diagonal(&Vec3::new(1.0 / s, 1.0 / s, 1.0));
        Self::from_matrix(a * self.0 * b)
    }
}

/// Cross-product matrix: `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `H = R + (t / d) n^T`.
pub fn euclidean_homography(pose: &Pose, plane: &Plane) -> Mat3 {
    pose.r + (pose.t / plane.d) * plane.n.transpose()
}

/// `G ~ K_j H K_1^{-1}`, normalized.
pub fn image_homography(k1: &CameraIntrinsics, kj: &CameraIntrinsics, h: &Mat3) -> Homography2D {
    Homography2D::from_matrix(kj.matrix() * h * k1.inverse())
}

pub fn project(k: &CameraIntrinsics, pose: &Pose, x: &Vec3) -> Result<Vec2> {
    let xc = pose.transform(x);
    if !(xc.z > 0.0) {
        return Err(Error::NonPositiveDepth(xc.z));
    }
    Ok(Vec2::new(k.f * xc.x / xc.z, k.f * xc.y / xc.z))
}

/// Isotropic conditioning: centroid to origin, mean distance sqrt(2).
fn conditioning(points: &[Vec2]) -> Mat3 {
    let n = points.len() as f64;
    let c = points.iter().fold(Vec2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { core::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Mat3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn apply(t: &Mat3, p: &Vec2) -> Vec2 {
    let q = t * Vec3::new(p.x, p.y, 1.0);
    Vec2::new(q.x / q.z, q.y / q.z)
}

/// Direct linear transform from `src -> dst` correspondences (at least 4).
pub fn dlt_homography(src: &[Vec2], dst: &[Vec2]) -> Result<Homography2D> {
    let n = src.len();
    if n < 4 || dst.len() != n {
        return Err(Error::InsufficientData { needed: 4, got: n.min(dst.len()) });
    }
    let ts = conditioning(src);
    let td = conditioning(dst);

    let h = if n == 4 {
        // Minimal case: a zero row makes the system square so the full right
        // singular basis is available.
        let mut a = SMatrix::<f64, 9, 9>::zeros();
        for i in 0..4 {
            fill_rows(&mut a, 2 * i, &apply(&ts, &src[i]), &apply(&td, &dst[i]));
        }
        null_vector_9(a)?
    } else {
        let mut ata = SMatrix::<f64, 9, 9>::zeros();
        let mut rows = SMatrix::<f64, 9, 9>::zeros();
        for (s, d) in src.iter().zip(dst) {
            fill_rows(&mut rows, 0, &apply(&ts, s), &apply(&td, d));
            let r2 = rows.fixed_rows::<2>(0);
            ata += r2.transpose() * r2;
        }
        null_vector_9(ata)?
    };
    let hn = Mat3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    // Three collinear points admit an exact rank-deficient fit.
    let sv = hn.singular_values();
    if sv.min() < 1e-8 * sv.max() {
        return Err(Error::DegenerateConfiguration);
    }
    let td_inv = td.try_inverse().ok_or(Error::DegenerateConfiguration)?;
    Ok(Homography2D::from_matrix(td_inv * hn * ts))
}

fn fill_rows(a: &mut SMatrix<f64, 9, 9>, r: usize, s: &Vec2, d: &Vec2) {
    let (x, y) = (s.x, s.y);
    let (u, v) = (d.x, d.y);
    let row0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
    let row1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
    for c in 0..9 {
        a[(r, c)] = row0[c];
        a[(r + 1, c)] = row1[c];
    }
}

fn null_vector_9(a: SMatrix<f64, 9, 9>) -> Result<[f64; 9]> {
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateConfiguration)?;
    let sv = &svd.singular_values;
    let mut order: [usize; 9] = core::array::from_fn(|i| i);
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(core::cmp::Ordering::Equal));
    let largest = sv[order[0]];
    // The minimal system has eight informative rows: a second vanishing
    // singular value means a collinear sample.
    if !(largest > 0.0) || sv[order[7]] < 1e-9 * largest {
        return Err(Error::DegenerateConfiguration);
    }
    let row = v_t.row(order[8]);
    Ok(core::array::from_fn(|i| row[i]))
}

/// Rotation matrix from an axis-angle vector (Rodrigues).
pub fn rotation_from_axis_angle(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    if theta < 1e-12 {
        return Mat3::identity() + skew(w);
    }
    let k = skew(&(w / theta));
    Mat3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
}

/// Angle of a rotation matrix in radians.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let s = 0.5
        * Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    s.atan2(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        let w = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        rotation_from_axis_angle(&w)
    }

    fn random_vec(rng: &mut impl Rng) -> Vec3 {
        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    #[test]
    fn skew_matches_cross_product() {
        let s = skew(&Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(s, Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(skew(&v) * Vec3::new(4.0, 5.0, 6.0), Vec3::new(-3.0, 6.0, -3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let v = random_vec(&mut rng);
            assert_eq!(skew(&v) + skew(&v).transpose(), Mat3::zeros());
        }
    }

    #[test]
    fn euclidean_homography_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random_rotation(&mut rng);
        let plane = Plane::new(Vec3::new(0.3, -0.2, 1.0), 2.0);
        let h = euclidean_homography(&Pose::new(r, Vec3::zeros()), &plane);
        assert_relative_eq!(h, r, epsilon = 1e-15);

        let h = euclidean_homography(&Pose::new(Mat3::identity(), plane.n * plane.d), &plane);
        assert_relative_eq!(h, Mat3::identity() + plane.n * plane.n.transpose(), epsilon = 1e-14);
    }

    #[test]
    fn euclidean_homography_maps_plane_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pose = Pose::new(random_rotation(&mut rng), random_vec(&mut rng));
            let plane = Plane::new(random_vec(&mut rng), rng.random_range(0.5..3.0));
            let h = euclidean_homography(&pose, &plane);
            // Tangent basis of the plane.
            let a = plane.n.cross(&Vec3::new(1.0, 0.0, 0.0)).normalize();
            let b = plane.n.cross(&a);
            for _ in 0..10 {
                let x = plane.n * plane.d + a * rng.random_range(-2.0..2.0) + b * rng.random_range(-2.0..2.0);
                assert_relative_eq!(h * x, pose.transform(&x), epsilon = 1e-12, max_relative = 1e-12);
            }
            // Essential-matrix identities.
            assert_relative_eq!(skew(&pose.t) * h, skew(&pose.t) * pose.r, epsilon = 1e-12);
            assert_relative_eq!(
                skew(&plane.n) * h.transpose(),
                skew(&plane.n) * pose.r.transpose(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn image_homography_normalization() {
        let id = CameraIntrinsics::new(1.0);
        let g = image_homography(&id, &id, &Mat3::identity());
        assert_relative_eq!(*g.matrix(), Mat3::identity() / 3f64.sqrt(), epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = random_rotation(&mut rng);
        let k = CameraIntrinsics::new(700.0);
        let g = image_homography(&k, &k, &r);
        assert_relative_eq!(g.matrix().norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn image_homography_transfers_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k1 = CameraIntrinsics::new(rng.random_range(300.0..3000.0));
            let k2 = CameraIntrinsics::new(rng.random_range(300.0..3000.0));
            let pose = Pose::new(rotation_from_axis_angle(&(random_vec(&mut rng) * 0.2)), random_vec(&mut rng) * 0.3);
            let plane = Plane::new(Vec3::new(0.1, 0.2, 1.0), 5.0);
            let g = image_homography(&k1, &k2, &euclidean_homography(&pose, &plane));
            for _ in 0..10 {
                let x = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
                let x = Vec3::new(x.x, x.y, (plane.d - plane.n.x * x.x - plane.n.y * x.y) / plane.n.z);
                let m1 = project(&k1, &Pose::identity(), &x).unwrap();
                let m2 = project(&k2, &pose, &x).unwrap();
                assert!((g.transfer(&m1) - m2).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn projection_basics() {
        let k = CameraIntrinsics::new(100.0);
        let id = Pose::identity();
        assert_eq!(project(&k, &id, &Vec3::new(0.0, 0.0, 5.0)).unwrap(), Vec2::new(0.0, 0.0));
        assert_eq!(project(&k, &id, &Vec3::new(1.0, 0.0, 5.0)).unwrap(), Vec2::new(20.0, 0.0));
        assert!(matches!(
            project(&k, &id, &Vec3::new(0.0, 0.0, -1.0)),
            Err(Error::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn dlt_recovers_known_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let m = Mat3::identity() + Mat3::from_fn(|_, _| rng.random_range(-0.3..0.3));
            let m = Mat3::from_diagonal(&Vec3::new(900.0, 900.0, 1.0)) * m
                * Mat3::from_diagonal(&Vec3::new(1.0 / 800.0, 1.0 / 800.0, 1.0));
            let g = Homography2D::from_matrix(m);
            let src: alloc::vec::Vec<Vec2> = (0..4)
                .map(|_| Vec2::new(rng.random_range(-900.0..900.0), rng.random_range(-500.0..500.0)))
                .collect();
            let dst: alloc::vec::Vec<Vec2> = src.iter().map(|p| g.transfer(p)).collect();
            let est = dlt_homography(&src, &dst).unwrap();
            assert!((est.matrix() - g.matrix()).amax() < 1e-10);
        }
    }

    #[test]
    fn dlt_identity_and_collinear() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 1.0)];
        let g = dlt_homography(&pts, &pts).unwrap();
        assert_relative_eq!(*g.matrix(), Mat3::identity() / 3f64.sqrt(), epsilon = 1e-12);

        let bad = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0), Vec2::new(0.0, 1.0)];
        assert_eq!(dlt_homography(&bad, &pts), Err(Error::DegenerateConfiguration));
    }

    #[test]
    fn dlt_round_trip_through_scene() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let k1 = CameraIntrinsics::new(rng.random_range(300.0..3000.0));
            let k2 = CameraIntrinsics::new(rng.random_range(300.0..3000.0));
            let pose = Pose::new(rotation_from_axis_angle(&(random_vec(&mut rng) * 0.3)), random_vec(&mut rng) * 0.5);
            let plane = Plane::new(Vec3::new(random_vec(&mut rng).x * 0.3, 0.1, 1.0), 4.0);
            let expected = image_homography(&k1, &k2, &euclidean_homography(&pose, &plane));
            let mut src = alloc::vec::Vec::new();
            let mut dst = alloc::vec::Vec::new();
            while src.len() < 6 {
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let z = (plane.d - plane.n.x * a - plane.n.y * b) / plane.n.z;
                let x = Vec3::new(a, b, z);
                if let (Ok(m1), Ok(m2)) = (project(&k1, &Pose::identity(), &x), project(&k2, &pose, &x)) {
                    src.push(m1);
                    dst.push(m2);
                }
            }
            let est = dlt_homography(&src, &dst).unwrap();
            assert!((est.matrix() - expected.matrix()).amax() < 1e-8);
        }
    }
}
