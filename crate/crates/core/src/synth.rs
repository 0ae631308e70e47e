//! Synthetic three-view scenes: a dominant plane with optional off-plane
//! points, three cameras with overlapping views, pixel noise and shuffled
//! outliers.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, Mat3, Plane, PointTriplet, Pose, Vec2, Vec3};
use crate::solvers::Case;

/// Scene regenerations before giving up.
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_points: usize,
    /// Fraction of points on the plane.
    pub planar_fraction: f64,
    /// Gaussian pixel noise standard deviation.
    pub noise_sigma: f64,
    pub inlier_ratio: f64,
    pub f_range: (f64, f64),
    pub image_size: (f64, f64),
    /// Distance between consecutive camera centers relative to the scene
    /// distance.
    pub baseline_fraction: f64,
    pub case: Case,
    pub n_scenes: usize,
    pub rng_seed: u64,
    /// All three cameras share the reference orientation.
    pub pure_translation: bool,
    pub placement: Placement,
}

/// How camera centers are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// A random walk with steps of `baseline_fraction` times the scene
    /// distance; every camera looks at a point of the patch.
    Baseline,
    /// Independent random directions within 60 degrees of the plane normal,
    /// each camera at the distance where the patch spans 70% of its image
    /// height.
    Hemisphere,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_points: 200,
            planar_fraction: 1.0,
            noise_sigma: 0.0,
            inlier_ratio: 0.75,
            f_range: (300.0, 3000.0),
            image_size: (1920.0, 1080.0),
            baseline_fraction: 0.1,
            case: Case::I,
            n_scenes: 100,
            rng_seed: 0,
            pure_translation: false,
            placement: Placement::Baseline,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.planar_fraction) || !unit(self.inlier_ratio) {
            return Err(Error::InvalidConfig("fractions must lie in [0, 1]"));
        }
        if self.n_points < 4 || !(self.noise_sigma >= 0.0) || !(self.baseline_fraction > 0.0) {
            return Err(Error::InvalidConfig("sizes must be positive"));
        }
        if !(self.f_range.0 > 0.0 && self.f_range.0 <= self.f_range.1) {
            return Err(Error::InvalidConfig("focal range"));
        }
        if !(self.image_size.0 > 0.0 && self.image_size.1 > 0.0) {
            return Err(Error::InvalidConfig("image size must be positive"));
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        (self.image_size.0 * self.image_size.0 + self.image_size.1 * self.image_size.1).sqrt()
    }
}

/// Ground truth of a scene, in the reference camera's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub f: [f64; 3],
    pub poses: [Pose; 3],
    pub plane: Plane,
    pub points: Vec<Vec3>,
    pub on_plane: Vec<bool>,
    /// False for triplets corrupted by shuffling.
    pub inlier_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub triplets: Vec<PointTriplet>,
    pub truth: SceneTruth,
}

/// Focal lengths tied according to the case.
fn sample_focals(rng: &mut impl Rng, case: Case, range: (f64, f64)) -> [f64; 3] {
    let mut f = || if range.0 < range.1 { rng.random_range(range.0..=range.1) } else { range.0 };
    let (a, b, c) = (f(), f(), f());
    match case {
        Case::I => [a; 3],
        Case::II | Case::III => [a, b, b],
        Case::IV => [a, b, c],
    }
}

fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// World-to-camera rotation looking from `center` at `target` with a random
/// roll.
fn look_at(rng: &mut impl Rng, center: &Vec3, target: &Vec3) -> Mat3 {
    let z = (target - center).normalize();
    let up = if z.y.abs() < 0.9 { Vec3::y() } else { Vec3::x() };
    let x0 = up.cross(&z).normalize();
    let y0 = z.cross(&x0);
    let roll = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
    let (s, c) = roll.sin_cos();
    let x = x0 * c + y0 * s;
    let y = z.cross(&x);
    Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()])
}

fn visible(x: &Vec2, size: (f64, f64)) -> bool {
    x.x.abs() <= 0.5 * size.0 && x.y.abs() <= 0.5 * size.1
}

/// Generates scene `index` of the configuration; scenes are independent RNG
/// streams of `rng_seed`.
pub fn generate_scene(cfg: &SynthConfig, index: u64) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(index);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(scene) = try_scene(cfg, &mut rng) {
            return Ok(scene);
        }
    }
    Err(Error::GenerationFailed(MAX_ATTEMPTS))
}

fn try_scene(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Option<Scene> {
    let f = sample_focals(rng, cfg.case, cfg.f_range);
    let k = f.map(CameraIntrinsics::new);
    let dist = 1.0;
    let fmax = f.iter().cloned().fold(0.0, f64::max);
    let extent = match cfg.placement {
        // Patch filling most of the narrowest view.
        Placement::Baseline => 0.8 * dist * cfg.image_size.1.min(cfg.image_size.0) / fmax,
        Placement::Hemisphere => 1.0,
    };

    let normal = unit_vector(rng);
    let u = normal.cross(&if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() }).normalize();
    let v = normal.cross(&u);
    let patch = |rng: &mut ChaCha8Rng, s: f64| u * (rng.random_range(-0.5..0.5) * s) + v * (rng.random_range(-0.5..0.5) * s);

    // Directions within 60 degrees of the plane normal.
    let view_dir = |rng: &mut ChaCha8Rng| loop {
        let d = unit_vector(rng);
        if d.dot(&normal) >= 0.5 {
            break d;
        }
    };
    let mut centers = [view_dir(rng) * dist; 3];
    match cfg.placement {
        Placement::Baseline => {
            for j in 1..3 {
                centers[j] = centers[j - 1] + unit_vector(rng) * (cfg.baseline_fraction * dist);
            }
        }
        Placement::Hemisphere => {
            for j in 0..3 {
                centers[j] = view_dir(rng) * (f[j] * extent / (0.7 * cfg.image_size.1.min(cfg.image_size.0)));
            }
        }
    }
    let mut rot = [Mat3::identity(); 3];
    for j in 0..3 {
        let target = patch(rng, 0.2 * extent);
        rot[j] = look_at(rng, &centers[j], &target);
        if cfg.pure_translation && j > 0 {
            rot[j] = rot[0];
        }
    }
    let world: [Pose; 3] = core::array::from_fn(|j| Pose::new(rot[j], -(rot[j] * centers[j])));
    // Express everything in the reference camera's frame.
    let to_ref = world[0];
    let poses: [Pose; 3] = core::array::from_fn(|j| to_ref.relative_to(&world[j]));
    let n_ref = to_ref.r * normal;
    let d_ref = n_ref.dot(&to_ref.t);
    if d_ref.abs() < 1e-9 {
        return None;
    }
    let plane = Plane::new(n_ref, d_ref);

    let n_plane = (cfg.planar_fraction * cfg.n_points as f64).round() as usize;
    let mut points = Vec::with_capacity(cfg.n_points);
    let mut on_plane = Vec::with_capacity(cfg.n_points);
    let mut clean = Vec::with_capacity(cfg.n_points);
    let mut tries = 0;
    while points.len() < cfg.n_points {
        tries += 1;
        if tries > 50 * cfg.n_points {
            return None;
        }
        let planar = points.len() < n_plane;
        let mut xw = patch(rng, extent);
        if !planar {
            xw += normal * (rng.random_range(-0.25..0.25) * extent);
        }
        let x = to_ref.transform(&xw);
        let mut obs = [Vec2::zeros(); 3];
        let mut ok = true;
        for j in 0..3 {
            match project(&k[j], &poses[j], &x) {
                Ok(p) if visible(&p, cfg.image_size) && poses[j].transform(&x).z > 0.05 * dist => obs[j] = p,
                _ => ok = false,
            }
        }
        if ok {
            points.push(x);
            on_plane.push(planar);
            clean.push(obs);
        }
    }

    // Outliers: cyclic shifts of views 2 and 3 within a random subset.
    let n_out = cfg.n_points - (cfg.inlier_ratio * cfg.n_points as f64).round() as usize;
    let mut inlier_mask = alloc::vec![true; cfg.n_points];
    let mut observed = clean.clone();
    if n_out >= 2 {
        let out = rand::seq::index::sample(rng, cfg.n_points, n_out).into_vec();
        for (pos, &i) in out.iter().enumerate() {
            inlier_mask[i] = false;
            observed[i][1] = clean[out[(pos + 1) % n_out]][1];
            observed[i][2] = clean[out[(pos + 2) % n_out]][2];
        }
    }
    let noise = Normal::new(0.0, cfg.noise_sigma).ok()?;
    let triplets = observed
        .iter()
        .map(|o| {
            let mut jitter = |p: Vec2| {
                if cfg.noise_sigma > 0.0 {
                    p + Vec2::new(noise.sample(rng), noise.sample(rng))
                } else {
                    p
                }
            };
            PointTriplet::new(jitter(o[0]), jitter(o[1]), jitter(o[2]))
        })
        .collect();
    Some(Scene { triplets, truth: SceneTruth { f, poses, plane, points, on_plane, inlier_mask } })
}
