//! Forward-model check of a generator table.

use homfocal_core::constraints::{compute_q, Constraints};
use homfocal_core::generators::GeneratorTable;
use homfocal_core::geometry::{euclidean_homography, image_homography, rotation_from_axis_angle, CameraIntrinsics, Plane, Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub n_generators: usize,
    pub degrees: Vec<u32>,
    pub instances: usize,
    /// Largest generator value divided by its absolute term sum.
    pub max_residual: f64,
}

impl VerifyReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual < tol
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let w = random_unit(rng) * rng.random_range(0.0..1.5);
    let t = random_unit(rng) * rng.random_range(0.1..2.0);
    Pose::new(rotation_from_axis_angle(&w), t)
}

/// Evaluates every generator on `instances` random exact plane-induced
/// homography pairs with random focals.
pub fn verify_generators(table: GeneratorTable, instances: usize, seed: u64) -> Result<VerifyReport> {
    let degrees = table.generators.iter().map(|g| g.degree()).collect();
    let n_generators = table.len();
    let constraints = Constraints::new(table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_residual = 0.0f64;
    for _ in 0..instances {
        let k: [CameraIntrinsics; 3] = core::array::from_fn(|_| CameraIntrinsics::new(rng.random_range(300.0..3000.0)));
        let plane = Plane::new(random_unit(&mut rng), rng.random_range(1.0..5.0));
        let q: [_; 2] = core::array::from_fn(|j| {
            let h = euclidean_homography(&random_pose(&mut rng), &plane);
            compute_q(&image_homography(&k[0], &k[j + 1], &h), &k[0], &k[j + 1])
        });
        for r in constraints.evaluate(&q[0], &q[1]) {
            max_residual = max_residual.max(r.abs());
        }
    }
    Ok(VerifyReport { n_generators, degrees, instances, max_residual })
}
