//! Wall-clock timing and multi-threaded estimation.

use std::time::Instant;

use homfocal_core::geometry::PointTriplet;
use homfocal_core::ransac::{Clock, EstimationResult, Estimator, RansacConfig};
use homfocal_core::solvers::Case;
use rayon::prelude::*;

use crate::error::Result;

/// Seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock {
    origin: Instant,
}

impl StdClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Iterations evaluated together per thread.
pub const ITERATIONS_PER_THREAD: usize = 4;

/// LO-RANSAC with hypotheses generated on the rayon pool; the result is
/// identical to the sequential estimate.
pub fn estimate_parallel(
    triplets: &[PointTriplet],
    case: Case,
    known_f1: Option<f64>,
    config: &RansacConfig,
    clock: &dyn Clock,
) -> Result<EstimationResult> {
    let est = Estimator::new(triplets, case, known_f1, config)?;
    let batch = rayon::current_num_threads() * ITERATIONS_PER_THREAD;
    Ok(est.run(batch, clock, |e, range| range.into_par_iter().map(|i| e.hypothesis(i, clock)).collect())?)
}
