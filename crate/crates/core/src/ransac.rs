//! LO-RANSAC over point triplets with a truncated Sampson score, FOV prior
//! filtering and Levenberg-Marquardt local optimization.
//!
//! Every iteration draws its sample from its own RNG stream keyed by the
//! iteration index, and hypotheses are merged in iteration order, so the
//! result does not depend on how iterations are batched or parallelized.

use alloc::vec::Vec;
use core::ops::Range;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dlt_homography, Mat3, PointTriplet, Vec2};
use crate::pose::{build_model, triplet_errors, ThreeViewModel};
use crate::refine::{levenberg_marquardt, LmOptions};
use crate::solvers::{Case, FocalSolution, FocalSolver, SolverOptions};

/// Triplets per minimal sample.
pub const SAMPLE_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub max_iterations: usize,
    pub min_iterations: usize,
    pub confidence: f64,
    pub sampson_threshold_px: f64,
    /// Accepted horizontal field of view in degrees for estimated focals.
    pub fov_filter: Option<(f64, f64)>,
    /// Image size in pixels; sets the solver's focal envelope and the FOV
    /// filter's width.
    pub image_size: (f64, f64),
    pub rng_seed: u64,
    pub local_optimization: bool,
    pub lo_max_lm_iters: usize,
    /// Cases III/IV null-vector ratio deviation.
    pub ratio_deviation: f64,
    /// Cases III/IV relative generator residual gate.
    pub residual_tol: f64,
    /// Cases I/II generator consistency gate.
    pub consistency_tol: Option<f64>,
    /// Gauss-Newton correction gate on all generators.
    pub step_tol: Option<f64>,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            min_iterations: 100,
            confidence: 0.9999,
            sampson_threshold_px: 3.0,
            fov_filter: None,
            image_size: (1920.0, 1080.0),
            rng_seed: 0,
            local_optimization: true,
            lo_max_lm_iters: 25,
            ratio_deviation: 0.1,
            residual_tol: 1e-2,
            consistency_tol: None,
            step_tol: None,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.min_iterations > self.max_iterations {
            return Err(Error::InvalidConfig("iteration bounds"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig("confidence must lie in (0, 1)"));
        }
        if !(self.sampson_threshold_px > 0.0) || !(self.ratio_deviation > 0.0) || !(self.residual_tol > 0.0) {
            return Err(Error::InvalidConfig("thresholds must be positive"));
        }
        if !(self.image_size.0 > 0.0 && self.image_size.1 > 0.0) {
            return Err(Error::InvalidConfig("image size must be positive"));
        }
        if let Some((lo, hi)) = self.fov_filter {
            if !(lo > 0.0 && lo < hi && hi < 180.0) {
                return Err(Error::InvalidConfig("FOV range"));
            }
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        let (w, h) = self.image_size;
        let mut o = SolverOptions::for_diagonal((w * w + h * h).sqrt());
        o.ratio_deviation = self.ratio_deviation;
        o.residual_tol = self.residual_tol;
        o.consistency_tol = self.consistency_tol;
        o.step_tol = self.step_tol;
        o
    }

    fn lm_options(&self) -> LmOptions {
        LmOptions { max_iterations: self.lo_max_lm_iters, ..LmOptions::default() }
    }
}

/// Horizontal field of view in degrees of focal `f` for an image `width`.
pub fn horizontal_fov(width: f64, f: f64) -> f64 {
    2.0 * (0.5 * width / f).atan().to_degrees()
}

/// Keeps solutions whose estimated focal lengths all imply a horizontal FOV
/// inside `range` (degrees). A known reference focal is not checked.
pub fn fov_filter(solutions: Vec<FocalSolution>, width: f64, range: Option<(f64, f64)>) -> Vec<FocalSolution> {
    let Some((lo, hi)) = range else { return solutions };
    solutions
        .into_iter()
        .filter(|s| {
            let estimated: &[f64] = match s.case {
                Case::I | Case::II => &[s.f2],
                Case::III => &[s.f1, s.f2],
                Case::IV => &[s.f2, s.f3],
            };
            estimated.iter().all(|&f| {
                let fov = horizontal_fov(width, f);
                fov >= lo && fov <= hi
            })
        })
        .collect()
}

/// Seconds spent per stage, summed over all hypotheses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub solver: f64,
    pub model: f64,
    pub scoring: f64,
    pub local_optimization: f64,
}

impl StageTiming {
    fn add(&mut self, o: &StageTiming) {
        self.solver += o.solver;
        self.model += o.model;
        self.scoring += o.scoring;
        self.local_optimization += o.local_optimization;
    }

    pub fn total(&self) -> f64 {
        self.solver + self.model + self.scoring + self.local_optimization
    }
}

/// Monotonic time source in seconds; the core crate has none of its own.
pub trait Clock: Sync {
    fn now(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub model: ThreeViewModel,
    /// Iterations merged before termination.
    pub iterations: usize,
    pub inlier_count: usize,
    /// `(iteration, score)` each time the best model improved.
    pub score_history: Vec<(usize, f64)>,
    pub timing: StageTiming,
}

/// Scored models from one iteration.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub iteration: usize,
    pub models: Vec<ThreeViewModel>,
    pub timing: StageTiming,
}

/// Whether all three pairwise Sampson errors of `t` are below `t2`
/// (squared pixels).
pub fn triplet_is_inlier(fs: &[Mat3; 3], t: &PointTriplet, t2: f64) -> bool {
    triplet_errors(fs, t).iter().all(|v| *v < t2)
}

/// Truncated score and inlier mask of a model over all triplets. Returns the
/// inlier count.
pub fn score_model(model: &mut ThreeViewModel, triplets: &[PointTriplet], threshold_px: f64) -> usize {
    let t2 = threshold_px * threshold_px;
    let Ok(fs) = model.fundamentals() else {
        model.score = f64::INFINITY;
        model.inlier_mask = alloc::vec![false; triplets.len()];
        return 0;
    };
    let mut score = 0.0;
    let mut mask = Vec::with_capacity(triplets.len());
    let mut count = 0;
    for t in triplets {
        let e = triplet_errors(&fs, t);
        let e = e.map(|v| if v.is_finite() { v } else { f64::INFINITY });
        score += e.iter().map(|v| v.min(t2)).sum::<f64>();
        let inlier = e.iter().all(|v| *v < t2);
        count += inlier as usize;
        mask.push(inlier);
    }
    model.score = score;
    model.inlier_mask = mask;
    count
}

/// LM on the inliers; the refined model is returned only if its truncated
/// score improved, with its inlier mask recomputed.
pub fn local_optimize(model: &ThreeViewModel, triplets: &[PointTriplet], config: &RansacConfig) -> ThreeViewModel {
    let inliers: Vec<PointTriplet> = triplets
        .iter()
        .zip(&model.inlier_mask)
        .filter(|(_, m)| **m)
        .map(|(t, _)| *t)
        .collect();
    if inliers.len() < SAMPLE_SIZE {
        return model.clone();
    }
    let (mut refined, _) = levenberg_marquardt(model, &inliers, &config.lm_options());
    score_model(&mut refined, triplets, config.sampson_threshold_px);
    if refined.score < model.score {
        refined
    } else {
        model.clone()
    }
}

/// Iterations needed to draw an all-inlier sample with the configured
/// confidence at inlier ratio `w`.
pub fn required_iterations(w: f64, confidence: f64) -> f64 {
    let p = w.powi(SAMPLE_SIZE as i32);
    if p >= 1.0 {
        return 0.0;
    }
    if p <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 - confidence).ln() / (1.0 - p).ln()
}

/// Prepared estimation problem; hypotheses are pure functions of the
/// iteration index.
pub struct Estimator<'a> {
    triplets: &'a [PointTriplet],
    case: Case,
    known_f1: Option<f64>,
    config: &'a RansacConfig,
    solver: FocalSolver,
}

impl<'a> Estimator<'a> {
    pub fn new(triplets: &'a [PointTriplet], case: Case, known_f1: Option<f64>, config: &'a RansacConfig) -> Result<Self> {
        config.validate()?;
        if triplets.len() < SAMPLE_SIZE {
            return Err(Error::InsufficientData { needed: SAMPLE_SIZE, got: triplets.len() });
        }
        let known_f1 = if case.needs_known_f1() {
            Some(known_f1.filter(|f| *f > 0.0).ok_or(Error::MissingKnownFocal)?)
        } else {
            None
        };
        let solver = FocalSolver::embedded().with_options(config.solver_options());
        Ok(Self { triplets, case, known_f1, config, solver })
    }

    pub fn config(&self) -> &RansacConfig {
        self.config
    }

    /// Indices of the minimal sample of an iteration.
    pub fn sample_indices(&self, iteration: usize) -> [usize; SAMPLE_SIZE] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed);
        rng.set_stream(iteration as u64);
        let idx = rand::seq::index::sample(&mut rng, self.triplets.len(), SAMPLE_SIZE);
        core::array::from_fn(|i| idx.index(i))
    }

    /// Samples, solves, builds and scores the models of one iteration.
    pub fn hypothesis(&self, iteration: usize, clock: &dyn Clock) -> Hypothesis {
        let mut timing = StageTiming::default();
        let idx = self.sample_indices(iteration);
        let sample: [PointTriplet; SAMPLE_SIZE] = idx.map(|i| self.triplets[i]);
        let t0 = clock.now();
        let solutions = self.solve_sample(&sample);
        let t1 = clock.now();
        timing.solver = t1 - t0;
        let Some((g2, solutions)) = solutions else {
            return Hypothesis { iteration, models: Vec::new(), timing };
        };
        let thr2 = self.config.sampson_threshold_px.powi(2);
        let mut models = Vec::new();
        for sol in &solutions {
            if let Ok(m) = build_model(&g2, sol, &sample, thr2) {
                models.extend(m);
            }
        }
        let t2 = clock.now();
        timing.model = t2 - t1;
        for m in &mut models {
            score_model(m, self.triplets, self.config.sampson_threshold_px);
        }
        timing.scoring = clock.now() - t2;
        Hypothesis { iteration, models, timing }
    }

    fn solve_sample(&self, sample: &[PointTriplet; SAMPLE_SIZE]) -> Option<(crate::geometry::Homography2D, Vec<FocalSolution>)> {
        let x1: [Vec2; SAMPLE_SIZE] = sample.map(|t| t.x1);
        let g2 = dlt_homography(&x1, &sample.map(|t| t.x2)).ok()?;
        let g3 = dlt_homography(&x1, &sample.map(|t| t.x3)).ok()?;
        let report = self.solver.solve(self.case, &g2, &g3, self.known_f1).ok()?;
        let solutions = fov_filter(report.solutions, self.config.image_size.0, self.config.fov_filter);
        Some((g2, solutions))
    }

    /// Runs the loop, asking `batch` for the hypotheses of consecutive
    /// iteration ranges of length `batch_size`.
    pub fn run<B>(&self, batch_size: usize, clock: &dyn Clock, mut batch: B) -> Result<EstimationResult>
    where
        B: FnMut(&Self, Range<usize>) -> Vec<Hypothesis>,
    {
        let cfg = self.config;
        let n = self.triplets.len() as f64;
        let mut best: Option<(ThreeViewModel, usize)> = None;
        let mut history = Vec::new();
        let mut timing = StageTiming::default();
        let mut iterations = 0;
        let mut next = 0;
        'outer: while next < cfg.max_iterations {
            let end = (next + batch_size.max(1)).min(cfg.max_iterations);
            let mut hyps = batch(self, next..end);
            hyps.sort_by_key(|h| h.iteration);
            next = end;
            for h in hyps {
                iterations = h.iteration + 1;
                timing.add(&h.timing);
                for m in h.models {
                    if best.as_ref().is_some_and(|(b, _)| m.score >= b.score) {
                        continue;
                    }
                    let mut m = m;
                    if cfg.local_optimization {
                        let t0 = clock.now();
                        m = local_optimize(&m, self.triplets, cfg);
                        timing.local_optimization += clock.now() - t0;
                    }
                    let count = m.inlier_mask.iter().filter(|v| **v).count();
                    history.push((h.iteration, m.score));
                    best = Some((m, count));
                }
                if iterations >= cfg.min_iterations {
                    if let Some((_, count)) = &best {
                        if (iterations as f64) >= required_iterations(*count as f64 / n, cfg.confidence) {
                            break 'outer;
                        }
                    }
                }
                if iterations >= cfg.max_iterations {
                    break 'outer;
                }
            }
        }
        let (model, inlier_count) = best.ok_or(Error::NoModelFound)?;
        Ok(EstimationResult { model, iterations, inlier_count, score_history: history, timing })
    }
}

/// Sequential LO-RANSAC.
pub fn estimate(triplets: &[PointTriplet], case: Case, known_f1: Option<f64>, config: &RansacConfig) -> Result<EstimationResult> {
    estimate_with_clock(triplets, case, known_f1, config, &NoClock)
}

pub fn estimate_with_clock(
    triplets: &[PointTriplet],
    case: Case,
    known_f1: Option<f64>,
    config: &RansacConfig,
    clock: &dyn Clock,
) -> Result<EstimationResult> {
    let est = Estimator::new(triplets, case, known_f1, config)?;
    est.run(1, clock, |e, range| range.map(|i| e.hypothesis(i, clock)).collect())
}
