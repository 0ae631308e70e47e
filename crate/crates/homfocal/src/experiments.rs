//! Synthetic experiments and dataset benchmarks.

use std::io::Write;
use std::time::Instant;

use homfocal_core::geometry::{dlt_homography, PointTriplet, Vec2};
use homfocal_core::metrics::{case_error, maa, mean, median, quantile};
use homfocal_core::pose::ThreeViewModel;
use homfocal_core::ransac::{estimate, RansacConfig};
use homfocal_core::solvers::{Case, FocalSolver, SolverOptions};
use homfocal_core::synth::{generate_scene, Placement, SynthConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{TripletDataset, MIN_MATCHES};
use crate::error::{Error, Result};

/// Error recorded when no estimate is produced.
pub const FAILURE_ERROR: f64 = 1.0;

/// Floor applied before taking logarithms of errors.
pub const LOG_FLOOR: f64 = 1e-16;

/// Writes serializable rows as CSV with a header.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Method label of a case in result tables.
pub fn method_name(case: Case) -> String {
    format!("H_{}", case.tag())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub case: &'static str,
    pub log10_lo: f64,
    pub log10_hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub case: Case,
    /// `log10` of the smallest focal error per scene.
    pub log10_errors: Vec<f64>,
    /// Scenes where the solver returned nothing.
    pub failures: usize,
}

impl StabilityReport {
    pub fn median(&self) -> f64 {
        median(&self.log10_errors)
    }

    pub fn quantile(&self, q: f64) -> f64 {
        quantile(&self.log10_errors, q)
    }

    /// Counts on `[lo, hi)` in bins of `width`; values outside fall into
    /// the end bins.
    pub fn histogram(&self, lo: f64, hi: f64, width: f64) -> Vec<HistogramBin> {
        let n = ((hi - lo) / width).ceil().max(1.0) as usize;
        let mut counts = vec![0usize; n];
        for v in &self.log10_errors {
            let k = ((v - lo) / width).floor().clamp(0.0, (n - 1) as f64) as usize;
            counts[k] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(k, count)| HistogramBin {
                case: self.case.tag(),
                log10_lo: lo + k as f64 * width,
                log10_hi: lo + (k + 1) as f64 * width,
                count,
            })
            .collect()
    }
}

/// Plane-induced homographies `1 -> 2` and `1 -> 3` fitted to all on-plane
/// triplets.
pub fn plane_homographies(triplets: &[PointTriplet], on_plane: &[bool]) -> Result<[homfocal_core::geometry::Homography2D; 2]> {
    let plane: Vec<&PointTriplet> = triplets.iter().zip(on_plane).filter(|(_, p)| **p).map(|(t, _)| t).collect();
    let x1: Vec<Vec2> = plane.iter().map(|t| t.x1).collect();
    let x2: Vec<Vec2> = plane.iter().map(|t| t.x2).collect();
    let x3: Vec<Vec2> = plane.iter().map(|t| t.x3).collect();
    Ok([dlt_homography(&x1, &x2)?, dlt_homography(&x1, &x3)?])
}

/// Noiseless scene `index` of the stability protocol.
pub fn stability_scene(case: Case, base: &SynthConfig, index: u64) -> Result<homfocal_core::synth::Scene> {
    let cfg = SynthConfig { case, noise_sigma: 0.0, inlier_ratio: 1.0, planar_fraction: 1.0, ..base.clone() };
    Ok(generate_scene(&cfg, index)?)
}

/// Runs the minimal solver on `n_scenes` noiseless scenes and records the
/// error of the solution closest to the ground truth.
pub fn stability_experiment(case: Case, n_scenes: usize, base: &SynthConfig) -> Result<StabilityReport> {
    let (w, h) = base.image_size;
    let solver = FocalSolver::embedded().with_options(SolverOptions::for_diagonal((w * w + h * h).sqrt()));
    let errors: Vec<Option<f64>> = (0..n_scenes as u64)
        .into_par_iter()
        .map(|i| {
            let scene = stability_scene(case, base, i)?;
            let f = scene.truth.f;
            let Ok([g2, g3]) = plane_homographies(&scene.triplets, &scene.truth.on_plane) else {
                return Ok(None);
            };
            let known = case.needs_known_f1().then_some(f[0]);
            Ok(solver
                .solve(case, &g2, &g3, known)
                .ok()
                .and_then(|r| r.solutions.iter().map(|s| case_error(case, s.focals(), f)).min_by(f64::total_cmp)))
        })
        .collect::<Result<_>>()?;
    let failures = errors.iter().filter(|e| e.is_none()).count();
    let log10_errors = errors.into_iter().map(|e| e.unwrap_or(FAILURE_ERROR).max(LOG_FLOOR).log10()).collect();
    Ok(StabilityReport { case, log10_errors, failures })
}

/// Aggregate focal errors of one experiment cell or dataset run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median_xi_f: f64,
    pub mean_xi_f: f64,
    /// Percent.
    pub maa_01: f64,
    /// Percent.
    pub maa_02: f64,
    pub mean_runtime_ms: f64,
}

impl Summary {
    pub fn new(errors: &[f64], runtimes_ms: &[f64]) -> Self {
        Self {
            median_xi_f: median(errors),
            mean_xi_f: mean(errors),
            maa_01: 100.0 * maa(errors, 0.1),
            maa_02: 100.0 * maa(errors, 0.2),
            mean_runtime_ms: mean(runtimes_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub case: Case,
    pub planar_fractions: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Relative perturbations of the known reference focal; ignored by the
    /// cases that estimate it.
    pub known_f_perturbations: Vec<f64>,
    pub n_scenes: usize,
    pub synth: SynthConfig,
    pub ransac: RansacConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            case: Case::I,
            planar_fractions: vec![1.0],
            sigmas: vec![0.0, 0.5, 1.0, 2.0],
            known_f_perturbations: vec![0.0],
            n_scenes: 100,
            synth: SynthConfig { placement: Placement::Hemisphere, ..SynthConfig::default() },
            ransac: RansacConfig { max_iterations: 100, min_iterations: 100, ..RansacConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub case: &'static str,
    pub planar_fraction: f64,
    pub noise_sigma: f64,
    pub known_f_perturbation: f64,
    pub n_scenes: usize,
    pub failures: usize,
    pub median_xi_f: f64,
    pub mean_xi_f: f64,
    #[serde(rename = "maa_0.1")]
    pub maa_01: f64,
    #[serde(rename = "maa_0.2")]
    pub maa_02: f64,
    pub mean_runtime_ms: f64,
}

impl From<Summary> for SweepRow {
    fn from(s: Summary) -> Self {
        Self {
            case: "",
            planar_fraction: 0.0,
            noise_sigma: 0.0,
            known_f_perturbation: 0.0,
            n_scenes: 0,
            failures: 0,
            median_xi_f: s.median_xi_f,
            mean_xi_f: s.mean_xi_f,
            maa_01: s.maa_01,
            maa_02: s.maa_02,
            mean_runtime_ms: s.mean_runtime_ms,
        }
    }
}

/// Outcome of one robust estimation against a ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub error: f64,
    pub runtime_ms: f64,
    pub model: Option<ThreeViewModel>,
}

fn timed_estimate(triplets: &[PointTriplet], case: Case, known_f1: Option<f64>, config: &RansacConfig, gt: [f64; 3]) -> Trial {
    let t0 = Instant::now();
    let res = estimate(triplets, case, known_f1, config);
    let runtime_ms = 1e3 * t0.elapsed().as_secs_f64();
    match res {
        Ok(r) => Trial { error: case_error(case, r.model.f, gt), runtime_ms, model: Some(r.model) },
        Err(_) => Trial { error: FAILURE_ERROR, runtime_ms, model: None },
    }
}

/// Robust estimation on the scenes of one sweep cell; scene `i` uses RANSAC
/// seed `rng_seed + i`.
pub fn sweep_cell(case: Case, synth: &SynthConfig, ransac: &RansacConfig, perturbation: f64, n_scenes: usize) -> Result<Vec<Trial>> {
    let synth = SynthConfig { case, ..synth.clone() };
    let ransac = RansacConfig { image_size: synth.image_size, ..ransac.clone() };
    (0..n_scenes as u64)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene(&synth, i)?;
            let f = scene.truth.f;
            let known = case.needs_known_f1().then_some(f[0] * (1.0 + perturbation));
            let cfg = RansacConfig { rng_seed: ransac.rng_seed.wrapping_add(i), ..ransac.clone() };
            Ok(timed_estimate(&scene.triplets, case, known, &cfg, f))
        })
        .collect()
}

/// Runs every cell of the grid; rows are ordered by planar fraction, noise
/// and perturbation.
pub fn accuracy_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.synth.validate()?;
    cfg.ransac.validate()?;
    let perturbations = if cfg.case.needs_known_f1() { cfg.known_f_perturbations.clone() } else { vec![0.0] };
    let mut rows = Vec::new();
    for &pf in &cfg.planar_fractions {
        for &sigma in &cfg.sigmas {
            for &rho in &perturbations {
                let synth = SynthConfig { planar_fraction: pf, noise_sigma: sigma, ..cfg.synth.clone() };
                let trials = sweep_cell(cfg.case, &synth, &cfg.ransac, rho, cfg.n_scenes)?;
                let errors: Vec<f64> = trials.iter().map(|t| t.error).collect();
                let runtimes: Vec<f64> = trials.iter().map(|t| t.runtime_ms).collect();
                rows.push(SweepRow {
                    case: cfg.case.tag(),
                    planar_fraction: pf,
                    noise_sigma: sigma,
                    known_f_perturbation: rho,
                    n_scenes: cfg.n_scenes,
                    failures: trials.iter().filter(|t| t.model.is_none()).count(),
                    ..SweepRow::from(Summary::new(&errors, &runtimes))
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub case: &'static str,
    pub method: String,
    pub n_triplets: usize,
    pub median_xi_f: f64,
    pub mean_xi_f: f64,
    #[serde(rename = "maa_0.1")]
    pub maa_01: f64,
    #[serde(rename = "maa_0.2")]
    pub maa_02: f64,
    pub mean_runtime_ms: f64,
}

impl From<Summary> for BenchmarkRow {
    fn from(s: Summary) -> Self {
        Self {
            case: "",
            method: String::new(),
            n_triplets: 0,
            median_xi_f: s.median_xi_f,
            mean_xi_f: s.mean_xi_f,
            maa_01: s.maa_01,
            maa_02: s.maa_02,
            mean_runtime_ms: s.mean_runtime_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordResult {
    pub index: usize,
    /// `None` when the record lacks the focals the case is scored on.
    pub error: Option<f64>,
    pub runtime_ms: f64,
    pub model: Option<ThreeViewModel>,
}

#[derive(Debug)]
pub struct BenchmarkReport {
    pub row: BenchmarkRow,
    pub records: Vec<RecordResult>,
    /// Records that were not evaluated.
    pub skipped: Vec<Error>,
}

/// Focals a case is scored on, by index.
fn scored_focals(case: Case) -> &'static [usize] {
    match case {
        Case::I => &[0],
        Case::II => &[1],
        Case::III => &[0, 1],
        Case::IV => &[1, 2],
    }
}

/// Robust estimation on every record with at least [`MIN_MATCHES`] matches.
/// The reference image size of each record replaces `config.image_size`.
pub fn run_benchmark(ds: &TripletDataset, case: Case, config: &RansacConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let outcomes: Vec<std::result::Result<RecordResult, Error>> = ds
        .records
        .par_iter()
        .enumerate()
        .map(|(index, rec)| {
            if rec.points.len() < MIN_MATCHES {
                return Err(Error::SkippedRecord { index, matches: rec.points.len(), needed: MIN_MATCHES });
            }
            let known = if case.needs_known_f1() {
                Some(rec.f_gt[0].ok_or_else(|| Error::InvalidRecord { index, reason: "known reference focal is missing".into() })?)
            } else {
                None
            };
            let gt = rec.f_gt.map(|f| f.unwrap_or(f64::NAN));
            let scored = scored_focals(case).iter().all(|&j| rec.f_gt[j].is_some());
            let cfg = RansacConfig { image_size: rec.reference_size(), ..config.clone() };
            let trial = timed_estimate(&rec.centered_triplets(), case, known, &cfg, gt);
            Ok(RecordResult { index, error: scored.then_some(trial.error), runtime_ms: trial.runtime_ms, model: trial.model })
        })
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(e) => skipped.push(e),
        }
    }
    let errors: Vec<f64> = records.iter().filter_map(|r| r.error).collect();
    let runtimes: Vec<f64> = records.iter().map(|r| r.runtime_ms).collect();
    let row = BenchmarkRow {
        case: case.tag(),
        method: method_name(case),
        n_triplets: records.len(),
        ..BenchmarkRow::from(Summary::new(&errors, &runtimes))
    };
    Ok(BenchmarkReport { row, records, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_clamps_to_end_bins() {
        let r = StabilityReport { case: Case::I, log10_errors: vec![-20.0, -15.9, -7.0, -6.9, 3.0], failures: 0 };
        let h = r.histogram(-16.0, 0.0, 1.0);
        assert_eq!(h.len(), 16);
        assert_eq!(h[0].count, 2);
        assert_eq!(h[9].count, 2);
        assert_eq!(h[9].log10_lo, -7.0);
        assert_eq!(h[15].count, 1);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 5);
    }

    #[test]
    fn summary_columns_are_named() {
        let mut out = Vec::new();
        let summary = Summary::new(&[0.0, 0.0], &[1.0, 3.0]);
        let row = BenchmarkRow { case: "fff", method: method_name(Case::I), n_triplets: 2, ..BenchmarkRow::from(summary) };
        write_csv(&mut out, &[row]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "case,method,n_triplets,median_xi_f,mean_xi_f,maa_0.1,maa_0.2,mean_runtime_ms");
        assert_eq!(text.lines().nth(1).unwrap(), "fff,H_fff,2,0.0,0.0,100.0,100.0,2.0");
    }

    #[test]
    fn stability_is_tight_on_a_few_scenes() {
        for case in Case::ALL {
            let r = stability_experiment(case, 20, &SynthConfig::default()).unwrap();
            assert!(r.median() < -6.0, "{case:?} {}", r.median());
        }
    }
}
