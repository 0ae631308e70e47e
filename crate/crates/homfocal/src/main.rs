use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use homfocal::dataset::TripletDataset;
use homfocal::experiments::{accuracy_sweep, run_benchmark, stability_experiment, write_csv, SweepConfig};
use homfocal::parallel::{estimate_parallel, StdClock};
use homfocal::verify::verify_generators;
use homfocal_core::generators::GeneratorTable;
use homfocal_core::pose::ThreeViewModel;
use homfocal_core::ransac::RansacConfig;
use homfocal_core::solvers::Case;
use homfocal_core::synth::{Placement, SynthConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "homfocal", version, about = "Focal lengths and poses of three cameras viewing a plane")]
struct Cli {
    /// Seed for scene generation and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate focals and poses for every record of a triplet file.
    Solve {
        /// Triplet dataset JSON.
        input: PathBuf,
        /// Calibration case: fff, ff, frr or fr.
        #[arg(long, value_parser = parse_case)]
        case: Case,
        #[command(flatten)]
        ransac: RansacArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Histogram of minimal-solver errors on noiseless scenes.
    SynthStability {
        /// Calibration case: fff, ff, frr or fr.
        #[arg(long, value_parser = parse_case)]
        case: Case,
        #[arg(long, default_value_t = 10_000)]
        n_scenes: usize,
        #[arg(long, default_value_t = 0.25)]
        bin_width: f64,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Robust estimation over a grid of planarity, noise and known-focal
    /// perturbation.
    SynthSweep {
        /// Calibration case: fff, ff, frr or fr.
        #[arg(long, value_parser = parse_case)]
        case: Case,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        planar_fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
        sigmas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        known_f_perturbations: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        n_scenes: usize,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        ransac: RansacArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write synthetic scenes as a triplet file.
    SynthDataset {
        /// Calibration case: fff, ff, frr or fr.
        #[arg(long, value_parser = parse_case)]
        case: Case,
        #[arg(long, default_value_t = 100)]
        n_scenes: usize,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Aggregate focal errors and runtimes on a triplet file.
    Benchmark {
        /// Triplet dataset JSON.
        input: PathBuf,
        /// Calibration case: fff, ff, frr or fr.
        #[arg(long, value_parser = parse_case)]
        case: Case,
        #[command(flatten)]
        ransac: RansacArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a generator table on random exact plane-induced homographies.
    VerifyGenerators {
        /// Generator table JSON; the built-in table when omitted.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Args)]
struct RansacArgs {
    /// Upper bound on RANSAC iterations.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Iterations run before the confidence stop applies.
    #[arg(long)]
    min_iterations: Option<usize>,
    /// Stopping confidence in (0, 1).
    #[arg(long)]
    confidence: Option<f64>,
    /// Sampson error threshold in pixels.
    #[arg(long)]
    threshold: Option<f64>,
    /// Accepted horizontal field of view MIN:MAX in degrees.
    #[arg(long, value_parser = parse_range)]
    fov_filter: Option<(f64, f64)>,
    /// Image size WxH in pixels; sets the focal search envelope.
    #[arg(long, value_parser = parse_size)]
    image_size: Option<(f64, f64)>,
    /// Skip Levenberg-Marquardt refinement of improved models.
    #[arg(long)]
    no_local_optimization: bool,
    /// Levenberg-Marquardt iterations per refinement.
    #[arg(long)]
    lo_max_lm_iters: Option<usize>,
    /// Cases frr/fr: allowed relative spread of null-vector ratios.
    #[arg(long)]
    ratio_deviation: Option<f64>,
    /// Cases frr/fr: largest relative generator residual of a root.
    #[arg(long)]
    residual_tol: Option<f64>,
    /// Cases fff/ff: largest relative residual of all generators at a root.
    #[arg(long)]
    consistency_tol: Option<f64>,
    /// Largest relative focal correction of a Gauss-Newton step on all generators.
    #[arg(long)]
    step_tol: Option<f64>,
}

impl RansacArgs {
    fn config(&self, seed: u64, base: RansacConfig) -> RansacConfig {
        let d = base;
        RansacConfig {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            min_iterations: self.min_iterations.unwrap_or(d.min_iterations),
            confidence: self.confidence.unwrap_or(d.confidence),
            sampson_threshold_px: self.threshold.unwrap_or(d.sampson_threshold_px),
            fov_filter: self.fov_filter.or(d.fov_filter),
            image_size: self.image_size.unwrap_or(d.image_size),
            rng_seed: seed,
            local_optimization: !self.no_local_optimization && d.local_optimization,
            lo_max_lm_iters: self.lo_max_lm_iters.unwrap_or(d.lo_max_lm_iters),
            ratio_deviation: self.ratio_deviation.unwrap_or(d.ratio_deviation),
            residual_tol: self.residual_tol.unwrap_or(d.residual_tol),
            consistency_tol: self.consistency_tol.or(d.consistency_tol),
            step_tol: self.step_tol.or(d.step_tol),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Number of point triplets per scene.
    #[arg(long)]
    n_points: Option<usize>,
    /// Fraction of points on the plane.
    #[arg(long)]
    planar_fraction: Option<f64>,
    /// Pixel noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Fraction of correct correspondences.
    #[arg(long)]
    inlier_ratio: Option<f64>,
    /// Focal range MIN:MAX in pixels.
    #[arg(long, value_parser = parse_range)]
    f_range: Option<(f64, f64)>,
    /// Synthetic image size WxH in pixels.
    #[arg(long, value_parser = parse_size)]
    synth_image_size: Option<(f64, f64)>,
    /// Baseline relative to the scene distance.
    #[arg(long)]
    baseline_fraction: Option<f64>,
    /// All cameras share one orientation.
    #[arg(long)]
    pure_translation: bool,
    /// Camera placement: baseline or hemisphere.
    #[arg(long, value_parser = parse_placement)]
    placement: Option<Placement>,
}

impl SynthArgs {
    fn config(&self, case: Case, seed: u64, base: SynthConfig) -> SynthConfig {
        let d = base;
        SynthConfig {
            n_points: self.n_points.unwrap_or(d.n_points),
            planar_fraction: self.planar_fraction.unwrap_or(d.planar_fraction),
            noise_sigma: self.sigma.unwrap_or(d.noise_sigma),
            inlier_ratio: self.inlier_ratio.unwrap_or(d.inlier_ratio),
            f_range: self.f_range.unwrap_or(d.f_range),
            image_size: self.synth_image_size.unwrap_or(d.image_size),
            baseline_fraction: self.baseline_fraction.unwrap_or(d.baseline_fraction),
            case,
            n_scenes: d.n_scenes,
            rng_seed: seed,
            pure_translation: self.pure_translation || d.pure_translation,
            placement: self.placement.unwrap_or(d.placement),
        }
    }
}

fn parse_case(s: &str) -> Result<Case, String> {
    Case::ALL.into_iter().find(|c| c.tag() == s).ok_or_else(|| format!("unknown case `{s}`, expected fff, ff, frr or fr"))
}

fn parse_placement(s: &str) -> Result<Placement, String> {
    match s {
        "baseline" => Ok(Placement::Baseline),
        "hemisphere" => Ok(Placement::Hemisphere),
        _ => Err(format!("unknown placement `{s}`, expected baseline or hemisphere")),
    }
}

fn parse_pair(s: &str, sep: char) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(sep).ok_or_else(|| format!("expected A{sep}B, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    parse_pair(s, ':')
}

fn parse_size(s: &str) -> Result<(f64, f64), String> {
    parse_pair(s, 'x')
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct SolvedRecord {
    camera_ids: [String; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ThreeViewModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inlier_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn solve(input: &Path, case: Case, config: &RansacConfig, output: Option<&Path>) -> Result<()> {
    let ds = TripletDataset::load(input)?;
    let clock = StdClock::new();
    let mut records = Vec::with_capacity(ds.records.len());
    for rec in &ds.records {
        let cfg = RansacConfig { image_size: rec.reference_size(), ..config.clone() };
        let known = if case.needs_known_f1() { rec.f_gt[0] } else { None };
        let out = match estimate_parallel(&rec.centered_triplets(), case, known, &cfg, &clock) {
            Ok(r) => SolvedRecord { camera_ids: rec.camera_ids.clone(), model: Some(r.model), inlier_count: Some(r.inlier_count), error: None },
            Err(e) => SolvedRecord { camera_ids: rec.camera_ids.clone(), model: None, inlier_count: None, error: Some(e.to_string()) },
        };
        records.push(out);
    }
    let mut w = open_output(output)?;
    serde_json::to_writer_pretty(&mut w, &serde_json::json!({ "records": records }))?;
    writeln!(w)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let seed = cli.seed;
    match cli.command {
        Command::Solve { input, case, ransac, output } => {
            solve(&input, case, &ransac.config(seed, RansacConfig::default()), output.as_deref())?;
        }
        Command::SynthStability { case, n_scenes, bin_width, synth, output } => {
            let cfg = synth.config(case, seed, SynthConfig::default());
            let report = stability_experiment(case, n_scenes, &cfg)?;
            write_csv(open_output(output.as_deref())?, &report.histogram(-16.0, 2.0, bin_width))?;
            eprintln!(
                "{}: median log10 error {:.2}, 99th percentile {:.2}, {} failures in {} scenes",
                case.tag(),
                report.median(),
                report.quantile(0.99),
                report.failures,
                n_scenes
            );
        }
        Command::SynthSweep { case, planar_fractions, sigmas, known_f_perturbations, n_scenes, synth, ransac, output } => {
            let d = SweepConfig::default();
            let cfg = SweepConfig {
                case,
                planar_fractions,
                sigmas,
                known_f_perturbations,
                n_scenes,
                synth: synth.config(case, seed, d.synth),
                ransac: ransac.config(seed, d.ransac),
            };
            write_csv(open_output(output.as_deref())?, &accuracy_sweep(&cfg)?)?;
        }
        Command::SynthDataset { case, n_scenes, synth, output } => {
            let cfg = synth.config(case, seed, SynthConfig::default());
            TripletDataset::from_scenes(&cfg, n_scenes)?.save(&output)?;
        }
        Command::Benchmark { input, case, ransac, output } => {
            let ds = TripletDataset::load(&input)?;
            let report = run_benchmark(&ds, case, &ransac.config(seed, RansacConfig::default()))?;
            for e in &report.skipped {
                eprintln!("{e}");
            }
            write_csv(open_output(output.as_deref())?, &[report.row])?;
        }
        Command::VerifyGenerators { table, instances, tol } => {
            let table = match table {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    GeneratorTable::from_json(&text)?
                }
                None => GeneratorTable::embedded(),
            };
            let report = verify_generators(table, instances, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.passes(tol) {
                bail!("max residual {:.3e} exceeds {tol:.1e}", report.max_residual);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::Cli;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
