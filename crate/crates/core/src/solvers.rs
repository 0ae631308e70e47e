//! Minimal focal-length solvers for the four calibration cases, and the
//! normal-consistency oracle used to check them.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::constraints::{compute_q, select_generator, Constraints};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Homography2D, Mat3, Vec3};
use crate::pencil::{polyeig_cubic, CubicMatrixPencil, Linearization};
use crate::eigen::polynomial_roots;
use crate::poly::{sturm_real_roots, UniPoly};

/// Which focal lengths are unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// `f1 = f2 = f3` unknown.
    #[serde(rename = "fff")]
    I,
    /// `f1` known, `f2 = f3` unknown.
    #[serde(rename = "ff")]
    II,
    /// `f1` and `f2 = f3` unknown.
    #[serde(rename = "frr")]
    III,
    /// `f1` known, `f2` and `f3` unknown.
    #[serde(rename = "fr")]
    IV,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::I, Case::II, Case::III, Case::IV];

    pub fn tag(&self) -> &'static str {
        match self {
            Case::I => "fff",
            Case::II => "ff",
            Case::III => "frr",
            Case::IV => "fr",
        }
    }

    /// Whether the reference focal length must be supplied.
    pub fn needs_known_f1(&self) -> bool {
        matches!(self, Case::II | Case::IV)
    }

    /// Ceiling on returned solutions.
    pub fn max_solutions(&self) -> usize {
        match self {
            Case::I => 9,
            Case::II => 6,
            Case::III => 17,
            Case::IV => 9,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fff" | "I" | "1" => Ok(Case::I),
            "ff" | "II" | "2" => Ok(Case::II),
            "frr" | "III" | "3" => Ok(Case::III),
            "fr" | "IV" | "4" => Ok(Case::IV),
            _ => Err(Error::InvalidConfig("case must be one of fff, ff, frr, fr")),
        }
    }
}

/// Candidate focal lengths in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalSolution {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub case: Case,
}

impl FocalSolution {
    pub fn focals(&self) -> [f64; 3] {
        [self.f1, self.f2, self.f3]
    }
}

/// Focal length giving diagonal field of view `fov_deg` for a diagonal of
/// `diagonal_px` pixels.
pub fn focal_from_fov(diagonal_px: f64, fov_deg: f64) -> f64 {
    0.5 * diagonal_px / (0.5 * fov_deg.to_radians()).tan()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Physical focal range in pixels; roots outside are discarded.
    pub f_min: f64,
    pub f_max: f64,
    /// Cases I/II: keep a root only when all seven generators are below this
    /// relative residual. `None` disables the check.
    pub consistency_tol: Option<f64>,
    /// Cases III/IV: largest relative deviation of consecutive null-vector
    /// ratios from the recovered `b`.
    pub ratio_deviation: f64,
    /// Cases III/IV: largest relative generator residual of a solution.
    pub residual_tol: f64,
    /// Relative imaginary part below which an eigenvalue counts as real.
    pub imag_tol: f64,
    /// Largest relative focal correction of one Gauss-Newton step on all
    /// seven generators; rejects roots of the reduced system that are not
    /// roots of the full one. `None` disables the check.
    pub step_tol: Option<f64>,
}

impl SolverOptions {
    /// Diagonal field-of-view envelope of `[min_deg, max_deg]`.
    pub fn from_fov_envelope(diagonal_px: f64, min_deg: f64, max_deg: f64) -> Self {
        Self {
            f_min: focal_from_fov(diagonal_px, max_deg),
            f_max: focal_from_fov(diagonal_px, min_deg),
            consistency_tol: Some(1e-6),
            ratio_deviation: 0.1,
            residual_tol: 1e-10,
            imag_tol: 1e-6,
            step_tol: Some(1e-6),
        }
    }

    /// The `[10, 150]` degree envelope for an image diagonal.
    pub fn for_diagonal(diagonal_px: f64) -> Self {
        Self::from_fov_envelope(diagonal_px, 10.0, 150.0)
    }

    fn scale(&self) -> f64 {
        (self.f_min * self.f_max).sqrt()
    }

    fn in_range(&self, f: f64) -> bool {
        f >= self.f_min && f <= self.f_max
    }
}

impl Default for SolverOptions {
    /// Envelope for a 1920x1080 image.
    fn default() -> Self {
        Self::for_diagonal((1920.0f64 * 1920.0 + 1080.0 * 1080.0).sqrt())
    }
}

/// Solutions plus the number of candidates before filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solutions: Vec<FocalSolution>,
    /// Real roots (Cases I/II) or eigenvalues (Cases III/IV) before any
    /// filter.
    pub raw_count: usize,
}

/// The four solvers sharing one prepared generator table.
#[derive(Debug, Clone)]
pub struct FocalSolver {
    constraints: Constraints,
    pub options: SolverOptions,
}

impl FocalSolver {
    pub fn new(constraints: Constraints, options: SolverOptions) -> Self {
        Self { constraints, options }
    }

    /// Solver over the embedded table with default options.
    pub fn embedded() -> Self {
        Self::new(Constraints::embedded(), SolverOptions::default())
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }

    pub fn with_options(&self, options: SolverOptions) -> Self {
        Self { constraints: self.constraints.clone(), options }
    }

    /// Dispatches on the case.
    pub fn solve(&self, case: Case, g2: &Homography2D, g3: &Homography2D, f1: Option<f64>) -> Result<SolveReport> {
        let known = || f1.filter(|f| *f > 0.0).ok_or(Error::MissingKnownFocal);
        match case {
            Case::I => self.univariate(g2, g3, None),
            Case::II => self.univariate(g2, g3, Some(known()?)),
            Case::III => self.frr(g2, g3),
            Case::IV => self.fr(g2, g3, known()?),
        }
    }

    pub fn solve_fff(&self, g2: &Homography2D, g3: &Homography2D) -> Result<Vec<FocalSolution>> {
        self.univariate(g2, g3, None).map(|r| r.solutions)
    }

    pub fn solve_ff(&self, g2: &Homography2D, g3: &Homography2D, f1: f64) -> Result<Vec<FocalSolution>> {
        self.univariate(g2, g3, Some(f1)).map(|r| r.solutions)
    }

    pub fn solve_frr(&self, g2: &Homography2D, g3: &Homography2D) -> Result<Vec<FocalSolution>> {
        self.frr(g2, g3).map(|r| r.solutions)
    }

    pub fn solve_fr(&self, g2: &Homography2D, g3: &Homography2D, f1: f64) -> Result<Vec<FocalSolution>> {
        self.fr(g2, g3, f1).map(|r| r.solutions)
    }

    /// Max relative generator residual at the given focals (pixel scale of
    /// the homographies).
    pub fn residual(&self, g2: &Homography2D, g3: &Homography2D, f: [f64; 3]) -> f64 {
        let k = f.map(CameraIntrinsics::new);
        let q2 = compute_q(g2, &k[0], &k[1]);
        let q3 = compute_q(g3, &k[0], &k[2]);
        self.constraints.evaluate(&q2, &q3).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Cases I and II.
    fn univariate(&self, g2: &Homography2D, g3: &Homography2D, f1: Option<f64>) -> Result<SolveReport> {
        let o = &self.options;
        let s = o.scale();
        let (h2, h3) = (g2.rescaled(1.0 / s), g3.rescaled(1.0 / s));
        let polys = match f1 {
            None => self.constraints.case1_polynomials(&h2, &h3)?,
            Some(f1) => self.constraints.case2_polynomials(&h2, &h3, f1 / s)?,
        };
        let poly = select_generator(polys.clone());
        let (lo, hi) = ((o.f_min / s).powi(2), (o.f_max / s).powi(2));
        let roots = sturm_real_roots(&poly, lo, hi, 1e-14 * hi)?;
        let raw_count = roots.roots.len();
        let mut solutions = Vec::new();
        for a in roots.roots {
            let fs = a.sqrt();
            let f = fs * s;
            if !o.in_range(f) {
                continue;
            }
            let focals = match f1 {
                None => [fs; 3],
                Some(f1) => [f1 / s, fs, fs],
            };
            if let Some(tol) = o.consistency_tol {
                if self.residual(&h2, &h3, focals) > tol {
                    continue;
                }
            }
            let case = if f1.is_some() { Case::II } else { Case::I };
            if o.step_tol.is_some_and(|tol| univariate_correction(&polys, a) > tol) {
                continue;
            }
            solutions.push(FocalSolution { f1: f1.unwrap_or(f), f2: f, f3: f, case });
        }
        if solutions.is_empty() {
            return Err(Error::NoRealRoot);
        }
        Ok(SolveReport { solutions, raw_count })
    }

    /// Case III: hidden variable `a = f1^2`, monomials `[1, b, .., b^6]`.
    fn frr(&self, g2: &Homography2D, g3: &Homography2D) -> Result<SolveReport> {
        let o = &self.options;
        let s = o.scale();
        let (h2, h3) = (g2.rescaled(1.0 / s), g3.rescaled(1.0 / s));
        let (m, alpha, beta) = equilibrate(&self.constraints.assemble_case3(&h2, &h3)?, 7);
        // The constant block has rank 4 here, so the pencil is solved in
        // `1/a`, where it becomes the leading block and deflates.
        let pencil = case3_pencil(&m);
        let pairs = polyeig_cubic(&pencil, Linearization::GammaDeflated(4), o.imag_tol).map_err(reject)?;
        let raw_count = pairs.len();
        let mut solutions = Vec::new();
        for pair in pairs {
            let a = 1.0 / pair.alpha.re;
            let Some(b) = recover_b(&m, 7, a, pair.null_vector.as_ref(), o.ratio_deviation) else { continue };
            let Some((a, b, step)) = polish(&m, 7, a, b) else { continue };
            let (fa, fb) = ((alpha * a).sqrt() * s, (beta * b).sqrt() * s);
            if !o.in_range(fa) || !o.in_range(fb) {
                continue;
            }
            let focals = [fa / s, fb / s, fb / s];
            let residual = self.residual(&h2, &h3, focals);
            if residual > o.residual_tol || o.step_tol.is_some_and(|tol| step > tol) {
                continue;
            }
            solutions.push((FocalSolution { f1: fa, f2: fb, f3: fb, case: Case::III }, residual));
        }
        finish(solutions, raw_count)
    }

    /// Case IV: known `f1`, hidden variable `a = f2^2`, monomials
    /// `[1, b, b^2, b^3]` with `b = f3^2`.
    fn fr(&self, g2: &Homography2D, g3: &Homography2D, f1: f64) -> Result<SolveReport> {
        let o = &self.options;
        let s = o.scale();
        let (h2, h3) = (g2.rescaled(1.0 / s), g3.rescaled(1.0 / s));
        let m = self.constraints.assemble_case4(&h2, &h3, f1 / s)?;
        let rows = select_rows(&m, 4);
        let sub = DMatrix::from_fn(4, 16, |i, j| m[(rows[i], j)]);
        let pencil = pencil_from(&sub, 4);
        let pairs = polyeig_cubic(&pencil, Linearization::Alpha, o.imag_tol).map_err(reject)?;
        let raw_count = pairs.len();
        let mut solutions = Vec::new();
        for pair in pairs {
            let a = pair.alpha.re;
            let Some(b) = recover_b(&m, 4, a, pair.null_vector.as_ref(), o.ratio_deviation) else { continue };
            let Some((a, b, step)) = polish(&m, 4, a, b) else { continue };
            let (fa, fb) = (a.sqrt() * s, b.sqrt() * s);
            if !o.in_range(fa) || !o.in_range(fb) {
                continue;
            }
            let focals = [f1 / s, fa / s, fb / s];
            let residual = self.residual(&h2, &h3, focals);
            if residual > o.residual_tol || o.step_tol.is_some_and(|tol| step > tol) {
                continue;
            }
            solutions.push((FocalSolution { f1, f2: fa, f3: fb, case: Case::IV }, residual));
        }
        finish(solutions, raw_count)
    }
}

fn reject(e: Error) -> Error {
    match e {
        Error::SingularC0 | Error::UnexpectedRank { .. } | Error::IllConditioned | Error::EigenNoConvergence => {
            Error::RejectSample
        }
        other => other,
    }
}

/// Relative distance below which two polished solutions are the same root.
pub const MERGE_TOL: f64 = 1e-6;

/// Merges solutions closer than [`MERGE_TOL`], keeping the smallest
/// residual, and sorts the rest.
fn finish(mut candidates: Vec<(FocalSolution, f64)>, raw_count: usize) -> Result<SolveReport> {
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
    let close = |x: f64, y: f64| (x - y).abs() <= MERGE_TOL * x.abs().max(y.abs());
    let mut solutions: Vec<FocalSolution> = Vec::new();
    for (c, _) in candidates {
        if !solutions.iter().any(|s| close(s.f1, c.f1) && close(s.f2, c.f2) && close(s.f3, c.f3)) {
            solutions.push(c);
        }
    }
    if solutions.is_empty() {
        return Err(Error::NoRealRoot);
    }
    solutions.sort_by(|a, b| (a.f1, a.f2, a.f3).partial_cmp(&(b.f1, b.f2, b.f3)).unwrap());
    Ok(SolveReport { solutions, raw_count })
}

/// `b` for a hidden-variable root `a`: the geometric ratio of the null
/// vector when it is consistent, otherwise the positive real root of the
/// row polynomials of `M(a)` with the smallest relative residual over all
/// rows.
fn recover_b(m: &DMatrix<f64>, k: usize, a: f64, v: Option<&DVector<f64>>, max_dev: f64) -> Option<f64> {
    if let Some(b) = v.and_then(|v| geometric_ratio(v, max_dev)) {
        return Some(b);
    }
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|r| (0..k).map(|j| (0..4).rev().fold(0.0, |acc, i| acc * a + m[(r, i * k + j)])).collect())
        .collect();
    let residual = |b: f64| {
        rows.iter().fold(0.0f64, |worst, c| {
            let (mut v, mut mag, mut x) = (0.0, 0.0, 1.0);
            for cj in c {
                v += cj * x;
                mag += cj.abs() * x;
                x *= b;
            }
            if mag > 0.0 { worst.max(v.abs() / mag) } else { worst }
        })
    };
    let mut best: Option<(f64, f64)> = None;
    for c in &rows {
        let Ok(roots) = polynomial_roots(&UniPoly::new(c.clone())) else { continue };
        for z in roots {
            if z.re <= 0.0 || z.im.abs() > 1e-6 * z.re {
                continue;
            }
            let r = residual(z.re);
            if best.is_none_or(|(_, rb)| r < rb) {
                best = Some((z.re, r));
            }
        }
    }
    best.map(|(b, _)| b)
}

/// Relative focal change (`f = sqrt(a)`) of one Gauss-Newton step at `a`
/// on all generator polynomials, each scaled to unit coefficient norm.
fn univariate_correction(polys: &[UniPoly], a: f64) -> f64 {
    let (mut rj, mut jj) = (0.0, 0.0);
    for p in polys {
        let n = p.norm();
        if n == 0.0 {
            continue;
        }
        let (v, d) = p.eval_with_derivative(a);
        let (v, d) = (v / n, d * a / n);
        rj += v * d;
        jj += d * d;
    }
    if jj > 0.0 { 0.5 * (rj / jj).abs() } else { f64::INFINITY }
}

/// Gauss-Newton step `(da, db)` at `(a, b)` on the rows of an `r x 4k`
/// coefficient matrix over `a^i b^j` (`i * k + j`).
fn gauss_newton_step(m: &DMatrix<f64>, k: usize, a: f64, b: f64) -> Option<(f64, f64)> {
    let (mut pa, mut pb) = ([0.0; 4], vec![0.0; k]);
    let mut x = 1.0;
    for p in &mut pa {
        *p = x;
        x *= a;
    }
    x = 1.0;
    for p in &mut pb {
        *p = x;
        x *= b;
    }
    let r = m.nrows();
    let mut res = DVector::<f64>::zeros(r);
    let mut jac = DMatrix::<f64>::zeros(r, 2);
    for row in 0..r {
        for i in 0..4 {
            for j in 0..k {
                let c = m[(row, i * k + j)];
                res[row] += c * pa[i] * pb[j];
                if i > 0 {
                    jac[(row, 0)] += c * i as f64 * pa[i - 1] * pb[j];
                }
                if j > 0 {
                    jac[(row, 1)] += c * j as f64 * pa[i] * pb[j - 1];
                }
            }
        }
    }
    let step = jac.svd(true, true).solve(&res, 1e-12).ok()?;
    Some((step[0], step[1]))
}

/// Gauss-Newton iterations when refining a root.
pub const POLISH_ITERATIONS: usize = 20;

/// Gauss-Newton refinement of a root `(a, b)` of the rows of an `r x 4k`
/// coefficient matrix, with the relative focal change a further step would
/// make. `None` when the iteration leaves the positive quadrant.
fn polish(m: &DMatrix<f64>, k: usize, a0: f64, b0: f64) -> Option<(f64, f64, f64)> {
    let (mut a, mut b) = (a0, b0);
    if !(a > 0.0 && b > 0.0) {
        return None;
    }
    for _ in 0..POLISH_ITERATIONS {
        let (da, db) = gauss_newton_step(m, k, a, b)?;
        let (na, nb) = (a - da, b - db);
        if !(na > 0.0 && nb > 0.0) {
            return None;
        }
        let done = da.abs() <= 1e-15 * na && db.abs() <= 1e-15 * nb;
        (a, b) = (na, nb);
        if done {
            break;
        }
    }
    let (da, db) = gauss_newton_step(m, k, a, b)?;
    Some((a, b, 0.5 * (da.abs() / a).max(db.abs() / b)))
}

/// Substitutes `a = alpha a'`, `b = beta b'` in an `r x 4k` coefficient
/// matrix, with `alpha`, `beta` chosen so that the column norms are as equal
/// as possible in the least-squares sense of their logarithms.
pub fn equilibrate(m: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, f64, f64) {
    let mut cols = Vec::new();
    for i in 0..4 {
        for j in 0..k {
            let n = m.column(i * k + j).norm();
            if n > 0.0 {
                cols.push((i as f64, j as f64, n.ln()));
            }
        }
    }
    if cols.len() < 3 {
        return (m.clone(), 1.0, 1.0);
    }
    // Fit ln n_ij ~ c - i ln alpha - j ln beta.
    let a = DMatrix::from_fn(cols.len(), 3, |r, c| [1.0, cols[r].0, cols[r].1][c]);
    let y = DVector::from_iterator(cols.len(), cols.iter().map(|c| c.2));
    let Ok(x) = a.clone().svd(true, true).solve(&y, 1e-12) else {
        return (m.clone(), 1.0, 1.0);
    };
    let (alpha, beta) = ((-x[1]).exp(), (-x[2]).exp());
    if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
        return (m.clone(), 1.0, 1.0);
    }
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * alpha.powi((c / k) as i32) * beta.powi((c % k) as i32));
    (scaled, alpha, beta)
}

/// Case III pencil in `c = 1/a`: `c^3 C(1/c) = C3 + c C2 + c^2 C1 + c^3 C0`.
pub fn case3_pencil(m: &DMatrix<f64>) -> CubicMatrixPencil {
    let [c0, c1, c2, c3] = pencil_from(m, 7).c;
    CubicMatrixPencil::new(c3, c2, c1, c0)
}

/// Splits an `r x 4k` coefficient matrix over `a^i b^j` (`i * k + j`) into
/// the pencil `sum a^i C_i` acting on `[1, b, .., b^(k-1)]`.
pub fn pencil_from(m: &DMatrix<f64>, k: usize) -> CubicMatrixPencil {
    let block = |i: usize| m.columns(i * k, k).into_owned();
    CubicMatrixPencil::new(block(0), block(1), block(2), block(3))
}

/// Median of consecutive component ratios, if every ratio lies within
/// `max_dev` of it and it is positive.
pub fn geometric_ratio(v: &DVector<f64>, max_dev: f64) -> Option<f64> {
    let n = v.len();
    if n < 2 || v[0].abs() <= 1e-8 {
        return None;
    }
    let mut ratios: Vec<f64> = (0..n - 1).map(|i| v[i + 1] / v[i]).collect();
    if ratios.iter().any(|r| !r.is_finite()) {
        return None;
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let b = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    if !(b > 0.0) {
        return None;
    }
    ratios.retain(|r| ((r - b) / b).abs() > max_dev);
    if ratios.is_empty() {
        Some(b)
    } else {
        None
    }
}

/// Four-of-`r` row subset maximizing the smallest singular value of the
/// leading (`a^3`) block.
fn select_rows(m: &DMatrix<f64>, k: usize) -> [usize; 4] {
    let lead = m.columns(3 * k, k);
    let r = m.nrows();
    let mut best = [0, 1, 2, 3];
    let mut best_sigma = -1.0;
    for a in 0..r {
        for b in a + 1..r {
            for c in b + 1..r {
                for d in c + 1..r {
                    let rows = [a, b, c, d];
                    let sub = DMatrix::from_fn(4, k, |i, j| lead[(rows[i], j)]);
                    let sigma = sub.singular_values().min();
                    if sigma > best_sigma {
                        best_sigma = sigma;
                        best = rows;
                    }
                }
            }
        }
    }
    best
}

/// Unit plane normals (reference frame) compatible with a Euclidean
/// homography: the two solutions of `H^T H - I = v n^T + n v^T` up to sign.
fn candidate_normals(h: &Mat3) -> Result<[Vec3; 2]> {
    let sv = h.singular_values();
    let mut s = [sv[0], sv[1], sv[2]];
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if s[0] - s[2] <= 1e-9 * s[0] {
        return Err(Error::DecompositionFailed);
    }
    let h = h / s[1];
    let a = h.transpose() * h - Mat3::identity();
    let eig = SymmetricEigen::new(a);
    let (mut imin, mut imax) = (0, 0);
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[imin] {
            imin = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
    }
    let lp = eig.eigenvalues[imax].max(0.0).sqrt();
    let lm = (-eig.eigenvalues[imin]).max(0.0).sqrt();
    let ep = eig.eigenvectors.column(imax).into_owned();
    let em = eig.eigenvectors.column(imin).into_owned();
    let n1 = (ep * lp + em * lm).normalize();
    let n2 = (ep * lp - em * lm).normalize();
    Ok([n1, n2])
}

/// Smallest angle (radians) between the plane normals implied by the two
/// Euclidean homographies at the given focal lengths.
pub fn oracle_cost(g2: &Homography2D, g3: &Homography2D, f1: f64, f2: f64, f3: f64) -> Result<f64> {
    let k1 = CameraIntrinsics::new(f1);
    let h2 = CameraIntrinsics::new(f2).inverse() * g2.matrix() * k1.matrix();
    let h3 = CameraIntrinsics::new(f3).inverse() * g3.matrix() * k1.matrix();
    let n2 = candidate_normals(&h2)?;
    let n3 = candidate_normals(&h3)?;
    let mut best = f64::INFINITY;
    for a in &n2 {
        for b in &n3 {
            let angle = a.cross(b).norm().atan2(a.dot(b).abs());
            best = best.min(angle);
        }
    }
    Ok(best)
}
