//! Cubic matrix polynomials `C(a) = C0 + a C1 + a^2 C2 + a^3 C3` solved as
//! standard eigenproblems through a companion linearization in `g = 1/a`.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::eigen::eigenvalues;
use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Largest accepted condition number of `C0` before the shifted fallback.
pub const MAX_C0_CONDITION: f64 = 1e12;
/// Relative singular-value threshold for the rank of `C3`.
pub const RANK_TOL: f64 = 1e-8;
/// Relative threshold for a numerically singular matrix in [`null_vector`].
pub const NULL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CubicMatrixPencil {
    /// `C0, C1, C2, C3`.
    pub c: [DMatrix<f64>; 4],
}

/// One eigenvalue of a pencil. The null vector is filled for real positive
/// eigenvalues only.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilEigenpair {
    pub alpha: Complex64,
    pub null_vector: Option<DVector<f64>>,
}

/// How to linearize the pencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearization {
    /// Full `3k x 3k` companion in `g = 1/a`.
    Gamma,
    /// Companion in `g = 1/a` without the zero columns induced by
    /// `rank(C3) = r`.
    GammaDeflated(usize),
    /// Companion in `a` built with `C3^-1`; falls back to `Gamma` when `C3`
    /// is ill conditioned.
    Alpha,
}

impl CubicMatrixPencil {
    pub fn new(c0: DMatrix<f64>, c1: DMatrix<f64>, c2: DMatrix<f64>, c3: DMatrix<f64>) -> Self {
        let k = c0.nrows();
        for m in [&c0, &c1, &c2, &c3] {
            assert!(m.nrows() == k && m.ncols() == k, "pencil coefficients must be square and equal size");
        }
        Self { c: [c0, c1, c2, c3] }
    }

    pub fn size(&self) -> usize {
        self.c[0].nrows()
    }

    pub fn eval(&self, a: f64) -> DMatrix<f64> {
        &self.c[0] + (&self.c[1] + (&self.c[2] + &self.c[3] * a) * a) * a
    }

    /// Pencil in `a' = a - mu` (Taylor shift).
    pub fn shifted(&self, mu: f64) -> Self {
        let [_, c1, c2, c3] = &self.c;
        Self {
            c: [
                self.eval(mu),
                c1 + c2 * (2.0 * mu) + c3 * (3.0 * mu * mu),
                c2 + c3 * (3.0 * mu),
                c3.clone(),
            ],
        }
    }

    /// Left-multiplies every coefficient by `m`.
    fn transformed(&self, m: &DMatrix<f64>) -> Self {
        Self { c: core::array::from_fn(|i| m * &self.c[i]) }
    }
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let s = m.singular_values();
    let max = s.max();
    let min = s.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// The `3k x 3k` companion of `C(g)^T = g^3 C0^T + g^2 C1^T + g C2^T + C3^T`.
pub fn companion_gamma(pencil: &CubicMatrixPencil) -> Result<DMatrix<f64>> {
    let k = pencil.size();
    let [c0, c1, c2, c3] = &pencil.c;
    if condition(c0) > MAX_C0_CONDITION {
        return Err(Error::SingularC0);
    }
    let lu = c0.transpose().lu();
    let mut d = DMatrix::zeros(3 * k, 3 * k);
    for i in 0..2 * k {
        d[(i, i + k)] = 1.0;
    }
    for (block, ci) in [c3, c2, c1].into_iter().enumerate() {
        let x = lu.solve(&ci.transpose()).ok_or(Error::SingularC0)?;
        d.view_mut((2 * k, block * k), (k, k)).copy_from(&(-x));
    }
    Ok(d)
}

/// Rotates the rows of every coefficient so `C3` keeps exactly `rank`
/// nonzero rows, then drops the zero columns this creates in the first block
/// of the companion together with their rows.
pub fn deflate_zero_columns(pencil: &CubicMatrixPencil, expected_rank: usize) -> Result<DMatrix<f64>> {
    let k = pencil.size();
    let svd = pencil.c[3].clone().svd(true, false);
    let u = svd.u.ok_or(Error::UnexpectedRank { expected: expected_rank, found: 0 })?;
    let s = &svd.singular_values;
    let smax = s.max();
    let rank = s.iter().filter(|&&v| v > RANK_TOL * smax).count();
    if rank != expected_rank {
        return Err(Error::UnexpectedRank { expected: expected_rank, found: rank });
    }
    let mut reduced = pencil.transformed(&u.transpose());
    for i in rank..k {
        reduced.c[3].row_mut(i).fill(0.0);
    }
    let full = companion_gamma(&reduced)?;
    let keep: Vec<usize> = (0..3 * k).filter(|&i| i < rank || i >= k).collect();
    let n = keep.len();
    Ok(DMatrix::from_fn(n, n, |i, j| full[(keep[i], keep[j])]))
}

/// The `3k x 3k` companion `[0 I 0; 0 0 I; -C3^-1 C0, -C3^-1 C1, -C3^-1 C2]`.
pub fn companion_alpha(pencil: &CubicMatrixPencil) -> Result<DMatrix<f64>> {
    let k = pencil.size();
    let [c0, c1, c2, c3] = &pencil.c;
    if condition(c3) > MAX_C0_CONDITION {
        return Err(Error::IllConditioned);
    }
    let lu = c3.clone().lu();
    let mut d = DMatrix::zeros(3 * k, 3 * k);
    for i in 0..2 * k {
        d[(i, i + k)] = 1.0;
    }
    for (block, ci) in [c0, c1, c2].into_iter().enumerate() {
        let x = lu.solve(ci).ok_or(Error::IllConditioned)?;
        d.view_mut((2 * k, block * k), (k, k)).copy_from(&(-x));
    }
    Ok(d)
}

/// Right singular vector of the smallest singular value, scaled so the first
/// component is 1 when it is not negligible.
pub fn null_vector(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    null_vector_with_tol(m, NULL_TOL)
}

pub fn null_vector_with_tol(m: &DMatrix<f64>, tol: f64) -> Result<DVector<f64>> {
    let n = m.ncols();
    if m.nrows() < n {
        // Wide matrix: the null space has dimension at least n - rows.
        return Err(Error::RankDeficiencyMismatch);
    }
    // Columns are equilibrated first; coefficient matrices over monomials
    // of different degree are otherwise badly scaled.
    let scales: Vec<f64> = m.column_iter().map(|c| {
        let norm = c.norm();
        if norm > 0.0 { 1.0 / norm } else { 1.0 }
    }).collect();
    let mut scaled = m.clone();
    for (mut c, s) in scaled.column_iter_mut().zip(&scales) {
        c *= *s;
    }
    let svd = scaled.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::NotRankDeficient)?;
    let s = &svd.singular_values;
    let smax = s[0];
    if !(s[n - 1] <= tol * smax) {
        return Err(Error::NotRankDeficient);
    }
    if n >= 2 && s[n - 2] <= tol * smax {
        return Err(Error::RankDeficiencyMismatch);
    }
    let mut v = DVector::from_fn(n, |i, _| v_t[(n - 1, i)] * scales[i]);
    if v[0].abs() > 1e-8 * v.amax() {
        v /= v[0];
    } else {
        v /= v.norm();
    }
    Ok(v)
}

/// Eigenvalues `a` of the pencil, with null vectors of `C(a)` at the real
/// positive ones. `imag_tol` is the relative imaginary part below which an
/// eigenvalue counts as real.
pub fn polyeig_cubic(pencil: &CubicMatrixPencil, linearization: Linearization, imag_tol: f64) -> Result<Vec<PencilEigenpair>> {
    let deflation = match linearization {
        Linearization::Alpha => match companion_alpha(pencil) {
            Ok(d) => {
                let alphas = eigenvalues(&d)?;
                return Ok(finish_alpha(pencil, alphas, imag_tol));
            }
            Err(_) => Linearization::Gamma,
        },
        other => other,
    };
    match gamma_eigenvalues(pencil, deflation) {
        Ok(gammas) => Ok(finish(pencil, &gammas, 0.0, imag_tol)),
        Err(Error::SingularC0) => {
            // C0 singular means a = 0 is an eigenvalue; move the origin to a
            // point where C is regular and solve there.
            for mu in [0.7548776662466927, 1.3247179572447460, -0.5698402909980532, 2.1478990357047874] {
                let shifted = pencil.shifted(mu);
                if condition(&shifted.c[0]) > MAX_C0_CONDITION {
                    continue;
                }
                let gammas = gamma_eigenvalues(&shifted, deflation)?;
                return Ok(finish(pencil, &gammas, mu, imag_tol));
            }
            Err(Error::SingularC0)
        }
        Err(e) => Err(e),
    }
}

fn gamma_eigenvalues(pencil: &CubicMatrixPencil, linearization: Linearization) -> Result<Vec<Complex64>> {
    let d = match linearization {
        Linearization::GammaDeflated(r) => deflate_zero_columns(pencil, r)?,
        _ => companion_gamma(pencil)?,
    };
    eigenvalues(&d)
}

fn finish(pencil: &CubicMatrixPencil, gammas: &[Complex64], shift: f64, imag_tol: f64) -> Vec<PencilEigenpair> {
    // Zero gammas are infinite eigenvalues of the original pencil.
    let alphas = gammas.iter().filter(|g| g.norm() >= 1e-14).map(|g| g.inv() + shift).collect();
    finish_alpha(pencil, alphas, imag_tol)
}

fn finish_alpha(pencil: &CubicMatrixPencil, alphas: Vec<Complex64>, imag_tol: f64) -> Vec<PencilEigenpair> {
    alphas
        .into_iter()
        .map(|alpha| {
            let is_real = alpha.im.abs() <= imag_tol * alpha.norm();
            let null_vector = if is_real && alpha.re > 0.0 {
                null_vector(&pencil.eval(alpha.re)).ok()
            } else {
                None
            };
            PencilEigenpair { alpha, null_vector }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real_sorted(pairs: &[PencilEigenpair]) -> Vec<f64> {
        let mut v: Vec<f64> = pairs.iter().filter(|p| p.alpha.im.abs() < 1e-9).map(|p| p.alpha.re).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    fn scalar(c: [f64; 4]) -> CubicMatrixPencil {
        let m = |x| DMatrix::from_element(1, 1, x);
        CubicMatrixPencil::new(m(c[0]), m(c[1]), m(c[2]), m(c[3]))
    }

    #[test]
    fn scalar_cubic() {
        let p = scalar([-6.0, 11.0, -6.0, 1.0]);
        let r = real_sorted(&polyeig_cubic(&p, Linearization::Gamma, 1e-9).unwrap());
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn block_diagonal_decouples() {
        let c = |a: f64, b: f64| DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b]);
        // (a-1)(a-2)(a-3) and (a-4)(a-5)(a-0.5)
        let p = CubicMatrixPencil::new(c(-6.0, -10.0), c(11.0, 24.5), c(-6.0, -9.5), c(1.0, 1.0));
        let r = real_sorted(&polyeig_cubic(&p, Linearization::Gamma, 1e-9).unwrap());
        let expected = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(r.len(), 6);
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn singular_c0_uses_shift() {
        // a (a - 2)(a - 3): C0 = 0.
        let p = scalar([0.0, 6.0, -5.0, 1.0]);
        assert_eq!(companion_gamma(&p), Err(Error::SingularC0));
        let r = real_sorted(&polyeig_cubic(&p, Linearization::Gamma, 1e-9).unwrap());
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([0.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn deflation_preserves_finite_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = 7;
        for _ in 0..20 {
            let mut rand = || DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let c0 = rand();
            let c1 = rand();
            let c2 = rand();
            let a = DMatrix::from_fn(k, 4, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(4, k, |_, _| rng.random_range(-1.0..1.0));
            let p = CubicMatrixPencil::new(c0, c1, c2, a * b);
            let full = eigenvalues(&companion_gamma(&p).unwrap()).unwrap();
            let defl = eigenvalues(&deflate_zero_columns(&p, 4).unwrap()).unwrap();
            assert_eq!(defl.len(), 18);
            let nonzero: Vec<_> = full.iter().filter(|g| g.norm() > 1e-9).collect();
            assert_eq!(nonzero.len(), 18);
            for g in &defl {
                let best = nonzero.iter().map(|h| (*h - g).norm()).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-8 * (1.0 + g.norm()), "{g} unmatched ({best})");
            }
            assert!(matches!(deflate_zero_columns(&p, 5), Err(Error::UnexpectedRank { found: 4, .. })));
        }
    }

    #[test]
    fn null_vectors() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let v = null_vector(&m).unwrap();
        assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12 && (v[2].abs() - 1.0).abs() < 1e-12);
        assert_eq!(null_vector(&DMatrix::identity(3, 3)), Err(Error::NotRankDeficient));
        let two = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(null_vector(&two), Err(Error::RankDeficiencyMismatch));
    }

    #[test]
    fn null_vector_of_monomial_structure() {
        // Pencil built so that C(a) [1, b, b^2]^T = 0 at a = 2, b = 0.5.
        let b = 0.5;
        let w = DVector::from_vec(vec![1.0, b, b * b]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rnd = || DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let (c1, c2, c3) = (rnd(), rnd(), rnd());
        let a = 2.0;
        let rest = (&c1 + (&c2 + &c3 * a) * a) * a;
        // Choose C0 so the residual at (a, b) vanishes: add a rank-one fix.
        let mut c0 = rnd();
        let r = -(&c0 + &rest) * &w;
        c0 += &r * w.transpose() / w.norm_squared();
        let p = CubicMatrixPencil::new(c0, c1, c2, c3);
        let pairs = polyeig_cubic(&p, Linearization::Gamma, 1e-9).unwrap();
        let hit = pairs.iter().find(|q| (q.alpha.re - a).abs() < 1e-9 && q.alpha.im.abs() < 1e-9).unwrap();
        let v = hit.null_vector.as_ref().unwrap();
        assert!((v[1] - b).abs() < 1e-8 && (v[2] - b * b).abs() < 1e-8);
    }
}
