//! Numerical evaluation of the generator table and assembly of the per-case
//! polynomial systems in `a = f^2` and `b = rho^2`.
//!
//! With `Kj^-2 = diag(1, 1, aj) / aj` every `Qj` is, up to a scalar, the
//! congruence `D1 Pj D1` where `D1 = diag(f1, f1, 1)` and
//! `Pj = Gj^T diag(1, 1, aj) Gj` is linear in `aj`. Since each generator has
//! bidegree (3, 3) and a fixed parity in the index-2 weight `W` of its
//! terms, the congruence contributes `f1^(-W)` which becomes a power of `a1`
//! once the smallest power is factored out. The systems are therefore built
//! by multiplying cubic products of `Pj` entries, without any division.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::generators::{GeneratorTable, NUM_GENERATORS, THIRD_INDEX_COUNT};
use crate::geometry::{CameraIntrinsics, Homography2D, Mat3};
use crate::poly::UniPoly;

/// Relative size below which an assembled polynomial counts as identically
/// zero.
pub const DEGENERATE_TOL: f64 = 1e-10;

/// Upper-triangular entries `(00, 01, 02, 11, 12, 22)` of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymQ(pub [f64; 6]);

const ENTRY: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

impl SymQ {
    /// Reads the upper triangle.
    pub fn from_matrix(m: &Mat3) -> Self {
        SymQ(ENTRY.map(|(i, j)| m[(i, j)]))
    }

    pub fn to_matrix(&self) -> Mat3 {
        let q = &self.0;
        Mat3::new(q[0], q[1], q[2], q[1], q[3], q[4], q[2], q[4], q[5])
    }
}

/// `(Kj^-1 G K1)^T (Kj^-1 G K1)`.
pub fn compute_q(g: &Homography2D, k1: &CameraIntrinsics, kj: &CameraIntrinsics) -> SymQ {
    let m = kj.inverse() * g.matrix() * k1.matrix();
    SymQ::from_matrix(&(m.transpose() * m))
}

/// Dense bivariate polynomial, `c[i][j]` multiplies `a^i b^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiPoly {
    nx: usize,
    ny: usize,
    c: Vec<f64>,
}

impl BiPoly {
    pub fn zeros(max_deg_a: usize, max_deg_b: usize) -> Self {
        Self { nx: max_deg_a + 1, ny: max_deg_b + 1, c: vec![0.0; (max_deg_a + 1) * (max_deg_b + 1)] }
    }

    pub fn max_deg_a(&self) -> usize {
        self.nx - 1
    }

    pub fn max_deg_b(&self) -> usize {
        self.ny - 1
    }

    pub fn coef(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.ny + j]
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.c[i * self.ny + j] += v;
    }

    pub fn coefs(&self) -> &[f64] {
        &self.c
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        for i in (0..self.nx).rev() {
            let mut row = 0.0;
            for j in (0..self.ny).rev() {
                row = row * b + self.coef(i, j);
            }
            acc = acc * a + row;
        }
        acc
    }

    /// Coefficients along `a` when the polynomial does not involve `b`.
    fn univariate(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.coef(i, 0)).collect()
    }
}

/// Where the unknown of a target view enters.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Axis {
    A,
    B,
}

/// The reference-view focal length: unknown `a`, or a known value.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Reference {
    Unknown,
    Known(f64),
}

#[derive(Debug, Clone)]
struct CompiledTerm {
    coef: f64,
    mono2: u8,
    mono3: u8,
    weight: u8,
}

#[derive(Debug, Clone)]
struct CompiledGenerator {
    terms: Vec<CompiledTerm>,
    w_min: u8,
    w_max: u8,
}

/// The 56 cubic monomials in six variables, as entry-index triples.
fn cubic_monomials() -> Vec<[u8; 3]> {
    let mut out = Vec::with_capacity(56);
    for a in 0..6u8 {
        for b in a..6 {
            for c in b..6 {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn monomial_index(monos: &[[u8; 3]], exps: &[u8]) -> Option<u8> {
    let mut idx = [0u8; 3];
    let mut k = 0;
    for (v, &e) in exps.iter().enumerate() {
        for _ in 0..e {
            if k == 3 {
                return None;
            }
            idx[k] = v as u8;
            k += 1;
        }
    }
    if k != 3 {
        return None;
    }
    monos.iter().position(|m| *m == idx).map(|p| p as u8)
}

/// A generator table prepared for repeated numerical assembly.
#[derive(Debug, Clone)]
pub struct Constraints {
    table: GeneratorTable,
    compiled: Vec<CompiledGenerator>,
    monomials: Vec<[u8; 3]>,
}

/// Value and magnitude companion of one assembled generator.
#[derive(Debug, Clone)]
struct Assembled {
    value: BiPoly,
    magnitude: BiPoly,
}

impl Constraints {
    pub fn new(table: GeneratorTable) -> Result<Self> {
        let monomials = cubic_monomials();
        let mut compiled = Vec::with_capacity(table.len());
        for g in &table.generators {
            if g.scale_degrees != (3, 3) {
                return Err(Error::InvalidTable("generators must have bidegree (3, 3)".into()));
            }
            let mut terms = Vec::with_capacity(g.terms.len());
            for t in &g.terms {
                let mono2 = monomial_index(&monomials, t.block(0));
                let mono3 = monomial_index(&monomials, t.block(1));
                let (Some(mono2), Some(mono3)) = (mono2, mono3) else {
                    return Err(Error::InvalidTable("term is not cubic in each view".into()));
                };
                terms.push(CompiledTerm { coef: t.coef, mono2, mono3, weight: t.third_index_weight() as u8 });
            }
            let w_min = terms.iter().map(|t| t.weight).min().unwrap_or(0);
            let w_max = terms.iter().map(|t| t.weight).max().unwrap_or(0);
            if w_max - w_min > 6 {
                return Err(Error::InvalidTable("reference-view degree exceeds 3".into()));
            }
            compiled.push(CompiledGenerator { terms, w_min, w_max });
        }
        Ok(Self { table, compiled, monomials })
    }

    /// Constraints from the table compiled into the crate.
    pub fn embedded() -> Self {
        Self::new(GeneratorTable::embedded()).expect("embedded table compiles")
    }

    pub fn table(&self) -> &GeneratorTable {
        &self.table
    }

    /// Every generator at `(Q2, Q3)`, divided by the sum of its absolute
    /// term values.
    pub fn evaluate(&self, q2: &SymQ, q3: &SymQ) -> [f64; NUM_GENERATORS] {
        let mut out = [0.0; NUM_GENERATORS];
        for (o, g) in out.iter_mut().zip(&self.table.generators) {
            let (v, m) = g.evaluate(&q2.0, &q3.0);
            *o = if m > 0.0 { v / m } else { 0.0 };
        }
        out
    }

    /// Cubic products of the entries of `P = G^T diag(1, 1, a) G` as
    /// polynomials in `a` (4 coefficients each), with absolute companions.
    fn view_products(&self, g: &Mat3) -> (Vec<[f64; 4]>, Vec<[f64; 4]>) {
        let lin: [[f64; 2]; 6] = ENTRY.map(|(i, k)| {
            [g[(0, i)] * g[(0, k)] + g[(1, i)] * g[(1, k)], g[(2, i)] * g[(2, k)]]
        });
        let mut val = Vec::with_capacity(self.monomials.len());
        let mut mag = Vec::with_capacity(self.monomials.len());
        for m in &self.monomials {
            let mut p = [1.0, 0.0, 0.0, 0.0];
            let mut q = [1.0, 0.0, 0.0, 0.0];
            for (deg, &e) in m.iter().enumerate() {
                let [a0, a1] = lin[e as usize];
                for k in (0..=deg + 1).rev() {
                    let lower = if k > 0 { p[k - 1] } else { 0.0 };
                    let lower_abs = if k > 0 { q[k - 1] } else { 0.0 };
                    p[k] = p[k] * a0 + lower * a1;
                    q[k] = q[k] * a0.abs() + lower_abs * a1.abs();
                }
            }
            val.push(p);
            mag.push(q);
        }
        (val, mag)
    }

    fn assemble(&self, g2: &Homography2D, g3: &Homography2D, reference: Reference, axis2: Axis, axis3: Axis) -> Vec<Assembled> {
        let (p2, m2) = self.view_products(g2.matrix());
        let (p3, m3) = self.view_products(g3.matrix());
        let deg_a_views = 3 * ((axis2 == Axis::A) as usize + (axis3 == Axis::A) as usize);
        let deg_b = 3 * ((axis2 == Axis::B) as usize + (axis3 == Axis::B) as usize);
        let t = match reference {
            Reference::Known(f1) => 1.0 / f1,
            Reference::Unknown => 1.0,
        };
        let mut out = Vec::with_capacity(self.compiled.len());
        for g in &self.compiled {
            let shift_max = match reference {
                Reference::Unknown => ((g.w_max - g.w_min) / 2) as usize,
                Reference::Known(_) => 0,
            };
            let mut value = BiPoly::zeros(shift_max + deg_a_views, deg_b);
            let mut magnitude = value.clone();
            for term in &g.terms {
                let (shift, scale) = match reference {
                    Reference::Unknown => (((g.w_max - term.weight) / 2) as usize, term.coef),
                    Reference::Known(_) => (0, term.coef * t.powi(term.weight as i32)),
                };
                let (a, ma) = (&p2[term.mono2 as usize], &m2[term.mono2 as usize]);
                let (b, mb) = (&p3[term.mono3 as usize], &m3[term.mono3 as usize]);
                let sabs = scale.abs();
                for i in 0..4 {
                    if a[i] == 0.0 && ma[i] == 0.0 {
                        continue;
                    }
                    for j in 0..4 {
                        let (mut da, mut db) = (shift, 0);
                        match axis2 {
                            Axis::A => da += i,
                            Axis::B => db += i,
                        }
                        match axis3 {
                            Axis::A => da += j,
                            Axis::B => db += j,
                        }
                        value.add(da, db, scale * a[i] * b[j]);
                        magnitude.add(da, db, sabs * ma[i] * mb[j]);
                    }
                }
            }
            out.push(Assembled { value, magnitude });
        }
        out
    }

    fn univariate_all(&self, assembled: Vec<Assembled>) -> Result<Vec<UniPoly>> {
        let mut polys = Vec::with_capacity(assembled.len());
        let mut any = false;
        for a in assembled {
            let mag = a.magnitude.max_abs();
            let val = a.value.max_abs();
            if mag > 0.0 && val > DEGENERATE_TOL * mag {
                any = true;
            }
            polys.push(UniPoly::new(a.value.univariate()).normalized());
        }
        if !any {
            return Err(Error::DegenerateMotion);
        }
        Ok(polys)
    }

    /// All seven Case I polynomials in `a = f^2` (shared focal length).
    pub fn case1_polynomials(&self, g2: &Homography2D, g3: &Homography2D) -> Result<Vec<UniPoly>> {
        self.univariate_all(self.assemble(g2, g3, Reference::Unknown, Axis::A, Axis::A))
    }

    /// All seven Case II polynomials in `a = f^2` (shared target focal, known
    /// reference focal `f1`).
    pub fn case2_polynomials(&self, g2: &Homography2D, g3: &Homography2D, f1: f64) -> Result<Vec<UniPoly>> {
        self.univariate_all(self.assemble(g2, g3, Reference::Known(f1), Axis::A, Axis::A))
    }

    /// The Case I polynomial used by the solver (degree 9 generically).
    pub fn assemble_case1(&self, g2: &Homography2D, g3: &Homography2D) -> Result<UniPoly> {
        Ok(select_generator(self.case1_polynomials(g2, g3)?))
    }

    /// The Case II polynomial used by the solver (degree 6 generically).
    pub fn assemble_case2(&self, g2: &Homography2D, g3: &Homography2D, f1: f64) -> Result<UniPoly> {
        Ok(select_generator(self.case2_polynomials(g2, g3, f1)?))
    }

    /// `7 x 28` matrix over `a^i b^j` in the order `i * 7 + j`
    /// (`a = f1^2`, `b = f2^2 = f3^2`), rows scaled to unit max norm.
    pub fn assemble_case3(&self, g2: &Homography2D, g3: &Homography2D) -> Result<DMatrix<f64>> {
        let assembled = self.assemble(g2, g3, Reference::Unknown, Axis::B, Axis::B);
        to_matrix(assembled, 3, 6)
    }

    /// `7 x 16` matrix over `a^i b^j` in the order `i * 4 + j`
    /// (`a = f2^2`, `b = f3^2`, known `f1`), rows scaled to unit max norm.
    pub fn assemble_case4(&self, g2: &Homography2D, g3: &Homography2D, f1: f64) -> Result<DMatrix<f64>> {
        let assembled = self.assemble(g2, g3, Reference::Known(f1), Axis::A, Axis::B);
        to_matrix(assembled, 3, 3)
    }
}

fn to_matrix(assembled: Vec<Assembled>, da: usize, db: usize) -> Result<DMatrix<f64>> {
    let cols = (da + 1) * (db + 1);
    let mut m = DMatrix::zeros(assembled.len(), cols);
    let mut any = false;
    for (r, a) in assembled.iter().enumerate() {
        let mag = a.magnitude.max_abs();
        let max = a.value.max_abs();
        if mag > 0.0 && max > DEGENERATE_TOL * mag {
            any = true;
        }
        // The reference-view degree of a generator may be below `da`.
        for i in 0..=a.value.max_deg_a().min(da) {
            for j in 0..=db {
                m[(r, i * (db + 1) + j)] = a.value.coef(i, j);
            }
        }
        if max > 0.0 {
            m.row_mut(r).scale_mut(1.0 / max);
        }
    }
    if !any {
        return Err(Error::DegenerateMotion);
    }
    Ok(m)
}

/// Picks the best conditioned polynomial: largest ratio of leading
/// coefficient to coefficient norm at the full generic degree.
pub fn select_generator(polys: Vec<UniPoly>) -> UniPoly {
    let top = polys.iter().map(|p| p.degree()).max().unwrap_or(0);
    let score = |p: &UniPoly| {
        if p.degree() == top && !p.is_zero() {
            p.leading().abs() / p.norm()
        } else {
            0.0
        }
    };
    let mut best = 0;
    let mut best_score = -1.0;
    for (i, p) in polys.iter().enumerate() {
        let s = score(p);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    polys.into_iter().nth(best).unwrap_or_else(|| UniPoly::new(vec![0.0]))
}

/// Index-2 weight of each symmetric entry, exposed for the oracle tests.
pub fn entry_third_index_weight() -> [u8; 6] {
    THIRD_INDEX_COUNT
}
