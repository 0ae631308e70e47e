//! Univariate polynomials and Sturm-sequence real root isolation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Relative threshold below which leading coefficients are trimmed.
pub const TRIM_EPS: f64 = 1e-12;

/// Real polynomial with coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct UniPoly {
    coefs: Vec<f64>,
}

impl UniPoly {
    /// Builds a polynomial, trimming leading coefficients smaller than
    /// `TRIM_EPS * max|coef|`.
    pub fn new(mut coefs: Vec<f64>) -> Self {
        let max = coefs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        while coefs.len() > 1 && coefs.last().is_some_and(|c| c.abs() <= TRIM_EPS * max) {
            coefs.pop();
        }
        if coefs.is_empty() {
            coefs.push(0.0);
        }
        Self { coefs }
    }

    /// Product of `(x - r)` over the given roots.
    pub fn from_roots(roots: &[f64]) -> Self {
        let mut p = UniPoly::new(vec![1.0]);
        for &r in roots {
            p = p.mul(&UniPoly::new(vec![-r, 1.0]));
        }
        p
    }

    pub fn coefs(&self) -> &[f64] {
        &self.coefs
    }

    pub fn degree(&self) -> usize {
        self.coefs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coefs.last().unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.coefs.iter().all(|&c| c == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coefs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.coefs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value and first derivative.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coefs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> Self {
        if self.coefs.len() == 1 {
            return UniPoly::new(vec![0.0]);
        }
        UniPoly::new(self.coefs.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        UniPoly { coefs: self.coefs.iter().map(|c| c * s).collect() }
    }

    /// Scaled to unit infinity norm.
    pub fn normalized(&self) -> Self {
        let m = self.max_abs();
        if m > 0.0 {
            self.scaled(1.0 / m)
        } else {
            self.clone()
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coefs.len() + other.coefs.len() - 1];
        for (i, a) in self.coefs.iter().enumerate() {
            for (j, b) in other.coefs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        UniPoly::new(out)
    }

    /// Euclidean division `self = q * d + r`.
    pub fn div_rem(&self, d: &Self) -> (Self, Self) {
        let dd = d.degree();
        if self.degree() < dd {
            return (UniPoly::new(vec![0.0]), self.clone());
        }
        let mut r = self.coefs.clone();
        let mut q = vec![0.0; self.degree() - dd + 1];
        let lead = d.leading();
        for k in (0..q.len()).rev() {
            let c = r[k + dd] / lead;
            q[k] = c;
            for (j, dc) in d.coefs.iter().enumerate() {
                r[k + j] -= c * dc;
            }
            r[k + dd] = 0.0;
        }
        r.truncate(dd.max(1));
        // Remainder coefficients are exact zeros only by accident; keep all of
        // them and let the caller judge their size.
        let rem = UniPoly { coefs: if r.is_empty() { vec![0.0] } else { r } };
        (UniPoly::new(q), rem.trimmed_exact())
    }

    fn trimmed_exact(mut self) -> Self {
        while self.coefs.len() > 1 && *self.coefs.last().unwrap() == 0.0 {
            self.coefs.pop();
        }
        self
    }

    /// Numerical greatest common divisor; remainders below `tol` relative to
    /// the current divisor are treated as zero.
    pub fn gcd(&self, other: &Self, tol: f64) -> Self {
        let mut a = self.normalized();
        let mut b = other.normalized();
        if a.degree() < b.degree() {
            core::mem::swap(&mut a, &mut b);
        }
        loop {
            if b.is_zero() {
                return a.normalized();
            }
            if b.degree() == 0 {
                return UniPoly::new(vec![1.0]);
            }
            let (_, r) = a.div_rem(&b);
            let scale = a.max_abs().max(b.max_abs());
            if r.max_abs() <= tol * scale {
                return b.normalized();
            }
            a = b;
            b = UniPoly::new(r.coefs).normalized();
        }
    }

    /// `p / gcd(p, p')`: same distinct roots, all simple.
    pub fn square_free(&self) -> Self {
        if self.degree() < 2 {
            return self.clone();
        }
        let g = self.gcd(&self.derivative(), 1e-10);
        if g.degree() == 0 {
            self.clone()
        } else {
            self.div_rem(&g).0.normalized()
        }
    }
}

/// Result of a Sturm isolation. `low_confidence` marks the fallback path taken
/// when the remainder chain degenerated even after square-free reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct SturmRoots {
    pub roots: Vec<f64>,
    pub low_confidence: bool,
}

/// Sturm chain `p0 = p, p1 = p', p_{k+1} = -rem(p_{k-1}, p_k)`.
#[derive(Debug, Clone)]
pub struct SturmChain {
    polys: Vec<UniPoly>,
}

impl SturmChain {
    pub fn new(p: &UniPoly) -> Result<Self> {
        // The first entry keeps the caller's scaling so exact endpoint roots
        // still evaluate to zero.
        let mut polys = vec![p.clone(), p.derivative().normalized()];
        while polys.last().unwrap().degree() > 0 {
            let n = polys.len();
            let (_, r) = polys[n - 2].div_rem(&polys[n - 1]);
            let scale = if n == 2 { p.max_abs() } else { polys[n - 2].max_abs() };
            if r.max_abs() <= 1e-13 * scale {
                return Err(Error::IllConditioned);
            }
            polys.push(r.scaled(-1.0).normalized());
        }
        Ok(Self { polys })
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    /// Number of sign changes of the chain at `x` (zeros skipped).
    pub fn sign_changes(&self, x: f64) -> usize {
        let mut count = 0;
        let mut last = 0.0f64;
        for p in &self.polys {
            let v = p.eval(x);
            if v == 0.0 {
                continue;
            }
            if last != 0.0 && (v > 0.0) != (last > 0.0) {
                count += 1;
            }
            last = v;
        }
        count
    }

    /// Number of distinct real roots in `(lo, hi]`.
    pub fn count(&self, lo: f64, hi: f64) -> usize {
        self.sign_changes(lo).saturating_sub(self.sign_changes(hi))
    }
}

/// All distinct real roots of `p` in `(lo, hi]`, each refined to `tol`.
pub fn sturm_real_roots(p: &UniPoly, lo: f64, hi: f64, tol: f64) -> Result<SturmRoots> {
    if !(lo < hi) {
        return Err(Error::InvalidConfig("sturm bracket must satisfy lo < hi"));
    }
    let p = UniPoly::new(p.coefs.clone());
    if p.degree() == 0 {
        return Ok(SturmRoots { roots: Vec::new(), low_confidence: false });
    }
    let chain = SturmChain::new(&p).or_else(|_| SturmChain::new(&p.square_free()));
    match chain {
        Ok(chain) => {
            let target = chain.polys[0].clone();
            let mut roots = Vec::new();
            isolate(&chain, &target, lo, hi, tol, &mut roots);
            roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(SturmRoots { roots, low_confidence: false })
        }
        Err(_) => Ok(SturmRoots { roots: scan_roots(&p.square_free(), lo, hi, tol), low_confidence: true }),
    }
}

fn isolate(chain: &SturmChain, p: &UniPoly, lo: f64, hi: f64, tol: f64, out: &mut Vec<f64>) {
    let mut stack = vec![(lo, hi, chain.sign_changes(lo), chain.sign_changes(hi), 0u32)];
    while let Some((a, b, va, vb, depth)) = stack.pop() {
        let n = va.saturating_sub(vb);
        if n == 0 {
            continue;
        }
        if n == 1 {
            out.push(refine(p, a, b, tol));
            continue;
        }
        if depth > 200 || b - a <= tol {
            // Cluster narrower than the tolerance: report it once.
            out.push(0.5 * (a + b));
            continue;
        }
        let mut mid = 0.5 * (a + b);
        if p.eval(mid) == 0.0 {
            mid = a + 0.5001 * (b - a);
        }
        let vm = chain.sign_changes(mid);
        stack.push((a, mid, va, vm, depth + 1));
        stack.push((mid, b, vm, vb, depth + 1));
    }
}

/// Safeguarded Newton iteration on a bracket `(a, b]` holding one simple root.
fn refine(p: &UniPoly, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = p.eval(a);
    let fb = p.eval(b);
    if fb == 0.0 {
        return b;
    }
    if fa == 0.0 || (fa > 0.0) == (fb > 0.0) {
        // The Sturm count saw a root the endpoint signs do not bracket
        // (rounding at the edge); fall back to the better endpoint.
        fa = p.eval(a);
        if fa.abs() < fb.abs() {
            return a;
        }
        return b;
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (fx, dfx) = p.eval_with_derivative(x);
        if fx == 0.0 {
            return x;
        }
        if (fx > 0.0) == (fa > 0.0) {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        let newton = x - fx / dfx;
        let step_ok = dfx != 0.0 && newton > a && newton < b;
        let next = if step_ok { newton } else { 0.5 * (a + b) };
        let converged = (next - x).abs() <= 0.25 * tol || b - a <= tol;
        x = next;
        if converged {
            // One more Newton polish when it stays inside the bracket.
            let (fx, dfx) = p.eval_with_derivative(x);
            if dfx != 0.0 {
                let y = x - fx / dfx;
                if y > a && y < b {
                    return y;
                }
            }
            return x;
        }
    }
    x
}

/// Fallback: sign scanning on a dense grid followed by bisection.
fn scan_roots(p: &UniPoly, lo: f64, hi: f64, tol: f64) -> Vec<f64> {
    const SAMPLES: usize = 4000;
    let mut roots = Vec::new();
    let step = (hi - lo) / SAMPLES as f64;
    let mut a = lo;
    let mut fa = p.eval(a);
    for k in 1..=SAMPLES {
        let b = lo + step * k as f64;
        let fb = p.eval(b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && (fa > 0.0) != (fb > 0.0) {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            while x1 - x0 > tol {
                let m = 0.5 * (x0 + x1);
                let fm = p.eval(m);
                if (fm > 0.0) == (f0 > 0.0) {
                    x0 = m;
                    f0 = fm;
                } else {
                    x1 = m;
                }
            }
            roots.push(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    roots
}
