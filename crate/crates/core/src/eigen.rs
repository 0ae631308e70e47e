//! Eigenvalues of small dense real matrices: balancing, reduction to upper
//! Hessenberg form by stabilized elementary similarity transforms, then the
//! Francis double-shift QR iteration.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::poly::UniPoly;
#[allow(unused_imports)]
use num_traits::Float;

const MAX_ITERATIONS: usize = 60;

/// Square matrix stored row-major with 1-based indexing, which keeps the
/// QR sweep close to its textbook form.
struct Work {
    n: usize,
    a: Vec<f64>,
}

impl Work {
    fn from(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut a = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                a[(i + 1) * (n + 1) + j + 1] = m[(i, j)];
            }
        }
        Self { n, a }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.n + 1) + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * (self.n + 1) + j] = v;
    }

    #[inline]
    fn sub(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * (self.n + 1) + j] -= v;
    }

    fn balance(&mut self) {
        const RADIX: f64 = 2.0;
        let sqrdx = RADIX * RADIX;
        let n = self.n;
        let mut done = false;
        while !done {
            done = true;
            for i in 1..=n {
                let mut r = 0.0;
                let mut c = 0.0;
                for j in 1..=n {
                    if j != i {
                        c += self.get(j, i).abs();
                        r += self.get(i, j).abs();
                    }
                }
                if c != 0.0 && r != 0.0 {
                    let mut g = r / RADIX;
                    let mut f = 1.0;
                    let s = c + r;
                    while c < g {
                        f *= RADIX;
                        c *= sqrdx;
                    }
                    g = r * RADIX;
                    while c > g {
                        f /= RADIX;
                        c /= sqrdx;
                    }
                    if (c + r) / f < 0.95 * s {
                        done = false;
                        let g = 1.0 / f;
                        for j in 1..=n {
                            let v = self.get(i, j) * g;
                            self.set(i, j, v);
                        }
                        for j in 1..=n {
                            let v = self.get(j, i) * f;
                            self.set(j, i, v);
                        }
                    }
                }
            }
        }
    }

    fn hessenberg(&mut self) {
        let n = self.n;
        if n < 3 {
            return;
        }
        for m in 2..n {
            let mut x = 0.0;
            let mut i = m;
            for j in m..=n {
                if self.get(j, m - 1).abs() > f64::abs(x) {
                    x = self.get(j, m - 1);
                    i = j;
                }
            }
            if i != m {
                for j in (m - 1)..=n {
                    let (a, b) = (self.get(i, j), self.get(m, j));
                    self.set(i, j, b);
                    self.set(m, j, a);
                }
                for j in 1..=n {
                    let (a, b) = (self.get(j, i), self.get(j, m));
                    self.set(j, i, b);
                    self.set(j, m, a);
                }
            }
            if x != 0.0 {
                for i in (m + 1)..=n {
                    let mut y = self.get(i, m - 1);
                    if y != 0.0 {
                        y /= x;
                        self.set(i, m - 1, y);
                        for j in m..=n {
                            let v = y * self.get(m, j);
                            self.sub(i, j, v);
                        }
                        for j in 1..=n {
                            let v = y * self.get(j, i);
                            self.a[j * (n + 1) + m] += v;
                        }
                    }
                }
            }
        }
        for i in 3..=n {
            for j in 1..(i - 1) {
                self.set(i, j, 0.0);
            }
        }
    }

    #[allow(unused_assignments)]
    fn qr(&mut self) -> Result<Vec<Complex64>> {
        let n = self.n;
        let mut wr = vec![0.0; n + 1];
        let mut wi = vec![0.0; n + 1];
        let mut anorm = 0.0;
        for i in 1..=n {
            for j in i.saturating_sub(1).max(1)..=n {
                anorm += self.get(i, j).abs();
            }
        }
        let mut nn = n;
        let mut t = 0.0;
        let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
        let (mut x, mut y, mut z, mut w);
        while nn >= 1 {
            let mut its = 0;
            loop {
                let mut l = 1;
                let mut ll = nn;
                while ll >= 2 {
                    let mut s = self.get(ll - 1, ll - 1).abs() + self.get(ll, ll).abs();
                    if s == 0.0 {
                        s = anorm;
                    }
                    if self.get(ll, ll - 1).abs() + s == s {
                        self.set(ll, ll - 1, 0.0);
                        l = ll;
                        break;
                    }
                    ll -= 1;
                }
                x = self.get(nn, nn);
                if l == nn {
                    wr[nn] = x + t;
                    wi[nn] = 0.0;
                    nn -= 1;
                } else {
                    y = self.get(nn - 1, nn - 1);
                    w = self.get(nn, nn - 1) * self.get(nn - 1, nn);
                    if l == nn - 1 {
                        p = 0.5 * (y - x);
                        q = p * p + w;
                        z = q.abs().sqrt();
                        x += t;
                        if q >= 0.0 {
                            z = p + z.copysign(p);
                            wr[nn - 1] = x + z;
                            wr[nn] = x + z;
                            if z != 0.0 {
                                wr[nn] = x - w / z;
                            }
                            wi[nn - 1] = 0.0;
                            wi[nn] = 0.0;
                        } else {
                            wr[nn - 1] = x + p;
                            wr[nn] = x + p;
                            wi[nn - 1] = -z;
                            wi[nn] = z;
                        }
                        nn -= 2;
                    } else {
                        if its == MAX_ITERATIONS {
                            return Err(Error::EigenNoConvergence);
                        }
                        if its > 0 && its % 10 == 0 {
                            t += x;
                            for i in 1..=nn {
                                self.sub(i, i, x);
                            }
                            let s = self.get(nn, nn - 1).abs() + self.get(nn - 1, nn - 2).abs();
                            x = 0.75 * s;
                            y = x;
                            w = -0.4375 * s * s;
                        }
                        its += 1;
                        let mut m = nn - 2;
                        loop {
                            z = self.get(m, m);
                            r = x - z;
                            let s0 = y - z;
                            p = (r * s0 - w) / self.get(m + 1, m) + self.get(m, m + 1);
                            q = self.get(m + 1, m + 1) - z - r - s0;
                            r = self.get(m + 2, m + 1);
                            let s = p.abs() + q.abs() + r.abs();
                            p /= s;
                            q /= s;
                            r /= s;
                            if m == l {
                                break;
                            }
                            let u = self.get(m, m - 1).abs() * (q.abs() + r.abs());
                            let v = p.abs()
                                * (self.get(m - 1, m - 1).abs() + z.abs() + self.get(m + 1, m + 1).abs());
                            if u + v == v {
                                break;
                            }
                            m -= 1;
                        }
                        for i in (m + 2)..=nn {
                            self.set(i, i - 2, 0.0);
                            if i != m + 2 {
                                self.set(i, i - 3, 0.0);
                            }
                        }
                        let mut k = m;
                        while k + 1 <= nn {
                            if k != m {
                                p = self.get(k, k - 1);
                                q = self.get(k + 1, k - 1);
                                r = 0.0;
                                if k != nn - 1 {
                                    r = self.get(k + 2, k - 1);
                                }
                                x = p.abs() + q.abs() + r.abs();
                                if x != 0.0 {
                                    p /= x;
                                    q /= x;
                                    r /= x;
                                }
                            }
                            let s = (p * p + q * q + r * r).sqrt().copysign(p);
                            if s != 0.0 {
                                if k == m {
                                    if l != m {
                                        let v = -self.get(k, k - 1);
                                        self.set(k, k - 1, v);
                                    }
                                } else {
                                    self.set(k, k - 1, -s * x);
                                }
                                p += s;
                                x = p / s;
                                y = q / s;
                                z = r / s;
                                q /= p;
                                r /= p;
                                for j in k..=nn {
                                    p = self.get(k, j) + q * self.get(k + 1, j);
                                    if k != nn - 1 {
                                        p += r * self.get(k + 2, j);
                                        self.sub(k + 2, j, p * z);
                                    }
                                    self.sub(k + 1, j, p * y);
                                    self.sub(k, j, p * x);
                                }
                                let mmin = if nn < k + 3 { nn } else { k + 3 };
                                for i in l..=mmin {
                                    p = x * self.get(i, k) + y * self.get(i, k + 1);
                                    if k != nn - 1 {
                                        p += z * self.get(i, k + 2);
                                        self.sub(i, k + 2, p * r);
                                    }
                                    self.sub(i, k + 1, p * q);
                                    self.sub(i, k, p);
                                }
                            }
                            k += 1;
                        }
                    }
                }
                if nn < 2 || l >= nn - 1 {
                    break;
                }
            }
        }
        Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
    }
}

/// All eigenvalues of a real square matrix (unordered).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    assert_eq!(m.nrows(), m.ncols(), "eigenvalues of a non-square matrix");
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNoConvergence);
    }
    let mut w = Work::from(m);
    w.balance();
    w.hessenberg();
    w.qr()
}

/// Companion matrix of a polynomial (top row holds `-c_{n-1}/c_n, ...`).
pub fn companion(p: &UniPoly) -> DMatrix<f64> {
    let c = p.coefs();
    let n = p.degree();
    let lead = p.leading();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -c[n - 1 - j] / lead;
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m
}

/// Complex roots of `p` as companion-matrix eigenvalues.
pub fn polynomial_roots(p: &UniPoly) -> Result<Vec<Complex64>> {
    if p.degree() == 0 {
        return Ok(Vec::new());
    }
    eigenvalues(&companion(p))
}
