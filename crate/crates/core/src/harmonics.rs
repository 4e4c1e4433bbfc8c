//! Real orthonormal spherical harmonics on `S^{d-1}` as homogeneous polynomials.
//!
//! Indexing convention for `Y_{n,m}`:
//! * `d = 2`: `m = 0` for `n = 0`; otherwise `m = n` is `cos(n phi)/sqrt(pi)` and
//!   `m = -n` is `sin(n phi)/sqrt(pi)`, with `phi` the angle of `(w1, w2)`.
//! * `d = 3`: `m` in `-n..=n`; `|m|` is the azimuthal degree in `(w1, w2)`, `m >= 0`
//!   selects the cosine and `m < 0` the sine, polar axis `w3`.
//! * `d >= 4`: `m` in `0..dim H_n` is a flat index over the chain
//!   `n >= k_{d-1} >= ... >= k_2`, ordered by `k_{d-1}` ascending and then by the
//!   flat index on `S^{d-2}`.
//!
//! Every harmonic is `N C_{n-k}^{k+(d-2)/2}(w_d) Y'_k(w_1, .., w_{d-1})` with `Y'_k`
//! the (homogeneous) harmonic of one dimension less, and `N` the Gegenbauer norm.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::specfun::gamma::gamma_unchecked;

const MAX_POW: usize = 33;

/// Sparse polynomial in `d` variables used during construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub d: usize,
    pub terms: BTreeMap<Vec<u8>, f64>,
}

impl Poly {
    pub fn zero(d: usize) -> Self {
        Self { d, terms: BTreeMap::new() }
    }

    pub fn constant(d: usize, c: f64) -> Self {
        let mut p = Self::zero(d);
        if c != 0.0 {
            p.terms.insert(vec![0; d], c);
        }
        p
    }

    pub fn monomial(d: usize, exps: &[u8], c: f64) -> Self {
        let mut p = Self::zero(d);
        p.terms.insert(exps.to_vec(), c);
        p
    }

    /// `|z|^2 = sum z_i^2`
    pub fn norm2(d: usize) -> Self {
        let mut p = Self::zero(d);
        for i in 0..d {
            let mut e = vec![0; d];
            e[i] = 2;
            p.terms.insert(e, 1.0);
        }
        p
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|e| e.iter().map(|&k| k as usize).sum()).max().unwrap_or(0)
    }

    pub fn add_scaled(&mut self, other: &Poly, c: f64) {
        for (e, v) in &other.terms {
            *self.terms.entry(e.clone()).or_insert(0.0) += c * v;
        }
        self.terms.retain(|_, v| *v != 0.0);
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.terms.values_mut() {
            *v *= c;
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.d);
        for (e1, v1) in &self.terms {
            for (e2, v2) in &other.terms {
                let e: Vec<u8> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                *out.terms.entry(e).or_insert(0.0) += v1 * v2;
            }
        }
        out.terms.retain(|_, v| *v != 0.0);
        out
    }

    pub fn pow(&self, k: usize) -> Poly {
        let mut out = Poly::constant(self.d, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Embed into `d + 1` variables (new variable last, exponent 0).
    pub fn lift(&self) -> Poly {
        let mut out = Poly::zero(self.d + 1);
        for (e, v) in &self.terms {
            let mut e2 = e.clone();
            e2.push(0);
            out.terms.insert(e2, *v);
        }
        out
    }

    /// Multiply each homogeneous part of degree `k` by `|z|^{deg - k}` (same parity only).
    pub fn homogenize(&self, deg: usize) -> Result<Poly> {
        let r2 = Poly::norm2(self.d);
        let mut out = Poly::zero(self.d);
        for (e, v) in &self.terms {
            let k: usize = e.iter().map(|&x| x as usize).sum();
            if k > deg || (deg - k) % 2 == 1 {
                return Err(Error::InvariantViolation(format!(
                    "cannot homogenise a degree-{k} term to degree {deg}"
                )));
            }
            let m = Poly::monomial(self.d, e, *v).mul(&r2.pow((deg - k) / 2));
            out.add_scaled(&m, 1.0);
        }
        Ok(out)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, v)| v * e.iter().zip(z).map(|(&k, x)| x.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn compile(&self) -> CompiledPoly {
        let mut exps = Vec::with_capacity(self.terms.len() * self.d);
        let mut coefs = Vec::with_capacity(self.terms.len());
        for (e, v) in &self.terms {
            exps.extend_from_slice(e);
            coefs.push(*v);
        }
        CompiledPoly { d: self.d, degree: self.degree(), exps, coefs }
    }
}

/// Flat homogeneous polynomial, evaluated as `P(z)/|z|^deg` off the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledPoly {
    pub d: usize,
    pub degree: usize,
    exps: Vec<u8>,
    coefs: Vec<f64>,
}

impl CompiledPoly {
    pub fn n_terms(&self) -> usize {
        self.coefs.len()
    }

    fn powers(&self, z: &[f64]) -> [[f64; MAX_POW]; 7] {
        let mut p = [[0.0; MAX_POW]; 7];
        for (i, &x) in z.iter().enumerate().take(self.d) {
            p[i][0] = 1.0;
            for k in 1..=self.degree {
                p[i][k] = p[i][k - 1] * x;
            }
        }
        p
    }

    /// Raw polynomial value `P(z)`.
    pub fn eval_raw(&self, z: &[f64]) -> f64 {
        let p = self.powers(z);
        let mut acc = 0.0;
        for (t, &c) in self.coefs.iter().enumerate() {
            let e = &self.exps[t * self.d..(t + 1) * self.d];
            let mut m = c;
            for i in 0..self.d {
                m *= p[i][e[i] as usize];
            }
            acc += m;
        }
        acc
    }

    /// Value at `z/|z|` for nonzero `z`.
    pub fn eval_dir(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().map(|x| x * x).sum();
        self.eval_raw(z) / r2.powf(0.5 * self.degree as f64)
    }

    /// `P(z)` and its gradient.
    pub fn eval_grad_raw(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.powers(z);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut acc = 0.0;
        for (t, &c) in self.coefs.iter().enumerate() {
            let e = &self.exps[t * self.d..(t + 1) * self.d];
            let mut m = c;
            for i in 0..self.d {
                m *= p[i][e[i] as usize];
            }
            acc += m;
            for l in 0..self.d {
                let k = e[l] as usize;
                if k == 0 {
                    continue;
                }
                let mut g = c * k as f64 * p[l][k - 1];
                for i in 0..self.d {
                    if i != l {
                        g *= p[i][e[i] as usize];
                    }
                }
                grad[l] += g;
            }
        }
        acc
    }

    /// Row-major `B` with `P(omega) = omega^T B omega` on the sphere, for degree 0 or 2.
    pub fn as_quadratic_form(&self) -> Option<Vec<f64>> {
        let d = self.d;
        let mut b = vec![0.0; d * d];
        match self.degree {
            0 => {
                let c = self.coefs.iter().sum::<f64>();
                for i in 0..d {
                    b[i * d + i] = c;
                }
            }
            2 => {
                for (t, &c) in self.coefs.iter().enumerate() {
                    let e = &self.exps[t * d..(t + 1) * d];
                    let idx: Vec<usize> = (0..d).filter(|&i| e[i] > 0).collect();
                    match idx.as_slice() {
                        [i] => b[i * d + i] += c,
                        [i, j] => {
                            b[i * d + j] += 0.5 * c;
                            b[j * d + i] += 0.5 * c;
                        }
                        _ => return None,
                    }
                }
            }
            _ => return None,
        }
        Some(b)
    }

    /// Value of `P(z)/|z|^deg` and its gradient in `z`.
    pub fn eval_grad_dir(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let r2: f64 = z.iter().map(|x| x * x).sum();
        let n = self.degree as f64;
        let inv = r2.powf(-0.5 * n);
        let v = self.eval_grad_raw(z, grad);
        for (g, &x) in grad.iter_mut().zip(z) {
            *g = *g * inv - n * v * inv * x / r2;
        }
        v * inv
    }
}

/// `dim H_n` on `S^{d-1}`.
pub fn harmonic_dim(d: usize, n: usize) -> usize {
    fn binom(n: i64, k: i64) -> i64 {
        if k < 0 || n < k {
            return 0;
        }
        let mut r = 1i64;
        for i in 0..k {
            r = r * (n - i) / (i + 1);
        }
        r
    }
    let (n, d) = (n as i64, d as i64);
    (binom(n + d - 1, d - 1) - binom(n + d - 3, d - 1)) as usize
}

/// Valid `m` labels for degree `n` in dimension `d`.
pub fn index_labels(d: usize, n: usize) -> Vec<i64> {
    match d {
        2 => {
            if n == 0 {
                vec![0]
            } else {
                vec![n as i64, -(n as i64)]
            }
        }
        3 => (-(n as i64)..=n as i64).collect(),
        _ => (0..harmonic_dim(d, n) as i64).collect(),
    }
}

fn binomial_f(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn circle_harmonic(k: usize, cosine: bool) -> Poly {
    // Re/Im of (x + i y)^k
    let mut p = Poly::zero(2);
    for j in 0..=k {
        let c = binomial_f(k, j);
        // i^j
        let (re, im) = match j % 4 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        let v = if cosine { re } else { im };
        if v != 0.0 {
            p.add_scaled(&Poly::monomial(2, &[(k - j) as u8, j as u8], c), v);
        }
    }
    let norm = if k == 0 { (2.0 * PI).sqrt() } else { PI.sqrt() };
    p.scale(1.0 / norm);
    p
}

/// Homogeneous polynomial `C_j^lam(z_d)` extended with `|z|^2`.
fn gegenbauer_homogeneous(d: usize, j: usize, lam: f64) -> Poly {
    let mut p = Poly::zero(d);
    let r2 = Poly::norm2(d);
    for i in 0..=j / 2 {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let c = sign * gamma_unchecked(j as f64 - i as f64 + lam)
            / (gamma_unchecked(lam) * gamma_unchecked(i as f64 + 1.0) * gamma_unchecked((j - 2 * i) as f64 + 1.0))
            * 2f64.powi((j - 2 * i) as i32);
        let mut e = vec![0u8; d];
        e[d - 1] = (j - 2 * i) as u8;
        let m = Poly::monomial(d, &e, c).mul(&r2.pow(i));
        p.add_scaled(&m, 1.0);
    }
    p
}

fn gegenbauer_norm(j: usize, lam: f64) -> f64 {
    let jf = j as f64;
    PI * 2f64.powf(1.0 - 2.0 * lam) * gamma_unchecked(jf + 2.0 * lam)
        / (gamma_unchecked(jf + 1.0) * (jf + lam) * gamma_unchecked(lam).powi(2))
}

/// Homogeneous degree-`n` polynomial representing `Y_{n,m}` on `S^{d-1}`.
pub fn harmonic_poly(d: usize, n: usize, m: i64) -> Result<Poly> {
    if !(2..=7).contains(&d) {
        return Err(Error::InvalidInput(format!("harmonics need 2 <= d <= 7, got {d}")));
    }
    if n + 1 >= MAX_POW {
        return Err(Error::InvalidInput(format!("harmonic degree {n} too large")));
    }
    if !index_labels(d, n).contains(&m) {
        return Err(Error::InvalidInput(format!("no harmonic Y_({n},{m}) in d = {d}")));
    }
    match d {
        2 => Ok(circle_harmonic(n, m >= 0)),
        3 => {
            let k = m.unsigned_abs() as usize;
            let sub = circle_harmonic(k, m >= 0);
            Ok(chain_step(3, n, k, &sub))
        }
        _ => {
            // locate (k, sub index) from the flat index
            let mut rest = m as usize;
            for k in 0..=n {
                let count = harmonic_dim(d - 1, k);
                if rest < count {
                    let labels = index_labels(d - 1, k);
                    let sub = harmonic_poly(d - 1, k, labels[rest])?;
                    return Ok(chain_step(d, n, k, &sub));
                }
                rest -= count;
            }
            unreachable!("index label validated above")
        }
    }
}

fn chain_step(d: usize, n: usize, k: usize, sub: &Poly) -> Poly {
    let lam = k as f64 + 0.5 * (d as f64 - 2.0);
    let j = n - k;
    let mut p = gegenbauer_homogeneous(d, j, lam).mul(&sub.lift());
    p.scale(1.0 / gegenbauer_norm(j, lam).sqrt());
    p
}

/// `Y_{n,m}(omega)` for a unit vector (or direction `z/|z|`).
pub fn eval_harmonic(d: usize, n: usize, m: i64, omega: &[f64]) -> Result<f64> {
    Ok(harmonic_poly(d, n, m)?.homogenize(n)?.compile().eval_dir(omega))
}

/// All `(n, m)` with `n` even and `n <= n_max`.
pub fn even_labels(d: usize, n_max: usize) -> Vec<(usize, i64)> {
    let mut out = Vec::new();
    for n in (0..=n_max).step_by(2) {
        for m in index_labels(d, n) {
            out.push((n, m));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::squad::build_rule;

    #[test]
    fn dimensions() {
        assert_eq!(harmonic_dim(3, 4), 9);
        assert_eq!(harmonic_dim(2, 3), 2);
        assert_eq!(harmonic_dim(2, 0), 1);
        assert_eq!(harmonic_dim(4, 2), 9);
        for d in 2..=5 {
            for n in 0..5 {
                assert_eq!(index_labels(d, n).len(), harmonic_dim(d, n));
            }
        }
    }

    #[test]
    fn constant_harmonic_value() {
        for d in 2..=6 {
            let v = eval_harmonic(d, 0, 0, &vec![1.0 / (d as f64).sqrt(); d]).unwrap();
            let area = crate::quadrature::sphere_area(d);
            assert!((v - 1.0 / area.sqrt()).abs() < 1e-14, "d={d}");
        }
    }

    #[test]
    fn orthonormality() {
        for (d, nmax) in [(2usize, 4usize), (3, 4), (4, 3), (5, 2)] {
            let rule = build_rule(d, 2 * nmax + 2).unwrap();
            let mut basis = Vec::new();
            for n in 0..=nmax {
                for m in index_labels(d, n) {
                    basis.push(((n, m), harmonic_poly(d, n, m).unwrap().homogenize(n).unwrap().compile()));
                }
            }
            for (la, a) in &basis {
                for (lb, b) in &basis {
                    let g = rule.integrate(|w| a.eval_raw(w) * b.eval_raw(w)).unwrap();
                    let want = if la == lb { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-12, "d={d} {la:?} {lb:?}: {g}");
                }
            }
        }
    }

    #[test]
    fn zonal_degree_two_in_3d() {
        // Y_{2,0} = sqrt(5/(16 pi)) (3 z^2 - 1)
        let w = [0.3, -0.4, (1.0f64 - 0.25).sqrt()];
        let got = eval_harmonic(3, 2, 0, &w).unwrap();
        let want = (5.0 / (16.0 * PI)).sqrt() * (3.0 * w[2] * w[2] - 1.0);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let p = harmonic_poly(3, 4, -3).unwrap().homogenize(4).unwrap().compile();
        let z = [0.7, -0.2, 0.4];
        let mut g = [0.0; 3];
        p.eval_grad_dir(&z, &mut g);
        for l in 0..3 {
            let h = 1e-6;
            let mut zp = z;
            let mut zm = z;
            zp[l] += h;
            zm[l] -= h;
            let fd = (p.eval_dir(&zp) - p.eval_dir(&zm)) / (2.0 * h);
            assert!((fd - g[l]).abs() < 1e-7, "component {l}: {fd} vs {}", g[l]);
        }
    }

    #[test]
    fn bad_labels() {
        assert!(harmonic_poly(3, 2, 3).is_err());
        assert!(harmonic_poly(2, 2, 1).is_err());
        assert!(harmonic_poly(8, 2, 0).is_err());
    }
}
