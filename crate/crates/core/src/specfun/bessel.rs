//! Bessel function of the first kind `J_nu(x)` for real `nu >= 0`, `x >= 0`.
//!
//! Three regimes are used:
//! * ascending power series for `x <= max(12, 2 nu)`,
//! * Miller backward recurrence normalised by the Neumann sum
//!   `(x/2)^nu0 = sum_k (nu0 + 2k) Gamma(nu0 + k) / k! J_{nu0+2k}(x)` in the
//!   intermediate band,
//! * Hankel's large-argument expansion for `x >= 25 + nu^2`.

use std::f64::consts::PI;

use super::gamma::{gamma_unchecked, rgamma};
use crate::error::{Error, Result};

/// Terms of the Hankel expansion `a_k(nu) = prod_{j<=k}(4nu^2 - (2j-1)^2) / (k! 8^k)`.
fn hankel_coefficient_ratio(mu: f64, k: usize) -> f64 {
    let odd = (2 * k - 1) as f64;
    (mu - odd * odd) / (8.0 * k as f64)
}

pub(crate) fn series_max_x(nu: f64) -> f64 {
    12f64.max(2.0 * nu)
}

pub(crate) fn asymptotic_min_x(nu: f64) -> f64 {
    25.0 + nu * nu
}

/// `J_nu(x)`.
pub fn bessel_j(nu: f64, x: f64) -> Result<f64> {
    if !(nu >= 0.0) || !(x >= 0.0) || !nu.is_finite() || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j(nu={nu}, x={x})")));
    }
    Ok(bessel_j_unchecked(nu, x))
}

pub(crate) fn bessel_j_unchecked(nu: f64, x: f64) -> f64 {
    if x <= series_max_x(nu) {
        bessel_series(nu, x)
    } else if x >= asymptotic_min_x(nu) {
        bessel_hankel(nu, x)
    } else {
        bessel_miller(nu, x)
    }
}

pub(crate) fn bessel_series(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    let q = -half * half;
    let mut term = half.powf(nu) * rgamma(nu + 1.0);
    let mut sum = term;
    for n in 1..500 {
        let nf = n as f64;
        term *= q / (nf * (nf + nu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() && nf > half {
            break;
        }
    }
    sum
}

/// Hankel expansion, truncated at the smallest term.
pub(crate) fn bessel_hankel(nu: f64, x: f64) -> f64 {
    let (p, q) = hankel_pq(nu, x);
    let chi = x - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// The slowly varying factors `P`, `Q` of the Hankel expansion.
pub(crate) fn hankel_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let next = term * hankel_coefficient_ratio(mu, k) / x;
        if next.abs() > last || next == 0.0 {
            break;
        }
        last = next.abs();
        term = next;
        // i^k pattern: k = 1 -> +Q, 2 -> -P, 3 -> -Q, 4 -> +P
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    (p, q)
}

/// Coefficients of the Hankel expansion, `a_0 .. a_{n-1}`.
pub(crate) fn hankel_coefficients(nu: f64, n: usize) -> Vec<f64> {
    let mu = 4.0 * nu * nu;
    let mut out = Vec::with_capacity(n);
    let mut a = 1.0;
    out.push(a);
    for k in 1..n {
        a *= hankel_coefficient_ratio(mu, k);
        out.push(a);
    }
    out
}

pub(crate) fn bessel_miller(nu: f64, x: f64) -> f64 {
    let m = nu.floor() as usize;
    let nu0 = nu - m as f64;
    let start = (m.max(x.ceil() as usize) + 30 + (10.0 * x.sqrt()) as usize) & !1;
    let mut values = vec![0.0; start + 2];
    values[start + 1] = 0.0;
    values[start] = 1e-200;
    for k in (1..=start).rev() {
        let order = nu0 + k as f64;
        values[k - 1] = 2.0 * order / x * values[k] - values[k + 1];
        if values[k - 1].abs() > 1e200 {
            for v in values.iter_mut().skip(k - 1) {
                *v *= 1e-200;
            }
        }
    }
    // Neumann normalisation over even offsets
    let mut norm = gamma_unchecked(nu0 + 1.0) * values[0];
    let mut g = gamma_unchecked(nu0 + 1.0); // Gamma(nu0 + j) / j! at j = 1
    let mut j = 1;
    while 2 * j <= start {
        if j > 1 {
            g *= (nu0 + j as f64 - 1.0) / j as f64;
        }
        norm += (nu0 + 2.0 * j as f64) * g * values[2 * j];
        j += 1;
    }
    values[m] * (0.5 * x).powf(nu0) / norm
}
