//! Gauss hypergeometric function `2F1(a, b; c; z)` for real parameters and
//! `0 <= z < 1`.
//!
//! The Maclaurin series is summed directly for `z <= 0.8`. Beyond that the
//! `z -> 1 - z` connection formula is used; when `c - a - b` is an integer the
//! logarithmic forms replace it, and within a small band around an integer the
//! value is interpolated in `c` from nodes at safe distances.

use super::gamma::{digamma_unchecked, gamma_unchecked, rgamma};
use crate::error::{Error, Result};

const SERIES_MAX_Z: f64 = 0.8;
const NEAR_INTEGER_BAND: f64 = 4e-3;
const MAX_TERMS: usize = 5000;

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// Evaluator with fixed parameters.
#[derive(Debug, Clone, Copy)]
pub struct Hyp2F1 {
    a: f64,
    b: f64,
    c: f64,
    polynomial: bool,
    // connection coefficients of the generic z -> 1-z formula
    g1: f64,
    g2: f64,
}

impl Hyp2F1 {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::Domain(format!("hyp2f1 parameters ({a}, {b}, {c})")));
        }
        if is_nonpositive_integer(c) {
            return Err(Error::Pole(format!("hyp2f1 with c = {c}")));
        }
        let polynomial = is_nonpositive_integer(a) || is_nonpositive_integer(b);
        let m = c - a - b;
        let (g1, g2) = if m != m.round() {
            let gc = gamma_unchecked(c);
            (
                gc * gamma_unchecked(m) * rgamma(c - a) * rgamma(c - b),
                gc * gamma_unchecked(-m) * rgamma(a) * rgamma(b),
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(Self { a, b, c, polynomial, g1, g2 })
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&z) {
            return Err(Error::Domain(format!("hyp2f1 argument z = {z} outside [0, 1)")));
        }
        Ok(self.eval_unchecked(z))
    }

    pub(crate) fn eval_unchecked(&self, z: f64) -> f64 {
        self.eval_split(z, 1.0 - z)
    }

    /// Value at `z` with `w = 1 - z` supplied separately, for arguments rounding to 1.
    pub(crate) fn eval_split(&self, z: f64, w: f64) -> f64 {
        let (a, b, c) = (self.a, self.b, self.c);
        if self.polynomial || z <= SERIES_MAX_Z {
            return series(a, b, c, z);
        }
        let m = c - a - b;
        let n = m.round();
        let delta = m - n;
        if delta == 0.0 {
            integer_connection(a, b, c, n as i64, w)
        } else if delta.abs() < NEAR_INTEGER_BAND {
            // Lagrange interpolation in c through m = n + k h, k = -2..2.
            let h = NEAR_INTEGER_BAND;
            let x = delta / h;
            let mut acc = 0.0;
            for k in -2i32..=2 {
                let ck = c - delta + k as f64 * h;
                let fk = if k == 0 {
                    integer_connection(a, b, ck, n as i64, w)
                } else {
                    generic_connection(a, b, ck, w)
                };
                let mut w = 1.0;
                for j in -2i32..=2 {
                    if j != k {
                        w *= (x - j as f64) / (k - j) as f64;
                    }
                }
                acc += w * fk;
            }
            acc
        } else {
            self.g1 * series(a, b, 1.0 - m, w) + w.powf(m) * self.g2 * series(c - a, c - b, m + 1.0, w)
        }
    }

    /// `d/dz 2F1 = (ab/c) 2F1(a+1, b+1; c+1; z)`.
    pub fn derivative(&self, z: f64) -> Result<f64> {
        let shifted = Hyp2F1::new(self.a + 1.0, self.b + 1.0, self.c + 1.0)?;
        Ok(self.a * self.b / self.c * shifted.eval(z)?)
    }
}

/// `2F1(a, b; c; z)` on `0 <= z < 1`.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    Hyp2F1::new(a, b, c)?.eval(z)
}

pub(crate) fn series(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 0..MAX_TERMS {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        sum += term;
        if term == 0.0 {
            break;
        }
        if term.abs() <= 1e-17 * sum.abs() && nf > (a.abs() + b.abs()) {
            break;
        }
    }
    sum
}

fn generic_connection(a: f64, b: f64, c: f64, w: f64) -> f64 {
    let m = c - a - b;
    let gc = gamma_unchecked(c);
    let g1 = gc * gamma_unchecked(m) * rgamma(c - a) * rgamma(c - b);
    let g2 = gc * gamma_unchecked(-m) * rgamma(a) * rgamma(b);
    g1 * series(a, b, 1.0 - m, w) + w.powf(m) * g2 * series(c - a, c - b, m + 1.0, w)
}

/// Connection formula for `c - a - b = n` an integer.
fn integer_connection(a: f64, b: f64, c: f64, n: i64, w: f64) -> f64 {
    if n < 0 {
        // Euler transformation flips the sign of c - a - b
        return w.powi(n as i32) * integer_connection(c - a, c - b, c, -n, w);
    }
    let m = n as usize;
    let lw = w.ln();
    let mut finite = 0.0;
    if m > 0 {
        let mut term = 1.0;
        for k in 0..m {
            if k > 0 {
                let kf = (k - 1) as f64;
                term *= (a + kf) * (b + kf) / ((kf + 1.0) * (1.0 - m as f64 + kf)) * w;
            }
            finite += term;
        }
        finite *= gamma_unchecked(m as f64) * gamma_unchecked(c) * rgamma(a + m as f64) * rgamma(b + m as f64);
    }
    let mf = m as f64;
    let pref = gamma_unchecked(c) * rgamma(a) * rgamma(b);
    if pref == 0.0 {
        return finite;
    }
    // (a+m)_k (b+m)_k / (k! (k+m)!) w^k times the log bracket
    let mut coeff = 1.0 / gamma_unchecked(mf + 1.0);
    let mut sum = 0.0;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        if k > 0 {
            coeff *= (a + mf + kf - 1.0) * (b + mf + kf - 1.0) / (kf * (kf + mf)) * w;
        }
        let bracket = lw - digamma_unchecked(kf + 1.0) - digamma_unchecked(kf + mf + 1.0)
            + digamma_unchecked(a + kf + mf)
            + digamma_unchecked(b + kf + mf);
        let t = coeff * bracket;
        sum += t;
        if coeff == 0.0 || (t.abs() <= 1e-17 * sum.abs() && k > 2) {
            break;
        }
    }
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    finite - sign * w.powi(m as i32) * pref * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn zero_argument() {
        assert_eq!(hyp2f1(0.3, 1.7, 2.2, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn terminating_polynomial() {
        let v = hyp2f1(0.75, -1.0, 0.5, 0.04).unwrap();
        assert!((v - 0.94).abs() < 1e-15);
        // m = 2: 1 - 2 a z / c + a (a+1) z^2 / (c (c+1))
        let (a, c, z) = (1.3, 0.7, 0.95);
        let want = 1.0 - 2.0 * a * z / c + a * (a + 1.0) * z * z / (c * (c + 1.0));
        assert!(rel(hyp2f1(a, -2.0, c, z).unwrap(), want) < 1e-14);
    }

    #[test]
    fn elementary_closed_forms() {
        // 2F1(1,1;2;z) = -ln(1-z)/z
        for &z in &[0.1, 0.5, 0.85, 0.99, 0.999999] {
            let want = -(1.0f64 - z).ln() / z;
            assert!(rel(hyp2f1(1.0, 1.0, 2.0, z).unwrap(), want) < 1e-12, "z={z}");
        }
        // 2F1(a,b;b;z) = (1-z)^-a
        for &z in &[0.3, 0.9, 0.9999] {
            let want = (1.0f64 - z).powf(-0.35);
            assert!(rel(hyp2f1(0.35, 1.25, 1.25, z).unwrap(), want) < 1e-12, "z={z}");
        }
    }

    #[test]
    fn reference_values() {
        // mpmath hyp2f1
        let cases = [
            (0.5, 0.75, 2.5, 0.999, 1.309_486_239_810_768_4),
            (1.25, 1.75, 3.25, 0.9, 3.247_714_728_027_822_8),
            (0.25, 0.75, 2.25, 0.5, 1.051_120_519_067_143_2),
            (1.0, 1.5, 2.5, 0.99, 6.085_764_090_469_146),
            (0.75, 1.25, 2.0, 0.95, 2.974_225_179_911_908_3),
            (0.75, 1.25, 2.001, 0.95, 2.971_418_250_514_625),
            (1.5, 2.0, 2.0, 0.9, 31.622_776_601_683_804),
            (1.75, 1.25, 2.0, 0.85, 7.534_061_088_752_321),
            (0.25, 0.75, 1.0005, 0.999, 2.488_376_697_668_722_8),
            (2.0, 1.5, 4.5, 0.93, 3.081_758_911_719_449_2),
            (0.6, 1.1, 0.7, 0.96, 23.091_859_700_638_914),
        ];
        for (a, b, c, z, want) in cases {
            let got = hyp2f1(a, b, c, z).unwrap();
            assert!(rel(got, want) < 1e-10, "2F1({a},{b};{c};{z}) = {got} vs {want}");
        }
    }

    #[test]
    fn continuity_across_integer_band() {
        let z = 0.97;
        let mut prev = hyp2f1(0.6, 0.9, 1.5 - 0.01, z).unwrap();
        for k in 1..=40 {
            let c = 1.5 - 0.01 + k as f64 * 5e-4;
            let v = hyp2f1(0.6, 0.9, c, z).unwrap();
            assert!((v - prev).abs() < 5e-3 * v.abs(), "jump at c = {c}");
            prev = v;
        }
    }

    #[test]
    fn domain_and_pole_errors() {
        assert!(matches!(hyp2f1(1.0, 1.0, 2.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(hyp2f1(1.0, 1.0, 2.0, -0.1), Err(Error::Domain(_))));
        assert!(matches!(hyp2f1(1.0, 1.0, -2.0, 0.1), Err(Error::Pole(_))));
    }
}
