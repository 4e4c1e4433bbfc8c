//! Constants and scalar kernels of the anisotropic Riesz energy.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gamma::{cos_pi, gamma_unchecked};
use super::hyp2f1::Hyp2F1;
use crate::error::{Error, Result};

/// Homogeneity `s` of the kernel in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homogeneity {
    pub s: f64,
    pub d: usize,
}

impl Homogeneity {
    /// Requires `2 <= d <= 7` and `max(d-4, 0) < s < min(d, 5)`.
    pub fn new(s: f64, d: usize) -> Result<Self> {
        if !(2..=7).contains(&d) {
            return Err(Error::Domain(format!("dimension d = {d} not in [2, 7]")));
        }
        let lo = (d as f64 - 4.0).max(0.0);
        if !(s > lo && s < d as f64 && s < 5.0) {
            return Err(Error::Domain(format!(
                "s = {s} outside ({lo}, {}) for d = {d}",
                (d as f64).min(5.0)
            )));
        }
        Ok(Self { s, d })
    }

    /// `s` in `[d-3, d)`, where the ellipsoid characterisation is proved.
    pub fn theorem_range(&self) -> bool {
        self.s >= self.d as f64 - 3.0
    }

    /// Exponent `(s + 2 - d)/2` of the Barenblatt profile.
    pub fn exponent(&self) -> f64 {
        0.5 * (self.s + 2.0 - self.d as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub kappa_s: f64,
    pub c_sd: f64,
    pub c_tilde_sd: f64,
    pub gamma_sd: f64,
    pub cdrd: f64,
    pub b_sd: f64,
}

/// `K(s) = 2^{1-s} Gamma(s) / (Gamma(s/2 + 2) Gamma(s/2))`.
pub fn k_s(s: f64) -> f64 {
    2f64.powf(1.0 - s) * gamma_unchecked(s) / (gamma_unchecked(0.5 * s + 2.0) * gamma_unchecked(0.5 * s))
}

/// `kappa_s = K(s) cos(pi s / 2)`, exactly zero at `s = 1` and `s = 3`.
pub fn kappa(s: f64) -> f64 {
    let c = cos_pi(0.5 * s);
    if c == 0.0 {
        0.0
    } else {
        k_s(s) * c
    }
}

pub fn kernel_constants(h: &Homogeneity) -> Result<KernelConstants> {
    let h = Homogeneity::new(h.s, h.d)?;
    let (s, d) = (h.s, h.d as f64);
    let pi_d2 = PI.powf(0.5 * d);
    let cdrd = gamma_unchecked(0.5 * s + 2.0) / (pi_d2 * gamma_unchecked(0.5 * (s - d) + 2.0));
    let c_sd = 2f64.powf(h.exponent()) * gamma_unchecked(0.5 * s + 2.0) / pi_d2;
    let c_tilde_sd = c_sd * 2f64.powf(0.5 * s - 2.0) * gamma_unchecked(0.5 * s);
    Ok(KernelConstants {
        kappa_s: kappa(s),
        c_sd,
        c_tilde_sd,
        gamma_sd: 2.0 * s * c_tilde_sd,
        cdrd,
        b_sd: b_nsd(0, s, h.d),
    })
}

/// Multiplier taking `|x|^{-s} Y_n(x/|x|)` to its Fourier transform
/// `b_{n,s,d} |xi|^{s-d} Y_n(xi/|xi|)`, for even `n`.
pub fn b_nsd(n: usize, s: f64, d: usize) -> f64 {
    let d = d as f64;
    let nf = n as f64;
    let sign = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
    sign * 2f64.powf(0.5 * d - s) * gamma_unchecked(0.5 * (nf + d - s)) / gamma_unchecked(0.5 * (nf + s))
}

/// `f_s(alpha) = |alpha|^{-s} 2F1(s/2, (s+1)/2; s/2 + 2; alpha^{-2})` for `|alpha| > 1`.
pub fn f_s(alpha: f64, s: f64) -> Result<f64> {
    let a = alpha.abs();
    if !(a > 1.0) {
        return Err(Error::Domain(format!("f_s needs |alpha| > 1, got {alpha}")));
    }
    let f = Hyp2F1::new(0.5 * s, 0.5 * (s + 1.0), 0.5 * s + 2.0)?;
    Ok(a.powf(-s) * f.eval_unchecked(1.0 / (a * a)))
}

/// Cached evaluator of the exterior factor `kappa_s f_s(alpha)`.
#[derive(Debug, Clone, Copy)]
pub struct ExteriorKernel {
    s: f64,
    kappa_s: f64,
    f: Hyp2F1,
}

impl ExteriorKernel {
    pub fn new(s: f64) -> Result<Self> {
        Ok(Self { s, kappa_s: kappa(s), f: Hyp2F1::new(0.5 * s, 0.5 * (s + 1.0), 0.5 * s + 2.0)? })
    }

    /// `kappa_s f_s(alpha)` for `|alpha| > 1`.
    pub fn eval(&self, alpha: f64) -> f64 {
        if self.kappa_s == 0.0 {
            return 0.0;
        }
        let a2 = alpha * alpha;
        self.kappa_s * a2.powf(-0.5 * self.s) * self.f.eval_unchecked(1.0 / a2)
    }

    /// `kappa_s f_s` at `alpha^2 = 1 + u`, accurate for tiny `u > 0`.
    pub fn eval_u(&self, u: f64) -> f64 {
        if self.kappa_s == 0.0 {
            return 0.0;
        }
        let a2 = 1.0 + u;
        self.kappa_s * a2.powf(-0.5 * self.s) * self.f.eval_split(1.0 / a2, u / a2)
    }

    /// `F` at `alpha^2 = 1 + u`.
    pub fn big_f_u(&self, u: f64) -> f64 {
        if self.s == 1.0 {
            return u;
        }
        self.s * (1.0 + u) - 1.0 + self.eval_u(u)
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `F(alpha, s) = s alpha^2 - 1 + kappa_s f_s(alpha)`.
    pub fn big_f(&self, alpha: f64) -> f64 {
        let a2 = alpha * alpha;
        if self.s == 1.0 {
            return a2 - 1.0;
        }
        self.s * a2 - 1.0 + self.eval(alpha)
    }
}

/// `h(alpha, s)`: the Fourier-side kernel restricted to a line.
pub fn h_kernel(alpha: f64, h: &Homogeneity) -> Result<f64> {
    let s = h.s;
    let pref = 2f64.powf(0.5 * s - 2.0) * gamma_unchecked(0.5 * s);
    let a = alpha.abs();
    if a < 1.0 {
        Ok(pref * (1.0 - s * alpha * alpha))
    } else if a == 1.0 {
        if s < 3.0 {
            // common one-sided limit
            Ok(pref * (1.0 - s))
        } else {
            Err(Error::Singular(format!("h_kernel at |alpha| = 1 with s = {s}")))
        }
    } else {
        Ok(pref * ExteriorKernel::new(s)?.eval(alpha))
    }
}

/// `phi(z) = z^{-s/2} 2F1(s/2, (s+1)/2; s/2 + 2; 1/z)` for `z >= 1`.
pub fn phi(z: f64, h: &Homogeneity) -> Result<f64> {
    if !(z >= 1.0) {
        return Err(Error::Domain(format!("phi needs z >= 1, got {z}")));
    }
    if z == 1.0 {
        return phi_at_1(h);
    }
    let s = h.s;
    Ok(z.powf(-0.5 * s) * Hyp2F1::new(0.5 * s, 0.5 * (s + 1.0), 0.5 * s + 2.0)?.eval_unchecked(1.0 / z))
}

/// `phi'(z) = -(s/2) z^{-s/2-1} 2F1(s/2 + 1, (s+1)/2; s/2 + 2; 1/z)` for `z > 1`.
pub fn dphi(z: f64, h: &Homogeneity) -> Result<f64> {
    if !(z > 1.0) {
        return Err(Error::Domain(format!("dphi needs z > 1, got {z}")));
    }
    let s = h.s;
    let f = Hyp2F1::new(0.5 * s + 1.0, 0.5 * (s + 1.0), 0.5 * s + 2.0)?;
    Ok(-0.5 * s * z.powf(-0.5 * s - 1.0) * f.eval_unchecked(1.0 / z))
}

/// `phi(1) = (2/sqrt(pi)) Gamma(s/2 + 2) Gamma((3-s)/2)`, finite for `s < 3`.
pub fn phi_at_1(h: &Homogeneity) -> Result<f64> {
    let s = h.s;
    if s >= 3.0 {
        return Err(Error::Singular(format!("phi(1) diverges for s = {s} >= 3")));
    }
    Ok(2.0 / PI.sqrt() * gamma_unchecked(0.5 * s + 2.0) * gamma_unchecked(0.5 * (3.0 - s)))
}

/// `phi'(1) = -s/(1-s) phi(1)`, finite for `s < 1`.
pub fn dphi_at_1(h: &Homogeneity) -> Result<f64> {
    let s = h.s;
    if s >= 1.0 {
        return Err(Error::Singular(format!("phi'(1) diverges for s = {s} >= 1")));
    }
    Ok(-s / (1.0 - s) * phi_at_1(h)?)
}

/// `F(alpha, s) = s alpha^2 - 1 + kappa_s f_s(alpha)` for `|alpha| > 1`, `0 < s < 3`.
pub fn big_f(alpha: f64, h: &Homogeneity) -> Result<f64> {
    if !(alpha.abs() > 1.0) {
        return Err(Error::Domain(format!("big_f needs |alpha| > 1, got {alpha}")));
    }
    if !(h.s > 0.0 && h.s < 3.0) {
        return Err(Error::Domain(format!("big_f needs 0 < s < 3, got {}", h.s)));
    }
    Ok(ExteriorKernel::new(h.s)?.big_f(alpha))
}
