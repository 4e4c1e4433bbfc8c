//! Identity battery for the special functions: Gamma, 2F1 limits, the Bessel cosine
//! transform, the exterior constant and the sign of `F`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quadrature::{gauss_jacobi, gauss_jacobi_interval, gauss_legendre};
use crate::specfun::bessel::hankel_coefficients;
use crate::specfun::{
    bessel_j, digamma, gamma, h_kernel, k_s, phi_at_1, pochhammer, sin_pi, ExteriorKernel, Homogeneity, Hyp2F1,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    /// acceptance group (1-4)
    pub group: u8,
    pub max_error: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub pass: bool,
    pub detail: String,
}

impl IdentityCheck {
    fn new(name: &str, group: u8, max_error: f64, tolerance: f64, samples: usize, detail: String) -> Self {
        let pass = max_error.is_finite() && max_error <= tolerance;
        Self { name: name.into(), group, max_error, tolerance, samples, pass, detail }
    }

    fn flag(name: &str, group: u8, ok: bool, samples: usize, detail: String) -> Self {
        Self { name: name.into(), group, max_error: if ok { 0.0 } else { 1.0 }, tolerance: 0.0, samples, pass: ok, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    pub kernel_s: Vec<f64>,
    pub kernel_alpha: Vec<f64>,
    pub kernel_rtol: f64,
    pub constant_samples: usize,
    pub f_alpha_points: usize,
    pub f_s_points: usize,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            kernel_s: vec![0.5, 1.5, 2.5],
            kernel_alpha: vec![0.0, 0.3, 0.9, 1.5, 3.0, 10.0],
            kernel_rtol: 1e-5,
            constant_samples: 50,
            f_alpha_points: 200,
            f_s_points: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
    pub all_pass: bool,
}

impl IdentityReport {
    pub fn group_pass(&self, group: u8) -> bool {
        self.checks.iter().filter(|c| c.group == group).all(|c| c.pass)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["group", "name", "max_error", "tolerance", "samples", "pass", "detail"])?;
        for c in &self.checks {
            w.write_record([
                c.group.to_string(),
                c.name.clone(),
                format!("{:e}", c.max_error),
                format!("{:e}", c.tolerance),
                c.samples.to_string(),
                c.pass.to_string(),
                c.detail.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_battery(cfg: &IdentityConfig) -> Result<IdentityReport> {
    let mut checks = algebraic_battery()?;
    checks.extend(kernel_identity_checks(&cfg.kernel_s, &cfg.kernel_alpha, cfg.kernel_rtol)?);
    checks.extend(constant_checks(cfg.constant_samples)?);
    checks.extend(el2_checks(cfg.f_alpha_points, cfg.f_s_points)?);
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(IdentityReport { checks, all_pass })
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Points `1 - 10^{-k}` with the exact complement.
fn near_one(ks: impl Iterator<Item = i32>) -> Vec<(f64, f64)> {
    ks.map(|k| {
        let z = 1.0 - 10f64.powi(-k);
        (z, 1.0 - z)
    })
    .collect()
}

fn monotone_down(v: &[f64]) -> bool {
    v.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-9) + 1e-15)
}

/// Reflection, duplication, contiguous derivative, polynomial reduction, limits at `z = 1`, shape of the 2F1 ratio family.
pub fn algebraic_battery() -> Result<Vec<IdentityCheck>> {
    let mut out = Vec::new();

    let mut e = 0.0f64;
    for i in 1..100 {
        let z = i as f64 / 100.0;
        e = e.max((gamma(1.0 - z)? * gamma(z)? * sin_pi(z) / PI - 1.0).abs());
    }
    out.push(IdentityCheck::new("gamma reflection", 1, e, 1e-12, 99, "z in (0,1)".into()));

    let mut e = 0.0f64;
    for i in 1..=200 {
        let z = 0.05 * i as f64;
        let lhs = gamma(z)? * gamma(z + 0.5)? * 2f64.powf(2.0 * z - 1.0) / PI.sqrt();
        e = e.max(rel(lhs, gamma(2.0 * z)?));
    }
    out.push(IdentityCheck::new("gamma duplication", 1, e, 1e-12, 200, "z in (0,10]".into()));

    let params = [(0.5, 0.75, 2.5), (0.25, 0.75, 2.25), (1.25, 1.75, 3.25), (0.75, -1.5, 1.5), (0.75, 1.25, 2.0)];
    let mut e = 0.0f64;
    let mut n = 0;
    let h = 1e-5;
    for &(a, b, c) in &params {
        let f = Hyp2F1::new(a, b, c)?;
        let g = Hyp2F1::new(a + 1.0, b + 1.0, c + 1.0)?;
        for i in 0..10 {
            let z = 0.05 + 0.1 * i as f64;
            let fd = (f.eval(z + h)? - f.eval(z - h)?) / (2.0 * h);
            e = e.max(rel(fd, a * b / c * g.eval(z)?));
            n += 1;
        }
    }
    out.push(IdentityCheck::new("2F1 derivative (central FD, h = 1e-5)", 1, e, 1e-6, n, "z in [0.05, 0.95]".into()));

    let mut e = 0.0f64;
    let mut n = 0;
    for m in 0..=6usize {
        for a in [0.3, 1.7, -0.4] {
            for c in [0.5, 2.5] {
                let f = Hyp2F1::new(a, -(m as f64), c)?;
                for i in 0..20 {
                    let z = 0.05 * i as f64;
                    let mut poly = 0.0;
                    let mut fact = 1.0;
                    for k in 0..=m {
                        if k > 0 {
                            fact *= k as f64;
                        }
                        poly += pochhammer(a, k) * pochhammer(-(m as f64), k) / (pochhammer(c, k) * fact) * z.powi(k as i32);
                    }
                    e = e.max((f.eval(z)? - poly).abs() / poly.abs().max(1.0));
                    n += 1;
                }
            }
        }
    }
    out.push(IdentityCheck::new("2F1 polynomial reduction (b = -m)", 1, e, 1e-12, n, "m = 0..6".into()));

    // c - a - b > 0
    let pts = near_one(4..=12);
    let mut e = 0.0f64;
    let mut mono = true;
    for &(a, b, c) in &[(0.5, 0.75, 2.5), (0.3, 0.4, 1.45), (0.75, 1.25, 2.75)] {
        let f = Hyp2F1::new(a, b, c)?;
        let lim = gamma(c)? * gamma(c - a - b)? / (gamma(c - a)? * gamma(c - b)?);
        let gaps: Vec<f64> = pts.iter().map(|&(z, w)| rel(f.eval_split(z, w), lim)).collect();
        mono &= monotone_down(&gaps);
        e = e.max(*gaps.last().unwrap());
    }
    out.push(IdentityCheck::new("2F1 limit z -> 1, c-a-b > 0", 1, if mono { e } else { f64::INFINITY }, 1e-6, 3 * pts.len(), "gap at 1-z = 1e-12, decreasing".into()));

    // c = a + b: ratio with the first logarithmic correction, and the plain ratio approaching the limit
    let mut e = 0.0f64;
    let mut mono = true;
    for &(a, b) in &[(0.3, 0.45), (0.75, 1.5), (1.25, 0.5)] {
        let f = Hyp2F1::new(a, b, a + b)?;
        let lim = gamma(a + b)? / (gamma(a)? * gamma(b)?);
        let shift = 2.0 * digamma(1.0)? - digamma(a)? - digamma(b)?;
        let mut plain = Vec::new();
        let mut corrected = 0.0;
        for &(z, w) in &pts {
            let v = f.eval_split(z, w);
            let l = -w.ln();
            plain.push(rel(v / l, lim));
            corrected = (v - lim * (l + shift)).abs() / (lim * l);
        }
        e = e.max(corrected);
        mono &= monotone_down(&plain);
    }
    out.push(IdentityCheck::new("2F1 limit z -> 1, c = a+b (log)", 1, if mono { e } else { f64::INFINITY }, 1e-6, 3 * pts.len(), "corrected ratio at 1-z = 1e-12; plain ratio decreasing".into()));

    // c - a - b < 0
    let pts3 = near_one(6..=14);
    let mut e = 0.0f64;
    let mut mono = true;
    for &(a, b, c) in &[(2.0, 2.5, 4.0), (0.75, 1.25, 1.5), (1.2, 1.3, 1.8)] {
        let f = Hyp2F1::new(a, b, c)?;
        let lim = gamma(c)? * gamma(a + b - c)? / (gamma(a)? * gamma(b)?);
        let gaps: Vec<f64> = pts3.iter().map(|&(z, w)| rel(f.eval_split(z, w) / w.powf(c - a - b), lim)).collect();
        mono &= monotone_down(&gaps);
        e = e.max(*gaps.last().unwrap());
    }
    out.push(IdentityCheck::new("2F1 limit z -> 1, c-a-b < 0", 1, if mono { e } else { f64::INFINITY }, 1e-6, 3 * pts3.len(), "gap at 1-z = 1e-14, decreasing".into()));

    out.extend(ratio_shape_checks()?);
    Ok(out)
}

/// `z^{-a} 2F1(a, b; c; 1/z)` on `(1, 10]`.
fn ratio_fn(a: f64, b: f64, c: f64) -> Result<impl Fn(f64) -> f64> {
    let f = Hyp2F1::new(a, b, c)?;
    Ok(move |z: f64| z.powf(-a) * f.eval_split(1.0 / z, (z - 1.0) / z))
}

fn ratio_shape_checks() -> Result<Vec<IdentityCheck>> {
    let zs: Vec<f64> = (1..=100).map(|i| 1.0 + 0.09 * i as f64).collect();
    let mut out = Vec::new();
    // (a, b, c) with c >= max(a, b)
    let nonneg = [(1.5, 1.0, 1.5), (0.5, 2.0, 2.0), (2.0, -0.5, 2.0), (0.75, 1.25, 2.75)];
    let mut worst = f64::INFINITY;
    for &(a, b, c) in &nonneg {
        let g = ratio_fn(a, b, c)?;
        worst = zs.iter().map(|&z| g(z)).fold(worst, f64::min);
    }
    out.push(IdentityCheck::new("2F1 ratio non-negativity", 1, (-worst).max(0.0), 1e-12, nonneg.len() * zs.len(), format!("min {worst:.3e}")));
    // c >= max(a + 1, b), including the exterior kernel parameters
    let mut dec = vec![(1.0, -0.5, 2.0), (0.5, 2.0, 2.0), (1.5, 1.5, 2.5)];
    let mut convex = vec![(0.5, 3.0, 3.0), (1.0, 0.5, 3.0)];
    for s in [0.5, 1.5, 2.5] {
        dec.push((0.5 * s, 0.5 * (s + 1.0), 0.5 * s + 2.0));
        convex.push((0.5 * s, 0.5 * (s + 1.0), 0.5 * s + 2.0));
    }
    let mut rise = 0.0f64;
    for &(a, b, c) in &dec {
        let g = ratio_fn(a, b, c)?;
        let v: Vec<f64> = zs.iter().map(|&z| g(z)).collect();
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        rise = v.windows(2).map(|p| (p[1] - p[0]) / scale).fold(rise, f64::max);
    }
    out.push(IdentityCheck::new("2F1 ratio non-increasing", 1, rise.max(0.0), 1e-12, dec.len() * zs.len(), "relative rise".into()));
    let mut dd = 0.0f64;
    for &(a, b, c) in &convex {
        let g = ratio_fn(a, b, c)?;
        let v: Vec<f64> = zs.iter().map(|&z| g(z)).collect();
        let hz = 0.09;
        dd = v.windows(3).map(|p| -(p[2] - 2.0 * p[1] + p[0]) / (hz * hz)).fold(dd, f64::max);
    }
    out.push(IdentityCheck::new("2F1 ratio convexity", 1, dd.max(0.0), 1e-10, convex.len() * zs.len(), "second divided differences".into()));
    Ok(out)
}

/// `int_T^inf t^{-beta} e^{i omega t} dt` by repeated integration by parts, `|omega| T >> beta`.
fn oscillatory_tail(beta: f64, omega: f64, t0: f64) -> Complex64 {
    let iw = Complex64::new(0.0, omega);
    let mut term = Complex64::new(t0.powf(-beta), 0.0) / iw;
    let mut sum = term;
    let mut last = term.norm();
    for j in 0..200 {
        let next = term * (beta + j as f64) / (t0 * iw);
        let n = next.norm();
        if n > last || n < 1e-18 * sum.norm() {
            break;
        }
        sum += next;
        term = next;
        last = n;
    }
    -Complex64::from_polar(1.0, omega * t0) * sum
}

/// `int_0^inf J_{s/2+1}(t) t^{s/2-2} cos(alpha t) dt` with an estimate of the quadrature error.
///
/// `[0, 1]` by Gauss–Jacobi with the `t^{s-1}` endpoint factor, `[1, T]` by Gauss–Legendre panels,
/// `[T, inf)` by the Hankel expansion of `J` integrated term by term.
pub fn cosine_transform(s: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(s > 0.0 && s < 3.0) {
        return Err(Error::Domain(format!("cosine transform converges absolutely only for 0 < s < 3, got {s}")));
    }
    let a = alpha.abs();
    if (a - 1.0).abs() < 1e-3 {
        return Err(Error::Domain(format!("alpha = {alpha} too close to 1")));
    }
    let gap = (1.0 - a).abs().min(1.0 + a);
    let t_base = (80.0 / gap).max(100.0).ceil();
    let v1 = cosine_transform_at(s, a, t_base)?;
    let v2 = cosine_transform_at(s, a, (1.37 * t_base).ceil())?;
    Ok((v2, (v2 - v1).abs()))
}

fn cosine_transform_at(s: f64, alpha: f64, t_end: f64) -> Result<f64> {
    let nu = 0.5 * s + 1.0;
    let head = gauss_jacobi_interval(&gauss_jacobi(40, 0.0, s - 1.0), 0.0, s - 1.0, 0.0, 1.0);
    let mut acc = 0.0;
    for (&t, &w) in head.nodes.iter().zip(&head.weights) {
        acc += w * bessel_j(nu, t)? * t.powf(-nu) * (alpha * t).cos();
    }
    let gl = gauss_legendre(24);
    let panels = (t_end - 1.0).round() as usize;
    for k in 0..panels {
        let p = gl.on_interval(1.0 + k as f64, 2.0 + k as f64);
        for (&t, &w) in p.nodes.iter().zip(&p.weights) {
            acc += w * bessel_j(nu, t)? * t.powf(0.5 * s - 2.0) * (alpha * t).cos();
        }
    }
    // J(t) = sqrt(2 / (pi t)) Re[e^{i(t - phase)} sum_k i^k a_k t^{-k}]
    let phase = (0.5 * nu + 0.25) * PI;
    let coeffs = hankel_coefficients(nu, 40);
    let rot = Complex64::from_polar(1.0, -phase);
    let mut tail = Complex64::new(0.0, 0.0);
    let mut ik = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for (k, &ak) in coeffs.iter().enumerate() {
        let size = ak.abs() * t_end.powi(-(k as i32));
        if size > last {
            break;
        }
        last = size;
        let beta = k as f64 + 0.5 * (5.0 - s);
        let pair = oscillatory_tail(beta, 1.0 + alpha, t_end) + oscillatory_tail(beta, 1.0 - alpha, t_end);
        tail += ik * ak * rot * 0.5 * pair;
        ik *= Complex64::new(0.0, 1.0);
        if size < 1e-18 {
            break;
        }
    }
    Ok(acc + (2.0 / PI).sqrt() * tail.re)
}

pub fn kernel_identity_checks(s_list: &[f64], alpha_list: &[f64], rtol: f64) -> Result<Vec<IdentityCheck>> {
    let mut worst = 0.0f64;
    let mut worst_est = 0.0f64;
    let mut at = String::new();
    for &s in s_list {
        let h = Homogeneity::new(s, 3.max(s.ceil() as usize + 1))?;
        for &a in alpha_list {
            let (lhs, est) = cosine_transform(s, a)?;
            let rhs = h_kernel(a, &h)?;
            let e = rel(lhs, rhs);
            if e > worst {
                worst = e;
                at = format!("s = {s}, alpha = {a}: lhs {lhs:.12e}, h {rhs:.12e}");
            }
            worst_est = worst_est.max(est / rhs.abs());
        }
    }
    Ok(vec![IdentityCheck::new(
        "Bessel cosine transform = h(alpha, s)",
        2,
        worst,
        rtol,
        s_list.len() * alpha_list.len(),
        format!("worst {at}; quadrature estimate {worst_est:.1e}"),
    )])
}

/// `K(s) cos(pi s/2) phi(1) = 1 - s` on 50 points of `(0, 3)`, and `phi'(1) = -s/(1-s) phi(1)` for `s < 1`.
pub fn constant_checks(samples: usize) -> Result<Vec<IdentityCheck>> {
    let step = 3.0 / samples as f64;
    let ss: Vec<f64> = (0..samples).map(|k| step * (k as f64 + 0.5)).filter(|&s| (s - 1.0).abs() > 1e-9).collect();
    let mut e = 0.0f64;
    for &s in &ss {
        let h = Homogeneity::new(s, 3)?;
        let lhs = k_s(s) * crate::specfun::cos_pi(0.5 * s) * phi_at_1(&h)?;
        e = e.max((lhs - (1.0 - s)).abs());
    }
    let mut out = vec![IdentityCheck::new("K(s) cos(pi s/2) phi(1) = 1 - s", 3, e, 1e-10, ss.len(), "s in (0,3)".into())];
    let mut e = 0.0f64;
    let mut n = 0;
    for &s in ss.iter().filter(|&&s| s < 1.0) {
        let h = Homogeneity::new(s, 3)?;
        let want = -s / (1.0 - s) * phi_at_1(&h)?;
        e = e.max(rel(phi_derivative_at_1(s)?, want));
        n += 1;
    }
    out.push(IdentityCheck::new("phi'(1) = -s/(1-s) phi(1) (extrapolated FD)", 3, e, 1e-6, n, "s in (0,1)".into()));
    Ok(out)
}

/// One-sided difference quotients of `phi` at 1 with Richardson elimination of the
/// powers `h^{(1-s)/2 + k}` and `h^k` left by the `(z-1)^{(3-s)/2}` term.
pub fn phi_derivative_at_1(s: f64) -> Result<f64> {
    let h = Homogeneity::new(s, 3)?;
    let p1 = phi_at_1(&h)?;
    let f = Hyp2F1::new(0.5 * s, 0.5 * (s + 1.0), 0.5 * s + 2.0)?;
    let phi = |z: f64| z.powf(-0.5 * s) * f.eval_split(1.0 / z, (z - 1.0) / z);
    let g = 0.5 * (1.0 - s);
    let mut ex: Vec<f64> = (0..6).flat_map(|k| [g + k as f64, k as f64 + 1.0]).collect();
    ex.sort_by(f64::total_cmp);
    let levels = 7;
    let mut row: Vec<f64> = (0..levels)
        .map(|j| {
            let hh = 0.02 / 2f64.powi(j as i32);
            (phi(1.0 + hh) - p1) / hh
        })
        .collect();
    for &p in ex.iter().take(levels - 1) {
        let r = 2f64.powf(p);
        row = row.windows(2).map(|w| (r * w[1] - w[0]) / (r - 1.0)).collect();
    }
    Ok(row[0])
}

/// `F(alpha, s) >= 0` on `(1, 100] x (0, 3)`, `F(alpha, 1) = alpha^2 - 1`, and `F -> 0` as `alpha -> 1+` for `s < 1`.
pub fn el2_checks(n_alpha: usize, n_s: usize) -> Result<Vec<IdentityCheck>> {
    let alphas: Vec<f64> = (1..=n_alpha).map(|i| 100f64.powf(i as f64 / n_alpha as f64)).collect();
    let ss: Vec<f64> = (1..=n_s).map(|j| 3.0 * j as f64 / (n_s + 1) as f64).collect();
    let mut worst = f64::INFINITY;
    let mut at = (0.0, 0.0);
    for &s in &ss {
        let k = ExteriorKernel::new(s)?;
        for &a in &alphas {
            let v = k.big_f(a);
            if !(v >= worst) {
                worst = v;
                at = (s, a);
            }
        }
    }
    let mut out = vec![IdentityCheck::new(
        "F(alpha, s) >= -1e-12",
        4,
        (-worst).max(0.0),
        1e-12,
        alphas.len() * ss.len(),
        format!("min {worst:.3e} at s = {}, alpha = {}", at.0, at.1),
    )];
    let k1 = ExteriorKernel::new(1.0)?;
    let mut e = 0.0f64;
    for &a in &alphas {
        // alpha^2 - 1 rounds to within half an ulp of alpha^2
        e = e.max((k1.big_f(a) - (a * a - 1.0)).abs() / (f64::EPSILON * a * a));
    }
    out.push(IdentityCheck::new("F(alpha, 1) = alpha^2 - 1", 4, e, 1.0, alphas.len(), "error in ulps of alpha^2".into()));
    let k = ExteriorKernel::new(0.5)?;
    let vals: Vec<f64> = (2..=6).map(|j| k.big_f_u(10f64.powi(-j))).collect();
    let ok = monotone_down(&vals.iter().map(|v| v.abs()).collect::<Vec<_>>()) && vals.last().unwrap().abs() < 1e-5;
    out.push(IdentityCheck::flag("F(1+, 0.5) -> 0", 4, ok, vals.len(), vals.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" ")));
    Ok(out)
}
