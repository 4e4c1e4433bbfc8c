//! `W * mu_E (x)` by quadrature in physical space, in spherical coordinates centred at `x`.
//!
//! Along the ray `y = x + r v`, `1 - |D(1/a) R^T y|^2 = |w|^2 (r - r_1)(r_2 - r)` with
//! `w = D(1/a) R^T v`, so the density factor is a Jacobi weight in `r`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{quad_form, BarenblattMeasure};
use crate::profile::Profile;
use crate::quadrature::{gauss_jacobi, gauss_jacobi_interval, Rule1D, TanhSinh};
use crate::squad::{build_rule, SphereRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvolutionConfig {
    pub radial_nodes: usize,
    pub sphere_order: usize,
    pub cone_level: u32,
    /// relative error requested from the two-resolution estimate
    pub rel_tol: f64,
}

impl Default for ConvolutionConfig {
    fn default() -> Self {
        Self { radial_nodes: 24, sphere_order: 40, cone_level: 5, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub error: f64,
}

struct Resolution {
    interior: Rule1D,
    exterior: Rule1D,
    sphere: SphereRule,
    sub: Option<SphereRule>,
    ts: TanhSinh,
}

fn resolution(d: usize, p: f64, s: f64, n: usize, order: usize, level: u32) -> Result<Resolution> {
    Ok(Resolution {
        // (r2 - r)^p r^{d-1-s} on [0, r2]
        interior: gauss_jacobi(n, p, d as f64 - 1.0 - s),
        exterior: gauss_jacobi(n, p, p),
        sphere: build_rule(d, order)?,
        sub: if d > 2 { Some(build_rule(d - 1, order)?) } else { None },
        ts: TanhSinh::new(level),
    })
}

/// Radial roots of `|u + r w|^2 = 1`.
fn roots(u: &[f64], w: &[f64]) -> Option<(f64, f64, f64)> {
    let ww: f64 = w.iter().map(|v| v * v).sum();
    let uw: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
    let uu: f64 = u.iter().map(|v| v * v).sum();
    let disc = uw * uw - ww * (uu - 1.0);
    if !(disc > 0.0) {
        return None;
    }
    let sq = disc.sqrt();
    // stable pair
    let q = -(uw + uw.signum() * sq);
    let (a, b) = if q != 0.0 { (q / ww, (uu - 1.0) / q) } else { (-sq / ww, sq / ww) };
    Some((a.min(b), a.max(b), ww))
}

struct Ctx<'a> {
    m: &'a BarenblattMeasure,
    p: &'a Profile,
    pexp: f64,
    u: Vec<f64>,
    s: f64,
    d: usize,
}

impl Ctx<'_> {
    fn to_unit(&self, v: &[f64]) -> Vec<f64> {
        let spec = &self.m.spec;
        (0..self.d).map(|j| (0..self.d).map(|i| spec.r[(i, j)] * v[i]).sum::<f64>() / spec.a[j]).collect()
    }

    /// `Psi(v) int r^{d-1-s} rho(x + r v) dr` for an interior `x`.
    fn interior_ray(&self, v: &[f64], rule: &Rule1D) -> Result<f64> {
        let w = self.to_unit(v);
        let (r1, r2, ww) = roots(&self.u, &w).ok_or_else(|| Error::InvariantViolation("interior ray misses E".into()))?;
        let beta = self.d as f64 - 1.0 - self.s;
        let gj = gauss_jacobi_interval(rule, self.pexp, beta, 0.0, r2);
        let inner = gj.integrate(|r| (r - r1).powf(self.pexp));
        Ok(self.p.eval_psi(v)? * self.m.normalization * ww.powf(self.pexp) * inner)
    }

    fn exterior_ray(&self, v: &[f64], rule: &Rule1D) -> Result<f64> {
        let w = self.to_unit(v);
        let Some((r1, r2, ww)) = roots(&self.u, &w) else { return Ok(0.0) };
        if r2 <= 0.0 {
            return Ok(0.0);
        }
        let gj = gauss_jacobi_interval(rule, self.pexp, self.pexp, r1, r2);
        let e = self.d as f64 - 1.0 - self.s;
        let inner = gj.integrate(|r| r.powf(e));
        Ok(self.p.eval_psi(v)? * self.m.normalization * ww.powf(self.pexp) * inner)
    }
}

fn evaluate(ctx: &Ctx<'_>, x: &[f64], res: &Resolution) -> Result<f64> {
    let d = ctx.d;
    let uu: f64 = ctx.u.iter().map(|v| v * v).sum();
    if uu < 1.0 {
        let mut acc = 0.0;
        for (v, wt) in res.sphere.iter() {
            acc += wt * ctx.interior_ray(v, &res.interior)?;
        }
        return Ok(acc);
    }
    // forward cone of rays meeting E: v^T K v >= 0, K = P x x^T P - e P, x^T P v < 0
    let spec = &ctx.m.spec;
    let pm = spec.m.clone().try_inverse().ok_or_else(|| Error::Singular("M".into()))?;
    let px = &pm * nalgebra::DVector::from_column_slice(x);
    let e = quad_form(&pm, x) - 1.0;
    let k: DMatrix<f64> = &px * px.transpose() - &pm * e;
    let eig = SymmetricEigen::new(k);
    let top = (0..d).max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j])).unwrap();
    let lam0 = eig.eigenvalues[top];
    let mut axis: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    if axis.iter().zip(px.iter()).map(|(a, b)| a * b).sum::<f64>() > 0.0 {
        axis.iter_mut().for_each(|a| *a = -*a);
    }
    let others: Vec<usize> = (0..d).filter(|&i| i != top).collect();
    let etas: Vec<(Vec<f64>, f64)> = match &res.sub {
        Some(r) => r.iter().map(|(e, w)| (e.to_vec(), w)).collect(),
        None => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
    };
    let mut total = 0.0;
    let mut v = vec![0.0; d];
    for (eta, weta) in &etas {
        let qe: f64 = others.iter().zip(eta).map(|(&i, c)| eig.eigenvalues[i] * c * c).sum();
        let dir: Vec<f64> =
            (0..d).map(|i| others.iter().zip(eta).map(|(&k, c)| eig.eigenvectors[(i, k)] * c).sum()).collect();
        let tb = lam0.sqrt().atan2((-qe).sqrt());
        let mut err = None;
        let inner = res.ts.integrate(0.0, tb, |th, _, _| {
            let (st, ct) = th.sin_cos();
            for i in 0..d {
                v[i] = ct * axis[i] + st * dir[i];
            }
            match ctx.exterior_ray(&v, &res.exterior) {
                Ok(val) => val * st.powi(d as i32 - 2),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        total += weta * inner;
    }
    Ok(total)
}

/// Direct convolution with a two-resolution error estimate; fails if the estimate exceeds the request.
pub fn direct_convolution(m: &BarenblattMeasure, p: &Profile, x: &[f64], cfg: &ConvolutionConfig) -> Result<OracleValue> {
    let d = m.h.d;
    if x.len() != d {
        return Err(Error::InvalidInput("point dimension".into()));
    }
    if !p.has_physical() {
        return Err(Error::InvalidInput("direct convolution needs the physical-side profile".into()));
    }
    let ctx = Ctx { m, p, pexp: m.exponent, u: m.spec.to_unit_frame(x), s: m.h.s, d };
    let uu: f64 = ctx.u.iter().map(|v| v * v).sum();
    if (uu - 1.0).abs() < 1e-9 {
        return Err(Error::Domain("direct convolution is not evaluated on the boundary of E".into()));
    }
    let coarse = resolution(d, m.exponent, m.h.s, cfg.radial_nodes, cfg.sphere_order, cfg.cone_level)?;
    let fine = resolution(
        d,
        m.exponent,
        m.h.s,
        cfg.radial_nodes * 3 / 2,
        cfg.sphere_order * 3 / 2,
        cfg.cone_level + 1,
    )?;
    let a = evaluate(&ctx, x, &coarse)?;
    let b = evaluate(&ctx, x, &fine)?;
    let error = (a - b).abs();
    if error > cfg.rel_tol * b.abs() {
        return Err(Error::Accuracy { estimate: error / b.abs(), requested: cfg.rel_tol });
    }
    Ok(OracleValue { value: b, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::EllipsoidSpec;
    use crate::potential::{PotentialConfig, PotentialField};
    use crate::profile::HarmonicTerm;
    use crate::specfun::Homogeneity;

    fn one(s: f64, d: usize) -> Profile {
        let c = crate::quadrature::sphere_area(d).sqrt();
        Profile::from_harmonics(Homogeneity::new(s, d).unwrap(), &[HarmonicTerm { n: 0, m: 0, coeff: c }]).unwrap()
    }

    #[test]
    fn coulomb_center_value() {
        // uniform ball of radius R: potential 3/(2R) at the centre
        let p = one(1.0, 3);
        let m = BarenblattMeasure::new(EllipsoidSpec::isotropic(3, 1.3).unwrap(), p.h).unwrap();
        let v = direct_convolution(&m, &p, &[0.0; 3], &ConvolutionConfig::default()).unwrap();
        assert!((v.value - 1.5 / 1.3).abs() < 1e-10);
    }

    #[test]
    fn agrees_with_fourier_representation() {
        let h = Homogeneity::new(1.5, 3).unwrap();
        let p = Profile::from_harmonics(
            h,
            &[HarmonicTerm { n: 0, m: 0, coeff: 3.5 }, HarmonicTerm { n: 2, m: 1, coeff: 0.4 }, HarmonicTerm { n: 2, m: -2, coeff: -0.3 }],
        )
        .unwrap();
        let spec = EllipsoidSpec::new(crate::measure::tests_support::rot(0.3, 0.8), vec![1.4, 0.9, 0.7]).unwrap();
        let m = BarenblattMeasure::new(spec.clone(), h).unwrap();
        let f = PotentialField::new(m.clone(), &p, PotentialConfig::default()).unwrap();
        for y in [[0.1, 0.2, -0.3], [0.5, -0.5, 0.4], [1.0, 0.5, 0.3], [-2.0, 1.0, 0.5]] {
            let x = spec.from_unit(&y);
            let o = direct_convolution(&m, &p, &x, &ConvolutionConfig::default()).unwrap();
            let c = f.convolve(&x).unwrap();
            assert!((o.value - c).abs() < 1e-6 * c.abs(), "y={y:?}: oracle {} vs {c}", o.value);
            let xm: Vec<f64> = x.iter().map(|v| -v).collect();
            let om = direct_convolution(&m, &p, &xm, &ConvolutionConfig::default()).unwrap();
            assert!((om.value - o.value).abs() < 1e-8 * o.value.abs());
        }
    }

    #[test]
    fn far_field() {
        let h = Homogeneity::new(1.5, 3).unwrap();
        let p = Profile::from_harmonics(h, &[HarmonicTerm { n: 0, m: 0, coeff: 3.5 }, HarmonicTerm { n: 2, m: 0, coeff: 0.8 }])
            .unwrap();
        let spec = EllipsoidSpec::new(crate::measure::tests_support::rot(0.3, 0.8), vec![1.4, 0.9, 0.7]).unwrap();
        let m = BarenblattMeasure::new(spec, h).unwrap();
        let x = [140.0 * 0.6, 0.0, 140.0 * 0.8];
        let o = direct_convolution(&m, &p, &x, &ConvolutionConfig::default()).unwrap();
        let w = p.eval_psi(&[0.6, 0.0, 0.8]).unwrap() * 140f64.powf(-1.5);
        assert!((o.value / w - 1.0).abs() < 0.01);
    }
}
