//! `W * mu_E` and `P_E` from the spherical Fourier representation.
//!
//! `W * mu_E (x) = c_0 + x^T A x + int_{|alpha| > 1} g_s F(alpha)`, where the first two
//! terms integrate `g_s (1 - s alpha^2)` over the whole sphere. The cap `{|alpha| > 1}` is
//! `{omega : omega^T Q omega > 0}` with `Q = x x^T - M`, a double cone around the positive
//! eigenvector of `Q`, integrated in polar coordinates about that axis.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{quad_form, BarenblattMeasure, EllipsoidSpec};
use crate::par::block_sum;
use crate::profile::Profile;
use crate::quadrature::TanhSinh;
use crate::specfun::{kernel_constants, ExteriorKernel};
use crate::squad::{build_rule, default_order, SphereRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    /// order of the full-sphere rule for `c_0` and `A`
    pub sphere_order: Option<usize>,
    /// tanh-sinh level in the polar angle of the cap
    pub cap_level: u32,
    /// order of the rule on `S^{d-2}` for the cap
    pub cap_order: Option<usize>,
    /// EL1 tolerance relative to `|C|`
    pub el1_tol: f64,
    /// EL2 tolerance (absolute)
    pub el2_tol: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self { sphere_order: None, cap_level: 5, cap_order: None, el1_tol: 1e-6, el2_tol: 1e-8 }
    }
}

/// `alpha(x, omega) = (x . omega) / |D(a) R^T omega|`.
pub fn alpha(x: &[f64], w: &[f64], spec: &EllipsoidSpec) -> f64 {
    let xw: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
    xw / spec.quad(w).sqrt()
}

#[derive(Debug, Clone)]
pub struct PotentialField {
    pub measure: BarenblattMeasure,
    pub profile: Profile,
    pub config: PotentialConfig,
    rule: SphereRule,
    c_tilde: f64,
    g: Vec<f64>,
    /// `P_E(0) = c_0`
    pub c0: f64,
    /// interior form: `W * mu = c_0 + x^T A x`
    pub a: DMatrix<f64>,
    kernel: ExteriorKernel,
    ts: TanhSinh,
    eta: Option<SphereRule>,
}

/// Cap contribution and its two-level difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl PotentialField {
    pub fn new(measure: BarenblattMeasure, profile: &Profile, config: PotentialConfig) -> Result<Self> {
        let d = measure.h.d;
        if profile.d() != d || (profile.s() - measure.h.s).abs() > 0.0 {
            return Err(Error::InvalidInput("profile and measure disagree on (d, s)".into()));
        }
        if measure.h.s >= 5.0 {
            return Err(Error::Domain("potential evaluation needs s < 5".into()));
        }
        let kc = kernel_constants(&measure.h)?;
        let order = config.sphere_order.unwrap_or_else(|| default_order(d));
        let rule = build_rule(d, order)?;
        let s = measure.h.s;
        let spec = &measure.spec;
        let g: Vec<f64> = rule.nodes().map(|w| kc.c_tilde_sd * profile.eval_hat(w) / spec.quad(w).powf(0.5 * s)).collect();
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("g_s at node {i} is {}", g[i])));
        }
        let width = 1 + d * d;
        let sums = block_sum(rule.len(), width, |i, acc| {
            let w = rule.node(i);
            let f = rule.weights[i] * g[i];
            acc[0] += f;
            let fq = -s * f / spec.quad(w);
            for r in 0..d {
                for c in 0..d {
                    acc[1 + r * d + c] += fq * w[r] * w[c];
                }
            }
        });
        let c0 = sums[0];
        let mut a = DMatrix::from_row_slice(d, d, &sums[1..]);
        a = 0.5 * (&a + a.transpose());
        let eta = if d > 2 { Some(build_rule(d - 1, config.cap_order.unwrap_or(order))?) } else { None };
        let ts = TanhSinh::new(config.cap_level);
        Ok(Self {
            kernel: ExteriorKernel::new(s)?,
            measure,
            profile: profile.clone(),
            config,
            rule,
            c_tilde: kc.c_tilde_sd,
            g,
            c0,
            a,
            ts,
            eta,
        })
    }

    pub fn spec(&self) -> &EllipsoidSpec {
        &self.measure.spec
    }

    pub fn d(&self) -> usize {
        self.measure.h.d
    }

    /// `g_s(omega) = c~ Psi-hat(omega) / |D(a) R^T omega|^s`.
    pub fn g(&self, w: &[f64]) -> f64 {
        self.c_tilde * self.profile.eval_hat(w) / self.spec().quad(w).powf(0.5 * self.measure.h.s)
    }

    /// `g_s` at the nodes of the internal rule.
    pub fn g_nodes(&self) -> (&SphereRule, &[f64]) {
        (&self.rule, &self.g)
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.c0 + quad_form(&self.a, x)
    }

    /// `int_{|alpha| > 1} g_s F(alpha)` on a given tanh-sinh rule.
    fn cap_on(&self, x: &[f64], ts: &TanhSinh) -> Result<f64> {
        let d = self.d();
        let spec = self.spec();
        // outside E iff x^T M^{-1} x > 1
        if spec.unit_radius2(x) <= 1.0 {
            return Ok(0.0);
        }
        let mut q = -spec.m.clone();
        for i in 0..d {
            for j in 0..d {
                q[(i, j)] += x[i] * x[j];
            }
        }
        let eig = SymmetricEigen::new(q);
        let top = (0..d).max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j])).unwrap();
        let lam0 = eig.eigenvalues[top];
        if !(lam0 > 0.0) {
            return Ok(0.0);
        }
        let v: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
        let others: Vec<usize> = (0..d).filter(|&k| k != top).collect();
        let eta_pts: Vec<(Vec<f64>, f64)> = match &self.eta {
            Some(r) => r.iter().map(|(e, w)| (e.to_vec(), w)).collect(),
            None => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        };
        let mut total = 0.0;
        let mut w = vec![0.0; d];
        for (eta, weta) in &eta_pts {
            let qeta: f64 = others.iter().zip(eta).map(|(&k, e)| eig.eigenvalues[k] * e * e).sum();
            if !(qeta < 0.0) {
                return Err(Error::InvariantViolation(format!("cap geometry: eta^T Q eta = {qeta:e} >= 0")));
            }
            let dir: Vec<f64> =
                (0..d).map(|i| others.iter().zip(eta).map(|(&k, e)| eig.eigenvectors[(i, k)] * e).sum()).collect();
            let theta_b = lam0.sqrt().atan2((-qeta).sqrt());
            let spread = lam0 - qeta;
            let inner = ts.integrate(0.0, theta_b, |th, _, delta| {
                let (st, ct) = th.sin_cos();
                for i in 0..d {
                    w[i] = ct * v[i] + st * dir[i];
                }
                let qm = spec.quad(&w);
                // omega^T Q omega = (lam0 - q_eta) sin(theta_b - theta) sin(theta_b + theta)
                let num = spread * delta.sin() * (theta_b + th).sin();
                let u = num / qm;
                if !(u > 0.0) {
                    return 0.0;
                }
                let f = self.kernel.big_f_u(u);
                self.g(&w) * f * st.powi(d as i32 - 2)
            });
            total += weta * inner;
        }
        // antipodal cone
        let total = 2.0 * total;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("cap integral at {x:?}")));
        }
        Ok(total)
    }

    pub fn cap_integral(&self, x: &[f64]) -> Result<f64> {
        self.cap_on(x, &self.ts)
    }

    /// Cap integral with a two-level error estimate.
    pub fn cap_estimate(&self, x: &[f64]) -> Result<Estimate> {
        let coarse = self.cap_on(x, &self.ts)?;
        let fine = self.cap_on(x, &TanhSinh::new(self.config.cap_level + 1))?;
        Ok(Estimate { value: fine, error: (fine - coarse).abs() })
    }

    /// Escalate the cap level until the two-level difference falls below `tol`.
    pub fn cap_to_tolerance(&self, x: &[f64], tol: f64, max_level: u32) -> Result<Estimate> {
        let mut prev = self.cap_on(x, &TanhSinh::new(self.config.cap_level))?;
        let mut err = f64::INFINITY;
        for level in self.config.cap_level + 1..=max_level {
            let next = self.cap_on(x, &TanhSinh::new(level))?;
            err = (next - prev).abs();
            prev = next;
            if err <= tol {
                return Ok(Estimate { value: next, error: err });
            }
        }
        Err(Error::Accuracy { estimate: err, requested: tol })
    }

    /// `W * mu_E (x)`.
    pub fn convolve(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.quadratic(x) + self.cap_integral(x)?)
    }

    /// `P_E(x) = W * mu_E (x) + |x|^2 / 2`.
    pub fn p_field(&self, x: &[f64]) -> Result<f64> {
        Ok(self.convolve(x)? + 0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("point {x:?} is not a finite {}-vector", self.d())));
        }
        Ok(())
    }

    /// `I(mu_E) = int (W * mu_E) d mu_E + int |x|^2 d mu_E = c_0 + tr(A S) + tr(S)`, `S` the second moments.
    pub fn energy(&self) -> f64 {
        let sm = self.measure.second_moments();
        self.c0 + (&self.a * &sm).trace() + sm.trace()
    }

    /// Hessian of `P_E` on `E`: `2A + I`.
    pub fn interior_hessian(&self) -> DMatrix<f64> {
        2.0 * &self.a + DMatrix::identity(self.d(), self.d())
    }

    /// EL1 on `interior`, EL2 on `exterior`, and the `F` audit on `(1, 100]`.
    pub fn verify_el(&self, interior: &[Vec<f64>], exterior: &[Vec<f64>]) -> Result<ElReport> {
        let c = self.c0;
        let dev: Vec<f64> = interior
            .par_iter()
            .map(|x| self.p_field(x).map(|p| (p - c).abs()))
            .collect::<Result<_>>()?;
        let ext: Vec<(f64, f64)> = exterior
            .par_iter()
            .map(|x| {
                let cap = self.cap_integral(x)?;
                let direct = self.quadratic(x) + cap + 0.5 * x.iter().map(|v| v * v).sum::<f64>() - c;
                Ok((direct, cap))
            })
            .collect::<Result<_>>()?;
        let el1 = dev.iter().fold(0.0f64, |a, &b| a.max(b));
        let el2_direct = ext.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
        let el2_decomposed = ext.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let gap = ext.iter().map(|e| (e.0 - e.1).abs()).fold(0.0f64, f64::max);
        let f_min = f_audit(&self.kernel, 200);
        let el1_ok = el1 <= self.config.el1_tol * c.abs();
        let el2_ok = el2_direct >= -self.config.el2_tol && el2_decomposed >= -self.config.el2_tol;
        Ok(ElReport {
            constant_c: c,
            el1_max_deviation: el1,
            el2_min_margin: el2_direct,
            el2_min_decomposed: el2_decomposed,
            decomposition_max_gap: gap,
            f_min,
            hessian_max: self.interior_hessian().amax(),
            interior_points: interior.len(),
            exterior_points: exterior.len(),
            el1_ok,
            el2_ok,
        })
    }
}

/// Minimum of `F(alpha, s)` over `200` log-spaced points in `(1, 100]`.
pub fn f_audit(kernel: &ExteriorKernel, n: usize) -> f64 {
    (0..n)
        .map(|k| {
            let alpha = 10f64.powf(2.0 * (k as f64 + 1.0) / n as f64);
            kernel.big_f(alpha)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElReport {
    pub constant_c: f64,
    pub el1_max_deviation: f64,
    /// `min (P_E(x) - P_E(0))`, direct difference
    pub el2_min_margin: f64,
    /// same through the cap integral of `g_s F`
    pub el2_min_decomposed: f64,
    pub decomposition_max_gap: f64,
    pub f_min: f64,
    pub hessian_max: f64,
    pub interior_points: usize,
    pub exterior_points: usize,
    pub el1_ok: bool,
    pub el2_ok: bool,
}

/// Interior grid: radii `k/(n_r+1)` times the nodes of a small sphere rule, mapped into `E`.
pub fn interior_grid(spec: &EllipsoidSpec, target: usize) -> Result<Vec<Vec<f64>>> {
    let d = spec.d();
    let dirs = build_rule(d, if d == 2 { 9 } else { 4 })?;
    let nr = target.div_ceil(dirs.len()).max(1);
    let mut out = vec![vec![0.0; d]];
    'outer: for k in 1..=nr {
        let r = 0.98 * k as f64 / nr as f64;
        for w in dirs.nodes() {
            if out.len() >= target {
                break 'outer;
            }
            let y: Vec<f64> = w.iter().map(|v| r * v).collect();
            out.push(spec.from_unit(&y));
        }
    }
    Ok(out)
}

pub const EXTERIOR_SCALES: [f64; 7] = [1.01, 1.05, 1.1, 1.5, 2.0, 5.0, 10.0];

/// Concentric copies `lambda dE` over a sphere rule of the given order.
pub fn exterior_grid(spec: &EllipsoidSpec, order: usize) -> Result<Vec<Vec<f64>>> {
    let dirs = build_rule(spec.d(), order)?;
    let mut out = Vec::new();
    for &lam in &EXTERIOR_SCALES {
        for w in dirs.nodes() {
            let y: Vec<f64> = w.iter().map(|v| lam * v).collect();
            out.push(spec.from_unit(&y));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::HarmonicTerm;
    use crate::quadrature::gauss_legendre;
    use crate::solver::{homotopy_solve, SolverConfig};
    use crate::specfun::Homogeneity;

    fn physical_one(s: f64, d: usize) -> Profile {
        let y00 = 1.0 / crate::quadrature::sphere_area(d).sqrt();
        Profile::from_harmonics(Homogeneity::new(s, d).unwrap(), &[HarmonicTerm { n: 0, m: 0, coeff: 1.0 / y00 }])
            .unwrap()
    }

    #[test]
    fn alpha_examples() {
        let spec = EllipsoidSpec::isotropic(3, 2.0).unwrap();
        assert_eq!(alpha(&[0.0; 3], &[1.0, 0.0, 0.0], &spec), 0.0);
        assert!((alpha(&[1.0, 0.5, 0.0], &[0.6, 0.8, 0.0], &spec) - 0.5).abs() < 1e-15);
        // boundary point: sup over a fine grid is 1
        let r = crate::measure::tests_support::rot(0.3, 0.8);
        let spec = EllipsoidSpec::new(r, vec![1.4, 0.9, 0.5]).unwrap();
        let x = spec.from_unit(&[0.6, 0.0, 0.8]);
        let rule = build_rule(3, 120).unwrap();
        let sup = rule.nodes().map(|w| alpha(&x, w, &spec).abs()).fold(0.0f64, f64::max);
        assert!(sup <= 1.0 + 1e-12 && sup > 1.0 - 1e-3);
        // closed-form maximiser omega ~ M^{-1} x
        let minv = spec.m.clone().try_inverse().unwrap();
        let wv = &minv * nalgebra::DVector::from_vec(x.clone());
        let wv = wv.normalize();
        assert!((alpha(&x, wv.as_slice(), &spec).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coulomb_ball_matches_radial_closed_form() {
        // d = 3, s = 1, Psi = 1: uniform ball, potential (3R^2 - r^2)/(2R^3) inside, 1/r outside
        let p = physical_one(1.0, 3);
        let rad = 1.3;
        let m = BarenblattMeasure::new(EllipsoidSpec::isotropic(3, rad).unwrap(), p.h).unwrap();
        let f = PotentialField::new(m.clone(), &p, PotentialConfig::default()).unwrap();
        // 1D radial oracle: U(r) = (1/r) int_0^r rho 4 pi t^2 + int_r^R rho 4 pi t
        let rho0 = m.normalization;
        let gl = gauss_legendre(40);
        let radial = |r: f64| {
            let inner = gl.on_interval(0.0, r.min(rad)).integrate(|t| rho0 * 4.0 * std::f64::consts::PI * t * t) / r;
            let outer = if r < rad {
                gl.on_interval(r, rad).integrate(|t| rho0 * 4.0 * std::f64::consts::PI * t)
            } else {
                0.0
            };
            inner + outer
        };
        for &r in &[0.2, 0.9, 1.29, 1.31, 2.0, 5.0, 20.0] {
            let x = [r * 0.48, r * 0.6, r * 0.64];
            let want = if r < rad { (3.0 * rad * rad - r * r) / (2.0 * rad.powi(3)) } else { 1.0 / r };
            let got = f.convolve(&x).unwrap();
            assert!((radial(r) - want).abs() < 1e-12);
            assert!((got - want).abs() < 1e-10 * want, "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn bla_identities_and_evenness() {
        let h = Homogeneity::new(1.5, 3).unwrap();
        let p = Profile::from_fourier_harmonics(
            h,
            &[HarmonicTerm { n: 0, m: 0, coeff: 3.5 }, HarmonicTerm { n: 2, m: 2, coeff: 0.6 }],
        )
        .unwrap();
        let spec = EllipsoidSpec::new(crate::measure::tests_support::rot(0.3, 0.8), vec![1.4, 0.9, 0.7]).unwrap();
        let f = PotentialField::new(BarenblattMeasure::new(spec, h).unwrap(), &p, PotentialConfig::default()).unwrap();
        let (rule, g) = f.g_nodes();
        let int_g: f64 = rule.weights.iter().zip(g).map(|(w, g)| w * g).sum();
        assert!((f.p_field(&[0.0; 3]).unwrap() - int_g).abs() < 1e-13 * int_g);
        for x in [[0.3, -0.2, 0.5], [2.0, 1.0, -3.0]] {
            let q = rule.integrate(|w| f.g(w) * alpha(&x, w, f.spec()).powi(2)).unwrap();
            assert!((f.quadratic(&x) - (int_g - 1.5 * q)).abs() < 1e-12 * int_g.max(q));
            let xm: Vec<f64> = x.iter().map(|v| -v).collect();
            assert!((f.p_field(&x).unwrap() - f.p_field(&xm).unwrap()).abs() < 1e-12 * f.p_field(&x).unwrap().abs());
        }
    }

    #[test]
    fn cap_level_convergence() {
        for (s, d) in [(0.5, 3), (1.5, 3), (2.5, 3), (3.5, 4)] {
            let p = physical_one(s, d);
            let spec = if d == 3 {
                EllipsoidSpec::new(crate::measure::tests_support::rot(0.3, 0.8), vec![1.4, 0.9, 0.7]).unwrap()
            } else {
                EllipsoidSpec::new(DMatrix::identity(4, 4), vec![1.4, 0.9, 0.7, 0.6]).unwrap()
            };
            let cfg = PotentialConfig { sphere_order: Some(16), ..Default::default() };
            let f = PotentialField::new(BarenblattMeasure::new(spec.clone(), p.h).unwrap(), &p, cfg).unwrap();
            for lam in [1.001, 1.3, 4.0] {
                let mut y = vec![0.0; d];
                y[0] = lam * 0.6;
                y[d - 1] = lam * 0.8;
                let x = spec.from_unit(&y);
                let e = f.cap_estimate(&x).unwrap();
                assert!(e.error < 1e-10 * (1.0 + e.value.abs()), "s={s} lam={lam}: {e:?}");
                if s >= 3.0 {
                    assert!(e.value >= 0.0);
                }
            }
        }
    }

    #[test]
    fn solved_isotropic_satisfies_both_conditions() {
        let h = Homogeneity::new(1.5, 3).unwrap();
        let p = physical_one(1.5, 3);
        let sol = homotopy_solve(&p, &SolverConfig::default()).unwrap();
        let f = PotentialField::new(BarenblattMeasure::new(sol.spec.clone(), h).unwrap(), &p, PotentialConfig::default())
            .unwrap();
        let inner = interior_grid(&sol.spec, 100).unwrap();
        let outer = exterior_grid(&sol.spec, 4).unwrap();
        let rep = f.verify_el(&inner, &outer).unwrap();
        assert!(rep.el1_max_deviation <= 1e-8 * rep.constant_c.abs(), "{rep:?}");
        assert!(rep.el2_min_margin >= -1e-10 && rep.decomposition_max_gap < 1e-8, "{rep:?}");
        assert!(rep.f_min >= -1e-12);
    }

    #[test]
    fn perturbed_spec_fails_el1() {
        let h = Homogeneity::new(1.5, 3).unwrap();
        let p = physical_one(1.5, 3);
        let sol = homotopy_solve(&p, &SolverConfig::default()).unwrap();
        let mut a = sol.spec.a.clone();
        a[0] *= 1.1;
        let spec = EllipsoidSpec::new(sol.spec.r.clone(), a).unwrap();
        let f = PotentialField::new(BarenblattMeasure::new(spec.clone(), h).unwrap(), &p, PotentialConfig::default()).unwrap();
        let rep = f.verify_el(&interior_grid(&spec, 50).unwrap(), &exterior_grid(&spec, 3).unwrap()).unwrap();
        assert!(!rep.el1_ok);
    }
}
