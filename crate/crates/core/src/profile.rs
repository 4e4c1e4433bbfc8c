//! Anisotropy profiles `Psi` on the sphere and their Fourier-side counterparts.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{even_labels, harmonic_poly, index_labels, CompiledPoly, Poly};
use crate::specfun::{b_nsd, Homogeneity};
use crate::squad::{build_rule, SphereRule};

pub const DEFAULT_N_MAX: usize = 8;

pub type SphereFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Coefficient of `Y_{n,m}` in the physical-side expansion of `Psi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTerm {
    pub n: usize,
    pub m: i64,
    pub coeff: f64,
}

#[derive(Clone)]
enum Rep {
    Poly(CompiledPoly),
    Sampler(SphereFn),
}

impl Rep {
    fn eval(&self, w: &[f64]) -> f64 {
        match self {
            Rep::Poly(p) => p.eval_dir(w),
            Rep::Sampler(f) => f(w),
        }
    }
}

/// Evaluator for `Psi-hat` on the sphere.
#[derive(Clone)]
pub struct FourierSampler {
    rep: Rep,
}

impl FourierSampler {
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.rep.eval(w)
    }
}

#[derive(Clone)]
pub struct Profile {
    pub h: Homogeneity,
    terms: Option<Vec<HarmonicTerm>>,
    hat: Rep,
    psi: Option<Rep>,
    /// RMS residual of a least-squares fit, when the profile came from samples
    pub fit_residual: Option<f64>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile")
            .field("h", &self.h)
            .field("terms", &self.terms)
            .field("physical_side", &self.psi.is_some())
            .field("fit_residual", &self.fit_residual)
            .finish()
    }
}

fn merge_terms(d: usize, terms: &[HarmonicTerm], n_max: usize) -> Result<Vec<HarmonicTerm>> {
    let mut out: Vec<HarmonicTerm> = Vec::new();
    for t in terms {
        if t.n % 2 == 1 {
            return Err(Error::InvariantViolation(format!(
                "odd-degree harmonic Y_({},{}) in an even profile",
                t.n, t.m
            )));
        }
        if t.n > n_max {
            return Err(Error::InvalidInput(format!("harmonic degree {} above cutoff {n_max}", t.n)));
        }
        if !index_labels(d, t.n).contains(&t.m) {
            return Err(Error::InvalidInput(format!("no harmonic Y_({},{}) in d = {d}", t.n, t.m)));
        }
        if !t.coeff.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite coefficient for Y_({},{})", t.n, t.m)));
        }
        match out.iter_mut().find(|o| o.n == t.n && o.m == t.m) {
            Some(o) => o.coeff += t.coeff,
            None => out.push(*t),
        }
    }
    out.sort_by_key(|t| (t.n, t.m));
    Ok(out)
}

fn synthesize(d: usize, terms: &[(usize, i64, f64)]) -> Result<CompiledPoly> {
    let deg = terms.iter().map(|t| t.0).max().unwrap_or(0);
    let mut p = Poly::zero(d);
    for &(n, m, c) in terms {
        if c != 0.0 {
            p.add_scaled(&harmonic_poly(d, n, m)?.homogenize(deg)?, c);
        }
    }
    let mut c = p.compile();
    c.degree = deg;
    Ok(c)
}

impl Profile {
    /// Physical-side harmonic coefficients of `Psi`.
    pub fn from_harmonics(h: Homogeneity, terms: &[HarmonicTerm]) -> Result<Self> {
        Self::from_harmonics_with_cutoff(h, terms, DEFAULT_N_MAX)
    }

    pub fn from_harmonics_with_cutoff(h: Homogeneity, terms: &[HarmonicTerm], n_max: usize) -> Result<Self> {
        let terms = merge_terms(h.d, terms, n_max)?;
        if terms.is_empty() {
            return Err(Error::InvalidInput("profile has no harmonic terms".into()));
        }
        let phys: Vec<_> = terms.iter().map(|t| (t.n, t.m, t.coeff)).collect();
        let hat: Vec<_> = terms.iter().map(|t| (t.n, t.m, b_nsd(t.n, h.s, h.d) * t.coeff)).collect();
        Ok(Self {
            h,
            hat: Rep::Poly(synthesize(h.d, &hat)?),
            psi: Some(Rep::Poly(synthesize(h.d, &phys)?)),
            terms: Some(terms),
            fit_residual: None,
        })
    }

    /// Fourier-side harmonic coefficients of `Psi-hat`.
    pub fn from_fourier_harmonics(h: Homogeneity, terms: &[HarmonicTerm]) -> Result<Self> {
        Self::from_fourier_harmonics_with_cutoff(h, terms, DEFAULT_N_MAX)
    }

    pub fn from_fourier_harmonics_with_cutoff(
        h: Homogeneity,
        terms: &[HarmonicTerm],
        n_max: usize,
    ) -> Result<Self> {
        let terms = merge_terms(h.d, terms, n_max)?;
        let phys: Vec<HarmonicTerm> = terms
            .iter()
            .map(|t| HarmonicTerm { coeff: t.coeff / b_nsd(t.n, h.s, h.d), ..*t })
            .collect();
        Self::from_harmonics_with_cutoff(h, &phys, n_max)
    }

    /// `Psi-hat == 1`.
    pub fn isotropic(h: Homogeneity) -> Self {
        let c = crate::quadrature::sphere_area(h.d).sqrt();
        Self::from_fourier_harmonics(h, &[HarmonicTerm { n: 0, m: 0, coeff: c }]).expect("constant harmonic")
    }

    /// `Psi-hat` given as a polynomial restricted to the sphere; projected exactly onto harmonics.
    pub fn from_fourier_polynomial(h: Homogeneity, poly: &Poly) -> Result<Self> {
        let terms = project_polynomial(h.d, poly)?;
        let n_max = terms.iter().map(|t| t.n).max().unwrap_or(0).max(DEFAULT_N_MAX);
        Self::from_fourier_harmonics_with_cutoff(h, &terms, n_max)
    }

    /// `Psi` given as a polynomial restricted to the sphere.
    pub fn from_polynomial(h: Homogeneity, poly: &Poly) -> Result<Self> {
        let terms = project_polynomial(h.d, poly)?;
        let n_max = terms.iter().map(|t| t.n).max().unwrap_or(0).max(DEFAULT_N_MAX);
        Self::from_harmonics_with_cutoff(h, &terms, n_max)
    }

    /// Least-squares fit of tabulated `Psi-hat` samples by even harmonics up to `n_max`.
    pub fn from_fourier_table(h: Homogeneity, nodes: &[Vec<f64>], values: &[f64], n_max: usize) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::InvalidInput("fourier table: node/value count mismatch".into()));
        }
        let labels = even_labels(h.d, n_max);
        if nodes.len() < labels.len() {
            return Err(Error::InvalidInput(format!(
                "fourier table has {} samples, need at least {} for degree {n_max}",
                nodes.len(),
                labels.len()
            )));
        }
        let basis: Vec<CompiledPoly> = labels
            .iter()
            .map(|&(n, m)| harmonic_poly(h.d, n, m).map(|p| p.compile()))
            .collect::<Result<_>>()?;
        let mut a = DMatrix::<f64>::zeros(nodes.len(), labels.len());
        for (i, w) in nodes.iter().enumerate() {
            if w.len() != h.d {
                return Err(Error::InvalidInput(format!("fourier table node {i} has wrong dimension")));
            }
            let r: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(r > 0.0) {
                return Err(Error::InvalidInput(format!("fourier table node {i} is zero")));
            }
            for (j, b) in basis.iter().enumerate() {
                a[(i, j)] = b.eval_dir(w);
            }
        }
        let y = DVector::from_column_slice(values);
        let svd = a.clone().svd(true, true);
        let c = svd
            .solve(&y, 1e-12)
            .map_err(|e| Error::InvalidInput(format!("fourier table fit failed: {e}")))?;
        let resid = (&a * &c - &y).norm() / (values.len() as f64).sqrt();
        let terms: Vec<HarmonicTerm> = labels
            .iter()
            .zip(c.iter())
            .filter(|(_, &v)| v.abs() > 1e-15)
            .map(|(&(n, m), &coeff)| HarmonicTerm { n, m, coeff })
            .collect();
        let mut p = Self::from_fourier_harmonics_with_cutoff(h, &terms, n_max)?;
        p.fit_residual = Some(resid);
        Ok(p)
    }

    /// Profile known only through point evaluators.
    pub fn from_sampler(h: Homogeneity, hat: SphereFn, psi: Option<SphereFn>) -> Self {
        Self { h, terms: None, hat: Rep::Sampler(hat), psi: psi.map(Rep::Sampler), fit_residual: None }
    }

    pub fn d(&self) -> usize {
        self.h.d
    }

    pub fn s(&self) -> f64 {
        self.h.s
    }

    /// Physical-side coefficients, when the profile is harmonic.
    pub fn terms(&self) -> Option<&[HarmonicTerm]> {
        self.terms.as_deref()
    }

    /// Fourier-side coefficients `b_n c_{nm}`.
    pub fn fourier_terms(&self) -> Option<Vec<HarmonicTerm>> {
        self.terms.as_ref().map(|ts| {
            ts.iter().map(|t| HarmonicTerm { coeff: t.coeff * b_nsd(t.n, self.h.s, self.h.d), ..*t }).collect()
        })
    }

    pub fn fourier_side(&self) -> FourierSampler {
        FourierSampler { rep: self.hat.clone() }
    }

    /// `Psi-hat(omega)`.
    pub fn eval_hat(&self, w: &[f64]) -> f64 {
        self.hat.eval(w)
    }

    pub fn has_physical(&self) -> bool {
        self.psi.is_some()
    }

    /// `Psi(omega)`.
    pub fn eval_psi(&self, w: &[f64]) -> Result<f64> {
        match &self.psi {
            Some(r) => Ok(r.eval(w)),
            None => Err(Error::InvalidInput(
                "physical-side profile unavailable; supply harmonic coefficients".into(),
            )),
        }
    }

    /// Compiled physical-side polynomial (`Psi(z/|z|) = P(z)/|z|^deg`).
    pub fn physical_poly(&self) -> Option<&CompiledPoly> {
        match &self.psi {
            Some(Rep::Poly(p)) => Some(p),
            _ => None,
        }
    }

    /// The profile with `Psi-hat + eps` and `Psi + eps/b_{s,d}`.
    pub fn lifted(&self, eps: f64) -> Result<Self> {
        if let Some(terms) = self.fourier_terms() {
            let mut t = terms;
            let y00 = 1.0 / crate::quadrature::sphere_area(self.h.d).sqrt();
            t.push(HarmonicTerm { n: 0, m: 0, coeff: eps / y00 });
            let n_max = t.iter().map(|x| x.n).max().unwrap_or(0).max(DEFAULT_N_MAX);
            return Self::from_fourier_harmonics_with_cutoff(self.h, &t, n_max);
        }
        let hat = self.hat.clone();
        let b0 = b_nsd(0, self.h.s, self.h.d);
        let psi = self.psi.clone();
        Ok(Self {
            h: self.h,
            terms: None,
            hat: Rep::Sampler(Arc::new(move |w| hat.eval(w) + eps)),
            psi: psi.map(|r| Rep::Sampler(Arc::new(move |w: &[f64]| r.eval(w) + eps / b0))),
            fit_residual: self.fit_residual,
        })
    }

    /// `omega -> Psi-hat(Q omega)` (and likewise for `Psi`).
    pub fn rotated(&self, q: &DMatrix<f64>) -> Self {
        let d = self.h.d;
        let q = q.clone();
        let map = move |w: &[f64]| -> Vec<f64> { (0..d).map(|i| (0..d).map(|j| q[(i, j)] * w[j]).sum()).collect() };
        let map = Arc::new(map);
        let hat = self.hat.clone();
        let m1 = map.clone();
        let psi = self.psi.clone();
        Self {
            h: self.h,
            terms: None,
            hat: Rep::Sampler(Arc::new(move |w| hat.eval(&m1(w)))),
            psi: psi.map(|r| Rep::Sampler(Arc::new(move |w: &[f64]| r.eval(&map(w))))),
            fit_residual: self.fit_residual,
        }
    }

    /// `int Psi-hat` over the sphere.
    pub fn hat_integral(&self, rule: &SphereRule) -> Result<f64> {
        rule.integrate(|w| self.eval_hat(w))
    }
}

/// Exact harmonic coefficients of an even polynomial restricted to the sphere.
pub fn project_polynomial(d: usize, poly: &Poly) -> Result<Vec<HarmonicTerm>> {
    if poly.d != d {
        return Err(Error::InvalidInput(format!("polynomial has {} variables, expected {d}", poly.d)));
    }
    for e in poly.terms.keys() {
        if e.iter().map(|&k| k as usize).sum::<usize>() % 2 == 1 {
            return Err(Error::InvariantViolation("odd term in an even profile polynomial".into()));
        }
    }
    let deg = poly.degree();
    let rule = build_rule(d, (2 * deg).max(2))?;
    let p = poly.compile();
    let mut out = Vec::new();
    for (n, m) in even_labels(d, deg) {
        let y = harmonic_poly(d, n, m)?.compile();
        let c = rule.integrate(|w| p.eval_raw(w) * y.eval_raw(w))?;
        if c.abs() > 1e-13 {
            out.push(HarmonicTerm { n, m, coeff: c });
        }
    }
    Ok(out)
}

/// `Psi-hat_t = t Psi-hat + (1 - t)`.
#[derive(Debug, Clone, Copy)]
pub struct HomotopyProfile<'a> {
    pub base: &'a Profile,
    pub t: f64,
}

impl HomotopyProfile<'_> {
    pub fn eval_hat(&self, w: &[f64]) -> f64 {
        self.t * self.base.eval_hat(w) + (1.0 - self.t)
    }

    /// Physical side `t Psi + (1 - t)/b_{s,d}`.
    pub fn eval_psi(&self, w: &[f64]) -> Result<f64> {
        let b0 = b_nsd(0, self.base.h.s, self.base.h.d);
        Ok(self.t * self.base.eval_psi(w)? + (1.0 - self.t) / b0)
    }
}

pub fn homotopy(p: &Profile, t: f64) -> Result<HomotopyProfile<'_>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("homotopy parameter t = {t} outside [0, 1]")));
    }
    Ok(HomotopyProfile { base: p, t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityAudit {
    pub min_value: f64,
    pub argmin: Vec<f64>,
    pub strict: bool,
    /// `min_value < -tolerance`: outside both the theorem and the lifting scope
    pub negative: bool,
}

pub const AUDIT_TOL: f64 = 1e-12;

fn minimize_on_sphere<F: Fn(&[f64]) -> f64>(f: F, rule: &SphereRule, tol: f64) -> PositivityAudit {
    let d = rule.d;
    let mut vals: Vec<(f64, usize)> = rule.nodes().enumerate().map(|(i, w)| (f(w), i)).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best_val = f64::INFINITY;
    let mut best = vec![0.0; d];
    // pattern search from the lowest few nodes
    for &(v0, i) in vals.iter().take(4) {
        let mut x = rule.node(i).to_vec();
        let mut v = v0;
        let mut step = 0.2;
        while step > 1e-10 {
            let mut improved = false;
            for axis in 0..d {
                for sign in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[axis] += sign * step;
                    let n: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
                    y.iter_mut().for_each(|a| *a /= n);
                    let fy = f(&y);
                    if fy < v {
                        v = fy;
                        x = y;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if v < best_val {
            best_val = v;
            best = x;
        }
    }
    PositivityAudit { min_value: best_val, argmin: best, strict: best_val > tol, negative: best_val < -tol }
}

/// Minimum of `Psi-hat` over the rule nodes, refined locally.
pub fn positivity_audit(p: &Profile, rule: &SphereRule) -> PositivityAudit {
    minimize_on_sphere(|w| p.eval_hat(w), rule, AUDIT_TOL)
}

/// Same audit for the physical side, when available.
pub fn physical_audit(p: &Profile, rule: &SphereRule) -> Option<PositivityAudit> {
    if !p.has_physical() {
        return None;
    }
    Some(minimize_on_sphere(|w| p.eval_psi(w).unwrap_or(f64::NAN), rule, AUDIT_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::kernel_constants;

    fn hom(s: f64, d: usize) -> Homogeneity {
        Homogeneity::new(s, d).unwrap()
    }

    #[test]
    fn constant_profile_maps_to_b_sd() {
        let h = hom(1.0, 3);
        let y00 = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        let p = Profile::from_harmonics(h, &[HarmonicTerm { n: 0, m: 0, coeff: 1.0 / y00 }]).unwrap();
        let b = kernel_constants(&h).unwrap().b_sd;
        for w in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]] {
            assert!((p.eval_hat(&w) - b).abs() < 1e-14);
            assert!((p.eval_psi(&w).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn odd_degree_rejected() {
        let e = Profile::from_harmonics(hom(1.0, 3), &[HarmonicTerm { n: 1, m: 0, coeff: 1.0 }]);
        assert!(matches!(e, Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn linearity_and_evenness() {
        let h = hom(1.5, 3);
        let a = [HarmonicTerm { n: 0, m: 0, coeff: 2.0 }, HarmonicTerm { n: 2, m: 1, coeff: 0.3 }];
        let b = [HarmonicTerm { n: 2, m: -2, coeff: -0.2 }, HarmonicTerm { n: 4, m: 0, coeff: 0.1 }];
        let pa = Profile::from_harmonics(h, &a).unwrap();
        let pb = Profile::from_harmonics(h, &b).unwrap();
        let both: Vec<_> = a.iter().chain(&b).copied().collect();
        let pab = Profile::from_harmonics(h, &both).unwrap();
        let rule = build_rule(3, 6).unwrap();
        for w in rule.nodes() {
            let sum = pa.eval_hat(w) + pb.eval_hat(w);
            assert!((pab.eval_hat(w) - sum).abs() < 1e-13);
            let neg: Vec<f64> = w.iter().map(|x| -x).collect();
            assert!((pab.eval_hat(w) - pab.eval_hat(&neg)).abs() < 1e-14);
        }
    }

    #[test]
    fn perturbation_uses_degree_two_multiplier() {
        let h = hom(1.0, 3);
        let eps = 1e-3;
        let p = Profile::from_harmonics(h, &[HarmonicTerm { n: 0, m: 0, coeff: 1.0 }, HarmonicTerm { n: 2, m: 0, coeff: eps }])
            .unwrap();
        let w = [0.0, 0.6, 0.8];
        let y00 = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        let y20 = crate::harmonics::eval_harmonic(3, 2, 0, &w).unwrap();
        let want = b_nsd(0, 1.0, 3) * y00 + eps * b_nsd(2, 1.0, 3) * y20;
        assert!((p.eval_hat(&w) - want).abs() < 1e-15);
    }

    #[test]
    fn polynomial_projection_round_trip() {
        let h = hom(1.0, 3);
        // (w1^2 + w2^2)^2
        let mut poly = Poly::zero(3);
        poly.add_scaled(&Poly::monomial(3, &[4, 0, 0], 1.0), 1.0);
        poly.add_scaled(&Poly::monomial(3, &[2, 2, 0], 2.0), 1.0);
        poly.add_scaled(&Poly::monomial(3, &[0, 4, 0], 1.0), 1.0);
        let p = Profile::from_fourier_polynomial(h, &poly).unwrap();
        let rule = build_rule(3, 8).unwrap();
        for w in rule.nodes() {
            let want = (w[0] * w[0] + w[1] * w[1]).powi(2);
            assert!((p.eval_hat(w) - want).abs() < 1e-12);
        }
        let audit = positivity_audit(&p, &rule);
        assert!(!audit.strict && !audit.negative);
        assert!(audit.argmin[2].abs() > 1.0 - 1e-6);
    }

    #[test]
    fn table_fit_recovers_harmonic() {
        let h = hom(1.2, 3);
        let truth = Profile::from_fourier_harmonics(
            h,
            &[HarmonicTerm { n: 0, m: 0, coeff: 3.0 }, HarmonicTerm { n: 2, m: -1, coeff: 0.4 }],
        )
        .unwrap();
        let rule = build_rule(3, 10).unwrap();
        let nodes: Vec<Vec<f64>> = rule.nodes().map(|w| w.to_vec()).collect();
        let values: Vec<f64> = nodes.iter().map(|w| truth.eval_hat(w)).collect();
        let fit = Profile::from_fourier_table(h, &nodes, &values, 4).unwrap();
        assert!(fit.fit_residual.unwrap() < 1e-12);
        let w = [0.48, -0.6, 0.64];
        assert!((fit.eval_hat(&w) - truth.eval_hat(&w)).abs() < 1e-12);
        assert!((fit.eval_psi(&w).unwrap() - truth.eval_psi(&w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn homotopy_endpoints_and_bounds() {
        let h = hom(1.5, 3);
        let p = Profile::from_fourier_harmonics(
            h,
            &[HarmonicTerm { n: 0, m: 0, coeff: 5.0 }, HarmonicTerm { n: 2, m: 0, coeff: 1.0 }],
        )
        .unwrap();
        let rule = build_rule(3, 8).unwrap();
        let lo = rule.nodes().map(|w| p.eval_hat(w)).fold(f64::INFINITY, f64::min);
        let hi = rule.nodes().map(|w| p.eval_hat(w)).fold(f64::NEG_INFINITY, f64::max);
        for &t in &[0.0, 0.3, 0.7, 1.0] {
            let ht = homotopy(&p, t).unwrap();
            for w in rule.nodes() {
                let v = ht.eval_hat(w);
                assert!(v >= lo.min(1.0) - 1e-15 && v <= hi.max(1.0) + 1e-15);
                if t == 0.0 {
                    assert_eq!(v, 1.0);
                }
                if t == 1.0 {
                    assert_eq!(v, p.eval_hat(w));
                }
            }
        }
        assert!(homotopy(&p, 1.5).is_err());
    }

    #[test]
    fn audit_of_constant_and_lift() {
        let h = hom(1.0, 3);
        let p = Profile::isotropic(h);
        let rule = build_rule(3, 10).unwrap();
        let a = positivity_audit(&p, &rule);
        assert!(a.strict && (a.min_value - 1.0).abs() < 1e-13);
        let zero_e3: SphereFn = Arc::new(|w: &[f64]| 1.0 - w[2] * w[2]);
        let s = Profile::from_sampler(h, zero_e3, None);
        let a = positivity_audit(&s, &rule);
        assert!(!a.strict && a.argmin[2].abs() > 1.0 - 1e-6);
        let l = s.lifted(0.01).unwrap();
        let a = positivity_audit(&l, &rule);
        assert!(a.strict && (a.min_value - 0.01).abs() < 1e-10);
    }
}
