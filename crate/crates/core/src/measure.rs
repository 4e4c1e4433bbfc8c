//! Ellipsoidal Barenblatt measures.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::gamma::{gamma_unchecked, rgamma};
use crate::specfun::{bessel_j, kernel_constants, Homogeneity};

/// Relative gap below which eigenvalues are treated as repeated.
pub const EIGEN_TIE_TOL: f64 = 1e-9;

/// `E = R diag(a) B_1` with `M = R diag(a^2) R^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSpec {
    pub r: DMatrix<f64>,
    pub a: Vec<f64>,
    pub m: DMatrix<f64>,
}

impl EllipsoidSpec {
    pub fn new(r: DMatrix<f64>, a: Vec<f64>) -> Result<Self> {
        let d = a.len();
        if r.nrows() != d || r.ncols() != d {
            return Err(Error::InvalidInput(format!("rotation must be {d}x{d}")));
        }
        if a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput(format!("semi-axes must be positive, got {a:?}")));
        }
        let orth = (r.transpose() * &r - DMatrix::identity(d, d)).amax();
        if orth > 1e-10 {
            return Err(Error::InvalidInput(format!("R is not orthogonal (|R^T R - I| = {orth:e})")));
        }
        if r.determinant() < 0.0 {
            return Err(Error::InvalidInput("R must have determinant +1".into()));
        }
        let diag = DMatrix::from_diagonal(&DVector::from_iterator(d, a.iter().map(|x| x * x)));
        let m = &r * diag * r.transpose();
        Ok(Self { r, a, m })
    }

    pub fn isotropic(d: usize, radius: f64) -> Result<Self> {
        Self::new(DMatrix::identity(d, d), vec![radius; d])
    }

    /// Eigendecomposition of an SPD matrix with deterministic `(R, a)`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (r, lam) = ordered_eigen(m)?;
        if lam.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::NonPositiveDefinite(format!("eigenvalues {lam:?}")));
        }
        let a = lam.iter().map(|l| l.sqrt()).collect();
        let mut spec = Self::new(r, a)?;
        spec.m = 0.5 * (m + m.transpose());
        Ok(spec)
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    /// `omega^T M omega = |D(a) R^T omega|^2`.
    pub fn quad(&self, w: &[f64]) -> f64 {
        quad_form(&self.m, w)
    }

    /// `|D(1/a) R^T x|^2`; at most 1 exactly on `E`.
    pub fn unit_radius2(&self, x: &[f64]) -> f64 {
        let d = self.d();
        let mut acc = 0.0;
        for j in 0..d {
            let y: f64 = (0..d).map(|i| self.r[(i, j)] * x[i]).sum::<f64>() / self.a[j];
            acc += y * y;
        }
        acc
    }

    /// `y = D(1/a) R^T x`.
    pub fn to_unit_frame(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d();
        (0..d).map(|j| (0..d).map(|i| self.r[(i, j)] * x[i]).sum::<f64>() / self.a[j]).collect()
    }

    /// `x = R D(a) y`.
    pub fn from_unit(&self, y: &[f64]) -> Vec<f64> {
        let d = self.d();
        (0..d).map(|i| (0..d).map(|j| self.r[(i, j)] * self.a[j] * y[j]).sum()).collect()
    }

    pub fn to_json(&self, h: &Homogeneity) -> SpecJson {
        let d = self.d();
        SpecJson {
            d,
            s: h.s,
            r: (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| self.r[(i, j)]).collect(),
            a: self.a.clone(),
        }
    }
}

pub fn quad_form(m: &DMatrix<f64>, w: &[f64]) -> f64 {
    let d = w.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += m[(i, j)] * w[j];
        }
        acc += w[i] * row;
    }
    acc
}

/// Spec export `{d, s, R (row-major), a}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecJson {
    pub d: usize,
    pub s: f64,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub a: Vec<f64>,
}

impl SpecJson {
    pub fn to_spec(&self) -> Result<EllipsoidSpec> {
        if self.r.len() != self.d * self.d || self.a.len() != self.d {
            return Err(Error::InvalidInput("spec json has inconsistent sizes".into()));
        }
        EllipsoidSpec::new(DMatrix::from_row_slice(self.d, self.d, &self.r), self.a.clone())
    }
}

/// Eigenvalues descending; eigenvectors aligned to coordinate axes inside repeated clusters,
/// largest component positive, last column flipped if needed for `det = +1`.
pub fn ordered_eigen(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let d = m.nrows();
    if m.ncols() != d || m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("matrix must be square and finite".into()));
    }
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lam: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let scale = lam.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(d);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (lam[end - 1] - lam[end]).abs() <= EIGEN_TIE_TOL * scale {
            end += 1;
        }
        let block: Vec<DVector<f64>> = idx[start..end].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
        if block.len() == 1 {
            cols.push(block[0].clone());
        } else {
            // project coordinate axes onto the eigenspace, then Gram–Schmidt
            let mut basis: Vec<DVector<f64>> = Vec::new();
            for axis in 0..d {
                if basis.len() == block.len() {
                    break;
                }
                let mut v = DVector::<f64>::zeros(d);
                for b in &block {
                    v += b * b[axis];
                }
                for u in &basis {
                    let c = u.dot(&v);
                    v -= u * c;
                }
                for u in &basis {
                    let c = u.dot(&v);
                    v -= u * c;
                }
                let n = v.norm();
                if n > 1e-6 {
                    basis.push(v / n);
                }
            }
            cols.extend(basis);
        }
        start = end;
    }
    let mut r = DMatrix::<f64>::zeros(d, d);
    for (j, mut c) in cols.into_iter().enumerate() {
        let imax = (0..d).max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs())).unwrap_or(0);
        if c[imax] < 0.0 {
            c = -c;
        }
        r.set_column(j, &c);
    }
    if r.determinant() < 0.0 {
        let last = -r.column(d - 1).into_owned();
        r.set_column(d - 1, &last);
    }
    Ok((r, lam))
}

/// Radial density value for negative exponents inside the guard band.
pub const BOUNDARY_GUARD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BarenblattMeasure {
    pub spec: EllipsoidSpec,
    pub h: Homogeneity,
    /// `c_d r_d^d / prod a_j`
    pub normalization: f64,
    pub exponent: f64,
}

impl BarenblattMeasure {
    pub fn new(spec: EllipsoidSpec, h: Homogeneity) -> Result<Self> {
        if spec.d() != h.d {
            return Err(Error::InvalidInput(format!("spec dimension {} != d = {}", spec.d(), h.d)));
        }
        let exponent = h.exponent();
        if !(exponent > -1.0) {
            return Err(Error::Domain(format!("density exponent {exponent} <= -1 (s <= d-4)")));
        }
        let kc = kernel_constants(&h)?;
        let normalization = kc.cdrd / spec.a.iter().product::<f64>();
        Ok(Self { spec, h, normalization, exponent })
    }

    /// Density at `x`; `+inf` within the guard band of the boundary when the exponent is negative.
    pub fn density(&self, x: &[f64]) -> f64 {
        let r2 = self.spec.unit_radius2(x);
        if r2 > 1.0 {
            return 0.0;
        }
        let gap = 1.0 - r2;
        if self.exponent < 0.0 && gap < BOUNDARY_GUARD {
            return f64::INFINITY;
        }
        if self.exponent == 0.0 {
            return self.normalization;
        }
        self.normalization * gap.powf(self.exponent)
    }

    /// `c_{s,d} J_nu(u) / u^nu` with `u = |D(a) R^T xi|`, `nu = s/2 + 1`.
    pub fn fourier(&self, xi: &[f64]) -> Result<f64> {
        let kc = kernel_constants(&self.h)?;
        let u = self.spec.quad(xi).max(0.0).sqrt();
        Ok(kc.c_sd * bessel_over_power(0.5 * self.h.s + 1.0, u)?)
    }

    /// `m_2 = 1/(s+4)`: per-coordinate second moment in the unit-ball frame.
    pub fn m2(&self) -> f64 {
        1.0 / (self.h.s + 4.0)
    }

    pub fn second_moments(&self) -> DMatrix<f64> {
        let d = self.h.d;
        let diag = DVector::from_iterator(d, self.spec.a.iter().map(|a| a * a * self.m2()));
        &self.spec.r * DMatrix::from_diagonal(&diag) * self.spec.r.transpose()
    }

    /// i.i.d. draws: `rho^2 ~ Beta(d/2, p+1)`, uniform direction, then `x = R D(a) rho omega`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::InvalidInput("sample count must be >= 1".into()));
        }
        let d = self.h.d;
        let beta = Beta::new(0.5 * d as f64, self.exponent + 1.0)
            .map_err(|e| Error::InvalidInput(format!("radial law: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut y = vec![0.0; d];
        for _ in 0..n {
            let norm = loop {
                for v in y.iter_mut() {
                    *v = rng.sample::<f64, _>(StandardNormal);
                }
                let nn = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nn > 1e-300 {
                    break nn;
                }
            };
            let rho = beta.sample(&mut rng).sqrt();
            for v in y.iter_mut() {
                *v *= rho / norm;
            }
            out.push(self.spec.from_unit(&y));
        }
        Ok(out)
    }
}

/// `J_nu(u) / u^nu`, with the removable value `1/(2^nu Gamma(nu+1))` at 0.
pub fn bessel_over_power(nu: f64, u: f64) -> Result<f64> {
    if u < 1.0 {
        let q = -0.25 * u * u;
        let mut term = rgamma(nu + 1.0);
        let mut acc = term;
        for k in 1..60 {
            term *= q / (k as f64 * (nu + k as f64));
            acc += term;
            if term.abs() < 1e-17 * acc.abs() {
                break;
            }
        }
        return Ok(acc / 2f64.powf(nu));
    }
    Ok(bessel_j(nu, u)? / u.powf(nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyFlag {
    Finite,
    Infinite,
}

/// Barenblatt profile supported on a `k`-dimensional ellipsoid, `mu_{E(a(k))}`.
#[derive(Debug, Clone)]
pub struct LowDimBarenblatt {
    pub k: usize,
    pub h: Homogeneity,
    pub semi_axes: Vec<f64>,
    pub r: DMatrix<f64>,
    /// `c~_{s,d,k} r_d^k / prod a_i`, fixed by unit mass
    pub normalization: f64,
    pub exponent: f64,
}

/// `int_{B_k} (1 - |y|^2)^p dy = pi^{k/2} Gamma(p+1) / Gamma(p+1+k/2)`.
fn ball_power_integral(k: usize, p: f64) -> f64 {
    std::f64::consts::PI.powf(0.5 * k as f64) * gamma_unchecked(p + 1.0) * rgamma(p + 1.0 + 0.5 * k as f64)
}

impl LowDimBarenblatt {
    pub fn new(h: Homogeneity, semi_axes: Vec<f64>, r: DMatrix<f64>) -> Result<Self> {
        let k = semi_axes.len();
        if k == 0 || k > h.d {
            return Err(Error::InvalidInput(format!("k = {k} must lie in [1, d]")));
        }
        if semi_axes.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidInput("semi-axes must be positive".into()));
        }
        if r.nrows() != h.d || r.ncols() != h.d {
            return Err(Error::InvalidInput("embedding rotation must be d x d".into()));
        }
        let exponent = 0.5 * (h.s + 2.0 - k as f64);
        if !(exponent > -1.0) {
            return Err(Error::Domain(format!("exponent {exponent} <= -1: profile not normalisable")));
        }
        let normalization = 1.0 / (ball_power_integral(k, exponent) * semi_axes.iter().product::<f64>());
        Ok(Self { k, h, semi_axes, r, normalization, exponent })
    }

    /// Density on the `k`-dimensional ellipsoid in its own coordinates.
    pub fn density(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().zip(&self.semi_axes).map(|(v, a)| (v / a).powi(2)).sum();
        if r2 > 1.0 {
            return 0.0;
        }
        let gap = 1.0 - r2;
        if self.exponent < 0.0 && gap < BOUNDARY_GUARD {
            return f64::INFINITY;
        }
        self.normalization * gap.powf(self.exponent)
    }

    /// Embedding `x = R (y, 0)`.
    pub fn embed(&self, y: &[f64]) -> Vec<f64> {
        let d = self.h.d;
        (0..d).map(|i| (0..self.k).map(|j| self.r[(i, j)] * y[j]).sum()).collect()
    }

    /// The Riesz energy of a `k`-dimensional measure is infinite for `s >= k`.
    pub fn energy_flag(&self) -> EnergyFlag {
        if self.h.s >= self.k as f64 {
            EnergyFlag::Infinite
        } else {
            EnergyFlag::Finite
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::TanhSinh;
    use crate::squad::build_rule;

    fn rot3(a: f64, b: f64) -> DMatrix<f64> {
        let rz = DMatrix::from_row_slice(3, 3, &[a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0]);
        let rx = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, b.cos(), -b.sin(), 0.0, b.sin(), b.cos()]);
        rz * rx
    }

    fn measure(s: f64, d: usize, a: Vec<f64>, r: DMatrix<f64>) -> BarenblattMeasure {
        BarenblattMeasure::new(EllipsoidSpec::new(r, a).unwrap(), Homogeneity::new(s, d).unwrap()).unwrap()
    }

    // direct quadrature over the unit-ball frame, radial tanh-sinh
    fn mass_by_quadrature(m: &BarenblattMeasure, weight: impl Fn(&[f64]) -> f64) -> f64 {
        let d = m.h.d;
        let sph = build_rule(d, 12).unwrap();
        let ts = TanhSinh::new(6);
        let jac: f64 = m.spec.a.iter().product();
        let mut acc = 0.0;
        for (w, wt) in sph.iter() {
            acc += wt
                * ts.integrate(0.0, 1.0, |r, _, _| {
                    let y: Vec<f64> = w.iter().map(|v| v * r).collect();
                    let x = m.spec.from_unit(&y);
                    let rho = m.density(&x);
                    if rho.is_finite() { rho * weight(&x) * r.powi(d as i32 - 1) } else { 0.0 }
                });
        }
        acc * jac
    }

    #[test]
    fn unit_mass() {
        let m = measure(1.5, 3, vec![1.3, 0.8, 0.6], rot3(0.4, 0.9));
        assert!((mass_by_quadrature(&m, |_| 1.0) - 1.0).abs() < 1e-8);
        // negative exponent
        let m = measure(0.5, 3, vec![1.0, 0.7, 0.5], rot3(0.1, 0.2));
        assert!(m.exponent < 0.0);
        assert!((mass_by_quadrature(&m, |_| 1.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn second_moments_match_quadrature() {
        let m = measure(1.5, 3, vec![1.3, 0.8, 0.6], rot3(0.4, 0.9));
        let cov = m.second_moments();
        for (i, j) in [(0, 0), (0, 1), (1, 2), (2, 2)] {
            let q = mass_by_quadrature(&m, |x| x[i] * x[j]);
            assert!((q - cov[(i, j)]).abs() < 1e-8, "({i},{j}) {q} vs {}", cov[(i, j)]);
        }
        let rotated = m.spec.r.transpose() * &cov * &m.spec.r;
        assert!(rotated[(0, 1)].abs() < 1e-12 && rotated[(0, 2)].abs() < 1e-12);
    }

    #[test]
    fn density_values() {
        let m = measure(1.5, 3, vec![1.3, 0.8, 0.6], rot3(0.4, 0.9));
        assert_eq!(m.density(&[0.0; 3]), m.normalization);
        let iso = measure(2.0, 3, vec![0.9; 3], DMatrix::identity(3, 3));
        let x = [0.9 / 2f64.sqrt(), 0.0, 0.0];
        assert!((iso.density(&x) / iso.normalization - 0.5f64.powf(0.5)).abs() < 1e-14);
        assert_eq!(iso.density(&[1.0, 0.0, 0.0]), 0.0);
        let neg = measure(0.5, 3, vec![1.0; 3], DMatrix::identity(3, 3));
        assert!(neg.density(&[1.0, 0.0, 0.0]).is_infinite());
        let x = [0.3, -0.2, 0.1];
        let xm = [-0.3, 0.2, -0.1];
        assert_eq!(m.density(&x), m.density(&xm));
    }

    #[test]
    fn fourier_at_origin_and_pushforward() {
        for (s, d) in [(1.5, 3), (0.7, 2), (3.0, 5), (1.2, 4)] {
            let a = vec![1.0; d];
            let m = measure(s, d, a, DMatrix::identity(d, d));
            let want = (2.0 * std::f64::consts::PI).powf(-0.5 * d as f64);
            assert!((m.fourier(&vec![0.0; d]).unwrap() - want).abs() < 1e-14, "s={s} d={d}");
        }
        let r = rot3(0.4, 0.9);
        let a = vec![1.3, 0.8, 0.6];
        let m = measure(1.5, 3, a.clone(), r.clone());
        let iso = measure(1.5, 3, vec![1.0; 3], DMatrix::identity(3, 3));
        let xi = [0.7, -1.1, 2.3];
        let rt: Vec<f64> = (0..3).map(|j| (0..3).map(|i| r[(i, j)] * xi[i]).sum::<f64>() * a[j]).collect();
        assert!((m.fourier(&xi).unwrap() - iso.fourier(&rt).unwrap()).abs() < 1e-14);
        assert!((m.fourier(&xi).unwrap() - m.fourier(&[-0.7, 1.1, -2.3]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn fourier_matches_transform_quadrature() {
        // (2 pi)^{-d/2} int cos(xi . x) dmu
        let m = measure(1.5, 3, vec![1.3, 0.8, 0.6], rot3(0.4, 0.9));
        let xi = [0.9, -0.4, 1.7];
        let q = mass_by_quadrature(&m, |x| (xi[0] * x[0] + xi[1] * x[1] + xi[2] * x[2]).cos());
        let want = q * (2.0 * std::f64::consts::PI).powf(-1.5);
        assert!((m.fourier(&xi).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn bessel_ratio_continuity() {
        for nu in [1.25, 1.75, 2.5] {
            let a = bessel_over_power(nu, 1.0 - 1e-12).unwrap();
            let b = bessel_over_power(nu, 1.0 + 1e-12).unwrap();
            assert!((a - b).abs() < 1e-12, "{nu}: {a} {b}");
        }
    }

    #[test]
    fn sampling_support_and_moments() {
        let m = measure(1.5, 3, vec![1.3, 0.8, 0.6], rot3(0.4, 0.9));
        let n = 100_000;
        let pts = m.sample(n, 7).unwrap();
        assert!(pts.iter().all(|x| m.spec.unit_radius2(x) <= 1.0 + 1e-12));
        let cov = m.second_moments();
        for i in 0..3 {
            let mean: f64 = pts.iter().map(|x| x[i]).sum::<f64>() / n as f64;
            let sigma = cov[(i, i)].sqrt();
            assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt());
            for j in 0..3 {
                let vals: Vec<f64> = pts.iter().map(|x| x[i] * x[j]).collect();
                let emp = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - emp).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                let se = (var / n as f64).sqrt();
                assert!((emp - cov[(i, j)]).abs() < 3.0 * se + 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn eigen_tie_break_is_deterministic() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 1.0]));
        let (r, lam) = ordered_eigen(&m).unwrap();
        assert_eq!(lam, vec![2.0, 2.0, 1.0]);
        assert!((r - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        let rr = rot3(0.3, 1.1);
        let mm = &rr * DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.5])) * rr.transpose();
        let spec = EllipsoidSpec::from_matrix(&mm).unwrap();
        assert!(spec.r.determinant() > 0.0);
        assert!((spec.a[0] - 3f64.sqrt()).abs() < 1e-12 && (spec.a[2] - 0.5f64.sqrt()).abs() < 1e-12);
        let back = &spec.r * DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.5])) * spec.r.transpose();
        assert!((back - mm).amax() < 1e-10);
    }

    #[test]
    fn lowdim_mass_and_flags() {
        let h = Homogeneity::new(1.5, 3).unwrap();
        let ld = LowDimBarenblatt::new(h, vec![1.2, 0.7], DMatrix::identity(3, 3)).unwrap();
        let sph = build_rule(2, 20).unwrap();
        let ts = TanhSinh::new(6);
        let mut mass = 0.0;
        for (w, wt) in sph.iter() {
            mass += wt * ts.integrate(0.0, 1.0, |r, _, _| ld.density(&[1.2 * r * w[0], 0.7 * r * w[1]]) * r);
        }
        assert!((mass * 1.2 * 0.7 - 1.0).abs() < 1e-8);
        assert_eq!(ld.energy_flag(), EnergyFlag::Finite);
        let one = LowDimBarenblatt::new(h, vec![1.0], DMatrix::identity(3, 3)).unwrap();
        assert_eq!(one.energy_flag(), EnergyFlag::Infinite);
        // k = d reduces to the full measure
        let full = LowDimBarenblatt::new(h, vec![1.3, 0.8, 0.6], DMatrix::identity(3, 3)).unwrap();
        let m = measure(1.5, 3, vec![1.3, 0.8, 0.6], DMatrix::identity(3, 3));
        let x = [0.2, 0.3, -0.1];
        assert!((full.density(&x) - m.density(&x)).abs() < 1e-13 * m.density(&x));
    }
}
