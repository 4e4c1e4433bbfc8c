//! One-dimensional quadrature rules on `[-1, 1]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::specfun::gamma::{gamma_unchecked, ln_gamma};

#[derive(Debug, Clone)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Affine map of an unweighted rule to `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> Rule1D {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule1D {
            nodes: self.nodes.iter().map(|&x| mid + half * x).collect(),
            weights: self.weights.iter().map(|&w| w * half).collect(),
        }
    }
}

/// Gauss–Legendre by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Rule1D {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule1D { nodes, weights }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Jacobi for the weight `(1-x)^alpha (1+x)^beta` by Golub–Welsch,
/// followed by a Newton polish of each node.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Rule1D {
    assert!(n >= 1 && alpha > -1.0 && beta > -1.0);
    if alpha == 0.0 && beta == 0.0 {
        return gauss_legendre(n);
    }
    let ab = alpha + beta;
    let mut t = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        t[(k, k)] = diag;
        if k + 1 < n {
            let j = kf + 1.0;
            let b = if k == 0 {
                4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                4.0 * j * (j + alpha) * (j + beta) * (j + ab)
                    / ((2.0 * j + ab).powi(2) * (2.0 * j + ab + 1.0) * (2.0 * j + ab - 1.0))
            };
            t[(k, k + 1)] = b.sqrt();
            t[(k + 1, k)] = b.sqrt();
        }
    }
    let eig = SymmetricEigen::new(t);
    let mu0 = ((ab + 1.0) * 2f64.ln() + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0) - ln_gamma(ab + 2.0)).exp();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v * v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    // Newton polish on P_n^{(alpha, beta)}; weights from the derivative formula
    let wconst = (2f64.ln() * (ab + 1.0) + ln_gamma(n as f64 + alpha + 1.0) + ln_gamma(n as f64 + beta + 1.0)
        - ln_gamma(n as f64 + ab + 1.0)
        - ln_gamma(n as f64 + 1.0))
    .exp();
    for i in 0..n {
        let mut x = nodes[i];
        for _ in 0..3 {
            let (p, dp) = jacobi_and_derivative(n, alpha, beta, x);
            if dp == 0.0 || !dp.is_finite() {
                break;
            }
            let dx = p / dp;
            if !dx.is_finite() || dx.abs() > 1e-6 {
                break;
            }
            x -= dx;
        }
        let (_, dp) = jacobi_and_derivative(n, alpha, beta, x);
        let w = wconst / ((1.0 - x * x) * dp * dp);
        if w.is_finite() && w > 0.0 && ((w - weights[i]) / weights[i]).abs() < 1e-6 {
            nodes[i] = x;
            weights[i] = w;
        }
    }
    if alpha == beta {
        for i in 0..n / 2 {
            let x = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[n - 1 - i]);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
    }
    Rule1D { nodes, weights }
}

fn jacobi_and_derivative(n: usize, alpha: f64, beta: f64, x: f64) -> (f64, f64) {
    let ab = alpha + beta;
    let mut p0 = 1.0;
    let mut p1 = 0.5 * (alpha - beta + (ab + 2.0) * x);
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut pn_1 = p0;
    for k in 2..=n {
        let kf = k as f64;
        let a1 = 2.0 * kf * (kf + ab) * (2.0 * kf + ab - 2.0);
        let a2 = (2.0 * kf + ab - 1.0) * (alpha * alpha - beta * beta);
        let a3 = (2.0 * kf + ab - 2.0) * (2.0 * kf + ab - 1.0) * (2.0 * kf + ab);
        let a4 = 2.0 * (kf + alpha - 1.0) * (kf + beta - 1.0) * (2.0 * kf + ab);
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    if n >= 1 {
        pn_1 = p0;
    }
    let nf = n as f64;
    // (2n + ab)(1 - x^2) P_n' = n(alpha - beta - (2n + ab) x) P_n + 2(n + alpha)(n + beta) P_{n-1}
    let dp = (nf * (alpha - beta - (2.0 * nf + ab) * x) * p1 + 2.0 * (nf + alpha) * (nf + beta) * pn_1)
        / ((2.0 * nf + ab) * (1.0 - x * x));
    (p1, dp)
}

/// Gauss–Jacobi mapped to `[a, b]`: integrates `(b-x)^alpha (x-a)^beta f(x)`.
pub fn gauss_jacobi_interval(rule: &Rule1D, alpha: f64, beta: f64, a: f64, b: f64) -> Rule1D {
    let half = 0.5 * (b - a);
    let scale = half.powf(alpha + beta + 1.0);
    Rule1D {
        nodes: rule.nodes.iter().map(|&x| a + half * (x + 1.0)).collect(),
        weights: rule.weights.iter().map(|&w| w * scale).collect(),
    }
}

/// Tanh-sinh rule on `(-1, 1)` with complements `1 - |x|` kept to full precision.
#[derive(Debug, Clone)]
pub struct TanhSinh {
    pub nodes: Vec<f64>,
    /// distance of each node to the nearer endpoint
    pub complements: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TanhSinh {
    /// Step `h = 2^-level`, truncated where weights fall below `1e-300`-ish.
    pub fn new(level: u32) -> Self {
        let h = 0.5f64.powi(level as i32);
        let mut nodes = Vec::new();
        let mut complements = Vec::new();
        let mut weights = Vec::new();
        let kmax = (6.5 / h) as i64;
        for k in -kmax..=kmax {
            let t = k as f64 * h;
            let u = 0.5 * PI * t.sinh();
            let cu = u.cosh();
            let x = u.tanh();
            // 1 - |tanh u| = 2 / (exp(2|u|) + 1)
            let comp = 2.0 / ((2.0 * u.abs()).exp() + 1.0);
            let w = h * 0.5 * PI * t.cosh() / (cu * cu);
            if comp < 1e-300 || w < 1e-300 || !w.is_finite() {
                continue;
            }
            nodes.push(x);
            complements.push(comp);
            weights.push(w);
        }
        Self { nodes, complements, weights }
    }

    /// `int_a^b f(x, x - a, b - x) dx`, with endpoint distances computed exactly.
    pub fn integrate<F: FnMut(f64, f64, f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for i in 0..self.nodes.len() {
            let x = self.nodes[i];
            let c = self.complements[i];
            let (da, db) = if x < 0.0 { (half * c, half * (2.0 - c)) } else { (half * (2.0 - c), half * c) };
            let pt = if x < 0.0 { a + da } else { b - db };
            acc += self.weights[i] * half * f(pt, da, db);
        }
        acc
    }
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(0.5 * d as f64) / gamma_unchecked(0.5 * d as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_exactness() {
        let r = gauss_legendre(7);
        assert!((r.integrate(|x| x.powi(12)) - 2.0 / 13.0).abs() < 1e-15);
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let r = gauss_legendre(200);
        assert!((r.integrate(|x| x.cos()) - 2.0 * 1f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn jacobi_moments() {
        // int (1-x)^a (1+x)^b x^2 against a closed form via beta integrals
        for &(a, b) in &[(0.5, -0.5), (-0.75, 0.25), (1.3, 2.2), (0.0, -0.5), (0.25, 0.25)] {
            let r = gauss_jacobi(12, a, b);
            let beta_fn = |p: f64, q: f64| (ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q)).exp();
            // with x = 2u - 1: 2^{a+b+1} int u^b (1-u)^a (2u-1)^2 du
            let scale = 2f64.powf(a + b + 1.0);
            let m0 = beta_fn(b + 1.0, a + 1.0);
            let m1 = beta_fn(b + 2.0, a + 1.0);
            let m2 = beta_fn(b + 3.0, a + 1.0);
            let want = scale * (4.0 * m2 - 4.0 * m1 + m0);
            let got = r.integrate(|x| x * x);
            assert!(((got - want) / want).abs() < 1e-13, "({a},{b}): {got} vs {want}");
        }
    }

    #[test]
    fn jacobi_symmetric_exact_zero() {
        let r = gauss_jacobi(9, 0.5, 0.5);
        assert_eq!(r.nodes[4], 0.0);
        for i in 0..4 {
            assert_eq!(r.nodes[i], -r.nodes[8 - i]);
        }
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        let r = TanhSinh::new(6);
        // int_0^1 x^{-1/2} dx = 2 using the exact endpoint distance
        let v = r.integrate(0.0, 1.0, |_, da, _| da.powf(-0.5));
        assert!((v - 2.0).abs() < 1e-12);
        let v = r.integrate(0.0, 2.0, |_, _, db| db.powf(0.25) * db.ln());
        // int_0^2 y^{1/4} ln y dy with y = 2 - x
        let want = 2f64.powf(1.25) / 1.25 * (2f64.ln() - 1.0 / 1.25);
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-15);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }
}
