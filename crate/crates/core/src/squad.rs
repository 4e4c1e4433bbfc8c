//! Product quadrature on the unit sphere `S^{d-1}`, `2 <= d <= 7`.
//!
//! The circle uses the trapezoid rule. Higher spheres are built recursively
//! from `omega = (sqrt(1 - t^2) omega', t)` with Gauss–Gegenbauer nodes in `t`
//! and the rule of one dimension less for `omega'`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_jacobi, sphere_area};

#[derive(Debug, Clone)]
pub struct SphereRule {
    pub d: usize,
    pub order: usize,
    /// row-major, `len() * d` entries
    nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub const MAX_DIM: usize = 7;

impl SphereRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.d..(i + 1) * self.d]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.d)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.nodes.chunks_exact(self.d).zip(self.weights.iter().copied())
    }

    /// `sum_i w_i f(omega_i)`, failing on the first non-finite sample.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (i, (w, x)) in self.iter().map(|(x, w)| (w, x)).enumerate() {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("integrand is {v} at node {i} = {x:?}")));
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Nodes mapped by the orthogonal matrix `q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> SphereRule {
        let d = self.d;
        let mut nodes = vec![0.0; self.nodes.len()];
        for (k, x) in self.nodes.chunks_exact(d).enumerate() {
            for i in 0..d {
                nodes[k * d + i] = (0..d).map(|j| q[(i, j)] * x[j]).sum();
            }
        }
        SphereRule { d, order: self.order, nodes, weights: self.weights.clone() }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 || d > MAX_DIM {
        return Err(Error::InvalidInput(format!("sphere rules support 2 <= d <= {MAX_DIM}, got {d}")));
    }
    Ok(())
}

/// Rule exact for polynomials of total degree `<= order` on `S^{d-1}`.
pub fn build_rule(d: usize, order: usize) -> Result<SphereRule> {
    check_dim(d)?;
    if order < 2 {
        return Err(Error::InvalidInput(format!("sphere rule order must be >= 2, got {order}")));
    }
    let (nodes, weights) = product(d, order, false);
    Ok(SphereRule { d, order, nodes, weights })
}

/// Rule on one representative of each antipodal pair, weights doubled.
/// Exact for even polynomials of degree `<= order`.
pub fn build_hemisphere_rule(d: usize, order: usize) -> Result<SphereRule> {
    check_dim(d)?;
    if order < 2 {
        return Err(Error::InvalidInput(format!("sphere rule order must be >= 2, got {order}")));
    }
    let (nodes, weights) = product(d, order, true);
    Ok(SphereRule { d, order, nodes, weights })
}

/// Hemisphere rule in polar coordinates about `axis`, graded toward the pole:
/// Gauss–Legendre panels in the polar angle on `[0, w], [w, 2w], [2w, 4w], ..., pi/2`.
/// Resolves integrands peaked in a cap of angular radius `~ width` around `+-axis`.
pub fn build_graded_rule(d: usize, order: usize, axis: &[f64], width: f64) -> Result<SphereRule> {
    check_dim(d)?;
    if axis.len() != d || !(width > 0.0) {
        return Err(Error::InvalidInput("graded rule needs a d-vector axis and width > 0".into()));
    }
    let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    let v: Vec<f64> = axis.iter().map(|x| x / norm).collect();
    // orthonormal basis of v-perp
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    for k in 0..d {
        if basis.len() == d - 1 {
            break;
        }
        let mut e: Vec<f64> = (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        for u in std::iter::once(&v).chain(basis.iter()) {
            let c: f64 = e.iter().zip(u).map(|(a, b)| a * b).sum();
            e.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        }
        let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.5 {
            basis.push(e.into_iter().map(|x| x / n).collect());
        }
    }
    let eta: Vec<(Vec<f64>, f64)> = if d == 2 {
        vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]
    } else {
        let r = build_rule(d - 1, order.max(2))?;
        r.iter().map(|(x, w)| (x.to_vec(), w)).collect()
    };
    let half = 0.5 * PI;
    let mut edges = vec![0.0];
    let mut h = width.min(half);
    while *edges.last().unwrap() < half {
        edges.push(h.min(half));
        h *= 2.0;
    }
    let gl = crate::quadrature::gauss_legendre(order / 4 + 4);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for p in edges.windows(2) {
        let panel = gl.on_interval(p[0], p[1]);
        for (&th, &wt) in panel.nodes.iter().zip(&panel.weights) {
            let (sn, cs) = th.sin_cos();
            let jac = 2.0 * wt * sn.powi(d as i32 - 2);
            for (e, we) in &eta {
                for i in 0..d {
                    let perp: f64 = basis.iter().zip(e).map(|(b, c)| b[i] * c).sum();
                    nodes.push(cs * v[i] + sn * perp);
                }
                weights.push(jac * we);
            }
        }
    }
    Ok(SphereRule { d, order, nodes, weights })
}

/// Default order used by the solver and potential evaluator.
pub fn default_order(d: usize) -> usize {
    if d <= 3 {
        40
    } else {
        20
    }
}

fn circle(order: usize, half: bool) -> (Vec<f64>, Vec<f64>) {
    let mut n = order + 1;
    if n % 2 == 1 {
        n += 1;
    }
    let count = if half { n / 2 } else { n };
    let w = 2.0 * PI / n as f64 * if half { 2.0 } else { 1.0 };
    let mut nodes = Vec::with_capacity(2 * count);
    for k in 0..count {
        let th = 2.0 * PI * k as f64 / n as f64;
        nodes.push(th.cos());
        nodes.push(th.sin());
    }
    (nodes, vec![w; count])
}

fn product(d: usize, order: usize, half: bool) -> (Vec<f64>, Vec<f64>) {
    if d == 2 {
        return circle(order, half);
    }
    let m = (order + 1).div_ceil(2);
    let lam = 0.5 * (d as f64 - 3.0);
    let g = gauss_jacobi(m, lam, lam);
    let (full_n, full_w) = product(d - 1, order, false);
    let (half_n, half_w) = if half { product(d - 1, order, true) } else { (Vec::new(), Vec::new()) };
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (&t, &wt) in g.nodes.iter().zip(&g.weights) {
        let (sub_n, sub_w, factor) = if !half {
            (&full_n, &full_w, 1.0)
        } else if t > 0.0 {
            (&full_n, &full_w, 2.0)
        } else if t == 0.0 {
            (&half_n, &half_w, 1.0)
        } else {
            continue;
        };
        let r = (1.0 - t * t).sqrt();
        for (x, &w) in sub_n.chunks_exact(d - 1).zip(sub_w) {
            nodes.extend(x.iter().map(|v| r * v));
            nodes.push(t);
            weights.push(factor * wt * w);
        }
    }
    (nodes, weights)
}

/// Refinement check: value at `order` and the absolute change at `factor * order`.
pub fn refinement_check<F: FnMut(&[f64]) -> f64>(
    d: usize,
    order: usize,
    factor: f64,
    mut f: F,
) -> Result<(f64, f64)> {
    let a = build_rule(d, order)?.integrate(&mut f)?;
    let fine = ((order as f64) * factor).ceil() as usize;
    let b = build_rule(d, fine)?.integrate(&mut f)?;
    Ok((b, (a - b).abs()))
}

pub fn area(d: usize) -> f64 {
    sphere_area(d)
}
