//! Interacting particles: discrete energy and gradient descent toward the minimiser.

use std::path::Path;

use log::debug;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::CompiledPoly;
use crate::profile::Profile;

pub const MAX_PARTICLES: usize = 10_000;
/// fixed reduction layout, independent of the thread pool
const BLOCKS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleConfig {
    pub n: usize,
    pub steps: usize,
    /// `None` means `0.5 n^{-1/d}`
    pub delta: Option<f64>,
    /// standard deviation of the Gaussian start, per coordinate
    pub init_scale: f64,
    pub max_backtrack: usize,
    /// stop once the relative energy decrease of a step falls below this
    pub energy_rtol: f64,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self { n: 4000, steps: 400, delta: None, init_scale: 0.5, max_backtrack: 40, energy_rtol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub d: usize,
    /// row-major `n x d`
    pub positions: Vec<f64>,
    pub step: f64,
    pub delta: f64,
}

impl ParticleEnsemble {
    pub fn new(d: usize, positions: Vec<f64>, delta: f64) -> Result<Self> {
        if d == 0 || positions.len() % d != 0 || positions.len() / d < 2 {
            return Err(Error::InvalidInput("ensemble needs n >= 2 points of dimension d".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidInput(format!("regularisation delta = {delta} must be positive")));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("particle positions".into()));
        }
        if positions.len() / d > MAX_PARTICLES {
            return Err(Error::InvalidInput(format!("at most {MAX_PARTICLES} particles")));
        }
        Ok(Self { d, positions, step: 0.0, delta })
    }

    pub fn n(&self) -> usize {
        self.positions.len() / self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for x in self.positions.chunks_exact(self.d) {
            for (a, b) in m.iter_mut().zip(x) {
                *a += b;
            }
        }
        m.iter().map(|v| v / self.n() as f64).collect()
    }

    /// Second-moment matrix about the origin (the minimiser is centred).
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.d;
        let mut c = DMatrix::zeros(d, d);
        for x in self.positions.chunks_exact(d) {
            for i in 0..d {
                for j in 0..d {
                    c[(i, j)] += x[i] * x[j];
                }
            }
        }
        c / self.n() as f64
    }

    pub fn write_csv(&self, path: &Path, step: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["step".to_string()];
        header.extend((0..self.d).map(|i| format!("x{}", i + 1)));
        w.write_record(&header)?;
        for x in self.positions.chunks_exact(self.d) {
            let mut rec = vec![step.to_string()];
            rec.extend(x.iter().map(|v| format!("{v:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `W_delta(z) = Psi(z/|z|) (|z|^2 + delta^2)^{-s/2}`.
#[derive(Debug, Clone)]
pub struct PairKernel {
    d: usize,
    s: f64,
    delta2: f64,
    quad: Option<Vec<f64>>,
    poly: CompiledPoly,
    /// `2s` when it is a small integer: `t^{-s/2} = (t^{1/4})^{-2s}`
    quarter_power: Option<i32>,
}

impl PairKernel {
    pub fn new(p: &Profile, delta: f64) -> Result<Self> {
        let poly = p
            .physical_poly()
            .ok_or_else(|| Error::InvalidInput("particle kernel needs a harmonic physical-side profile".into()))?
            .clone();
        let two_s = 2.0 * p.s();
        let quarter_power = (two_s == two_s.round() && two_s <= 12.0).then_some(two_s as i32);
        Ok(Self { d: p.d(), s: p.s(), delta2: delta * delta, quad: poly.as_quadratic_form(), poly, quarter_power })
    }

    fn radial(&self, t: f64) -> f64 {
        match self.quarter_power {
            Some(k) => t.sqrt().sqrt().powi(-k),
            None => t.powf(-0.5 * self.s),
        }
    }

    fn psi_grad(&self, z: &[f64], r2: f64, grad: &mut [f64]) -> f64 {
        match &self.quad {
            Some(b) => {
                let d = self.d;
                let mut v = 0.0;
                for i in 0..d {
                    let mut bz = 0.0;
                    for j in 0..d {
                        bz += b[i * d + j] * z[j];
                    }
                    grad[i] = bz;
                    v += z[i] * bz;
                }
                let ir2 = 1.0 / r2;
                let psi = v * ir2;
                for i in 0..d {
                    grad[i] = 2.0 * ir2 * (grad[i] - psi * z[i]);
                }
                psi
            }
            None => self.poly.eval_grad_dir(z, grad),
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let mut g = [0.0; 7];
        self.psi_grad(z, r2, &mut g[..self.d]) * self.radial(r2 + self.delta2)
    }

    /// Value and gradient.
    pub fn eval_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let psi = self.psi_grad(z, r2, grad);
        let t = r2 + self.delta2;
        let base = self.radial(t);
        let rad = -self.s * psi * base / t;
        for i in 0..self.d {
            grad[i] = grad[i] * base + rad * z[i];
        }
        psi * base
    }
}

/// Energy and gradient with a row-interleaved block reduction.
fn energy_grad(pos: &[f64], d: usize, k: &PairKernel, want_grad: bool) -> (f64, Vec<f64>) {
    let n = pos.len() / d;
    let nf = n as f64;
    let width = if want_grad { n * d } else { 0 };
    let parts: Vec<(f64, Vec<f64>)> = (0..BLOCKS)
        .into_par_iter()
        .map(|b| {
            let mut e = 0.0;
            let mut g = vec![0.0; width];
            let mut z = [0.0; 7];
            let mut gz = [0.0; 7];
            let mut i = b;
            while i < n {
                let xi = &pos[i * d..(i + 1) * d];
                for j in i + 1..n {
                    let xj = &pos[j * d..(j + 1) * d];
                    for c in 0..d {
                        z[c] = xi[c] - xj[c];
                    }
                    if want_grad {
                        e += k.eval_grad(&z[..d], &mut gz[..d]);
                        for c in 0..d {
                            g[i * d + c] += gz[c];
                            g[j * d + c] -= gz[c];
                        }
                    } else {
                        e += k.eval(&z[..d]);
                    }
                }
                i += BLOCKS;
            }
            (e, g)
        })
        .collect();
    let mut pair = 0.0;
    let mut grad = vec![0.0; width];
    for (e, g) in parts {
        pair += e;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let conf: f64 = pos.iter().map(|v| v * v).sum::<f64>();
    let energy = 2.0 * pair / (nf * nf) + conf / nf;
    if want_grad {
        for (gv, x) in grad.iter_mut().zip(pos) {
            *gv = 2.0 * *gv / (nf * nf) + 2.0 * x / nf;
        }
    }
    (energy, grad)
}

/// `(1/n^2) sum_{i != j} W_delta(x_i - x_j) + (1/n) sum |x_i|^2`.
pub fn discrete_energy(e: &ParticleEnsemble, p: &Profile) -> Result<f64> {
    let k = PairKernel::new(p, e.delta)?;
    Ok(energy_grad(&e.positions, e.d, &k, false).0)
}

pub fn energy_gradient(e: &ParticleEnsemble, p: &Profile) -> Result<(f64, Vec<f64>)> {
    let k = PairKernel::new(p, e.delta)?;
    Ok(energy_grad(&e.positions, e.d, &k, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentRecord {
    pub step: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub ensemble: ParticleEnsemble,
    pub trace: Vec<DescentRecord>,
    pub converged: bool,
}

pub fn write_energy_csv(path: &Path, trace: &[DescentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "energy", "grad_norm", "step_size"])?;
    for r in trace {
        w.write_record(&[
            r.step.to_string(),
            format!("{:.17e}", r.energy),
            format!("{:.6e}", r.grad_norm),
            format!("{:.6e}", r.step_size),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Gradient descent with Barzilai–Borwein steps and monotone backtracking from a Gaussian start.
pub fn particle_minimize(p: &Profile, seed: u64, cfg: &ParticleConfig) -> Result<MinimizeOutcome> {
    let d = p.d();
    let n = cfg.n;
    if n < 2 || n > MAX_PARTICLES {
        return Err(Error::InvalidInput(format!("particle count {n} outside [2, {MAX_PARTICLES}]")));
    }
    let delta = cfg.delta.unwrap_or(0.5 * (n as f64).powf(-1.0 / d as f64));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<f64> = (0..n * d).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); cfg.init_scale * z }).collect();
    let mut ens = ParticleEnsemble::new(d, pos, delta)?;
    let k = PairKernel::new(p, delta)?;
    let (mut e, mut g) = energy_grad(&ens.positions, d, &k, true);
    let mut alpha = 0.25 * n as f64;
    let mut trace = vec![DescentRecord { step: 0, energy: e, grad_norm: norm(&g), step_size: 0.0 }];
    let mut converged = false;
    for step in 1..=cfg.steps {
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut a = alpha;
        let mut accepted = None;
        for _ in 0..cfg.max_backtrack {
            let trial: Vec<f64> = ens.positions.iter().zip(&g).map(|(x, gv)| x - a * gv).collect();
            let (et, gt) = energy_grad(&trial, d, &k, true);
            if et.is_finite() && et <= e - 1e-4 * a * g2 {
                accepted = Some((trial, et, gt));
                break;
            }
            a *= 0.5;
        }
        let Some((trial, et, gt)) = accepted else {
            if g2.sqrt() <= 1e-9 * (1.0 + e.abs()) {
                converged = true;
                break;
            }
            return Err(Error::InvariantViolation(format!(
                "descent stalled at step {step}: energy {e:.12e}, |grad| {:.3e}, last step {a:.3e}",
                g2.sqrt()
            )));
        };
        // Barzilai–Borwein: s.s / s.y
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..trial.len() {
            let sv = trial[i] - ens.positions[i];
            ss += sv * sv;
            sy += sv * (gt[i] - g[i]);
        }
        alpha = if sy > 0.0 { ss / sy } else { 2.0 * a };
        let rel = (e - et) / e.abs().max(1e-300);
        ens.positions = trial;
        ens.step = a;
        e = et;
        g = gt;
        trace.push(DescentRecord { step, energy: e, grad_norm: norm(&g), step_size: a });
        debug!("particles step {step}: E = {e:.12e}, |g| = {:.3e}", norm(&g));
        if rel < cfg.energy_rtol {
            converged = true;
            break;
        }
    }
    Ok(MinimizeOutcome { ensemble: ens, trace, converged })
}

/// Ensemble statistics against a solved ellipsoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleComparison {
    /// descending
    pub covariance_eigenvalues: Vec<f64>,
    /// `a_i^2 m_2`, descending
    pub expected_eigenvalues: Vec<f64>,
    /// `max_i |(l_i / l_1) / (a_i^2 / a_1^2) - 1|`
    pub ratio_max_rel_error: f64,
    /// per principal axis, degrees
    pub axis_angles_deg: Vec<f64>,
    pub inside_fraction: f64,
    pub inside_scale: f64,
    pub discrete_energy: f64,
}

pub fn compare_with_spec(
    ens: &ParticleEnsemble,
    spec: &crate::measure::EllipsoidSpec,
    m2: f64,
    p: &Profile,
) -> Result<ParticleComparison> {
    let d = ens.d;
    if spec.d() != d {
        return Err(Error::InvalidInput("ensemble and spec dimensions differ".into()));
    }
    let (v, l) = crate::measure::ordered_eigen(&ens.covariance())?;
    let expected: Vec<f64> = spec.a.iter().map(|a| a * a * m2).collect();
    let ratio_max_rel_error =
        (1..d).map(|i| ((l[i] / l[0]) / (expected[i] / expected[0]) - 1.0).abs()).fold(0.0, f64::max);
    let axis_angles_deg = (0..d)
        .map(|i| {
            let c: f64 = (0..d).map(|r| v[(r, i)] * spec.r[(r, i)]).sum::<f64>().abs().min(1.0);
            c.acos().to_degrees()
        })
        .collect();
    let inside_scale = 1.05;
    let inside = ens.positions.chunks_exact(d).filter(|x| spec.unit_radius2(x) <= inside_scale * inside_scale).count();
    Ok(ParticleComparison {
        covariance_eigenvalues: l,
        expected_eigenvalues: expected,
        ratio_max_rel_error,
        axis_angles_deg,
        inside_fraction: inside as f64 / ens.n() as f64,
        inside_scale,
        discrete_energy: discrete_energy(ens, p)?,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::HarmonicTerm;
    use crate::specfun::Homogeneity;

    fn one(s: f64, d: usize) -> Profile {
        let c = crate::quadrature::sphere_area(d).sqrt();
        Profile::from_harmonics(Homogeneity::new(s, d).unwrap(), &[HarmonicTerm { n: 0, m: 0, coeff: c }]).unwrap()
    }

    #[test]
    fn two_particle_energy() {
        let p = one(1.5, 3);
        let z = [0.4, -0.2, 0.9];
        let pos: Vec<f64> = z.iter().map(|v| 0.5 * v).chain(z.iter().map(|v| -0.5 * v)).collect();
        let e = ParticleEnsemble::new(3, pos, 1e-9).unwrap();
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let want = 0.5 * r2.powf(-0.75) + 0.25 * r2;
        assert!((discrete_energy(&e, &p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = Homogeneity::new(1.5, 3).unwrap();
        for terms in [
            vec![HarmonicTerm { n: 0, m: 0, coeff: 3.5 }, HarmonicTerm { n: 2, m: 1, coeff: 0.4 }],
            vec![HarmonicTerm { n: 0, m: 0, coeff: 3.5 }, HarmonicTerm { n: 4, m: 2, coeff: 0.3 }],
        ] {
            let p = Profile::from_harmonics(h, &terms).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let pos: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
            let e = ParticleEnsemble::new(3, pos, 1e-3).unwrap();
            let (_, g) = energy_gradient(&e, &p).unwrap();
            let hstep = 1e-6;
            for k in [0, 7, 29] {
                let mut ep = e.clone();
                let mut em = e.clone();
                ep.positions[k] += hstep;
                em.positions[k] -= hstep;
                let fd = (discrete_energy(&ep, &p).unwrap() - discrete_energy(&em, &p).unwrap()) / (2.0 * hstep);
                assert!((fd - g[k]).abs() < 1e-6 * g[k].abs().max(1e-3), "k={k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn permutation_and_reflection_invariance() {
        let p = Profile::from_harmonics(
            Homogeneity::new(1.0, 2).unwrap(),
            &[HarmonicTerm { n: 0, m: 0, coeff: 3.0 }, HarmonicTerm { n: 2, m: 2, coeff: 0.5 }],
        )
        .unwrap();
        let pos = vec![0.1, 0.2, -0.4, 0.3, 0.5, -0.1, 0.0, 0.7];
        let e = ParticleEnsemble::new(2, pos.clone(), 1e-2).unwrap();
        let mut perm = pos[4..].to_vec();
        perm.extend_from_slice(&pos[..4]);
        let ep = ParticleEnsemble::new(2, perm, 1e-2).unwrap();
        let er = ParticleEnsemble::new(2, pos.iter().map(|v| -v).collect(), 1e-2).unwrap();
        let a = discrete_energy(&e, &p).unwrap();
        assert!((a - discrete_energy(&ep, &p).unwrap()).abs() < 1e-14);
        assert!((a - discrete_energy(&er, &p).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn descent_decreases_energy_and_is_deterministic() {
        let p = one(1.0, 2);
        let cfg = ParticleConfig { n: 200, steps: 60, ..Default::default() };
        let k = PairKernel::new(&one(1.7, 3), 0.1).unwrap();
        let k2 = PairKernel::new(&one(1.5, 3), 0.1).unwrap();
        let z = [0.3, -0.2, 0.4];
        let want = 0.3f64.powf(-0.85);
        assert!((k.eval(&z) - want).abs() < 1e-14 * want);
        assert!((k2.eval(&z) - 0.3f64.powf(-0.75)).abs() < 1e-14);
        let a = particle_minimize(&p, 11, &cfg).unwrap();
        assert!(a.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
        let b = particle_minimize(&p, 11, &cfg).unwrap();
        assert_eq!(a.ensemble.positions, b.ensemble.positions);
    }
}
