//! Homotopy continuation for the matrix equation `L(t, M) = 0`.

use std::path::Path;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{quad_form, EllipsoidSpec};
use crate::par::block_sum;
use crate::profile::{positivity_audit, Profile};
use crate::quadrature::sphere_area;
use crate::specfun::kernel_constants;
use crate::squad::{build_graded_rule, build_hemisphere_rule, build_rule, default_order, SphereRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub t_step_init: f64,
    pub t_step_max: f64,
    pub t_step_min: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// `None` means [`default_order`]
    pub sphere_order: Option<usize>,
    /// residual bound at `1.5 x` the order before escalating
    pub refine_tol: f64,
    pub max_refinements: usize,
    /// refine on rules graded toward the short axis of the start point (thin ellipsoids)
    pub adapt_frame: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_step_init: 0.1,
            t_step_max: 0.25,
            t_step_min: 1e-6,
            newton_tol: 1e-11,
            newton_max_iter: 50,
            sphere_order: None,
            refine_tol: 1e-9,
            max_refinements: 3,
            adapt_frame: false,
        }
    }
}

/// `(i, j)` with `i <= j`, row by row.
pub fn pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect()
}

pub fn pack(m: &DMatrix<f64>) -> Vec<f64> {
    pairs(m.nrows()).into_iter().map(|(i, j)| m[(i, j)]).collect()
}

pub fn unpack(d: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for (k, (i, j)) in pairs(d).into_iter().enumerate() {
        m[(i, j)] = v[k];
        m[(j, i)] = v[k];
    }
    m
}

/// `m* = (gamma |S^{d-1}| / d)^{2/(s+2)}`.
pub fn isotropic_m(p: &Profile) -> Result<f64> {
    let kc = kernel_constants(&p.h)?;
    let d = p.d() as f64;
    Ok((kc.gamma_sd * sphere_area(p.d()) / d).powf(2.0 / (p.s() + 2.0)))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(0.5 * (m + m.transpose())).eigenvalues.min()
}

fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix has non-finite entries".into()));
    }
    let e = min_eigenvalue(m);
    if !(e > 0.0) {
        return Err(Error::NonPositiveDefinite(format!("min eigenvalue {e:e}")));
    }
    Ok(())
}

/// Discretized `L` and `B = dL/dM` for one profile on one rule.
pub struct Solver<'a> {
    pub profile: &'a Profile,
    pub rule: SphereRule,
    pub config: SolverConfig,
    gamma: f64,
    hat: Vec<f64>,
    /// `c_ij omega_i omega_j` per node
    mono: Vec<f64>,
    npairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Want {
    Residual,
    Both,
    Tangent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOutcome {
    #[serde(skip)]
    pub m: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    /// row-major
    pub m: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub min_eig: f64,
    pub jacobian_max_eig: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContinuationTrace {
    pub points: Vec<TracePoint>,
}

impl ContinuationTrace {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "residual", "min_eig", "iters"])?;
        for p in &self.points {
            w.write_record(&[
                format!("{:.17e}", p.t),
                format!("{:.6e}", p.residual),
                format!("{:.17e}", p.min_eig),
                p.iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub spec: EllipsoidSpec,
    pub trace: ContinuationTrace,
    /// `|L(1, M)|_inf` on the final rule
    pub residual: f64,
    pub order: usize,
    pub warnings: Vec<String>,
}

impl<'a> Solver<'a> {
    pub fn new(profile: &'a Profile, rule: SphereRule, config: SolverConfig) -> Result<Self> {
        if rule.d != profile.d() {
            return Err(Error::InvalidInput(format!("rule dimension {} != profile dimension {}", rule.d, profile.d())));
        }
        let kc = kernel_constants(&profile.h)?;
        let d = profile.d();
        let pr = pairs(d);
        let mut hat = Vec::with_capacity(rule.len());
        let mut mono = Vec::with_capacity(rule.len() * pr.len());
        for (i, w) in rule.nodes().enumerate() {
            let v = profile.eval_hat(w);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("Psi-hat is {v} at node {i}")));
            }
            hat.push(v);
            for &(a, b) in &pr {
                mono.push(if a == b { w[a] * w[a] } else { 2.0 * w[a] * w[b] });
            }
        }
        Ok(Self { profile, rule, config, gamma: kc.gamma_sd, hat, mono, npairs: pr.len() })
    }

    /// Solver on the default hemisphere rule (integrands are even).
    pub fn with_defaults(profile: &'a Profile, config: SolverConfig) -> Result<Self> {
        let order = config.sphere_order.unwrap_or_else(|| default_order(profile.d()));
        let rule = build_hemisphere_rule(profile.d(), order)?;
        Self::new(profile, rule, config)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn accumulate(&self, t: f64, m: &DMatrix<f64>, want: Want) -> Result<Vec<f64>> {
        check_spd(m)?;
        let np = self.npairs;
        let width = match want {
            Want::Residual | Want::Tangent => np,
            Want::Both => np + np * np,
        };
        let e1 = -(0.5 * self.profile.s() + 1.0);
        let sums = block_sum(self.rule.len(), width, |i, acc| {
            let w = self.rule.node(i);
            let q = quad_form(m, w);
            let base = match want {
                Want::Tangent => self.hat[i] - 1.0,
                _ => t * self.hat[i] + 1.0 - t,
            };
            let f = self.rule.weights[i] * base * q.powf(e1);
            let mono = &self.mono[i * np..(i + 1) * np];
            for k in 0..np {
                acc[k] += f * mono[k];
            }
            if want == Want::Both {
                let g = f / q;
                for k in 0..np {
                    let gk = g * mono[k];
                    let row = &mut acc[np + k * np..np + (k + 1) * np];
                    for l in 0..np {
                        row[l] += gk * mono[l];
                    }
                }
            }
        });
        if sums.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("quadrature sum is not finite".into()));
        }
        Ok(sums)
    }

    fn finish_residual(&self, sums: &[f64]) -> Vec<f64> {
        let d = self.profile.d();
        pairs(d)
            .into_iter()
            .enumerate()
            .map(|(k, (i, j))| self.gamma * sums[k] - if i == j { 1.0 } else { 0.0 })
            .collect()
    }

    /// `L_ij(t, M)` for `i <= j`.
    pub fn residual(&self, t: f64, m: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_t(t)?;
        let s = self.accumulate(t, m, Want::Residual)?;
        Ok(self.finish_residual(&s[..self.npairs]))
    }

    /// `(L, B)` with `B_(ij),(kl) = -c_ij c_kl A_(ij),(kl)`.
    pub fn residual_and_jacobian(&self, t: f64, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
        check_t(t)?;
        let np = self.npairs;
        let s = self.accumulate(t, m, Want::Both)?;
        let l = self.finish_residual(&s[..np]);
        let c = -self.gamma * (0.5 * self.profile.s() + 1.0);
        let mut b = DMatrix::from_row_slice(np, np, &s[np..]);
        b *= c;
        Ok((l, b))
    }

    pub fn jacobian(&self, t: f64, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.residual_and_jacobian(t, m)?.1)
    }

    /// `dL/dt`.
    pub fn dl_dt(&self, m: &DMatrix<f64>) -> Result<Vec<f64>> {
        let s = self.accumulate(0.0, m, Want::Tangent)?;
        Ok(s.iter().map(|v| self.gamma * v).collect())
    }

    /// Damped Newton on `L(t, .)` from `m_init`, keeping every iterate SPD.
    pub fn solve_at_t(&self, t: f64, m_init: &DMatrix<f64>) -> Result<NewtonOutcome> {
        let d = self.profile.d();
        let tol = self.config.newton_tol;
        let mut m = 0.5 * (m_init + m_init.transpose());
        let (mut l, mut b) = self.residual_and_jacobian(t, &m)?;
        let mut r = inf_norm(&l);
        let mut history = vec![r];
        for it in 0..self.config.newton_max_iter {
            if r <= tol {
                return Ok(NewtonOutcome { m, iterations: it, residual: r, history });
            }
            let rhs = -DVector::from_column_slice(&l);
            // -B is SPD
            let step = (-b.clone())
                .cholesky()
                .map(|c| -c.solve(&rhs))
                .or_else(|| b.clone().lu().solve(&rhs))
                .ok_or_else(|| Error::Singular("Jacobian is singular".into()))?;
            let dm = unpack(d, step.as_slice());
            let mut lambda = 1.0;
            let mut spd_fail = false;
            let mut accepted = None;
            while lambda >= 1.0 / 1024.0 {
                let trial = &m + &dm * lambda;
                if min_eigenvalue(&trial) <= 0.0 {
                    spd_fail = true;
                    lambda *= 0.5;
                    continue;
                }
                match self.residual(t, &trial) {
                    Ok(lt) => {
                        let rt = inf_norm(&lt);
                        if rt <= (1.0 - 0.5 * lambda) * r || rt <= tol {
                            accepted = Some(trial);
                            break;
                        }
                    }
                    Err(Error::NonPositiveDefinite(_)) => spd_fail = true,
                    Err(e) => return Err(e),
                }
                lambda *= 0.5;
            }
            let Some(next) = accepted else {
                if spd_fail {
                    return Err(Error::LostPositivity(min_eigenvalue(&m)));
                }
                // residual at the rounding floor
                if r <= 100.0 * tol {
                    return Ok(NewtonOutcome { m, iterations: it, residual: r, history });
                }
                return Err(Error::MaxIterations { iterations: it, residual: r });
            };
            m = next;
            (l, b) = self.residual_and_jacobian(t, &m)?;
            r = inf_norm(&l);
            history.push(r);
            debug!("newton t={t:.6} it={} |L|={r:.3e} lambda={lambda}", it + 1);
        }
        if r <= tol {
            return Ok(NewtonOutcome { m, iterations: self.config.newton_max_iter, residual: r, history });
        }
        Err(Error::MaxIterations { iterations: self.config.newton_max_iter, residual: r })
    }

    fn trace_point(&self, t: f64, out: &NewtonOutcome) -> Result<TracePoint> {
        let b = self.jacobian(t, &out.m)?;
        let jmax = SymmetricEigen::new(0.5 * (&b + b.transpose())).eigenvalues.max();
        Ok(TracePoint {
            t,
            m: out.m.transpose().as_slice().to_vec(),
            residual: out.residual,
            iterations: out.iterations,
            min_eig: min_eigenvalue(&out.m),
            jacobian_max_eig: jmax,
        })
    }

    /// Continuation in `t` from `m_0` solving `L(t_0, .) = 0` (warm start) up to `t = 1`.
    pub fn continue_from(&self, t0: f64, m0: &DMatrix<f64>) -> Result<(DMatrix<f64>, ContinuationTrace)> {
        let cfg = &self.config;
        let first = self.solve_at_t(t0, m0)?;
        let mut trace = ContinuationTrace { points: vec![self.trace_point(t0, &first)?] };
        let mut t = t0;
        let mut m = first.m;
        let mut dt = cfg.t_step_init;
        let mut successes = 0;
        while t < 1.0 {
            let t_next = (t + dt).min(1.0);
            let h = t_next - t;
            // Euler predictor: B dM/dt = -dL/dt
            let pred = self.dl_dt(&m).and_then(|lt| {
                let b = self.jacobian(t, &m)?;
                let v = b.lu().solve(&(-DVector::from_column_slice(&lt))).ok_or(Error::Singular("B".into()))?;
                let cand = &m + unpack(m.nrows(), v.as_slice()) * h;
                check_spd(&cand)?;
                Ok(cand)
            });
            let start = pred.unwrap_or_else(|_| m.clone());
            match self.solve_at_t(t_next, &start) {
                Ok(out) => {
                    t = t_next;
                    trace.points.push(self.trace_point(t, &out)?);
                    m = out.m;
                    successes += 1;
                    if successes >= 2 {
                        dt = (2.0 * dt).min(cfg.t_step_max);
                        successes = 0;
                    }
                }
                Err(e) => {
                    debug!("continuation step to t={t_next} failed: {e}");
                    successes = 0;
                    dt *= 0.5;
                    if dt < cfg.t_step_min {
                        return Err(Error::StepUnderflow { t, last_m: m.transpose().as_slice().to_vec() });
                    }
                }
            }
        }
        Ok((m, trace))
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("t = {t} outside [0, 1]")));
    }
    Ok(())
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Full pipeline: audit, continuation from `m* I` at `t = 0`, refinement check at `t = 1`.
pub fn homotopy_solve(p: &Profile, config: &SolverConfig) -> Result<Solution> {
    let d = p.d();
    let mut warnings = Vec::new();
    if !p.h.theorem_range() {
        let msg = format!("s = {} is outside theorem range s >= d-3 = {}", p.s(), d as f64 - 3.0);
        warn!("{msg}");
        warnings.push(msg);
    }
    let audit_rule = build_rule(d, default_order(d).min(30))?;
    let audit = positivity_audit(p, &audit_rule);
    if !audit.strict {
        return Err(Error::PositivityAuditFailed { min: audit.min_value });
    }
    let mut cfg = config.clone();
    cfg.sphere_order = Some(config.sphere_order.unwrap_or_else(|| default_order(d)));
    let solver = Solver::with_defaults(p, cfg.clone())?;
    let m0 = DMatrix::identity(d, d) * isotropic_m(p)?;
    let (m, trace) = solver.continue_from(0.0, &m0)?;
    let refined = refine_at_one(p, m, config)?;
    warnings.extend(refined.warnings);
    let spec = EllipsoidSpec::from_matrix(&refined.m)?;
    Ok(Solution { spec, trace, residual: refined.residual, order: refined.order, warnings })
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub m: DMatrix<f64>,
    pub residual: f64,
    pub order: usize,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Newton at `t = 1` from `m`, then re-checks on a 1.5x finer rule and escalates until the residual settles.
pub fn refine_at_one(p: &Profile, m: DMatrix<f64>, config: &SolverConfig) -> Result<Refined> {
    let d = p.d();
    let base = config.sphere_order.unwrap_or_else(|| default_order(d));
    let mut order = base;
    let mut cfg = config.clone();
    cfg.sphere_order = Some(order);
    let frame = if config.adapt_frame { Some(short_axis(&m)?) } else { None };
    let rule_at = |order: usize| -> Result<SphereRule> {
        match &frame {
            Some((v, w)) => build_graded_rule(d, order, v, *w),
            None => build_hemisphere_rule(d, order),
        }
    };
    let out = Solver::new(p, rule_at(order)?, cfg.clone())?.solve_at_t(1.0, &m)?;
    let mut m = out.m;
    let mut residual = out.residual;
    let mut iterations = out.iterations;
    let mut warnings = Vec::new();
    for _ in 0..=config.max_refinements {
        let fine = ((order as f64) * 1.5).ceil() as usize;
        let check = Solver::new(p, rule_at(fine)?, cfg.clone())?;
        let r_fine = inf_norm(&check.residual(1.0, &m)?);
        if r_fine <= config.refine_tol {
            break;
        }
        info!("refinement check failed at order {fine} (|L| = {r_fine:.3e}); escalating");
        order = fine;
        cfg.sphere_order = Some(order);
        let out = check.solve_at_t(1.0, &m)?;
        m = out.m;
        residual = out.residual;
        iterations += out.iterations;
        if order > 4 * base {
            let msg = format!("quadrature refinement did not settle (|L| = {r_fine:.3e})");
            warn!("{msg}");
            warnings.push(msg);
            break;
        }
    }
    Ok(Refined { m, residual, order, iterations, warnings })
}

/// Eigenvector of the smallest eigenvalue and the aspect ratio `a_min / a_max`.
fn short_axis(m: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let e = SymmetricEigen::new(0.5 * (m + m.transpose()));
    let (lo, hi) = (e.eigenvalues.min(), e.eigenvalues.max());
    if lo <= 0.0 {
        return Err(Error::NonPositiveDefinite("frame matrix".into()));
    }
    let k = e.eigenvalues.imin();
    Ok((e.eigenvectors.column(k).iter().copied().collect(), (lo / hi).sqrt()))
}

/// Free-function forms on an explicit rule.
pub fn residual(t: f64, m: &DMatrix<f64>, p: &Profile, rule: &SphereRule) -> Result<Vec<f64>> {
    Solver::new(p, rule.clone(), SolverConfig::default())?.residual(t, m)
}

pub fn jacobian(t: f64, m: &DMatrix<f64>, p: &Profile, rule: &SphereRule) -> Result<DMatrix<f64>> {
    Solver::new(p, rule.clone(), SolverConfig::default())?.jacobian(t, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::HarmonicTerm;
    use crate::specfun::Homogeneity;

    fn aniso(s: f64, eps: f64) -> Profile {
        let h = Homogeneity::new(s, 3).unwrap();
        let c0 = (4.0 * std::f64::consts::PI).sqrt();
        Profile::from_fourier_harmonics(
            h,
            &[
                HarmonicTerm { n: 0, m: 0, coeff: c0 },
                HarmonicTerm { n: 2, m: 0, coeff: eps * c0 },
                HarmonicTerm { n: 2, m: 1, coeff: 0.5 * eps * c0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn isotropic_closed_form_is_a_root() {
        for (d, s) in [(2, 0.5), (3, 1.5), (4, 2.0)] {
            let p = Profile::isotropic(Homogeneity::new(s, d).unwrap());
            let rule = build_rule(d, 10).unwrap();
            let m = DMatrix::identity(d, d) * isotropic_m(&p).unwrap();
            let l = residual(0.0, &m, &p, &rule).unwrap();
            assert!(inf_norm(&l) < 1e-13, "d={d} s={s}: {l:?}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = aniso(1.5, 0.3);
        let s = Solver::new(&p, build_rule(3, 16).unwrap(), SolverConfig::default()).unwrap();
        let m = DMatrix::from_row_slice(3, 3, &[1.2, 0.1, -0.05, 0.1, 0.9, 0.2, -0.05, 0.2, 1.1]);
        let b = s.jacobian(0.7, &m).unwrap();
        let h = 1e-6;
        let v0 = pack(&m);
        for k in 0..6 {
            let mut vp = v0.clone();
            let mut vm = v0.clone();
            vp[k] += h;
            vm[k] -= h;
            let lp = s.residual(0.7, &unpack(3, &vp)).unwrap();
            let lm = s.residual(0.7, &unpack(3, &vm)).unwrap();
            for i in 0..6 {
                let fd = (lp[i] - lm[i]) / (2.0 * h);
                assert!((fd - b[(i, k)]).abs() < 1e-6, "B[{i},{k}] = {} vs fd {fd}", b[(i, k)]);
            }
        }
    }

    #[test]
    fn jacobian_quadratic_form() {
        let p = aniso(1.5, 0.3);
        let rule = build_rule(3, 16).unwrap();
        let s = Solver::new(&p, rule.clone(), SolverConfig::default()).unwrap();
        let m = DMatrix::from_row_slice(3, 3, &[1.2, 0.1, -0.05, 0.1, 0.9, 0.2, -0.05, 0.2, 1.1]);
        let b = s.jacobian(0.4, &m).unwrap();
        let n = DMatrix::from_row_slice(3, 3, &[0.3, -1.0, 0.5, -1.0, 0.2, 0.7, 0.5, 0.7, -0.4]);
        let nv = DVector::from_vec(pack(&n));
        let lhs = nv.dot(&(&b * &nv));
        let g = s.gamma() * 1.75;
        let rhs = -g * rule
            .integrate(|w| {
                let ht = 0.4 * p.eval_hat(w) + 0.6;
                quad_form(&n, w).powi(2) * ht / quad_form(&m, w).powf(2.75)
            })
            .unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * rhs.abs());
        assert!(lhs < 0.0);
    }

    #[test]
    fn newton_from_doubled_isotropic() {
        let p = Profile::isotropic(Homogeneity::new(1.0, 3).unwrap());
        let s = Solver::with_defaults(&p, SolverConfig::default()).unwrap();
        let ms = isotropic_m(&p).unwrap();
        let out = s.solve_at_t(0.0, &(DMatrix::identity(3, 3) * 2.0 * ms)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { ms } else { 0.0 };
                assert!((out.m[(i, j)] - want).abs() < 1e-12);
            }
        }
        let h = &out.history;
        let n = h.len();
        assert!(n >= 4);
        // quadratic decay over the final steps
        for k in n - 3..n - 1 {
            if h[k + 1] > 1e-14 {
                assert!(h[k + 1] <= 10.0 * h[k] * h[k] + 1e-15, "{h:?}");
            }
        }
    }

    #[test]
    fn anisotropic_continuation_and_trace_identity() {
        let p = aniso(1.5, 0.3);
        let sol = homotopy_solve(&p, &SolverConfig::default()).unwrap();
        assert!(sol.residual <= 1e-10);
        let ts: Vec<f64> = sol.trace.points.iter().map(|q| q.t).collect();
        assert!(ts.windows(2).all(|w| w[1] > w[0]) && ts[0] == 0.0 && *ts.last().unwrap() == 1.0);
        assert!(sol.trace.points.iter().all(|q| q.min_eig > 0.0 && q.jacobian_max_eig < 0.0));
        let s = Solver::with_defaults(&p, SolverConfig::default()).unwrap();
        let l = s.residual(1.0, &sol.spec.m).unwrap();
        let tr: f64 = pairs(3).iter().zip(&l).filter(|((i, j), _)| i == j).map(|(_, v)| v + 1.0).sum();
        assert!((tr - 3.0).abs() < 1e-9);
        // trace bound from Holder
        let g = s.gamma();
        let int_hat: f64 = s.rule.integrate(|w| p.eval_hat(w)).unwrap();
        let bound = g.powf(2.0 / 3.5) * 3f64.powf(1.5 / 3.5) * int_hat.powf(2.0 / 3.5);
        assert!(sol.spec.m.trace() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn rotation_equivariance() {
        let p = aniso(1.5, 0.3);
        let a = 0.7f64;
        let q = DMatrix::from_row_slice(3, 3, &[a.cos(), 0.0, a.sin(), 0.0, 1.0, 0.0, -a.sin(), 0.0, a.cos()]);
        let pr = p.rotated(&q);
        let cfg = SolverConfig::default();
        let m = homotopy_solve(&p, &cfg).unwrap().spec.m;
        let mr = homotopy_solve(&pr, &cfg).unwrap().spec.m;
        let want = q.transpose() * &m * &q;
        assert!((mr - want).amax() < 1e-8);
    }

    #[test]
    fn linear_response_to_perturbation() {
        // shift of M is O(eps): compare with the linearized prediction at the isotropic root
        let h = Homogeneity::new(1.5, 3).unwrap();
        let iso = Profile::isotropic(h);
        let ms = isotropic_m(&iso).unwrap();
        let m0 = DMatrix::identity(3, 3) * ms;
        let mut slopes = Vec::new();
        for eps in [0.05, 0.1, 0.2] {
            let p = aniso(1.5, eps);
            let m = homotopy_solve(&p, &SolverConfig::default()).unwrap().spec.m;
            let s = Solver::with_defaults(&p, SolverConfig::default()).unwrap();
            let b = s.jacobian(1.0, &m0).unwrap();
            let l = s.residual(1.0, &m0).unwrap();
            let pred = b.lu().solve(&(-DVector::from_vec(l))).unwrap();
            let actual = DVector::from_vec(pack(&(&m - &m0)));
            slopes.push(actual.norm() / eps);
            assert!((&actual - &pred).norm() <= 3.0 * eps * eps * ms, "eps={eps}");
        }
        assert!((slopes[0] - slopes[2]).abs() < 0.2 * slopes[0]);
    }

    #[test]
    fn outside_theorem_range_warns() {
        let p = Profile::isotropic(Homogeneity::new(0.1, 3).unwrap());
        let sol = homotopy_solve(&p, &SolverConfig::default()).unwrap();
        assert!(sol.residual <= 1e-10);
        let p = Profile::isotropic(Homogeneity::new(0.5, 4).unwrap());
        let sol = homotopy_solve(&p, &SolverConfig { sphere_order: Some(12), ..Default::default() }).unwrap();
        assert!(sol.warnings.iter().any(|w| w.contains("outside theorem range")));
    }
}
