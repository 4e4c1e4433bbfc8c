//! Lifting of profiles with `Psi-hat >= 0` and the `eps -> 0` sweep.

use std::path::Path;

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::harmonics::Poly;
use crate::measure::{ordered_eigen, EllipsoidSpec};
use crate::profile::{physical_audit, positivity_audit, PositivityAudit, Profile};
use crate::solver::{homotopy_solve, refine_at_one, SolverConfig};
use crate::specfun::Homogeneity;
use crate::squad::{build_rule, default_order};
use crate::{Error, Result};

/// Audit tolerance for `min Psi-hat_0`; below `-LIFT_TOL` the profile is rejected.
pub const LIFT_TOL: f64 = 1e-10;

fn audit_rule_for(p: &Profile) -> Result<crate::squad::SphereRule> {
    build_rule(p.d(), default_order(p.d()).min(30))
}

/// `Psi-hat_0 + eps`, after checking `Psi-hat_0 >= 0`.
pub fn lift(p0: &Profile, eps: f64) -> Result<Profile> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("lift needs eps > 0, got {eps}")));
    }
    let audit = positivity_audit(p0, &audit_rule_for(p0)?);
    if audit.min_value < -LIFT_TOL {
        return Err(Error::PositivityAuditFailed { min: audit.min_value });
    }
    p0.lifted(eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Classification {
    FullDimensional,
    SuspectedLoss { dimension: usize },
    Inconclusive,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::FullDimensional => write!(f, "full-dimensional"),
            Self::SuspectedLoss { dimension } => write!(f, "suspected-loss-to-{dimension}"),
            Self::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// loss threshold relative to the largest semi-axis
    pub loss_threshold: f64,
    pub trend_window: usize,
    /// log-spaced intermediate lifts tried when a direct warm start fails
    pub max_substeps: usize,
    pub solver: SolverConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { loss_threshold: 1e-3, trend_window: 3, max_substeps: 16, solver: SolverConfig { adapt_frame: true, ..SolverConfig::default() } }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    #[serde(skip)]
    pub spec: Option<EllipsoidSpec>,
    pub semi_axes: Option<Vec<f64>>,
    pub residual: f64,
    pub min_semi_axis: f64,
    /// semi-axis along the eigenvector closest to the audit's zero direction
    pub tracked_semi_axis: f64,
    pub iterations: usize,
    pub order: usize,
    pub classification: Classification,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub d: usize,
    pub s: f64,
    pub points: Vec<SweepPoint>,
    pub classification: Classification,
    /// smallest support dimension allowed: `k > s`
    pub dimension_lower_bound: usize,
    pub artifact: bool,
    pub zero_direction: Vec<f64>,
    pub audit: PositivityAudit,
    pub physical_min: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn dimension_lower_bound(s: f64) -> usize {
    s.floor() as usize + 1
}

fn semi_axes_along(spec: &EllipsoidSpec, dir: &[f64]) -> f64 {
    let d = spec.d();
    (0..d)
        .max_by(|&i, &j| {
            let c = |k: usize| (0..d).map(|r| spec.r[(r, k)] * dir[r]).sum::<f64>().abs();
            c(i).total_cmp(&c(j))
        })
        .map(|k| spec.a[k])
        .unwrap_or(f64::NAN)
}

/// Classification from the semi-axis history of the solved points, in sweep order.
fn classify(hist: &[Vec<f64>], s: f64, d: usize, cfg: &SweepConfig) -> (Classification, bool) {
    let kmin = dimension_lower_bound(s);
    let Some(last) = hist.last() else {
        return (Classification::Inconclusive, false);
    };
    let amax = last.iter().cloned().fold(0.0, f64::max);
    let lost = last.iter().filter(|&&a| a < cfg.loss_threshold * amax).count();
    let w = cfg.trend_window.max(2);
    let trending = hist.len() >= w && {
        let tail = &hist[hist.len() - w..];
        let mins: Vec<f64> = tail.iter().map(|a| a.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
        mins.windows(2).all(|p| p[1] < p[0])
    };
    if lost == 0 {
        if trending && kmin < d {
            return (Classification::Inconclusive, false);
        }
        return (Classification::FullDimensional, false);
    }
    let k = d - lost;
    if k < kmin {
        // the minimiser cannot live on a k-dimensional set for s >= k
        return (if kmin >= d { Classification::FullDimensional } else { Classification::Inconclusive }, true);
    }
    if trending {
        (Classification::SuspectedLoss { dimension: k }, false)
    } else {
        (Classification::Inconclusive, false)
    }
}

fn solve_lifted(p0: &Profile, eps: f64, warm: Option<&DMatrix<f64>>, cfg: &SolverConfig) -> Result<crate::solver::Refined> {
    let p = lift(p0, eps)?;
    match warm {
        Some(m) => refine_at_one(&p, m.clone(), cfg),
        None => {
            let sol = homotopy_solve(&p, cfg)?;
            let m = sol.spec.m.clone();
            refine_at_one(&p, m, cfg)
        }
    }
}

/// Warm-started solves along a decreasing lift schedule.
pub fn sweep(p0: &Profile, schedule: &[f64], cfg: &SweepConfig) -> Result<SweepResult> {
    if schedule.is_empty() {
        return Err(Error::InvalidInput("empty schedule".into()));
    }
    if schedule.iter().any(|&e| !(e > 0.0 && e.is_finite())) || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("schedule must be positive and strictly decreasing".into()));
    }
    let d = p0.d();
    let s = p0.s();
    let audit = positivity_audit(p0, &audit_rule_for(p0)?);
    if audit.min_value < -LIFT_TOL {
        return Err(Error::PositivityAuditFailed { min: audit.min_value });
    }
    let mut warnings = Vec::new();
    let physical_min = lift(p0, schedule[0])
        .ok()
        .and_then(|p| physical_audit(&p, &audit_rule_for(&p).ok()?))
        .map(|a| a.min_value);
    if let Some(v) = physical_min.filter(|&v| v < 0.0) {
        let msg = format!("physical profile of the lifted kernel is negative somewhere (min {v:.3e})");
        warn!("{msg}");
        warnings.push(msg);
    }
    let zero_direction = audit.argmin.clone();
    let mut points = Vec::with_capacity(schedule.len());
    let mut hist: Vec<Vec<f64>> = Vec::new();
    let mut warm: Option<DMatrix<f64>> = None;
    let mut prev_eps: Option<f64> = None;
    let mut artifact = false;
    for &eps in schedule {
        let mut attempt = solve_lifted(p0, eps, warm.as_ref(), &cfg.solver);
        // smaller steps in log eps from the last good point
        let mut sub = 2;
        while attempt.is_err() && sub <= cfg.max_substeps {
            let (Some(e0), Some(m0)) = (prev_eps, warm.clone()) else { break };
            info!("sweep: eps = {eps} failed ({}); retrying with {sub} substeps", attempt.as_ref().unwrap_err());
            let mut m = m0;
            let mut ok = true;
            let mut last = None;
            for j in 1..=sub {
                let e = e0 * (eps / e0).powf(j as f64 / sub as f64);
                match solve_lifted(p0, e, Some(&m), &cfg.solver) {
                    Ok(r) => {
                        m = r.m.clone();
                        last = Some(r);
                    }
                    Err(e) => {
                        ok = false;
                        attempt = Err(e);
                        break;
                    }
                }
            }
            if ok {
                attempt = last.ok_or_else(|| Error::InvalidInput("no substeps".into()));
            }
            sub *= 2;
        }
        match attempt.and_then(|r| Ok((EllipsoidSpec::from_matrix(&r.m)?, r))) {
            Ok((spec, r)) => {
                let min_axis = spec.a.iter().cloned().fold(f64::INFINITY, f64::min);
                let tracked = semi_axes_along(&spec, &zero_direction);
                hist.push(spec.a.clone());
                let (class, art) = classify(&hist, s, d, cfg);
                artifact |= art;
                warnings.extend(r.warnings.iter().cloned());
                points.push(SweepPoint {
                    eps,
                    semi_axes: Some(spec.a.clone()),
                    spec: Some(spec),
                    residual: r.residual,
                    min_semi_axis: min_axis,
                    tracked_semi_axis: tracked,
                    iterations: r.iterations,
                    order: r.order,
                    classification: class,
                    failure: None,
                });
                warm = Some(r.m);
                prev_eps = Some(eps);
            }
            Err(e) => {
                warn!("sweep: eps = {eps} failed: {e}");
                let class = classify(&hist, s, d, cfg).0;
                points.push(SweepPoint {
                    eps,
                    spec: None,
                    semi_axes: None,
                    residual: f64::NAN,
                    min_semi_axis: f64::NAN,
                    tracked_semi_axis: f64::NAN,
                    iterations: 0,
                    order: 0,
                    classification: class,
                    failure: Some(e.to_string()),
                });
            }
        }
    }
    let (classification, art) = classify(&hist, s, d, cfg);
    artifact |= art;
    if artifact {
        let msg = "observed shrinkage contradicts the support dimension bound; treated as a numerical artifact".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(SweepResult {
        d,
        s,
        points,
        classification,
        dimension_lower_bound: dimension_lower_bound(s),
        artifact,
        zero_direction,
        audit,
        physical_min,
        warnings,
    })
}

impl SweepResult {
    /// Columns: eps, a_1..a_d (descending), residual, iters, classification.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["eps".to_string()];
        header.extend((1..=self.d).map(|i| format!("a{i}")));
        header.extend(["tracked_axis", "residual", "iters", "classification"].map(String::from));
        w.write_record(&header)?;
        for p in &self.points {
            let mut row = vec![format!("{:e}", p.eps)];
            match &p.spec {
                Some(sp) => row.extend(sp.a.iter().map(|a| format!("{a:.12e}"))),
                None => row.extend((0..self.d).map(|_| "nan".to_string())),
            }
            row.push(format!("{:.12e}", p.tracked_semi_axis));
            row.push(format!("{:e}", p.residual));
            row.push(p.iterations.to_string());
            row.push(p.classification.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Semi-axes per solved point, largest first.
    pub fn axes(&self) -> Vec<(f64, Vec<f64>)> {
        self.points.iter().filter_map(|p| p.spec.as_ref().map(|s| (p.eps, s.a.clone()))).collect()
    }
}

/// `Psi-hat_0 = (1 - omega_d^2)^2`: vanishes exactly at `+-e_d`.
pub fn shipped_profile(h: Homogeneity) -> Result<Profile> {
    let d = h.d;
    let mut q = Poly::zero(d);
    for i in 0..d - 1 {
        let mut e = vec![0u8; d];
        e[i] = 2;
        q.add_scaled(&Poly::monomial(d, &e, 1.0), 1.0);
    }
    Profile::from_fourier_polynomial(h, &q.pow(2))
}

/// Principal frame of `M`, largest semi-axis first.
pub fn principal_axes(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (r, l) = ordered_eigen(m)?;
    Ok((r, l.iter().map(|v| v.sqrt()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hom(s: f64, d: usize) -> Homogeneity {
        Homogeneity::new(s, d).unwrap()
    }

    #[test]
    fn lift_shifts_fourier_side() {
        let p0 = shipped_profile(hom(1.0, 3)).unwrap();
        let p = lift(&p0, 0.05).unwrap();
        for w in [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8], [0.48, 0.6, 0.64]] {
            assert!((p.eval_hat(&w) - p0.eval_hat(&w) - 0.05).abs() < 1e-13);
        }
        let a = positivity_audit(&p, &build_rule(3, 20).unwrap());
        assert!(a.strict);
        assert!((a.min_value - 0.05).abs() < 1e-10);
        assert!(a.argmin[2].abs() > 1.0 - 1e-6);
    }

    #[test]
    fn lift_rejects_negative_and_bad_eps() {
        let h = hom(1.0, 3);
        let mut q = Poly::monomial(3, &[2, 0, 0], 1.0);
        q.add_scaled(&Poly::monomial(3, &[0, 0, 2], -0.2), 1.0);
        let p = Profile::from_fourier_polynomial(h, &q).unwrap();
        assert!(matches!(lift(&p, 0.1), Err(Error::PositivityAuditFailed { .. })));
        let p0 = shipped_profile(h).unwrap();
        assert!(lift(&p0, 0.0).is_err());
        assert!(lift(&p0, -1.0).is_err());
    }

    #[test]
    fn lower_bound_rule() {
        assert_eq!(dimension_lower_bound(1.0), 2);
        assert_eq!(dimension_lower_bound(0.5), 1);
        assert_eq!(dimension_lower_bound(2.2), 3);
        let cfg = SweepConfig::default();
        let hist = vec![vec![1.0, 0.9, 1e-2], vec![1.0, 0.9, 1e-3], vec![1.0, 0.9, 1e-5]];
        assert_eq!(classify(&hist, 1.0, 3, &cfg), (Classification::SuspectedLoss { dimension: 2 }, false));
        assert_eq!(classify(&hist, 2.2, 3, &cfg), (Classification::FullDimensional, true));
        let flat = vec![vec![1.0, 0.9, 0.5]; 3];
        assert_eq!(classify(&flat, 1.0, 3, &cfg).0, Classification::FullDimensional);
    }

    #[test]
    fn schedule_validation() {
        let p0 = shipped_profile(hom(1.0, 3)).unwrap();
        let cfg = SweepConfig::default();
        assert!(sweep(&p0, &[0.1, 0.3], &cfg).is_err());
        assert!(sweep(&p0, &[], &cfg).is_err());
    }

    #[test]
    fn positive_profile_stays_full_dimensional() {
        let h = hom(1.0, 2);
        let p0 = {
            let mut q = Poly::constant(2, 1.0);
            q.add_scaled(&Poly::monomial(2, &[2, 0], 0.3), 1.0);
            Profile::from_fourier_polynomial(h, &q).unwrap()
        };
        let r = sweep(&p0, &[0.1, 0.01, 0.001], &SweepConfig::default()).unwrap();
        assert_eq!(r.classification, Classification::FullDimensional);
        let ax = r.axes();
        let (a, b) = (&ax[1].1, &ax[2].1);
        assert!((a[1] - b[1]).abs() < 0.01 * a[1]);
    }
}
