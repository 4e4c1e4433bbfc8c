//! Run configuration (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degenerate::{shipped_profile, SweepConfig};
use crate::harmonics::Poly;
use crate::identities::IdentityConfig;
use crate::oracle::{ConvolutionConfig, ParticleConfig};
use crate::potential::PotentialConfig;
use crate::profile::{HarmonicTerm, Profile, DEFAULT_N_MAX};
use crate::solver::SolverConfig;
use crate::specfun::Homogeneity;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub exps: Vec<u8>,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `Psi-hat = 1`
    Isotropic,
    /// coefficients of `Psi-hat` in real spherical harmonics
    FourierHarmonics {
        terms: Vec<HarmonicTerm>,
        #[serde(default)]
        n_max: Option<usize>,
    },
    /// coefficients of `Psi`
    Harmonics {
        terms: Vec<HarmonicTerm>,
        #[serde(default)]
        n_max: Option<usize>,
    },
    /// `Psi-hat` as a polynomial restricted to the sphere
    FourierPolynomial { monomials: Vec<Monomial> },
    Polynomial { monomials: Vec<Monomial> },
    /// `Psi-hat_0 = (1 - omega_d^2)^2`, zero at `+-e_d`
    DegenerateExample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub d: usize,
    pub s: f64,
    pub profile: ProfileSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub interior_points: usize,
    /// sphere-rule order of the directions in the exterior grid
    pub exterior_order: usize,
    /// points per side of the `P_E` slice through the two longest axes
    pub slice_points: usize,
    /// slice half-width in units of the semi-axis
    pub slice_extent: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { interior_points: 100, exterior_order: 6, slice_points: 41, slice_extent: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub convolution: ConvolutionConfig,
    pub interior_points: usize,
    pub exterior_points: usize,
    pub rel_tol: f64,
    pub particles: Option<ParticleConfig>,
    /// tolerances of the particle comparison
    pub particle_ratio_tol: f64,
    pub particle_angle_tol_deg: f64,
    pub particle_inside_min: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            convolution: ConvolutionConfig::default(),
            interior_points: 10,
            exterior_points: 10,
            rel_tol: 1e-3,
            particles: None,
            particle_ratio_tol: 0.05,
            particle_angle_tol_deg: 5.0,
            particle_inside_min: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub schedule: Vec<f64>,
    pub loss_threshold: f64,
    pub trend_window: usize,
    pub max_substeps: usize,
    /// refine each lifted solve on rules graded toward the short axis
    pub adapt_frame: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        let c = SweepConfig::default();
        Self {
            schedule: vec![0.3, 0.1, 0.03, 0.01, 0.003],
            loss_threshold: c.loss_threshold,
            trend_window: c.trend_window,
            max_substeps: c.max_substeps,
            adapt_frame: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub identities: IdentityConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn poly_from(d: usize, monomials: &[Monomial]) -> Result<Poly> {
    let mut p = Poly::zero(d);
    for m in monomials {
        if m.exps.len() != d {
            return Err(Error::InvalidInput(format!("monomial {:?} needs {d} exponents", m.exps)));
        }
        p.add_scaled(&Poly::monomial(d, &m.exps, m.coeff), 1.0);
    }
    Ok(p)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.homogeneity()?;
        if let Some(o) = self.solver.sphere_order {
            if o < 2 {
                return Err(Error::InvalidInput(format!("solver.sphere_order = {o} must be >= 2")));
            }
        }
        if !(self.solver.newton_tol > 0.0 && self.solver.refine_tol > 0.0) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if !(self.solver.t_step_min > 0.0 && self.solver.t_step_init >= self.solver.t_step_min) {
            return Err(Error::InvalidInput("solver step sizes must satisfy 0 < t_step_min <= t_step_init".into()));
        }
        if self.sweep.schedule.iter().any(|&e| !(e > 0.0)) || self.sweep.schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("sweep.schedule must be positive and strictly decreasing".into()));
        }
        if self.oracle.rel_tol <= 0.0 {
            return Err(Error::InvalidInput("oracle.rel_tol must be positive".into()));
        }
        self.build_profile_with(h)?;
        Ok(())
    }

    pub fn homogeneity(&self) -> Result<Homogeneity> {
        Homogeneity::new(self.problem.s, self.problem.d)
    }

    pub fn build_profile(&self) -> Result<Profile> {
        self.build_profile_with(self.homogeneity()?)
    }

    fn build_profile_with(&self, h: Homogeneity) -> Result<Profile> {
        let d = h.d;
        match &self.problem.profile {
            ProfileSpec::Isotropic => Ok(Profile::isotropic(h)),
            ProfileSpec::FourierHarmonics { terms, n_max } => {
                Profile::from_fourier_harmonics_with_cutoff(h, terms, n_max.unwrap_or(DEFAULT_N_MAX))
            }
            ProfileSpec::Harmonics { terms, n_max } => {
                Profile::from_harmonics_with_cutoff(h, terms, n_max.unwrap_or(DEFAULT_N_MAX))
            }
            ProfileSpec::FourierPolynomial { monomials } => Profile::from_fourier_polynomial(h, &poly_from(d, monomials)?),
            ProfileSpec::Polynomial { monomials } => Profile::from_polynomial(h, &poly_from(d, monomials)?),
            ProfileSpec::DegenerateExample => shipped_profile(h),
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            loss_threshold: self.sweep.loss_threshold,
            trend_window: self.sweep.trend_window,
            max_substeps: self.sweep.max_substeps,
            solver: SolverConfig { adapt_frame: self.sweep.adapt_frame, ..self.solver.clone() },
        }
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self.problem.profile, ProfileSpec::Isotropic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"problem": {"d": 3, "s": 1.0, "profile": {"kind": "isotropic"}}}"#).unwrap();
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.out, PathBuf::from("out"));
        assert_eq!(c.sweep.schedule, vec![0.3, 0.1, 0.03, 0.01, 0.003]);
        let echo = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&echo).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            r#"{"problem": {"d": 3, "s": 3.5, "profile": {"kind": "isotropic"}}}"#,
            r#"{"problem": {"d": 3, "s": 1.0, "profile": {"kind": "isotropic"}}, "solver": {"newton_tol": -1}}"#,
            r#"{"problem": {"d": 3, "s": 1.0, "profile": {"kind": "isotropic"}}, "typo": 1}"#,
            r#"{"problem": {"d": 3, "s": 1.0, "profile": {"kind": "harmonics", "terms": [{"n": 1, "m": 0, "coeff": 1.0}]}}}"#,
            r#"{"problem": {"d": 3, "s": 1.0, "profile": {"kind": "fourier_polynomial", "monomials": [{"exps": [2, 0], "coeff": 1.0}]}}}"#,
            r#"{"problem": {"d": 3, "s": 1.0, "profile": {"kind": "isotropic"}}, "sweep": {"schedule": [0.1, 0.2]}}"#,
        ] {
            assert!(RunConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn profiles_build() {
        let c = RunConfig::from_json(
            r#"{"problem": {"d": 2, "s": 1.0, "profile": {"kind": "fourier_polynomial", "monomials": [{"exps": [0, 0], "coeff": 1.0}, {"exps": [2, 0], "coeff": 0.5}]}}}"#,
        )
        .unwrap();
        let p = c.build_profile().unwrap();
        assert!((p.eval_hat(&[1.0, 0.0]) - 1.5).abs() < 1e-13);
        assert!((p.eval_hat(&[0.0, 1.0]) - 1.0).abs() < 1e-13);
    }
}
