//! Radial kernels `k(x, y) = psi(|x - y|^2) = int exp(-t |x - y|^2) dnu(t)`
//! with their spectral densities and scalar constants.
//!
//! Matern kernels are represented through their inverse-Gamma `nu` and
//! evaluated by quadrature; no Bessel functions appear outside the test
//! oracles. Inverse multiquadrics `(c^2 + r^2)^(-gamma)` correspond to
//! `nu = c^(-2 gamma) Gamma(gamma, c^2)` and evaluate in closed form.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{KmeError, Result};
use crate::measure::{GammaComponent, InvGammaComponent, NuMeasure};
use crate::quad::{self, QuadratureResult, DEFAULT_ABS_TOL, DEFAULT_REL_TOL};

/// Which parametric family a kernel came from. Drives the closed-form
/// constant tables; `Custom` falls back to generic numerical paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-|x-y|^2 / (2 eta^2))`: unit atom at `1/(2 eta^2)`.
    Gaussian { eta: f64 },
    /// `sum_i beta_i exp(-|x-y|^2 / (2 eta_i^2))`, `etas` sorted descending.
    GaussianMixture { betas: Vec<f64>, etas: Vec<f64> },
    /// `(c^2 + |x-y|^2)^(-gamma)`.
    InverseMultiquadric { c: f64, gamma: f64 },
    /// Matern with smoothness `tau` (`tau > d/2`) and inverse length `c`.
    Matern { c: f64, tau: f64 },
    Custom,
}

impl KernelFamily {
    pub fn label(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian { .. } => "gaussian",
            KernelFamily::GaussianMixture { .. } => "gaussian_mixture",
            KernelFamily::InverseMultiquadric { .. } => "inverse_multiquadric",
            KernelFamily::Matern { .. } => "matern",
            KernelFamily::Custom => "custom",
        }
    }
}

/// A radial kernel on R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialKernel {
    pub nu: NuMeasure,
    pub d: u32,
    pub family: KernelFamily,
}

/// Scalar constants of a kernel. Optional fields are absent (not zero) when
/// the condition for their defining integral fails.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub z_nu: f64,
    pub c_k_rkhs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_k_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_l2_sq: Option<f64>,
}

impl RadialKernel {
    pub fn new(nu: NuMeasure, d: u32, family: KernelFamily) -> Result<Self> {
        if d == 0 {
            return Err(KmeError::InvalidKernel("dimension d must be >= 1".into()));
        }
        nu.validate()?;
        Ok(RadialKernel { nu, d, family })
    }

    pub fn gaussian(eta: f64, d: u32) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(KmeError::InvalidKernel(format!("gaussian bandwidth eta {eta} must be > 0")));
        }
        let nu = NuMeasure::from_atoms(vec![(1.0 / (2.0 * eta * eta), 1.0)])?;
        Self::new(nu, d, KernelFamily::Gaussian { eta })
    }

    pub fn gaussian_mixture(betas: &[f64], etas: &[f64], d: u32) -> Result<Self> {
        if betas.len() != etas.len() || betas.is_empty() {
            return Err(KmeError::InvalidKernel("mixture needs equally many betas and etas".into()));
        }
        if betas.iter().any(|&b| !(b > 0.0) || !b.is_finite())
            || etas.iter().any(|&e| !(e > 0.0) || !e.is_finite())
        {
            return Err(KmeError::InvalidKernel("mixture betas and etas must be positive".into()));
        }
        let mut pairs: Vec<(f64, f64)> = betas.iter().copied().zip(etas.iter().copied()).collect();
        // Sort by bandwidth, largest first: the constant tables index
        // eta_1 >= ... >= eta_M.
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1));
        let betas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let etas: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let atoms = pairs.iter().map(|&(b, e)| (1.0 / (2.0 * e * e), b)).collect();
        let nu = NuMeasure::from_atoms(atoms)?;
        Self::new(nu, d, KernelFamily::GaussianMixture { betas, etas })
    }

    pub fn inverse_multiquadric(c: f64, gamma: f64, d: u32) -> Result<Self> {
        if !(c > 0.0 && gamma > 0.0) || !(c.is_finite() && gamma.is_finite()) {
            return Err(KmeError::InvalidKernel(format!("imq needs c, gamma > 0 (got c={c}, gamma={gamma})")));
        }
        let nu = NuMeasure::new(
            vec![],
            vec![GammaComponent { shape: gamma, rate: c * c, weight: c.powf(-2.0 * gamma) }],
            vec![],
        )?;
        Self::new(nu, d, KernelFamily::InverseMultiquadric { c, gamma })
    }

    pub fn matern(tau: f64, c: f64, d: u32) -> Result<Self> {
        let shape = tau - d as f64 / 2.0;
        if !(shape > 0.0) || !(c > 0.0) || !(tau.is_finite() && c.is_finite()) {
            return Err(KmeError::InvalidKernel(format!(
                "matern needs tau > d/2 and c > 0 (got tau={tau}, c={c}, d={d})"
            )));
        }
        let nu = NuMeasure::new(
            vec![],
            vec![],
            vec![InvGammaComponent { shape, scale: c * c / 4.0, weight: 1.0 }],
        )?;
        Self::new(nu, d, KernelFamily::Matern { c, tau })
    }

    pub fn custom(nu: NuMeasure, d: u32) -> Result<Self> {
        Self::new(nu, d, KernelFamily::Custom)
    }

    pub fn label(&self) -> &'static str {
        self.family.label()
    }

    pub fn z_nu(&self) -> f64 {
        self.nu.total_mass()
    }

    fn density_only(&self) -> NuMeasure {
        NuMeasure {
            atoms: Vec::new(),
            gamma_components: self.nu.gamma_components.clone(),
            invgamma_components: self.nu.invgamma_components.clone(),
        }
    }

    /// Require the d/2-moment condition `int t^(-d/2) dnu(t) < oo`.
    pub fn require_moment_condition(&self) -> Result<()> {
        if self.nu.moment_condition_holds(self.d) {
            Ok(())
        } else {
            Err(KmeError::MomentCondition {
                d: self.d,
                detail: "an atom at t = 0 or a Gamma component with shape <= d/2".into(),
            })
        }
    }

    /// `psi(r^2)`: atoms and Gamma components in closed form, inverse-Gamma
    /// components by quadrature.
    pub fn eval_psi(&self, r2: f64) -> Result<f64> {
        if !(r2 >= 0.0) {
            return Err(KmeError::InvalidArgument(format!("squared distance {r2} must be >= 0")));
        }
        let mut value: f64 = self.nu.atoms.iter().map(|&(t, m)| m * (-t * r2).exp()).sum();
        for g in &self.nu.gamma_components {
            // int e^{-t r^2} Gamma(t; shape, rate) dt = (rate/(rate + r^2))^shape
            value += g.weight * (g.rate / (g.rate + r2)).powf(g.shape);
        }
        if !self.nu.invgamma_components.is_empty() {
            let inv = NuMeasure {
                atoms: Vec::new(),
                gamma_components: Vec::new(),
                invgamma_components: self.nu.invgamma_components.clone(),
            };
            value += quad::integrate_nu(&|t| (-t * r2).exp(), &inv, DEFAULT_ABS_TOL, DEFAULT_REL_TOL)
                .into_value()?;
        }
        Ok(value)
    }

    /// Spectral density `lambda(w) = int (2t)^(-d/2) exp(-|w|^2/(4t)) dnu(t)`
    /// as a function of `|w|^2`. This is both the Fourier transform of `psi`
    /// and the density of the kernel's spectral measure.
    pub fn spectral_density(&self, w_norm2: f64) -> Result<f64> {
        if !(w_norm2 >= 0.0) {
            return Err(KmeError::InvalidArgument(format!("|w|^2 = {w_norm2} must be >= 0")));
        }
        self.require_moment_condition()?;
        let half_d = self.d as f64 / 2.0;
        let mut value: f64 = self
            .nu
            .atoms
            .iter()
            .map(|&(t, m)| m * (2.0 * t).powf(-half_d) * (-w_norm2 / (4.0 * t)).exp())
            .sum();
        if self.nu.has_density() {
            value += quad::integrate_nu(
                &|t| (2.0 * t).powf(-half_d) * (-w_norm2 / (4.0 * t)).exp(),
                &self.density_only(),
                DEFAULT_ABS_TOL,
                DEFAULT_REL_TOL,
            )
            .into_value()?;
        }
        Ok(value)
    }

    /// Mass `nu([lo, hi])` (closed interval).
    pub fn nu_interval_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        self.nu.interval_mass(lo, hi)
    }

    /// Cross-correlation `int psi(y) psi(y + z) dy` as a function of
    /// `|z|^2`, via the double `nu`-integral
    /// `int int (pi/(t1+t2))^{d/2} exp(-t1 t2 |z|^2/(t1+t2)) dnu dnu`.
    /// At `z = 0` this is `|psi|^2_{L2}`.
    pub fn psi_l2_cross(&self, z_norm2: f64) -> Result<f64> {
        if !(z_norm2 >= 0.0) {
            return Err(KmeError::InvalidArgument(format!("|z|^2 = {z_norm2} must be >= 0")));
        }
        self.require_moment_condition()?;
        let half_d = self.d as f64 / 2.0;
        let f = |t1: f64, t2: f64| -> f64 {
            let s = t1 + t2;
            (std::f64::consts::PI / s).powf(half_d) * (-t1 * t2 * z_norm2 / s).exp()
        };
        quad::integrate_nu_double(&f, &self.nu, DEFAULT_ABS_TOL, DEFAULT_REL_TOL).into_value()
    }

    /// Same integral but exposed with its convergence diagnostics.
    pub fn psi_l2_cross_quad(&self, z_norm2: f64) -> Result<QuadratureResult> {
        self.require_moment_condition()?;
        let half_d = self.d as f64 / 2.0;
        let f = |t1: f64, t2: f64| -> f64 {
            let s = t1 + t2;
            (std::f64::consts::PI / s).powf(half_d) * (-t1 * t2 * z_norm2 / s).exp()
        };
        Ok(quad::integrate_nu_double(&f, &self.nu, DEFAULT_ABS_TOL, DEFAULT_REL_TOL))
    }

    /// Scalar constants: `Z_nu` and `C_k = sup_x k(x,x) = Z_nu` always; the
    /// L2 constant `Z_nu * int (pi/(2t))^{d/2} dnu(t)` when the d/2-moment
    /// condition holds; `|psi|^2_{L2}`, in closed form for inverse
    /// multiquadrics with `gamma > d/4`.
    pub fn kernel_constants(&self) -> KernelConstants {
        let z = self.z_nu();
        let half_d = self.d as f64 / 2.0;
        let mut c_k_l2 = None;
        let mut psi_l2_sq = None;
        if let KernelFamily::InverseMultiquadric { c, gamma } = self.family {
            if gamma > self.d as f64 / 4.0 {
                // |psi|^2 = c^{d - 4 gamma} pi^{d/2} Gamma(2 gamma - d/2) / Gamma(2 gamma)
                let v = c.powf(self.d as f64 - 4.0 * gamma)
                    * std::f64::consts::PI.powf(half_d)
                    * (ln_gamma(2.0 * gamma - half_d) - ln_gamma(2.0 * gamma)).exp();
                psi_l2_sq = Some(v);
                c_k_l2 = Some(v);
            }
        } else if self.nu.moment_condition_holds(self.d) {
            if let Ok(m) = self.nu.neg_moment(half_d) {
                c_k_l2 = Some(z * (std::f64::consts::PI / 2.0).powf(half_d) * m);
            }
            psi_l2_sq = self.psi_l2_cross(0.0).ok();
        }
        KernelConstants { z_nu: z, c_k_rkhs: z, c_k_l2, psi_l2_sq }
    }
}

/// JSON description of a kernel, the on-disk interchange format:
/// `{"family": "...", "d": ..., "params": {...}}` for the named families, or
/// `{"family": "custom", "d": ..., "atoms": [[t, mass], ...], "gamma": [...],
/// "invgamma": [...]}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: String,
    pub d: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<KernelParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<GammaComponent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invgamma: Vec<InvGammaComponent>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl KernelSpec {
    pub fn build(&self) -> Result<RadialKernel> {
        let missing = |what: &str| KmeError::InvalidKernel(format!("{}: missing parameter {what}", self.family));
        let p = self.params.clone().unwrap_or_default();
        match self.family.as_str() {
            "gaussian" => RadialKernel::gaussian(p.eta.ok_or_else(|| missing("eta"))?, self.d),
            "gaussian_mixture" => RadialKernel::gaussian_mixture(
                &p.betas.ok_or_else(|| missing("betas"))?,
                &p.etas.ok_or_else(|| missing("etas"))?,
                self.d,
            ),
            "inverse_multiquadric" => RadialKernel::inverse_multiquadric(
                p.c.ok_or_else(|| missing("c"))?,
                p.gamma.ok_or_else(|| missing("gamma"))?,
                self.d,
            ),
            "matern" => RadialKernel::matern(
                p.tau.ok_or_else(|| missing("tau"))?,
                p.c.ok_or_else(|| missing("c"))?,
                self.d,
            ),
            "custom" => {
                let nu = NuMeasure::new(self.atoms.clone(), self.gamma.clone(), self.invgamma.clone())?;
                RadialKernel::custom(nu, self.d)
            }
            other => Err(KmeError::InvalidKernel(format!("unknown kernel family '{other}'"))),
        }
    }
}

impl RadialKernel {
    pub fn to_spec(&self) -> KernelSpec {
        let mut spec = KernelSpec { family: self.label().into(), d: self.d, ..Default::default() };
        match &self.family {
            KernelFamily::Gaussian { eta } => {
                spec.params = Some(KernelParams { eta: Some(*eta), ..Default::default() });
            }
            KernelFamily::GaussianMixture { betas, etas } => {
                spec.params = Some(KernelParams {
                    betas: Some(betas.clone()),
                    etas: Some(etas.clone()),
                    ..Default::default()
                });
            }
            KernelFamily::InverseMultiquadric { c, gamma } => {
                spec.params = Some(KernelParams { c: Some(*c), gamma: Some(*gamma), ..Default::default() });
            }
            KernelFamily::Matern { c, tau } => {
                spec.params = Some(KernelParams { c: Some(*c), tau: Some(*tau), ..Default::default() });
            }
            KernelFamily::Custom => {
                spec.atoms = self.nu.atoms.clone();
                spec.gamma = self.nu.gamma_components.clone();
                spec.invgamma = self.nu.invgamma_components.clone();
            }
        }
        spec
    }
}
