//! Minimax lower-bound thresholds, per-family spectral-measure constants,
//! and numerical estimation of the local strong-convexity constants of the
//! squared embedding distance.
//!
//! Bound identifiers (`thm1`, `cor2`, `thm6`, `thm8`, `thm9`, `cor10`,
//! `thm12`, `thm13`, `thmE1`) are opaque tags forming the external report
//! interface; each maps to one lower-bound construction below.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist, InverseGamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{KmeError, Result};
use crate::estimator::Norm;
use crate::kernel::{KernelFamily, RadialKernel};
use crate::lecam::lecam_two;
use crate::measure::NuMeasure;
use crate::quad::{
    integrate_nu, integrate_nu_double, QuadratureResult, DEFAULT_ABS_TOL, DEFAULT_REL_TOL,
};

fn converged(q: QuadratureResult) -> Result<QuadratureResult> {
    if q.converged {
        Ok(q)
    } else {
        Err(KmeError::IntegrationFailure { error_estimate: q.error_estimate })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Precondition {
    pub name: String,
    pub satisfied: bool,
    pub detail: String,
}

/// A fully evaluated lower-bound statement: with probability at least
/// `floor`, every estimator's worst-case error is at least `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub id: String,
    pub s: f64,
    pub floor: f64,
    pub preconditions: Vec<Precondition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    pub n: usize,
    pub constants: BTreeMap<String, f64>,
}

impl BoundReport {
    pub fn all_preconditions_hold(&self) -> bool {
        self.preconditions.iter().all(|p| p.satisfied)
    }

    fn checked(self) -> Result<BoundReport> {
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(KmeError::InternalConsistency(format!(
                "bound {}: probability floor {} outside (0, 1)",
                self.id, self.floor
            )));
        }
        if self.all_preconditions_hold() && !(self.s > 0.0) {
            return Err(KmeError::InternalConsistency(format!(
                "bound {}: nonpositive threshold {} with satisfied preconditions",
                self.id, self.s
            )));
        }
        Ok(self)
    }
}

/// Strong-convexity constants of the squared embedding distance between
/// Gaussian locations: the distance expansion holds with modulus `c_psi` for
/// all mean displacements with squared norm at most `eps_psi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongConvexityEstimate {
    pub c_psi: f64,
    pub eps_psi: f64,
    pub sigma2: f64,
    pub d: u32,
    pub quad_tol: f64,
}

fn nu_quantile(nu: &NuMeasure, q: f64) -> Result<f64> {
    let target = q * nu.total_mass();
    let mut hi = 1.0;
    let mut guard = 0;
    while nu.interval_mass(0.0, hi)? < target {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(KmeError::ConstructionFailure(
                "quantile search did not bracket the target mass".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if nu.interval_mass(0.0, mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `(t1, alpha)` with `alpha = nu([t1, inf))`: the reference scale and tail
/// mass entering the two-point discrete lower bounds.
pub fn alpha_for(kernel: &RadialKernel) -> Result<(f64, f64)> {
    match &kernel.family {
        KernelFamily::Gaussian { eta } => Ok((1.0 / (2.0 * eta * eta), 1.0)),
        KernelFamily::GaussianMixture { betas, etas } => {
            let eta1 = etas[0]; // bandwidths sorted descending: smallest scale
            Ok((1.0 / (2.0 * eta1 * eta1), betas.iter().sum()))
        }
        KernelFamily::InverseMultiquadric { c, gamma } => {
            let dist = GammaDist::new(*gamma, c * c)
                .map_err(|e| KmeError::InvalidKernel(e.to_string()))?;
            Ok((dist.inverse_cdf(0.5), c.powf(-2.0 * gamma) / 2.0))
        }
        KernelFamily::Matern { c, tau } => {
            let shape = tau - kernel.d as f64 / 2.0;
            let dist = InverseGamma::new(shape, c * c / 4.0)
                .map_err(|e| KmeError::InvalidKernel(e.to_string()))?;
            Ok((dist.inverse_cdf(0.5), 0.5))
        }
        KernelFamily::Custom => {
            let t1 = nu_quantile(&kernel.nu, 0.5)?;
            Ok((t1, kernel.z_nu() / 2.0))
        }
    }
}

/// Separation point and guaranteed kernel drop: `psi(0) - psi(z) >= beta`
/// at squared separation `z_norm2`.
pub fn find_z_beta(kernel: &RadialKernel) -> Result<(f64, f64)> {
    if let KernelFamily::Custom = kernel.family {
        // Golden-section search of psi(0) - psi(z^2) over log |z|.
        let psi0 = kernel.eval_psi(0.0)?;
        let obj = |ln_z: f64| -> Result<f64> {
            let z = ln_z.exp();
            Ok(psi0 - kernel.eval_psi(z * z)?)
        };
        let (mut a, mut b) = ((1e-3f64).ln(), (1e3f64).ln());
        // Coarse grid to bracket the best cell, then refine.
        let coarse = 64;
        let mut best_i: usize = 0;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..=coarse {
            let x = a + (b - a) * i as f64 / coarse as f64;
            let v = obj(x)?;
            if v > best_v {
                best_v = v;
                best_i = i;
            }
        }
        let step = (b - a) / coarse as f64;
        let lo = a + step * (best_i.saturating_sub(1)) as f64;
        let hi = (a + step * (best_i + 1) as f64).min(b);
        a = lo;
        b = hi;
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let (mut x1, mut x2) = (b - phi * (b - a), a + phi * (b - a));
        let (mut f1, mut f2) = (obj(x1)?, obj(x2)?);
        for _ in 0..80 {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = obj(x2)?;
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = obj(x1)?;
            }
        }
        let z = (0.5 * (a + b)).exp();
        let drop = psi0 - kernel.eval_psi(z * z)?;
        if !(drop > 0.0) {
            return Err(KmeError::InvalidKernel(
                "kernel shows no separation: psi(0) - psi(z) <= 0 at the searched z".into(),
            ));
        }
        return Ok((z * z, drop / 2.0));
    }
    let (t1, alpha) = alpha_for(kernel)?;
    if !(t1 > 0.0) {
        return Err(KmeError::InvalidKernel(
            "degenerate spectral mixing measure: support reduces to {0}".into(),
        ));
    }
    Ok((1.0 / t1, alpha / 2.0))
}

/// `(lo, hi, beta)` window with `nu([lo, hi]) >= beta`, the per-family scale
/// window shared by all D-constant definitions.
fn d_window(kernel: &RadialKernel) -> Result<(f64, f64, f64)> {
    match &kernel.family {
        KernelFamily::Gaussian { eta } => {
            let t = 1.0 / (2.0 * eta * eta);
            Ok((t, t, 1.0))
        }
        KernelFamily::GaussianMixture { betas, etas } => {
            let eta1 = etas[0];
            let eta_m = *etas.last().expect("nonempty");
            Ok((
                1.0 / (2.0 * eta1 * eta1),
                1.0 / (2.0 * eta_m * eta_m),
                betas.iter().sum(),
            ))
        }
        KernelFamily::InverseMultiquadric { c, gamma } => {
            let g = *gamma;
            let z = c.powf(-2.0 * g);
            // Boundary gamma = 1 takes the first branch.
            let beta = if g >= 1.0 {
                z * (-ln_gamma(g)).exp() * (g / (2.0 * std::f64::consts::E)).powf(g)
            } else {
                z / 2.0 * (-ln_gamma(g)).exp() * (g / std::f64::consts::E).powf(g)
            };
            Ok((g / (2.0 * c * c), g / (c * c), beta))
        }
        KernelFamily::Matern { c, tau } => {
            let g = tau - kernel.d as f64 / 2.0;
            if !(g > 0.0) {
                return Err(KmeError::InvalidKernel(format!(
                    "smoothness {tau} must exceed d/2 = {}",
                    kernel.d as f64 / 2.0
                )));
            }
            let beta = if g >= 1.0 {
                (-ln_gamma(g)).exp() * (g / (2.0 * std::f64::consts::E)).powf(g)
            } else {
                0.5 * (-ln_gamma(g)).exp() * (g / std::f64::consts::E).powf(g)
            };
            Ok((c * c / (4.0 * g), c * c / (2.0 * g), beta))
        }
        KernelFamily::Custom => {
            // No printed constants exist; use the interquartile window of nu,
            // whose mass is computed exactly.
            let lo = nu_quantile(&kernel.nu, 0.25)?;
            let hi = nu_quantile(&kernel.nu, 0.75)?;
            let beta = kernel.nu.interval_mass(lo, hi)?;
            if !(beta > 0.0) {
                return Err(KmeError::InvalidKernel(
                    "interquartile window of nu carries no mass".into(),
                ));
            }
            Ok((lo, hi, beta))
        }
    }
}

/// `(t0, t1, beta, B_k)` with `B_k = beta t0 / t1`.
pub fn bk_for(kernel: &RadialKernel) -> Result<(f64, f64, f64, f64)> {
    let (t0, t1, beta) = d_window(kernel)?;
    Ok((t0, t1, beta, beta * t0 / t1))
}

/// `(delta0, delta1, beta, A_k)` with `A_k = beta^2 delta1^{-d/2}`.
pub fn ak_for(kernel: &RadialKernel) -> Result<(f64, f64, f64, f64)> {
    let (d0, d1, beta) = d_window(kernel)?;
    Ok((d0, d1, beta, beta * beta * d1.powf(-(kernel.d as f64) / 2.0)))
}

/// `(delta0, delta1, beta, B_k_l2)` with
/// `B_k_l2 = beta^2 delta0 delta1^{-(d+2)/2}`.
pub fn bk_l2_for(kernel: &RadialKernel) -> Result<(f64, f64, f64, f64)> {
    let (d0, d1, beta) = d_window(kernel)?;
    Ok((d0, d1, beta, beta * beta * d0 * d1.powf(-(kernel.d as f64 + 2.0) / 2.0)))
}

fn base_report(id: &str, n: usize) -> BoundReport {
    BoundReport {
        id: id.into(),
        s: 0.0,
        floor: 0.0,
        preconditions: Vec::new(),
        kernel: None,
        d: None,
        n,
        constants: BTreeMap::new(),
    }
}

/// Two-point lower bound from a kernel drop `beta`: threshold
/// `(1/6) sqrt(2 beta / n)`, floor 1/4.
pub fn bound_thm1(beta: f64, n: usize) -> Result<BoundReport> {
    if !(beta > 0.0) || n < 1 {
        return Err(KmeError::InvalidArgument(format!(
            "need beta > 0 (got {beta}) and n >= 1 (got {n})"
        )));
    }
    let mut r = base_report("thm1", n);
    r.s = (2.0 * beta / n as f64).sqrt() / 6.0;
    r.floor = 0.25;
    r.constants.insert("beta".into(), beta);
    r.preconditions.push(Precondition {
        name: "positive_separation_drop".into(),
        satisfied: true,
        detail: format!("beta = {beta}"),
    });
    r.checked()
}

/// Radial-kernel specialization: threshold `(1/6) sqrt(alpha / n)`, floor 1/4.
pub fn bound_cor2(alpha: f64, n: usize) -> Result<BoundReport> {
    if !(alpha > 0.0) || n < 1 {
        return Err(KmeError::InvalidArgument(format!(
            "need alpha > 0 (got {alpha}) and n >= 1 (got {n})"
        )));
    }
    let mut r = base_report("cor2", n);
    r.s = (alpha / n as f64).sqrt() / 6.0;
    r.floor = 0.25;
    r.constants.insert("alpha".into(), alpha);
    r.preconditions.push(Precondition {
        name: "positive_tail_mass".into(),
        satisfied: true,
        detail: format!("alpha = {alpha}"),
    });
    r.checked()
}

/// Multi-hypothesis Gaussian-family lower bound in the RKHS norm:
/// `(1/50) sqrt((1/n)(beta t0/(t1 e))(1 - 2/(2+d)))`, floor 1/5. Records the
/// construction's variance `sigma2 = 1/(2 t1 d)` and ball constant `c_nu`.
pub fn bound_thm8(kernel: &RadialKernel, n: usize) -> Result<BoundReport> {
    if n < 1 {
        return Err(KmeError::InvalidArgument("n must be >= 1".into()));
    }
    let (t0, t1, beta, bk) = bk_for(kernel)?;
    let d = kernel.d as f64;
    let nf = n as f64;
    let shrink = 1.0 - 2.0 / (2.0 + d);
    let mut r = base_report("thm8", n);
    r.kernel = Some(kernel.family.label().into());
    r.d = Some(kernel.d);
    r.s = ((1.0 / nf) * (beta * t0 / (t1 * std::f64::consts::E)) * shrink).sqrt() / 50.0;
    r.floor = 0.2;
    let sigma2 = 1.0 / (2.0 * t1 * d);
    let n_pack = 5.0f64;
    let c_nu = (n_pack.ln() - 1.0 / (n_pack - 1.0)) / (32.0 * t1);
    for (k, v) in [
        ("t0", t0),
        ("t1", t1),
        ("beta", beta),
        ("B_k", bk),
        ("sigma2", sigma2),
        ("c_nu", c_nu),
    ] {
        r.constants.insert(k.into(), v);
    }
    r.preconditions.push(Precondition {
        name: "nu_support_nontrivial".into(),
        satisfied: true,
        detail: "spectral mixing measure has positive mass away from 0".into(),
    });
    r.checked()
}

/// Discrete two-point lower bound in the L2 norm: `(1/6) sqrt(C_z / n)` with
/// `C_z = 2 (cross(0) - cross(z_norm2))`, floor 1/4.
pub fn bound_thm9(kernel: &RadialKernel, z_norm2: f64, n: usize) -> Result<BoundReport> {
    if n < 1 || !(z_norm2 > 0.0) {
        return Err(KmeError::InvalidArgument(
            "need n >= 1 and z_norm2 > 0".into(),
        ));
    }
    kernel.require_moment_condition()?;
    let c0 = kernel.psi_l2_cross(0.0)?;
    let cz = kernel.psi_l2_cross(z_norm2)?;
    let c_z = 2.0 * (c0 - cz);
    if !(c_z > 0.0) {
        return Err(KmeError::InternalConsistency(format!(
            "nonpositive separation constant {c_z}; contradicts strict positive definiteness"
        )));
    }
    let mut r = base_report("thm9", n);
    r.kernel = Some(kernel.family.label().into());
    r.d = Some(kernel.d);
    r.s = (c_z / n as f64).sqrt() / 6.0;
    r.floor = 0.25;
    r.constants.insert("C_z".into(), c_z);
    r.constants.insert("z_norm2".into(), z_norm2);
    r.preconditions.push(Precondition {
        name: "square_integrable_profile".into(),
        satisfied: true,
        detail: "int t^{-d/2} dnu(t) finite".into(),
    });
    r.checked()
}

/// Radial specialization of the discrete L2 bound:
/// `(beta/6) sqrt((1/n)(pi/(2 delta1))^{d/2})`, floor 1/4. The separation
/// point `z` is enlarged by doubling until
/// `cross(0) - cross(z) >= (beta^2/2)(pi/(2 delta1))^{d/2}`.
pub fn bound_cor10(kernel: &RadialKernel, n: usize) -> Result<BoundReport> {
    if n < 1 {
        return Err(KmeError::InvalidArgument("n must be >= 1".into()));
    }
    kernel.require_moment_condition()?;
    let (d0, d1, beta, ak) = ak_for(kernel)?;
    let d = kernel.d as f64;
    let target = beta * beta / 2.0 * (std::f64::consts::PI / (2.0 * d1)).powf(d / 2.0);
    let c0 = kernel.psi_l2_cross(0.0)?;
    let mut z2 = 1.0 / d1;
    let mut ok = false;
    for _ in 0..=60 {
        if c0 - kernel.psi_l2_cross(z2)? >= target {
            ok = true;
            break;
        }
        z2 *= 2.0;
    }
    if !ok {
        return Err(KmeError::ConstructionFailure(format!(
            "no separation point found within 60 doublings: cross-correlation drop never reaches {target}"
        )));
    }
    let mut r = base_report("cor10", n);
    r.kernel = Some(kernel.family.label().into());
    r.d = Some(kernel.d);
    r.s = beta / 6.0 * ((1.0 / n as f64) * (std::f64::consts::PI / (2.0 * d1)).powf(d / 2.0)).sqrt();
    r.floor = 0.25;
    for (k, v) in [("delta0", d0), ("delta1", d1), ("beta", beta), ("A_k", ak), ("z_norm2", z2)] {
        r.constants.insert(k.into(), v);
    }
    r.preconditions.push(Precondition {
        name: "separation_slack".into(),
        satisfied: true,
        detail: format!("cross(0) - cross(z) >= {target} at z_norm2 = {z2}"),
    });
    r.checked()
}

/// Multi-hypothesis smooth-density lower bound in the L2 norm:
/// `(1/50) sqrt((1/n)(pi/(2 delta1))^{d/2}(beta^2 delta0/(delta1 e))(1 - 2/(2+d)))`,
/// floor 1/5. Records `sigma2 = 1/(delta1 d)` and `c_nu` for the hard-family
/// construction.
pub fn bound_thm13(kernel: &RadialKernel, n: usize) -> Result<BoundReport> {
    if n < 1 {
        return Err(KmeError::InvalidArgument("n must be >= 1".into()));
    }
    kernel.require_moment_condition()?;
    let (d0, d1, beta, bkl2) = bk_l2_for(kernel)?;
    let d = kernel.d as f64;
    let shrink = 1.0 - 2.0 / (2.0 + d);
    let mut r = base_report("thm13", n);
    r.kernel = Some(kernel.family.label().into());
    r.d = Some(kernel.d);
    r.s = ((1.0 / n as f64)
        * (std::f64::consts::PI / (2.0 * d1)).powf(d / 2.0)
        * (beta * beta * d0 / (d1 * std::f64::consts::E))
        * shrink)
        .sqrt()
        / 50.0;
    r.floor = 0.2;
    let sigma2 = 1.0 / (d1 * d);
    let n_pack = 5.0f64;
    let c_nu = (n_pack.ln() - 1.0 / (n_pack - 1.0)) / (16.0 * d1);
    for (k, v) in [
        ("delta0", d0),
        ("delta1", d1),
        ("beta", beta),
        ("B_k_l2", bkl2),
        ("sigma2", sigma2),
        ("c_nu", c_nu),
    ] {
        r.constants.insert(k.into(), v);
    }
    r.preconditions.push(Precondition {
        name: "square_integrable_profile".into(),
        satisfied: true,
        detail: "int t^{-d/2} dnu(t) finite".into(),
    });
    r.checked()
}

/// Spectral variant of the multi-hypothesis RKHS bound:
/// `(1/50) sqrt((1/(2n))(beta t0/(t1 e))(1 - 2/(2+d)))`, floor 1/5, with the
/// extra sample-size requirement `n >= 24 t1 Z_nu / (beta t0)` (reduces to
/// `n >= 24` for the Gaussian family).
pub fn bound_thm_e1(kernel: &RadialKernel, n: usize) -> Result<BoundReport> {
    if n < 1 {
        return Err(KmeError::InvalidArgument("n must be >= 1".into()));
    }
    let (t0, t1, beta, bk) = bk_for(kernel)?;
    let d = kernel.d as f64;
    let shrink = 1.0 - 2.0 / (2.0 + d);
    let z_nu = kernel.z_nu();
    let n_min = 24.0 * t1 * z_nu / (beta * t0);
    let mut r = base_report("thmE1", n);
    r.kernel = Some(kernel.family.label().into());
    r.d = Some(kernel.d);
    r.s = ((1.0 / (2.0 * n as f64)) * (beta * t0 / (t1 * std::f64::consts::E)) * shrink).sqrt()
        / 50.0;
    r.floor = 0.2;
    for (k, v) in [("t0", t0), ("t1", t1), ("beta", beta), ("B_k", bk), ("n_min", n_min)] {
        r.constants.insert(k.into(), v);
    }
    r.preconditions.push(Precondition {
        name: "minimum_sample_size".into(),
        satisfied: n as f64 >= n_min,
        detail: format!("n = {n} vs required {n_min}"),
    });
    r.checked()
}

fn thm6_like(id: &str, c_psi: f64, eps_psi: f64, n: usize) -> Result<BoundReport> {
    if !(c_psi > 0.0 && eps_psi > 0.0) || n < 1 {
        return Err(KmeError::InvalidArgument(format!(
            "need c_psi > 0 (got {c_psi}), eps_psi > 0 (got {eps_psi}), n >= 1 (got {n})"
        )));
    }
    let mut r = base_report(id, n);
    r.s = 0.5 * (c_psi / (2.0 * n as f64)).sqrt();
    r.floor = 0.25;
    r.constants.insert("c_psi".into(), c_psi);
    r.constants.insert("eps_psi".into(), eps_psi);
    let ok = n as f64 >= 1.0 / eps_psi;
    r.preconditions.push(Precondition {
        name: "sample_size_covers_convexity_radius".into(),
        satisfied: ok,
        detail: format!("n = {n} vs required {}", 1.0 / eps_psi),
    });
    if !ok {
        // Restricted-radius fallback: shrink the displacement to the
        // convexity ball and pay the two-point floor at budget eps/2.
        r.constants.insert("fallback_s".into(), r.s * eps_psi.sqrt());
        r.constants.insert("fallback_floor".into(), lecam_two(eps_psi / 2.0)?);
    }
    r.checked()
}

/// Gaussian-family lower bound in the RKHS norm from strong convexity:
/// `(1/2) sqrt(c_psi/(2n))`, floor 1/4, requiring `n >= 1/eps_psi`.
pub fn bound_thm6(c_psi: f64, eps_psi: f64, n: usize) -> Result<BoundReport> {
    thm6_like("thm6", c_psi, eps_psi, n)
}

/// Same construction in the L2 norm.
pub fn bound_thm12(c_psi: f64, eps_psi: f64, n: usize) -> Result<BoundReport> {
    thm6_like("thm12", c_psi, eps_psi, n)
}

// -------- strong convexity estimation --------

/// Unit directions used for the sphere minimization, by dimension.
fn sphere_grid(d: u32) -> Result<Vec<Vec<f64>>> {
    Ok(match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..129)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / 129.0;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            // Deterministic Fibonacci spiral.
            let n = 1000;
            let ga = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = ga * i as f64;
                    vec![rho * phi.cos(), rho * phi.sin(), z]
                })
                .collect()
        }
        4 => {
            // Spherical-coordinate product grid.
            let (n1, n2, n3) = (9, 9, 18);
            let mut out = Vec::new();
            for i in 0..n1 {
                let t1 = std::f64::consts::PI * (i as f64 + 0.5) / n1 as f64;
                for j in 0..n2 {
                    let t2 = std::f64::consts::PI * (j as f64 + 0.5) / n2 as f64;
                    for k in 0..n3 {
                        let t3 = 2.0 * std::f64::consts::PI * k as f64 / n3 as f64;
                        out.push(vec![
                            t1.cos(),
                            t1.sin() * t2.cos(),
                            t1.sin() * t2.sin() * t3.cos(),
                            t1.sin() * t2.sin() * t3.sin(),
                        ]);
                    }
                }
            }
            out
        }
        _ => {
            return Err(KmeError::Unsupported(format!(
                "strong-convexity estimation supports d <= 4, got {d}"
            )))
        }
    })
}

struct Curvature<'a> {
    kernel: &'a RadialKernel,
    sigma2: f64,
    d: f64,
    norm: Norm,
    quad_tol: std::cell::Cell<f64>,
}

impl Curvature<'_> {
    /// Second directional derivative kernel split as
    /// `F(r2, c2) = g1(r2) - r2 * c2 * g2(r2)` where `c` is the cosine
    /// between the displacement and the probe direction.
    fn parts(&self, r2: f64) -> Result<(f64, f64)> {
        let d = self.d;
        let s2 = self.sigma2;
        match self.norm {
            Norm::Rkhs => {
                let g1 = converged(integrate_nu(
                    &|t| {
                        let a = 4.0 * s2 * t + 1.0;
                        4.0 * t * a.powf(-(d + 2.0) / 2.0) * (-t * r2 / a).exp()
                    },
                    &self.kernel.nu,
                    DEFAULT_ABS_TOL,
                    DEFAULT_REL_TOL,
                ))?;
                let g2 = converged(integrate_nu(
                    &|t| {
                        let a = 4.0 * s2 * t + 1.0;
                        8.0 * t * t * a.powf(-(d + 4.0) / 2.0) * (-t * r2 / a).exp()
                    },
                    &self.kernel.nu,
                    DEFAULT_ABS_TOL,
                    DEFAULT_REL_TOL,
                ))?;
                self.quad_tol.set(
                    self.quad_tol.get().max(g1.error_estimate).max(g2.error_estimate),
                );
                Ok((g1.value, g2.value))
            }
            Norm::L2 => {
                let base = |t1: f64, t2: f64| {
                    let delta = 2.0 * s2 + 0.5 / t1 + 0.5 / t2;
                    (2.0 * t1).powf(-d / 2.0)
                        * (2.0 * t2).powf(-d / 2.0)
                        * (2.0 * std::f64::consts::PI / delta).powf(d / 2.0)
                        * (1.0 / delta)
                        * (-r2 / (2.0 * delta)).exp()
                };
                let g1 = converged(integrate_nu_double(
                    &|t1, t2| 2.0 * base(t1, t2),
                    &self.kernel.nu,
                    DEFAULT_ABS_TOL,
                    DEFAULT_REL_TOL,
                ))?;
                let g2 = converged(integrate_nu_double(
                    &|t1, t2| {
                        let delta = 2.0 * s2 + 0.5 / t1 + 0.5 / t2;
                        2.0 * base(t1, t2) / delta
                    },
                    &self.kernel.nu,
                    DEFAULT_ABS_TOL,
                    DEFAULT_REL_TOL,
                ))?;
                self.quad_tol.set(
                    self.quad_tol.get().max(g1.error_estimate).max(g2.error_estimate),
                );
                Ok((g1.value, g2.value))
            }
        }
    }

    /// Minimum of F over the direction grid at displacement norm^2 `r2`;
    /// F is affine in c^2, so the minimum sits at an extreme grid value.
    fn min_over_directions(&self, r2: f64, c2_lo: f64, c2_hi: f64) -> Result<f64> {
        let (g1, g2) = self.parts(r2)?;
        let cand_lo = g1 - r2 * c2_lo * g2;
        let cand_hi = g1 - r2 * c2_hi * g2;
        Ok(cand_lo.min(cand_hi))
    }
}

/// Estimate `(c_psi, eps_psi)`: the largest displacement radius (squared)
/// on a doubling/bisection schedule such that the directional curvature
/// stays above half its value at zero, together with the curvature minimum
/// on that ball.
pub fn estimate_cpsi_eps(
    kernel: &RadialKernel,
    sigma2: f64,
    d: u32,
    mode: Norm,
) -> Result<StrongConvexityEstimate> {
    if !(sigma2 > 0.0) {
        return Err(KmeError::InvalidArgument("sigma2 must be positive".into()));
    }
    if d != kernel.d {
        return Err(KmeError::InvalidArgument(format!(
            "dimension {d} does not match the kernel's dimension {}",
            kernel.d
        )));
    }
    if mode == Norm::L2 {
        kernel.require_moment_condition()?;
    }
    let grid = sphere_grid(d)?;
    let mut c2_lo = f64::INFINITY;
    let mut c2_hi = f64::NEG_INFINITY;
    for e in &grid {
        let c2 = e[0] * e[0]; // displacement along the first axis w.l.o.g.
        c2_lo = c2_lo.min(c2);
        c2_hi = c2_hi.max(c2);
    }
    let cur = Curvature {
        kernel,
        sigma2,
        d: d as f64,
        norm: mode,
        quad_tol: std::cell::Cell::new(0.0),
    };
    let (f0, _) = cur.parts(0.0)?;
    if !(f0 > 0.0) {
        return Err(KmeError::InternalConsistency(format!(
            "curvature at zero displacement is {f0} <= 0; contradicts strict positive definiteness"
        )));
    }
    let r_steps = 16;
    let ball_min = |eps: f64| -> Result<f64> {
        let mut m = f64::INFINITY;
        for k in 1..=r_steps {
            let r2 = eps * k as f64 / r_steps as f64;
            m = m.min(cur.min_over_directions(r2, c2_lo, c2_hi)?);
        }
        Ok(m)
    };
    let ok = |eps: f64| -> Result<bool> { Ok(ball_min(eps)? >= f0 / 2.0) };

    let mut eps = 1e-3;
    if !ok(eps)? {
        let mut found = false;
        for _ in 0..60 {
            eps /= 2.0;
            if ok(eps)? {
                found = true;
                break;
            }
        }
        if !found {
            return Err(KmeError::InternalConsistency(
                "curvature drops below half its central value at arbitrarily small displacement"
                    .into(),
            ));
        }
    }
    let mut good = eps;
    let mut bad = None;
    for _ in 0..60 {
        let next = good * 2.0;
        if ok(next)? {
            good = next;
        } else {
            bad = Some(next);
            break;
        }
    }
    if let Some(mut b) = bad {
        for _ in 0..50 {
            let mid = 0.5 * (good + b);
            if ok(mid)? {
                good = mid;
            } else {
                b = mid;
            }
        }
    }
    let c_psi = ball_min(good)?;
    Ok(StrongConvexityEstimate {
        c_psi,
        eps_psi: good,
        sigma2,
        d,
        quad_tol: cur.quad_tol.get(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rkhs_gauss_dist2, IsotropicGaussian};
    use crate::measure::GammaComponent;
    use approx::assert_relative_eq;

    fn gaussian(d: u32) -> RadialKernel {
        RadialKernel::gaussian(1.0, d).unwrap()
    }
    fn mixture(d: u32) -> RadialKernel {
        RadialKernel::gaussian_mixture(&[0.6, 0.4], &[1.0, 0.5], d).unwrap()
    }
    fn imq(d: u32) -> RadialKernel {
        RadialKernel::inverse_multiquadric(1.0, 2.0, d).unwrap()
    }
    fn matern(d: u32) -> RadialKernel {
        RadialKernel::matern(d as f64 / 2.0 + 1.5, 1.0, d).unwrap()
    }

    #[test]
    fn alpha_values_per_family() {
        let (t1, a) = alpha_for(&gaussian(1)).unwrap();
        assert_relative_eq!(t1, 0.5);
        assert_relative_eq!(a, 1.0);
        let (t1, a) = alpha_for(&mixture(1)).unwrap();
        assert_relative_eq!(t1, 0.5);
        assert_relative_eq!(a, 1.0, max_relative = 1e-12);
        let (t1, a) = alpha_for(&imq(1)).unwrap();
        assert_relative_eq!(a, 0.5);
        // median of Gamma(2, rate 1): F(x) = 1 - e^{-x}(1+x) = 1/2
        assert_relative_eq!(t1, 1.6783469900166605, max_relative = 1e-7);
        let (_, a) = alpha_for(&matern(1)).unwrap();
        assert_relative_eq!(a, 0.5);
        // tail mass above the reported scale really is alpha
        for k in [gaussian(2), mixture(2), imq(2), matern(2)] {
            let (t1, a) = alpha_for(&k).unwrap();
            let tail = k.nu_interval_mass(t1, f64::INFINITY).unwrap();
            assert_relative_eq!(tail, a, max_relative = 1e-6);
        }
    }

    #[test]
    fn z_beta_radial_and_custom() {
        let (z2, beta) = find_z_beta(&gaussian(1)).unwrap();
        assert_relative_eq!(z2, 2.0);
        assert_relative_eq!(beta, 0.5);
        // custom: mass scaling scales beta linearly
        let nu = NuMeasure::from_atoms(vec![(0.5, 1.0)]).unwrap();
        let k1 = RadialKernel::custom(nu, 1).unwrap();
        let nu2 = NuMeasure::from_atoms(vec![(0.5, 3.0)]).unwrap();
        let k3 = RadialKernel::custom(nu2, 1).unwrap();
        let (_, b1) = find_z_beta(&k1).unwrap();
        let (_, b3) = find_z_beta(&k3).unwrap();
        assert_relative_eq!(b3, 3.0 * b1, max_relative = 1e-9);
    }

    #[test]
    fn window_constants_per_family() {
        let (t0, t1, beta, bk) = bk_for(&gaussian(1)).unwrap();
        assert_relative_eq!(t0, 0.5);
        assert_relative_eq!(t1, 0.5);
        assert_relative_eq!(beta, 1.0);
        assert_relative_eq!(bk, 1.0);

        // mixture: window spans the atom range; B_k = C_M eta_M^2 / eta_1^2
        let (t0, t1, beta, bk) = bk_for(&mixture(1)).unwrap();
        assert_relative_eq!(t0, 0.5);
        assert_relative_eq!(t1, 2.0);
        assert_relative_eq!(beta, 1.0, max_relative = 1e-12);
        assert_relative_eq!(bk, 1.0 * 0.25 / 1.0, max_relative = 1e-12);

        // IMQ gamma = 2 >= 1: beta = (1/Gamma(2))(2/(2e))^2 = e^{-2}
        let (t0, t1, beta, bk) = bk_for(&imq(1)).unwrap();
        assert_relative_eq!(t0, 1.0);
        assert_relative_eq!(t1, 2.0);
        assert_relative_eq!(beta, (-2.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(bk, beta / 2.0, max_relative = 1e-12);

        // Matern with smoothness excess 3/2: window [1/6, 1/3],
        // beta = (1/Gamma(3/2))(3/(4e))^{3/2}
        let (t0, t1, beta, _) = bk_for(&matern(1)).unwrap();
        assert_relative_eq!(t0, 1.0 / 6.0, max_relative = 1e-14);
        assert_relative_eq!(t1, 1.0 / 3.0, max_relative = 1e-14);
        let expect =
            (2.0 / std::f64::consts::PI.sqrt()) * (1.5 / (2.0 * std::f64::consts::E)).powf(1.5);
        assert_relative_eq!(beta, expect, max_relative = 1e-12);

        // A_k for the Gaussian family: (2 eta^2)^{d/2}
        for d in [1u32, 2, 3] {
            let (.., ak) = ak_for(&gaussian(d)).unwrap();
            assert_relative_eq!(ak, 2.0f64.powf(d as f64 / 2.0), max_relative = 1e-12);
            let (.., bl) = bk_l2_for(&gaussian(d)).unwrap();
            assert_relative_eq!(bl, 2.0f64.powf(d as f64 / 2.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn window_mass_dominates_beta() {
        let custom = RadialKernel::custom(
            NuMeasure::new(
                vec![(0.3, 0.2)],
                vec![GammaComponent { shape: 3.0, rate: 1.5, weight: 0.8 }],
                vec![],
            )
            .unwrap(),
            1,
        )
        .unwrap();
        for k in [gaussian(1), mixture(2), imq(3), matern(2), custom] {
            let (lo, hi, beta) = d_window(&k).unwrap();
            let mass = k.nu_interval_mass(lo, hi).unwrap();
            assert!(
                mass >= beta - 1e-9,
                "{}: mass {mass} < beta {beta}",
                k.family.label()
            );
        }
    }

    #[test]
    fn two_point_thresholds() {
        let r = bound_thm1(0.5, 50).unwrap();
        assert_relative_eq!(r.s, (1.0f64 / 50.0).sqrt() / 6.0, max_relative = 1e-15);
        assert_relative_eq!(r.floor, 0.25);

        let (_, alpha) = alpha_for(&gaussian(1)).unwrap();
        let r = bound_cor2(alpha, 100).unwrap();
        assert_relative_eq!(r.s, 1.0 / 60.0, max_relative = 1e-15);

        assert!(bound_thm1(0.0, 10).is_err());
        assert!(bound_cor2(-1.0, 10).is_err());
    }

    #[test]
    fn thm8_example_and_monotonicity() {
        let r = bound_thm8(&gaussian(1), 100).unwrap();
        let expect = ((1.0 / 100.0) * (1.0 / std::f64::consts::E) * (1.0 / 3.0)).sqrt() / 50.0;
        assert_relative_eq!(r.s, expect, max_relative = 1e-15);
        assert_relative_eq!(r.floor, 0.2);
        assert_relative_eq!(r.constants["sigma2"], 1.0 / (2.0 * 0.5 * 1.0));

        let mut last = 0.0;
        for d in 1..=10 {
            let s = bound_thm8(&gaussian(d), 100).unwrap().s;
            assert!(s > last, "threshold should grow with d");
            last = s;
        }
    }

    #[test]
    fn inverse_sqrt_n_scaling_everywhere() {
        let k = gaussian(2);
        let sc = |a: &BoundReport, b: &BoundReport| {
            assert_relative_eq!(a.s, 2.0 * b.s, max_relative = 1e-12);
        };
        sc(&bound_thm1(0.5, 100).unwrap(), &bound_thm1(0.5, 400).unwrap());
        sc(&bound_cor2(1.0, 100).unwrap(), &bound_cor2(1.0, 400).unwrap());
        sc(&bound_thm8(&k, 100).unwrap(), &bound_thm8(&k, 400).unwrap());
        sc(&bound_thm9(&k, 2.0, 100).unwrap(), &bound_thm9(&k, 2.0, 400).unwrap());
        sc(&bound_cor10(&k, 100).unwrap(), &bound_cor10(&k, 400).unwrap());
        sc(&bound_thm13(&k, 100).unwrap(), &bound_thm13(&k, 400).unwrap());
        sc(&bound_thm_e1(&k, 100).unwrap(), &bound_thm_e1(&k, 400).unwrap());
        sc(&bound_thm6(0.3, 0.5, 100).unwrap(), &bound_thm6(0.3, 0.5, 400).unwrap());
    }

    #[test]
    fn thm9_constant_positive_and_exact_for_gaussian() {
        let r = bound_thm9(&gaussian(1), 2.0, 100).unwrap();
        // cross(z2) = sqrt(pi) e^{-z2/4} for the unit-bandwidth Gaussian
        let c_expect = 2.0 * std::f64::consts::PI.sqrt() * (1.0 - (-0.5f64).exp());
        assert_relative_eq!(r.constants["C_z"], c_expect, max_relative = 1e-10);
        assert_relative_eq!(r.s, (c_expect / 100.0).sqrt() / 6.0, max_relative = 1e-10);
    }

    #[test]
    fn cor10_gaussian_example() {
        let r = bound_cor10(&gaussian(1), 100).unwrap();
        let expect = (1.0 / 6.0) * 0.1 * std::f64::consts::PI.powf(0.25);
        assert_relative_eq!(r.s, expect, max_relative = 1e-12);
        assert!(r.all_preconditions_hold());
    }

    #[test]
    fn thm13_runs_for_density_families() {
        for k in [imq(1), matern(2)] {
            let r = bound_thm13(&k, 100).unwrap();
            assert!(r.s > 0.0);
        }
    }

    #[test]
    fn thm_e1_relation_and_boundary() {
        for d in [1u32, 2, 3] {
            let a = bound_thm8(&gaussian(d), 100).unwrap();
            let b = bound_thm_e1(&gaussian(d), 100).unwrap();
            assert_relative_eq!(b.s, a.s / 2.0f64.sqrt(), max_relative = 1e-12);
        }
        assert!(bound_thm_e1(&gaussian(1), 24).unwrap().all_preconditions_hold());
        assert!(!bound_thm_e1(&gaussian(1), 23).unwrap().all_preconditions_hold());
    }

    #[test]
    fn thm6_boundary_and_fallback() {
        let eps = 0.013f64;
        let n_req = (1.0 / eps).ceil() as usize; // 77
        let ok = bound_thm6(0.4, eps, n_req).unwrap();
        assert!(ok.all_preconditions_hold());
        let bad = bound_thm6(0.4, eps, n_req - 1).unwrap();
        assert!(!bad.all_preconditions_hold());
        assert_relative_eq!(
            bad.constants["fallback_s"],
            bad.s * eps.sqrt(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            bad.constants["fallback_floor"],
            crate::lecam::lecam_two(eps / 2.0).unwrap(),
            max_relative = 1e-15
        );
        // At eps_psi = 1 the second branch of the fallback floor wins: 1/4
        // (the exponential branch only gives e^{-1/2}/4).
        assert_relative_eq!(
            crate::lecam::lecam_two(0.5).unwrap(),
            0.25,
            max_relative = 1e-15
        );
    }

    #[test]
    fn curvature_central_values_gaussian() {
        let est = estimate_cpsi_eps(&gaussian(1), 1.0, 1, Norm::Rkhs).unwrap();
        let f0 = 2.0 / (3.0 * 3.0f64.sqrt());
        assert!(est.c_psi <= f0 + 1e-12);
        assert!(est.c_psi >= f0 / 2.0 - 1e-12);
        assert!(est.eps_psi > 0.0);

        let est = estimate_cpsi_eps(&gaussian(1), 1.0, 1, Norm::L2).unwrap();
        let f0_l2 = (std::f64::consts::PI / 2.0).sqrt() / 2.0;
        assert!(est.c_psi <= f0_l2 + 1e-12);
        assert!(est.c_psi >= f0_l2 / 2.0 - 1e-12);
    }

    #[test]
    fn curvature_dimension_ratio_matches_gaussian_prediction() {
        let eta = 1.0f64;
        let mut prev = None;
        for d in 1u32..=3 {
            let k = RadialKernel::gaussian(eta, d).unwrap();
            let est = estimate_cpsi_eps(&k, 1.0, d, Norm::Rkhs).unwrap();
            if let Some(p) = prev {
                let ratio: f64 = est.c_psi / p;
                let predict = (1.0 + 2.0 / (eta * eta)).powf(-0.5);
                assert!(
                    (ratio / predict - 1.0).abs() < 0.2,
                    "d = {d}: ratio {ratio} vs predicted {predict}"
                );
            }
            prev = Some(est.c_psi);
        }
    }

    #[test]
    fn expansion_inequality_inside_ball() {
        let k = gaussian(1);
        let est = estimate_cpsi_eps(&k, 1.0, 1, Norm::Rkhs).unwrap();
        for i in 1..=40 {
            let dm2 = est.eps_psi * i as f64 / 40.0;
            let g0 = IsotropicGaussian::new(vec![0.0], 1.0).unwrap();
            let g1 = IsotropicGaussian::new(vec![dm2.sqrt()], 1.0).unwrap();
            let dist2 = rkhs_gauss_dist2(&k, &g0, &g1).unwrap();
            assert!(
                dist2 >= est.c_psi / 2.0 * dm2 - 1e-12,
                "violation at displacement^2 = {dm2}"
            );
        }
    }
}
