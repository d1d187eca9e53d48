//! Closed-form RKHS and L2 inner products and distances between kernel mean
//! embeddings.
//!
//! All Gaussian formulas assume isotropic covariance `sigma^2 I` shared by
//! the pair; this is the regime the hard-instance constructions live in, and
//! unequal variances are rejected rather than approximated. The small-
//! displacement regime (`|mu0 - mu1|^2` of order `1/n`) is preserved by
//! computing every `1 - exp(-x)` through `expm1`.

use serde::{Deserialize, Serialize};

use crate::error::{KmeError, Result};
use crate::kernel::RadialKernel;
use crate::quad::{self, DEFAULT_ABS_TOL, DEFAULT_REL_TOL};

/// The measure `G(mu, sigma^2 I)` on R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicGaussian {
    pub mu: Vec<f64>,
    pub sigma2: f64,
}

impl IsotropicGaussian {
    pub fn new(mu: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(KmeError::InvalidArgument(format!("sigma2 {sigma2} must be finite and > 0")));
        }
        if mu.is_empty() || mu.iter().any(|x| !x.is_finite()) {
            return Err(KmeError::InvalidArgument("mean vector must be nonempty and finite".into()));
        }
        Ok(IsotropicGaussian { mu, sigma2 })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// The measure `p delta_x + (1 - p) delta_v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPointDiscrete {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub p: f64,
}

impl TwoPointDiscrete {
    pub fn new(x: Vec<f64>, v: Vec<f64>, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(KmeError::InvalidArgument(format!("weight p {p} must lie in (0, 1)")));
        }
        if x.len() != v.len() || x.is_empty() {
            return Err(KmeError::InvalidArgument("atoms must share a nonzero dimension".into()));
        }
        if x == v {
            return Err(KmeError::InvalidArgument("the two atoms must differ".into()));
        }
        Ok(TwoPointDiscrete { x, v, p })
    }
}

/// A finitely supported signed measure; weights sum to 1 for probability
/// measures but signed weights are allowed for embedding differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPointMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedPointMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(KmeError::InvalidArgument("points and weights must have equal nonzero length".into()));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(KmeError::InvalidArgument("all points must share a nonzero dimension".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(KmeError::InvalidArgument(format!("weights sum to {total}, expected 1")));
        }
        Ok(WeightedPointMeasure { points, weights })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if points.is_empty() {
            return Err(KmeError::InvalidArgument("need at least one point".into()));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(KmeError::InvalidArgument("all points must share a nonzero dimension".into()));
        }
        // No weight-sum check: summing n copies of 1/n accumulates rounding
        // error past the tolerance for large n, yet the weights are exact by
        // construction.
        Ok(WeightedPointMeasure { weights: vec![1.0 / n as f64; n], points })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pair(kernel: &RadialKernel, g0: &IsotropicGaussian, g1: &IsotropicGaussian) -> Result<f64> {
    if g0.dim() != kernel.d as usize || g1.dim() != kernel.d as usize {
        return Err(KmeError::InvalidArgument(format!(
            "mean dimensions {} / {} do not match kernel d = {}",
            g0.dim(),
            g1.dim(),
            kernel.d
        )));
    }
    let rel = (g0.sigma2 - g1.sigma2).abs() / g0.sigma2.max(g1.sigma2);
    if rel > 1e-12 {
        return Err(KmeError::Unsupported(format!(
            "closed forms require a shared variance (got {} and {})",
            g0.sigma2, g1.sigma2
        )));
    }
    Ok(sq_dist(&g0.mu, &g1.mu))
}

/// Clamp tiny negative rounding noise; anything worse is a bug.
fn clamp_dist2(v: f64) -> Result<f64> {
    if v < -1e-10 {
        return Err(KmeError::InternalConsistency(format!("squared distance came out {v}")));
    }
    Ok(v.max(0.0))
}

/// `<theta0, theta1>` for embeddings of `G(mu_i, sigma^2 I)`:
/// `int (1 + 4 t sigma^2)^{-d/2} exp(-t |mu0 - mu1|^2 / (1 + 4 t sigma^2)) dnu(t)`.
pub fn rkhs_gauss_inner(
    kernel: &RadialKernel,
    g0: &IsotropicGaussian,
    g1: &IsotropicGaussian,
) -> Result<f64> {
    let dmu2 = check_pair(kernel, g0, g1)?;
    let half_d = kernel.d as f64 / 2.0;
    let s2 = g0.sigma2;
    quad::integrate_nu(
        &|t| {
            let a = 1.0 + 4.0 * t * s2;
            a.powf(-half_d) * (-t * dmu2 / a).exp()
        },
        &kernel.nu,
        DEFAULT_ABS_TOL,
        DEFAULT_REL_TOL,
    )
    .into_value()
}

/// `|theta0 - theta1|^2` in the RKHS:
/// `2 int (1 + 4 t sigma^2)^{-d/2} (1 - exp(-t |mu0 - mu1|^2 / (1 + 4 t sigma^2))) dnu(t)`.
pub fn rkhs_gauss_dist2(
    kernel: &RadialKernel,
    g0: &IsotropicGaussian,
    g1: &IsotropicGaussian,
) -> Result<f64> {
    let dmu2 = check_pair(kernel, g0, g1)?;
    let half_d = kernel.d as f64 / 2.0;
    let s2 = g0.sigma2;
    let v = quad::integrate_nu(
        &|t| {
            let a = 1.0 + 4.0 * t * s2;
            -2.0 * a.powf(-half_d) * (-t * dmu2 / a).exp_m1()
        },
        &kernel.nu,
        DEFAULT_ABS_TOL,
        DEFAULT_REL_TOL,
    )
    .into_value()?;
    clamp_dist2(v)
}

/// `<k(., x), theta_g> = int (1 + 2 t sigma^2)^{-d/2}
/// exp(-t |x - mu|^2 / (1 + 2 t sigma^2)) dnu(t)`.
pub fn rkhs_point_gauss_inner(kernel: &RadialKernel, x: &[f64], g: &IsotropicGaussian) -> Result<f64> {
    if x.len() != kernel.d as usize || g.dim() != kernel.d as usize {
        return Err(KmeError::InvalidArgument("dimension mismatch".into()));
    }
    let r2 = sq_dist(x, &g.mu);
    let half_d = kernel.d as f64 / 2.0;
    let s2 = g.sigma2;
    quad::integrate_nu(
        &|t| {
            let a = 1.0 + 2.0 * t * s2;
            a.powf(-half_d) * (-t * r2 / a).exp()
        },
        &kernel.nu,
        DEFAULT_ABS_TOL,
        DEFAULT_REL_TOL,
    )
    .into_value()
}

/// `|theta0 - theta1|^2` for two-point measures sharing atoms `x, v`:
/// `2 (p0 - p1)^2 (psi(0) - psi(|x - v|^2))`.
pub fn rkhs_discrete_dist2(
    kernel: &RadialKernel,
    p0: &TwoPointDiscrete,
    p1: &TwoPointDiscrete,
) -> Result<f64> {
    if p0.x != p1.x || p0.v != p1.v {
        return Err(KmeError::Unsupported(
            "two-point closed form needs both measures on the same atom pair".into(),
        ));
    }
    let z2 = sq_dist(&p0.x, &p0.v);
    let dp = p0.p - p1.p;
    let v = 2.0 * dp * dp * (kernel.eval_psi(0.0)? - kernel.eval_psi(z2)?);
    clamp_dist2(v)
}

/// Squared MMD between two finitely supported measures via signed Gram sums.
pub fn mmd_weighted(
    kernel: &RadialKernel,
    a: &WeightedPointMeasure,
    b: &WeightedPointMeasure,
) -> Result<f64> {
    if a.dim() != kernel.d as usize || b.dim() != kernel.d as usize {
        return Err(KmeError::InvalidArgument("dimension mismatch".into()));
    }
    // One signed measure with weights (w_a, -w_b).
    let mut pts: Vec<&[f64]> = a.points.iter().map(|p| p.as_slice()).collect();
    pts.extend(b.points.iter().map(|p| p.as_slice()));
    let mut w: Vec<f64> = a.weights.clone();
    w.extend(b.weights.iter().map(|x| -x));
    let mut total = 0.0;
    let psi0 = kernel.eval_psi(0.0)?;
    for i in 0..pts.len() {
        total += w[i] * w[i] * psi0;
        for j in (i + 1)..pts.len() {
            total += 2.0 * w[i] * w[j] * kernel.eval_psi(sq_dist(pts[i], pts[j]))?;
        }
    }
    clamp_dist2(total)
}

/// Exact `|mu_{P_n} - mu_G|^2` in the RKHS for a weighted sample against an
/// isotropic Gaussian target.
pub fn mmd_empirical_vs_gauss(
    kernel: &RadialKernel,
    sample: &WeightedPointMeasure,
    g: &IsotropicGaussian,
) -> Result<f64> {
    if sample.dim() != kernel.d as usize || g.dim() != kernel.d as usize {
        return Err(KmeError::InvalidArgument("dimension mismatch".into()));
    }
    let psi0 = kernel.eval_psi(0.0)?;
    let n = sample.points.len();
    let mut total = 0.0;
    for i in 0..n {
        total += sample.weights[i] * sample.weights[i] * psi0;
        for j in (i + 1)..n {
            total += 2.0
                * sample.weights[i]
                * sample.weights[j]
                * kernel.eval_psi(sq_dist(&sample.points[i], &sample.points[j]))?;
        }
    }
    for i in 0..n {
        total -= 2.0 * sample.weights[i] * rkhs_point_gauss_inner(kernel, &sample.points[i], g)?;
    }
    total += rkhs_gauss_inner(kernel, g, g)?;
    clamp_dist2(total)
}

/// `<theta0, theta1>` in `L2(R^d)`:
/// `int int (pi / (t1 D2 + t2 D1))^{d/2} exp(-t1 t2 |mu0-mu1|^2 / (t1 D2 + t2 D1)) dnu dnu`
/// with `D_i = 2 t_i sigma^2 + 1`.
pub fn l2_gauss_inner(
    kernel: &RadialKernel,
    g0: &IsotropicGaussian,
    g1: &IsotropicGaussian,
) -> Result<f64> {
    let dmu2 = check_pair(kernel, g0, g1)?;
    kernel.require_moment_condition()?;
    let half_d = kernel.d as f64 / 2.0;
    let s2 = g0.sigma2;
    quad::integrate_nu_double(
        &|t1, t2| {
            let den = t1 * (2.0 * t2 * s2 + 1.0) + t2 * (2.0 * t1 * s2 + 1.0);
            (std::f64::consts::PI / den).powf(half_d) * (-t1 * t2 * dmu2 / den).exp()
        },
        &kernel.nu,
        DEFAULT_ABS_TOL,
        DEFAULT_REL_TOL,
    )
    .into_value()
}

/// `|theta0 - theta1|^2` in `L2(R^d)`.
pub fn l2_gauss_dist2(
    kernel: &RadialKernel,
    g0: &IsotropicGaussian,
    g1: &IsotropicGaussian,
) -> Result<f64> {
    let dmu2 = check_pair(kernel, g0, g1)?;
    kernel.require_moment_condition()?;
    let half_d = kernel.d as f64 / 2.0;
    let s2 = g0.sigma2;
    let v = quad::integrate_nu_double(
        &|t1, t2| {
            let den = t1 * (2.0 * t2 * s2 + 1.0) + t2 * (2.0 * t1 * s2 + 1.0);
            -2.0 * (std::f64::consts::PI / den).powf(half_d) * (-t1 * t2 * dmu2 / den).exp_m1()
        },
        &kernel.nu,
        DEFAULT_ABS_TOL,
        DEFAULT_REL_TOL,
    )
    .into_value()?;
    clamp_dist2(v)
}

/// `<psi(. - x), theta_g>` in `L2(R^d)`:
/// `int int (pi/(t1+t2))^{d/2} (1 + 2 S sigma^2)^{-d/2}
/// exp(-S |x - mu|^2 / (1 + 2 S sigma^2)) dnu dnu` with `S = t1 t2/(t1+t2)`.
pub fn l2_point_gauss_inner(kernel: &RadialKernel, x: &[f64], g: &IsotropicGaussian) -> Result<f64> {
    if x.len() != kernel.d as usize || g.dim() != kernel.d as usize {
        return Err(KmeError::InvalidArgument("dimension mismatch".into()));
    }
    kernel.require_moment_condition()?;
    let r2 = sq_dist(x, &g.mu);
    let half_d = kernel.d as f64 / 2.0;
    let s2 = g.sigma2;
    quad::integrate_nu_double(
        &|t1, t2| {
            let s = t1 * t2 / (t1 + t2);
            let a = 1.0 + 2.0 * s * s2;
            (std::f64::consts::PI / (t1 + t2)).powf(half_d) * a.powf(-half_d) * (-s * r2 / a).exp()
        },
        &kernel.nu,
        DEFAULT_ABS_TOL,
        DEFAULT_REL_TOL,
    )
    .into_value()
}

/// `|theta0 - theta1|^2` in `L2` for two-point measures sharing atoms:
/// `(p0 - p1)^2 * 2 (cross(0) - cross(|x - v|^2))`.
pub fn l2_discrete_dist2(
    kernel: &RadialKernel,
    p0: &TwoPointDiscrete,
    p1: &TwoPointDiscrete,
) -> Result<f64> {
    if p0.x != p1.x || p0.v != p1.v {
        return Err(KmeError::Unsupported(
            "two-point closed form needs both measures on the same atom pair".into(),
        ));
    }
    let z2 = sq_dist(&p0.x, &p0.v);
    let dp = p0.p - p1.p;
    let v = dp * dp * 2.0 * (kernel.psi_l2_cross(0.0)? - kernel.psi_l2_cross(z2)?);
    clamp_dist2(v)
}

/// Squared `L2` distance between two finitely supported measures'
/// embeddings, via the cross-correlation Gram sums.
pub fn l2_weighted(
    kernel: &RadialKernel,
    a: &WeightedPointMeasure,
    b: &WeightedPointMeasure,
) -> Result<f64> {
    if a.dim() != kernel.d as usize || b.dim() != kernel.d as usize {
        return Err(KmeError::InvalidArgument("dimension mismatch".into()));
    }
    kernel.require_moment_condition()?;
    let mut pts: Vec<&[f64]> = a.points.iter().map(|p| p.as_slice()).collect();
    pts.extend(b.points.iter().map(|p| p.as_slice()));
    let mut w: Vec<f64> = a.weights.clone();
    w.extend(b.weights.iter().map(|x| -x));
    let cross0 = kernel.psi_l2_cross(0.0)?;
    let mut total = 0.0;
    for i in 0..pts.len() {
        total += w[i] * w[i] * cross0;
        for j in (i + 1)..pts.len() {
            total += 2.0 * w[i] * w[j] * kernel.psi_l2_cross(sq_dist(pts[i], pts[j]))?;
        }
    }
    clamp_dist2(total)
}

/// Exact `|mu_{P_n} - mu_G|^2` in `L2(R^d)`.
pub fn l2_empirical_vs_gauss(
    kernel: &RadialKernel,
    sample: &WeightedPointMeasure,
    g: &IsotropicGaussian,
) -> Result<f64> {
    if sample.dim() != kernel.d as usize || g.dim() != kernel.d as usize {
        return Err(KmeError::InvalidArgument("dimension mismatch".into()));
    }
    kernel.require_moment_condition()?;
    let cross0 = kernel.psi_l2_cross(0.0)?;
    let n = sample.points.len();
    let mut total = 0.0;
    for i in 0..n {
        total += sample.weights[i] * sample.weights[i] * cross0;
        for j in (i + 1)..n {
            total += 2.0
                * sample.weights[i]
                * sample.weights[j]
                * kernel.psi_l2_cross(sq_dist(&sample.points[i], &sample.points[j]))?;
        }
    }
    for i in 0..n {
        total -= 2.0 * sample.weights[i] * l2_point_gauss_inner(kernel, &sample.points[i], g)?;
    }
    total += l2_gauss_inner(kernel, g, g)?;
    clamp_dist2(total)
}
