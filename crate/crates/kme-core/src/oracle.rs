//! Independent numerical oracles for the closed forms.
//!
//! These deliberately share nothing with the closed-form code paths except
//! the two kernel primitives `eval_psi` and `spectral_density`: distances are
//! recomputed from the Fourier-side integrals by radial reduction, and
//! expectations by Gauss-Hermite or Monte-Carlo quadrature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KmeError, Result};
use crate::geometry::{sq_dist, IsotropicGaussian};
use crate::kernel::RadialKernel;
use crate::quad::{adaptive_gk, QuadratureResult};

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // P_n(x) and P_n'(x) via the three-term recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Orthonormal (physicists') Hermite value and derivative at `x` for order n.
fn hermite_orthonormal(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = std::f64::consts::PI.powf(-0.25);
    if n == 0 {
        return (p0, 0.0);
    }
    let mut p1 = p0 * x * 2.0f64.sqrt();
    for k in 1..n {
        let kf = k as f64;
        let p2 = (x * (2.0 / (kf + 1.0)).sqrt()) * p1 - (kf / (kf + 1.0)).sqrt() * p0;
        p0 = p1;
        p1 = p2;
    }
    let dp = (2.0 * n as f64).sqrt() * p0;
    (p1, dp)
}

/// Gauss-Hermite nodes and weights for `int e^{-x^2} f(x) dx`, built up
/// order by order using root interlacing for the Newton starting points.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut roots: Vec<f64> = vec![-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
    for order in 3..=n {
        let prev = &roots;
        let mut guesses = Vec::with_capacity(order);
        guesses.push(prev[0] - 1.0);
        for w in prev.windows(2) {
            guesses.push(0.5 * (w[0] + w[1]));
        }
        guesses.push(prev[prev.len() - 1] + 1.0);
        let mut next = Vec::with_capacity(order);
        for mut x in guesses {
            for _ in 0..100 {
                let (p, dp) = hermite_orthonormal(order, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            next.push(x);
        }
        next.sort_by(f64::total_cmp);
        roots = next;
    }
    let weights: Vec<f64> = roots
        .iter()
        .map(|&x| {
            // Christoffel function: w_i = 1 / sum_k p_k(x_i)^2.
            let mut sum = 0.0;
            let mut p0 = std::f64::consts::PI.powf(-0.25);
            sum += p0 * p0;
            let mut p1 = p0 * x * 2.0f64.sqrt();
            for k in 1..n {
                sum += p1 * p1;
                let kf = k as f64;
                let p2 = (x * (2.0 / (kf + 1.0)).sqrt()) * p1 - (kf / (kf + 1.0)).sqrt() * p0;
                p0 = p1;
                p1 = p2;
            }
            1.0 / sum
        })
        .collect();
    (roots, weights)
}

/// `E[f(X)]` for `X ~ G(mu, sigma^2 I)` by tensorized Gauss-Hermite
/// (`d <= 3`).
pub fn gauss_hermite_expect<F: Fn(&[f64]) -> f64>(
    f: &F,
    g: &IsotropicGaussian,
    order: usize,
) -> Result<f64> {
    let d = g.dim();
    if d > 3 {
        return Err(KmeError::Unsupported("tensorized Gauss-Hermite is limited to d <= 3".into()));
    }
    if order < 2 {
        return Err(KmeError::InvalidArgument("order must be >= 2".into()));
    }
    let (nodes, weights) = gauss_hermite(order);
    let scale = (2.0 * g.sigma2).sqrt();
    let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
    let mut total = 0.0;
    let mut x = vec![0.0; d];
    let mut idx = vec![0usize; d];
    loop {
        let mut w = 1.0;
        for k in 0..d {
            w *= weights[idx[k]];
            x[k] = g.mu[k] + scale * nodes[idx[k]];
        }
        total += w * f(&x);
        // odometer over the tensor grid
        let mut k = 0;
        loop {
            if k == d {
                return Ok(norm * total);
            }
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Monte-Carlo mean and standard error of `f(X)` for draws from `sampler`.
/// Deterministic given `seed`.
pub fn mc_expect<F, S>(f: &F, sampler: &S, n_samples: usize, seed: u64) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
    S: Fn(&mut ChaCha8Rng) -> Vec<f64>,
{
    assert!(n_samples >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let x = sampler(&mut rng);
        let v = f(&x);
        sum += v;
        sum_sq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// 3-sigma Monte-Carlo agreement gate with a single 4x-sample retry, to keep
/// honest statistical checks from flaking.
pub fn mc_agrees<F, S>(expected: f64, f: &F, sampler: &S, n_samples: usize, seed: u64) -> bool
where
    F: Fn(&[f64]) -> f64,
    S: Fn(&mut ChaCha8Rng) -> Vec<f64>,
{
    let (mean, se) = mc_expect(f, sampler, n_samples, seed);
    if (mean - expected).abs() <= 3.0 * se.max(1e-300) {
        return true;
    }
    let (mean, se) = mc_expect(f, sampler, n_samples * 4, seed ^ 0x9e3779b97f4a7c15);
    (mean - expected).abs() <= 3.0 * se.max(1e-300)
}

/// Standard normal sampler helper for `mc_expect`.
pub fn gaussian_sampler(g: &IsotropicGaussian) -> impl Fn(&mut ChaCha8Rng) -> Vec<f64> + '_ {
    let sd = g.sigma2.sqrt();
    move |rng: &mut ChaCha8Rng| {
        g.mu.iter().map(|&m| m + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
    }
}

enum SpectralWeight {
    /// `2 (2 pi)^{-d/2} ... lambda dw`: the RKHS distance integral.
    Lambda,
    /// `2 ... lambda^2 dw`: the L2 distance integral.
    LambdaSquared,
}

/// Surface area of the unit (k-1)-sphere in R^k.
fn sphere_area(k: u32) -> f64 {
    2.0 * std::f64::consts::PI.powf(k as f64 / 2.0)
        / (statrs::function::gamma::ln_gamma(k as f64 / 2.0)).exp()
}

/// Radial reduction of `int_{R^d} e^{-sigma^2 |w|^2} (1 - cos<dmu, w>) W(w) dw`
/// with `W` the chosen spectral weight; `m = |dmu|`.
fn bochner_radial(
    kernel: &RadialKernel,
    sigma2: f64,
    m: f64,
    weight: SpectralWeight,
    abs_tol: f64,
    rel_tol: f64,
) -> QuadratureResult {
    if m == 0.0 {
        return QuadratureResult::exact(0.0);
    }
    let d = kernel.d;
    let lam = |r2: f64| -> f64 { kernel.spectral_density(r2).unwrap_or(f64::NAN) };
    let w_of = |r2: f64| -> f64 {
        let l = lam(r2);
        match weight {
            SpectralWeight::Lambda => l,
            SpectralWeight::LambdaSquared => l * l,
        }
    };
    let front = match weight {
        SpectralWeight::Lambda => 2.0 * (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0),
        SpectralWeight::LambdaSquared => 2.0,
    };
    // e^{-sigma^2 r^2} < 1e-19 beyond this radius; lambda only decays further.
    let r_max = (44.0 / sigma2).sqrt();
    let mut splits: Vec<f64> = Vec::new();
    let period = std::f64::consts::PI / m;
    let mut s = period;
    while s < r_max && splits.len() < 64 {
        splits.push(s);
        s += period;
    }
    match d {
        1 => {
            let f = |r: f64| (-sigma2 * r * r).exp() * (1.0 - (m * r).cos()) * w_of(r * r);
            let q = adaptive_gk(&f, 0.0, r_max, &splits, abs_tol, rel_tol);
            QuadratureResult { value: front * 2.0 * q.value, ..q }
        }
        _ => {
            // Angle integral A(rho) = int_0^pi (1 - cos(rho cos theta)) sin^{d-2} theta dtheta
            // on a fixed Gauss-Legendre grid; the (d-2)-sphere area completes
            // the measure of S^{d-1}.
            let (nodes, weights) = gauss_legendre(64);
            let dm2 = d as f64 - 2.0;
            let angle = |rho: f64| -> f64 {
                let mut acc = 0.0;
                for (&x, &w) in nodes.iter().zip(&weights) {
                    // theta = pi/2 (x + 1)
                    let theta = std::f64::consts::FRAC_PI_2 * (x + 1.0);
                    let s = theta.sin();
                    acc += w * (1.0 - (rho * theta.cos()).cos()) * s.powf(dm2);
                }
                acc * std::f64::consts::FRAC_PI_2
            };
            let area = sphere_area(d - 1);
            let f = |r: f64| (-sigma2 * r * r).exp() * r.powi(d as i32 - 1) * w_of(r * r) * angle(m * r);
            let q = adaptive_gk(&f, 0.0, r_max, &splits, abs_tol, rel_tol);
            QuadratureResult { value: front * area * q.value, ..q }
        }
    }
}

/// Fourier-side oracle for the RKHS distance between two isotropic Gaussian
/// embeddings.
pub fn bochner_rkhs_oracle(
    kernel: &RadialKernel,
    g0: &IsotropicGaussian,
    g1: &IsotropicGaussian,
    tol: f64,
) -> Result<QuadratureResult> {
    if kernel.d > 5 {
        return Err(KmeError::Unsupported("radial-reduction oracle is limited to d <= 5".into()));
    }
    kernel.require_moment_condition()?;
    let m = sq_dist(&g0.mu, &g1.mu).sqrt();
    Ok(bochner_radial(kernel, g0.sigma2, m, SpectralWeight::Lambda, tol, tol.max(1e-12)))
}

/// Fourier-side oracle for the L2 distance between two isotropic Gaussian
/// embeddings.
pub fn l2_dist_oracle(
    kernel: &RadialKernel,
    g0: &IsotropicGaussian,
    g1: &IsotropicGaussian,
    tol: f64,
) -> Result<QuadratureResult> {
    if kernel.d > 5 {
        return Err(KmeError::Unsupported("radial-reduction oracle is limited to d <= 5".into()));
    }
    kernel.require_moment_condition()?;
    let m = sq_dist(&g0.mu, &g1.mu).sqrt();
    Ok(bochner_radial(kernel, g0.sigma2, m, SpectralWeight::LambdaSquared, tol, tol.max(1e-12)))
}
