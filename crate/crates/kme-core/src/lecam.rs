//! Two-point and multi-hypothesis reduction machinery: probability floors,
//! KL calculators, certified ball packings, construction and verification of
//! the hard Gaussian families behind the multi-hypothesis lower bounds, and
//! an empirical stress harness.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{ak_for, bk_for};
use crate::error::{KmeError, Result};
use crate::estimator::{
    draw_sample, empirical_error, replicate_rng, Norm, Target,
};
use crate::geometry::{
    l2_gauss_dist2, l2_gauss_inner, rkhs_gauss_dist2, rkhs_gauss_inner, sq_dist,
    IsotropicGaussian,
};
use crate::kernel::{KernelSpec, RadialKernel};
use crate::quad::{integrate_nu, DEFAULT_ABS_TOL, DEFAULT_REL_TOL};

/// Two-point probability floor `max(e^{-alpha}/4, (1 - sqrt(alpha/2))/2)`.
pub fn lecam_two(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(KmeError::InvalidArgument(format!(
            "alpha = {alpha} must be positive"
        )));
    }
    Ok((0.25 * (-alpha).exp()).max((1.0 - (alpha / 2.0).sqrt()) / 2.0))
}

/// Multi-hypothesis probability floor
/// `(sqrt(M)/(1+sqrt(M)))(1 - 2 alpha - sqrt(2 alpha / log M))`.
/// `alpha = 1/8` (the boundary used by the hard-family construction) is
/// accepted.
pub fn lecam_many(m: usize, alpha: f64) -> Result<f64> {
    if m < 2 {
        return Err(KmeError::InvalidArgument(format!("M = {m} must be >= 2")));
    }
    if !(alpha > 0.0 && alpha <= 0.125) {
        return Err(KmeError::InvalidArgument(format!(
            "alpha = {alpha} must lie in (0, 1/8]"
        )));
    }
    let mf = m as f64;
    let sq = mf.sqrt();
    Ok(sq / (1.0 + sq) * (1.0 - 2.0 * alpha - (2.0 * alpha / mf.ln()).sqrt()))
}

/// KL divergence between n-fold products of isotropic Gaussians with a
/// shared variance: `n |mu0 - mu1|^2 / (2 sigma2)`.
pub fn kl_gauss_iso(mu0: &[f64], mu1: &[f64], sigma2: f64, n: usize) -> Result<f64> {
    if mu0.len() != mu1.len() {
        return Err(KmeError::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            mu0.len(),
            mu1.len()
        )));
    }
    if !(sigma2 > 0.0) || n < 1 {
        return Err(KmeError::InvalidArgument(
            "need sigma2 > 0 and n >= 1".into(),
        ));
    }
    Ok(n as f64 * sq_dist(mu0, mu1) / (2.0 * sigma2))
}

/// `(bound, exact)` for the KL divergence between n-fold products of
/// Bernoulli-type two-point measures: bound `n (p0-p1)^2/(p1(1-p1))` and the
/// exact value `n (p0 log(p0/p1) + (1-p0) log((1-p0)/(1-p1)))`.
pub fn kl_two_point_bound(p0: f64, p1: f64, n: usize) -> Result<(f64, f64)> {
    if !(p0 > 0.0 && p0 < 1.0 && p1 > 0.0 && p1 < 1.0) {
        return Err(KmeError::InvalidArgument(format!(
            "p0 = {p0}, p1 = {p1} must lie strictly inside (0, 1)"
        )));
    }
    if n < 1 {
        return Err(KmeError::InvalidArgument("n must be >= 1".into()));
    }
    let nf = n as f64;
    let bound = nf * (p0 - p1) * (p0 - p1) / (p1 * (1.0 - p1));
    let exact = nf * (p0 * (p0 / p1).ln() + (1.0 - p0) * ((1.0 - p0) / (1.0 - p1)).ln());
    Ok((bound, exact))
}

/// At least `n_axis^d` points inside the closed ball of the given radius
/// with pairwise distance at least `radius / n_axis`. Axis-aligned grid on
/// the inscribed cube; both the cardinality and the separation are verified
/// by an exhaustive scan before returning.
pub fn pack_ball(d: u32, radius: f64, n_axis: usize) -> Result<Vec<Vec<f64>>> {
    if d < 1 || n_axis < 3 || !(radius > 0.0) {
        return Err(KmeError::InvalidArgument(
            "need d >= 1, n_axis >= 3, radius > 0".into(),
        ));
    }
    let want = (n_axis as u64).checked_pow(d).filter(|&c| c <= 1_000_000).ok_or_else(|| {
        KmeError::ConstructionFailure(format!(
            "packing grid {n_axis}^{d} exceeds the 10^6-point budget"
        ))
    })? as usize;
    let half = radius / (d as f64).sqrt();
    let axis: Vec<f64> = (0..n_axis)
        .map(|k| -half + 2.0 * half * k as f64 / (n_axis - 1) as f64)
        .collect();
    let mut points = Vec::with_capacity(want);
    let mut idx = vec![0usize; d as usize];
    loop {
        points.push(idx.iter().map(|&i| axis[i]).collect::<Vec<f64>>());
        let mut carry = 0;
        loop {
            idx[carry] += 1;
            if idx[carry] < n_axis {
                break;
            }
            idx[carry] = 0;
            carry += 1;
            if carry == d as usize {
                break;
            }
        }
        if carry == d as usize {
            break;
        }
    }
    let sep = radius / n_axis as f64;
    let min_dist = |pts: &[Vec<f64>]| -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                m = m.min(sq_dist(&pts[i], &pts[j]).sqrt());
            }
        }
        m
    };
    let mut out = points;
    if min_dist(&out) < sep - 1e-12 {
        // Greedy thinning fallback; certified again below.
        let mut kept: Vec<Vec<f64>> = Vec::new();
        for p in out {
            if kept.iter().all(|q| sq_dist(&p, q).sqrt() >= sep - 1e-12) {
                kept.push(p);
            }
        }
        out = kept;
    }
    if out.len() < want {
        return Err(KmeError::ConstructionFailure(format!(
            "packing shortfall: achieved {} of the required {want} points at separation {sep}",
            out.len()
        )));
    }
    let achieved = min_dist(&out);
    if achieved < sep - 1e-12 {
        return Err(KmeError::ConstructionFailure(format!(
            "packing separation {achieved} below required {sep}"
        )));
    }
    if out.iter().any(|p| sq_dist(p, &vec![0.0; d as usize]).sqrt() > radius + 1e-12) {
        return Err(KmeError::ConstructionFailure(
            "packing point escaped the ball".into(),
        ));
    }
    Ok(out)
}

/// The hard instance family: Gaussian hypotheses whose embeddings are
/// pairwise separated while the underlying measures stay statistically
/// close.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardFamily {
    pub hypotheses: Vec<Target>,
    pub norm: Norm,
    pub kernel: KernelSpec,
    /// Separation radius: the minimax error threshold certified by the
    /// construction.
    pub s: f64,
    /// KL budget coefficient (per log M).
    pub alpha: f64,
    /// Hypothesis count minus one.
    pub m: usize,
    pub sigma2: f64,
    pub c_nu: f64,
    pub n: usize,
    /// Points per axis of the packing grid.
    pub packing_n: usize,
    pub points: Vec<Vec<f64>>,
}

/// Verification record for a hard family; flag semantics are documented on
/// each field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub min_pair_embedding_dist: f64,
    pub two_s: f64,
    pub mean_kl_vs_first: f64,
    pub max_pair_kl: f64,
    pub kl_budget: f64,
    pub max_pair_mean_dist2: f64,
    /// Every pair of embeddings is at least `2s` apart.
    pub separation_ok: bool,
    /// Mean KL against the first hypothesis stays within `alpha log M`.
    pub kl_ok: bool,
    /// Mean displacements are small relative to the hypothesis variance
    /// (RKHS: `t1 |a|^2 <= 1 + 4 t1 sigma2`; L2: `delta1 |a|^2 <= 4 delta1
    /// sigma2 + 2`).
    pub displacement_ok: bool,
    /// Diagnostic only (spectral-variant construction): the Jensen-based
    /// displacement condition (`2 mu_tau |a|^2/(4 sigma2 mu_tau + 1) <= 1/3`
    /// for d > 2, `|a|^2 <= sigma2` otherwise).
    pub aux_spectral_displacement_ok: Option<bool>,
    /// Diagnostic only: the sufficient margin condition
    /// `t1 |a|^2 <= (2/3) t1 sigma2 + (beta t0 e/(24 t1 Z_nu))
    /// (d-2)^2/(d(d+2))` (d > 2).
    pub aux_spectral_margin_ok: Option<bool>,
    /// Conjunction of the three main flags; the diagnostics are excluded.
    pub overall_pass: bool,
}

const PACKING_N: usize = 5;
const MAX_HYPOTHESES: usize = 125;

/// Build the multi-hypothesis Gaussian hard family for a radial kernel:
/// means from a certified packing of the ball of radius `sqrt(c_nu/n)`,
/// shared variance `sigma2`, KL budget `alpha = 1/8`. The hypothesis count
/// is capped at 125 by taking a separation-preserving subset of the packing.
pub fn build_hard_family_thm8(kernel: &RadialKernel, n: usize, norm: Norm) -> Result<HardFamily> {
    if n < 1 {
        return Err(KmeError::InvalidArgument("n must be >= 1".into()));
    }
    let d = kernel.d as f64;
    let n_pack = PACKING_N as f64;
    let log_term = n_pack.ln() - 1.0 / (n_pack - 1.0);
    let shrink = 1.0 - 2.0 / (2.0 + d);
    let (sigma2, c_nu, lb_factor) = match norm {
        Norm::Rkhs => {
            let (t0, t1, beta, _) = bk_for(kernel)?;
            (
                1.0 / (2.0 * t1 * d),
                log_term / (32.0 * t1),
                beta * t0 / std::f64::consts::E * shrink,
            )
        }
        Norm::L2 => {
            kernel.require_moment_condition()?;
            let (d0, d1, beta, _) = ak_for(kernel)?;
            (
                1.0 / (d1 * d),
                log_term / (16.0 * d1),
                beta * beta * d0 / (2.0 * std::f64::consts::E)
                    * shrink
                    * (std::f64::consts::PI / (2.0 * d1)).powf(d / 2.0),
            )
        }
    };
    let radius = (c_nu / n as f64).sqrt();
    let mut points = pack_ball(kernel.d, radius, PACKING_N)?;
    if points.len() > MAX_HYPOTHESES {
        points.truncate(MAX_HYPOTHESES);
    }
    let s = 0.5 / n_pack * (lb_factor * c_nu / n as f64).sqrt();
    let hypotheses = points
        .iter()
        .map(|mu| Ok(Target::Gaussian(IsotropicGaussian::new(mu.clone(), sigma2)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(HardFamily {
        m: hypotheses.len() - 1,
        hypotheses,
        norm,
        kernel: kernel.to_spec(),
        s,
        alpha: 0.125,
        sigma2,
        c_nu,
        n,
        packing_n: PACKING_N,
        points,
    })
}

fn family_gaussians(family: &HardFamily) -> Result<Vec<&IsotropicGaussian>> {
    family
        .hypotheses
        .iter()
        .map(|h| match h {
            Target::Gaussian(g) => Ok(g),
            Target::TwoPoint(_) => Err(KmeError::Unsupported(
                "verification requires Gaussian hypotheses".into(),
            )),
        })
        .collect()
}

/// Re-check every premise of the multi-hypothesis reduction on the actual
/// family: pairwise embedding separation (via exact closed forms), the mean
/// KL budget, and the displacement conditions.
pub fn verify_hard_family(family: &HardFamily) -> Result<ConditionReport> {
    let kernel = family.kernel.build()?;
    let gs = family_gaussians(family)?;
    if gs.len() < 2 {
        return Err(KmeError::InvalidArgument("family needs >= 2 hypotheses".into()));
    }
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut min_dist = f64::INFINITY;
    let mut max_r2 = 0.0f64;
    let mut max_kl = 0.0f64;
    for i in 0..gs.len() {
        for j in (i + 1)..gs.len() {
            let r2 = sq_dist(&gs[i].mu, &gs[j].mu);
            max_r2 = max_r2.max(r2);
            max_kl = max_kl.max(kl_gauss_iso(&gs[i].mu, &gs[j].mu, family.sigma2, family.n)?);
            // Shared variance makes the distance a function of r2 only.
            let dist2 = match cache.get(&r2.to_bits()) {
                Some(&v) => v,
                None => {
                    let v = match family.norm {
                        Norm::Rkhs => rkhs_gauss_dist2(&kernel, gs[i], gs[j])?,
                        Norm::L2 => l2_gauss_dist2(&kernel, gs[i], gs[j])?,
                    };
                    cache.insert(r2.to_bits(), v);
                    v
                }
            };
            min_dist = min_dist.min(dist2.max(0.0).sqrt());
        }
    }
    let m = gs.len() - 1;
    let mean_kl = (1..gs.len())
        .map(|j| kl_gauss_iso(&gs[j].mu, &gs[0].mu, family.sigma2, family.n))
        .sum::<Result<f64>>()?
        / m as f64;
    let kl_budget = family.alpha * (m as f64).ln();
    let d = kernel.d as f64;
    let displacement_ok = match family.norm {
        Norm::Rkhs => {
            let (_, t1, _, _) = bk_for(&kernel)?;
            t1 * max_r2 <= 1.0 + 4.0 * t1 * family.sigma2
        }
        Norm::L2 => {
            let (_, d1, _, _) = ak_for(&kernel)?;
            d1 * max_r2 <= 4.0 * d1 * family.sigma2 + 2.0
        }
    };
    let (aux_disp, aux_margin) = if family.norm == Norm::Rkhs {
        let s2 = family.sigma2;
        if d > 2.0 {
            let z_tau = integrate_nu(
                &|t| t * (4.0 * s2 * t + 1.0).powf(-(1.0 + d / 2.0)),
                &kernel.nu,
                DEFAULT_ABS_TOL,
                DEFAULT_REL_TOL,
            )
            .into_value()?;
            let t2 = integrate_nu(
                &|t| t * t * (4.0 * s2 * t + 1.0).powf(-(1.0 + d / 2.0)),
                &kernel.nu,
                DEFAULT_ABS_TOL,
                DEFAULT_REL_TOL,
            )
            .into_value()?;
            let mu_tau = t2 / z_tau;
            let cond_jensen = 2.0 * mu_tau * max_r2 / (4.0 * s2 * mu_tau + 1.0) <= 1.0 / 3.0;
            let (t0, t1, beta, _) = bk_for(&kernel)?;
            let z_nu = kernel.z_nu();
            let margin = 2.0 / 3.0 * t1 * s2
                + beta * t0 * std::f64::consts::E / (24.0 * t1 * z_nu) * (d - 2.0) * (d - 2.0)
                    / (d * (d + 2.0));
            (Some(cond_jensen), Some(t1 * max_r2 <= margin))
        } else {
            (Some(max_r2 <= s2), None)
        }
    } else {
        (None, None)
    };
    let separation_ok = min_dist >= 2.0 * family.s;
    let kl_ok = mean_kl <= kl_budget;
    Ok(ConditionReport {
        min_pair_embedding_dist: min_dist,
        two_s: 2.0 * family.s,
        mean_kl_vs_first: mean_kl,
        max_pair_kl: max_kl,
        kl_budget,
        max_pair_mean_dist2: max_r2,
        separation_ok,
        kl_ok,
        displacement_ok,
        aux_spectral_displacement_ok: aux_disp,
        aux_spectral_margin_ok: aux_margin,
        overall_pass: separation_ok && kl_ok && displacement_ok,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    /// The plug-in empirical embedding.
    Empirical,
    /// The constant-zero element (sanity baseline).
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressSummary {
    pub estimator: EstimatorTag,
    pub s: f64,
    pub replicates: usize,
    /// Per-hypothesis frequency of `error >= s`.
    pub exceedance: Vec<f64>,
    pub worst_case: f64,
}

/// Simulate the estimator on every hypothesis of the family and report the
/// worst-case frequency of the event `error >= s`. Deterministic in
/// `(seed, hypothesis, replicate)` regardless of worker count.
pub fn minimax_stress(
    tag: EstimatorTag,
    family: &HardFamily,
    replicates: usize,
    seed: u64,
) -> Result<StressSummary> {
    if replicates == 0 {
        return Err(KmeError::InvalidArgument("replicates must be >= 1".into()));
    }
    let kernel = family.kernel.build()?;
    let mut exceedance = Vec::with_capacity(family.hypotheses.len());
    for (h_idx, hyp) in family.hypotheses.iter().enumerate() {
        let hyp_seed = seed ^ (h_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let count = match tag {
            EstimatorTag::Empirical => {
                let exceeds: Vec<Result<bool>> = (0..replicates)
                    .into_par_iter()
                    .map(|rep| {
                        let mut rng = replicate_rng(hyp_seed, family.n, rep);
                        let sample = draw_sample(hyp, family.n, &mut rng);
                        let err = empirical_error(&kernel, &sample, hyp, family.norm)?;
                        Ok(err >= family.s)
                    })
                    .collect();
                let mut c = 0usize;
                for e in exceeds {
                    if e? {
                        c += 1;
                    }
                }
                c
            }
            EstimatorTag::Zero => {
                let g = match hyp {
                    Target::Gaussian(g) => g,
                    Target::TwoPoint(_) => {
                        return Err(KmeError::Unsupported(
                            "zero-estimator stress requires Gaussian hypotheses".into(),
                        ))
                    }
                };
                let norm2 = match family.norm {
                    Norm::Rkhs => rkhs_gauss_inner(&kernel, g, g)?,
                    Norm::L2 => l2_gauss_inner(&kernel, g, g)?,
                };
                if norm2.max(0.0).sqrt() >= family.s {
                    replicates
                } else {
                    0
                }
            }
        };
        exceedance.push(count as f64 / replicates as f64);
    }
    let worst_case = exceedance.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(StressSummary { estimator: tag, s: family.s, replicates, exceedance, worst_case })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_point_floor_values() {
        let v = lecam_two(4.0 / 9.0).unwrap();
        assert!(v > 0.25, "{v}");
        assert_relative_eq!(v, (1.0 - (2.0f64 / 9.0).sqrt()) / 2.0, max_relative = 1e-15);
        assert!(lecam_two(0.5).unwrap() >= 0.25);
        assert!((lecam_two(1e-12).unwrap() - 0.5).abs() < 1e-6);
        assert!(lecam_two(0.0).is_err());
        // monotone decreasing
        let mut prev = f64::INFINITY;
        for i in 1..=40 {
            let v = lecam_two(i as f64 * 0.1).unwrap();
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn many_hypothesis_floor() {
        let v = lecam_many(2, 1e-12).unwrap();
        assert_relative_eq!(v, 2.0f64.sqrt() / (1.0 + 2.0f64.sqrt()), max_relative = 1e-5);
        assert!(lecam_many(1_000_000, 0.125).unwrap() >= 0.2);
        assert!(lecam_many(1, 0.1).is_err());
        assert!(lecam_many(4, 0.2).is_err());
        // monotone increasing in M
        let mut prev = 0.0;
        for m in [2usize, 4, 16, 256, 65536] {
            let v = lecam_many(m, 0.05).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        // monotone decreasing in alpha
        let mut prev = f64::INFINITY;
        for i in 1..=12 {
            let v = lecam_many(100, i as f64 * 0.01).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn gauss_kl_examples() {
        let n = 64usize;
        let v = kl_gauss_iso(&[0.0], &[(1.0f64 / n as f64).sqrt()], 1.0, n).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-12);
        assert_eq!(kl_gauss_iso(&[1.0, 2.0], &[1.0, 2.0], 0.5, 3).unwrap(), 0.0);
        let a = kl_gauss_iso(&[0.0], &[0.3], 1.0, 10).unwrap();
        let b = kl_gauss_iso(&[0.0], &[0.3], 1.0, 20).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-15);
        assert!(kl_gauss_iso(&[0.0], &[0.0, 1.0], 1.0, 1).is_err());
    }

    #[test]
    fn two_point_kl_bound_dominates_exact() {
        let n = 25usize;
        let p0 = 0.5 + (1.0 / (9.0 * n as f64)).sqrt();
        let (bound, exact) = kl_two_point_bound(p0, 0.5, n).unwrap();
        assert_relative_eq!(bound, 4.0 / 9.0, max_relative = 1e-12);
        assert!(exact <= bound);
        let (b0, e0) = kl_two_point_bound(0.3, 0.3, 7).unwrap();
        assert_eq!(b0, 0.0);
        assert!(e0.abs() < 1e-15);
        for i in 1..=20 {
            for j in 1..=20 {
                let (p0, p1) = (0.01 + 0.049 * i as f64, 0.01 + 0.049 * j as f64);
                let (bound, exact) = kl_two_point_bound(p0, p1, 3).unwrap();
                assert!(exact <= bound + 1e-12, "p0={p0} p1={p1}");
            }
        }
        assert!(kl_two_point_bound(0.0, 0.5, 1).is_err());
    }

    #[test]
    fn packing_is_certified() {
        let p = pack_ball(1, 1.0, 5).unwrap();
        assert_eq!(p.len(), 5);
        for pt in &p {
            assert!(pt[0].abs() <= 1.0 + 1e-12);
        }
        let p = pack_ball(2, 0.7, 3).unwrap();
        assert!(p.len() >= 9);
        let mut min = f64::INFINITY;
        for i in 0..p.len() {
            for j in (i + 1)..p.len() {
                min = min.min(sq_dist(&p[i], &p[j]).sqrt());
            }
        }
        assert!(min >= 0.7 / 3.0 - 1e-12);
        // scale invariance: tiny radii still pack
        let p = pack_ball(3, 1e-9, 5).unwrap();
        assert_eq!(p.len(), 125);
    }

    #[test]
    fn hard_family_verifies_end_to_end() {
        let k = RadialKernel::gaussian(1.0, 1).unwrap();
        let fam = build_hard_family_thm8(&k, 100, Norm::Rkhs).unwrap();
        assert_eq!(fam.hypotheses.len(), 5);
        assert_relative_eq!(fam.alpha * (4.0f64).ln(), 0.125 * 4.0f64.ln());
        let rep = verify_hard_family(&fam).unwrap();
        assert!(rep.overall_pass, "{rep:?}");

        // doubling every mean quadruples the KLs past the budget
        let mut broken = fam.clone();
        broken.points.iter_mut().flatten().for_each(|x| *x *= 2.0);
        broken.hypotheses = broken
            .points
            .iter()
            .map(|mu| {
                Target::Gaussian(IsotropicGaussian::new(mu.clone(), broken.sigma2).unwrap())
            })
            .collect();
        let rep = verify_hard_family(&broken).unwrap();
        assert!(!rep.kl_ok);

        // halving s keeps the separation flag true
        let mut easier = fam.clone();
        easier.s /= 2.0;
        assert!(verify_hard_family(&easier).unwrap().separation_ok);
    }

    #[test]
    fn hard_family_l2_and_higher_dim() {
        let k = RadialKernel::gaussian(1.0, 2).unwrap();
        let fam = build_hard_family_thm8(&k, 50, Norm::L2).unwrap();
        assert_eq!(fam.hypotheses.len(), 25);
        let rep = verify_hard_family(&fam).unwrap();
        assert!(rep.overall_pass, "{rep:?}");
        let k3 = RadialKernel::gaussian(1.0, 3).unwrap();
        let fam3 = build_hard_family_thm8(&k3, 10, Norm::Rkhs).unwrap();
        assert_eq!(fam3.hypotheses.len(), 125);
        assert!(verify_hard_family(&fam3).unwrap().overall_pass);
    }

    #[test]
    fn stress_harness_basics() {
        let k = RadialKernel::gaussian(1.0, 1).unwrap();
        let fam = build_hard_family_thm8(&k, 20, Norm::Rkhs).unwrap();
        let sum = minimax_stress(EstimatorTag::Empirical, &fam, 60, 3).unwrap();
        assert_eq!(sum.exceedance.len(), 5);
        assert!(sum.worst_case >= 0.2 - 0.12, "worst case {}", sum.worst_case);
        // determinism
        let again = minimax_stress(EstimatorTag::Empirical, &fam, 60, 3).unwrap();
        assert_eq!(sum, again);

        let zero = minimax_stress(EstimatorTag::Zero, &fam, 10, 3).unwrap();
        assert!(zero.exceedance.iter().any(|&e| e == 1.0));

        assert!(minimax_stress(EstimatorTag::Empirical, &fam, 0, 3).is_err());
    }
}
