//! The empirical embedding estimator: sampling, exact per-replicate errors,
//! Monte-Carlo rate experiments, and the Hoeffding-type concentration bound.
//!
//! Determinism contract: every replicate draws from a generator keyed by
//! `(seed, n, replicate)`, so reports are bit-identical across runs and
//! across worker counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KmeError, Result};
use crate::geometry::{
    self, sq_dist, IsotropicGaussian, TwoPointDiscrete, WeightedPointMeasure,
};
use crate::kernel::{KernelSpec, RadialKernel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Rkhs,
    L2,
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norm::Rkhs => "rkhs",
            Norm::L2 => "l2",
        })
    }
}

/// Distribution the estimator samples from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Gaussian(IsotropicGaussian),
    TwoPoint(TwoPointDiscrete),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateExperimentConfig {
    pub kernel: KernelSpec,
    pub target: Target,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub norm: Norm,
    pub seed: u64,
}

impl RateExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n < 2) {
            return Err(KmeError::InvalidArgument("n_grid must be nonempty with all n >= 2".into()));
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(KmeError::InvalidArgument("n_grid must be strictly increasing".into()));
        }
        if self.replicates < 1 {
            return Err(KmeError::InvalidArgument("replicates must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateError {
    pub n: usize,
    pub replicate: usize,
    pub error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerNSummary {
    pub n: usize,
    pub mean_error: f64,
    pub median_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub norm: Norm,
    pub seed: u64,
    pub errors: Vec<ReplicateError>,
    pub per_n: Vec<PerNSummary>,
    /// Least-squares slope of log(mean error) against log n; absent for a
    /// single-point grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    /// Basic-bootstrap 95% interval for the slope (1000 resamples).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_ci: Option<(f64, f64)>,
}

impl RateReport {
    /// CSV with columns `n,replicate,error`.
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("n,replicate,error\n");
        for e in &self.errors {
            out.push_str(&format!("{},{},{:.17e}\n", e.n, e.replicate, e.error));
        }
        out
    }
}

/// Generator keyed by (seed, n, replicate); the constants separate the
/// streams of unrelated experiment stages.
pub fn replicate_rng(seed: u64, n: usize, replicate: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(n as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(replicate as u64).to_le_bytes());
    key[24..32].copy_from_slice(&0x6b6d655f72617465u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub(crate) fn draw_sample(target: &Target, n: usize, rng: &mut ChaCha8Rng) -> WeightedPointMeasure {
    let points: Vec<Vec<f64>> = match target {
        Target::Gaussian(g) => {
            let sd = g.sigma2.sqrt();
            (0..n)
                .map(|_| {
                    g.mu
                        .iter()
                        .map(|&m| m + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect()
                })
                .collect()
        }
        Target::TwoPoint(t) => (0..n)
            .map(|_| if rng.random::<f64>() < t.p { t.x.clone() } else { t.v.clone() })
            .collect(),
    };
    WeightedPointMeasure::uniform(points).expect("n >= 1 uniform weights")
}

/// `n` i.i.d. draws with uniform weights, deterministic given `seed`.
pub fn sample_target(target: &Target, n: usize, seed: u64) -> Result<WeightedPointMeasure> {
    if n < 1 {
        return Err(KmeError::InvalidArgument("need n >= 1 draws".into()));
    }
    let mut rng = replicate_rng(seed, n, usize::MAX);
    Ok(draw_sample(target, n, &mut rng))
}

/// Both squared errors (RKHS, L2) of a uniform sample against a Gaussian
/// target for an atom-only kernel, sharing the pairwise distance loop. For a
/// single atom `t` one exponential per pair serves both norms, since the L2
/// cross-correlation decays at rate `t/2`.
fn gauss_errors_atoms(
    kernel: &RadialKernel,
    sample: &WeightedPointMeasure,
    g: &IsotropicGaussian,
) -> (f64, f64) {
    let d = kernel.d as f64;
    let half_d = d / 2.0;
    let atoms = &kernel.nu.atoms;
    let s2 = g.sigma2;
    let n = sample.points.len();
    let nf = n as f64;
    let dim = sample.dim();
    let pts: &Vec<Vec<f64>> = &sample.points;

    // Per-atom-pair L2 cross constants (diagonal once, off-diagonal twice).
    let mut l2_pairs: Vec<(f64, f64)> = Vec::new(); // (S_ab, C_ab)
    for a in 0..atoms.len() {
        for b in a..atoms.len() {
            let (ta, ma) = atoms[a];
            let (tb, mb) = atoms[b];
            let s = ta * tb / (ta + tb);
            let c = (std::f64::consts::PI / (ta + tb)).powf(half_d) * ma * mb * if a == b { 1.0 } else { 2.0 };
            l2_pairs.push((s, c));
        }
    }

    let single = atoms.len() == 1;
    let (t0, m0) = atoms[0];
    let half_t0 = 0.5 * t0;
    let l2c0 = l2_pairs[0].1;

    // Pairwise sums: sum_{i<j} of per-atom exponentials.
    let mut rkhs_pair = 0.0f64;
    let mut l2_pair = vec![0.0f64; l2_pairs.len()];
    for i in 0..n {
        let pi = &pts[i];
        for j in (i + 1)..n {
            let pj = &pts[j];
            let mut r2 = 0.0;
            for k in 0..dim {
                let diff = pi[k] - pj[k];
                r2 += diff * diff;
            }
            if single {
                let u = (-half_t0 * r2).exp();
                rkhs_pair += u * u;
                l2_pair[0] += u;
            } else {
                for &(t, m) in atoms.iter() {
                    rkhs_pair += m * (-t * r2).exp();
                }
                for (idx, &(s, _)) in l2_pairs.iter().enumerate() {
                    l2_pair[idx] += (-s * r2).exp();
                }
            }
        }
    }
    let (rkhs_gram, l2_gram);
    if single {
        rkhs_gram = m0 * (nf + 2.0 * rkhs_pair);
        l2_gram = l2c0 * (nf + 2.0 * l2_pair[0]);
    } else {
        let psi0: f64 = atoms.iter().map(|&(_, m)| m).sum();
        rkhs_gram = psi0 * nf + 2.0 * rkhs_pair;
        l2_gram = l2_pairs
            .iter()
            .zip(&l2_pair)
            .map(|(&(_, c), &acc)| c * (nf + 2.0 * acc))
            .sum::<f64>();
    }

    // Cross terms sum_i <k(., x_i), theta> and the L2 analog.
    let mut rkhs_cross = 0.0f64;
    let mut l2_cross = 0.0f64;
    for p in pts.iter() {
        let r2 = sq_dist(p, &g.mu);
        for &(t, m) in atoms.iter() {
            let a = 1.0 + 2.0 * t * s2;
            rkhs_cross += m * a.powf(-half_d) * (-t * r2 / a).exp();
        }
        for &(s, c) in l2_pairs.iter() {
            let a = 1.0 + 2.0 * s * s2;
            l2_cross += c * a.powf(-half_d) * (-s * r2 / a).exp();
        }
    }

    // Self terms.
    let mut rkhs_self = 0.0f64;
    for &(t, m) in atoms.iter() {
        rkhs_self += m * (1.0 + 4.0 * t * s2).powf(-half_d);
    }
    let mut l2_self = 0.0f64;
    for a in 0..atoms.len() {
        for b in a..atoms.len() {
            let (ta, ma) = atoms[a];
            let (tb, mb) = atoms[b];
            let da = 2.0 * ta * s2 + 1.0;
            let db = 2.0 * tb * s2 + 1.0;
            let mult = if a == b { 1.0 } else { 2.0 };
            l2_self += mult * ma * mb * (std::f64::consts::PI / (ta * db + tb * da)).powf(half_d);
        }
    }

    let inv_n2 = 1.0 / (nf * nf);
    let rkhs2 = (rkhs_gram * inv_n2 - 2.0 * rkhs_cross / nf + rkhs_self).max(0.0);
    let l22 = (l2_gram * inv_n2 - 2.0 * l2_cross / nf + l2_self).max(0.0);
    (rkhs2, l22)
}

fn atoms_only(kernel: &RadialKernel) -> bool {
    !kernel.nu.has_density() && kernel.nu.atoms.iter().all(|&(t, _)| t > 0.0)
}

/// Embedding-estimation error `|mu_sample - mu_target|` in the chosen norm.
pub fn empirical_error(
    kernel: &RadialKernel,
    sample: &WeightedPointMeasure,
    target: &Target,
    norm: Norm,
) -> Result<f64> {
    let uniform = sample
        .weights
        .iter()
        .all(|&w| (w - 1.0 / sample.points.len() as f64).abs() < 1e-15);
    let sq = match (target, norm) {
        (Target::Gaussian(g), _) if atoms_only(kernel) && uniform => {
            let (r, l) = gauss_errors_atoms(kernel, sample, g);
            match norm {
                Norm::Rkhs => r,
                Norm::L2 => l,
            }
        }
        (Target::Gaussian(g), Norm::Rkhs) => geometry::mmd_empirical_vs_gauss(kernel, sample, g)?,
        (Target::Gaussian(g), Norm::L2) => geometry::l2_empirical_vs_gauss(kernel, sample, g)?,
        (Target::TwoPoint(t), _) => {
            let b = WeightedPointMeasure::new(
                vec![t.x.clone(), t.v.clone()],
                vec![t.p, 1.0 - t.p],
            )?;
            match norm {
                Norm::Rkhs => geometry::mmd_weighted(kernel, sample, &b)?,
                Norm::L2 => geometry::l2_weighted(kernel, sample, &b)?,
            }
        }
    };
    Ok(sq.sqrt())
}

fn slope_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Run the experiment for several norms at once, sharing samples and the
/// pairwise kernel sums across norms. `config.norm` is ignored here; each
/// returned report records its own norm.
pub fn run_rate_experiment_multi(
    config: &RateExperimentConfig,
    norms: &[Norm],
) -> Result<Vec<RateReport>> {
    config.validate()?;
    let kernel = config.kernel.build()?;
    if norms.contains(&Norm::L2) {
        kernel.require_moment_condition()?;
    }
    let fast = matches!(config.target, Target::Gaussian(_)) && atoms_only(&kernel);

    // errors[k][norm_idx] per n
    let mut per_norm_errors: Vec<Vec<Vec<f64>>> = vec![Vec::new(); norms.len()];
    for &n in &config.n_grid {
        let replicate_errs: Vec<Result<Vec<f64>>> = (0..config.replicates)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replicate_rng(config.seed, n, rep);
                let sample = draw_sample(&config.target, n, &mut rng);
                if fast {
                    if let Target::Gaussian(g) = &config.target {
                        let (r2, l22) = gauss_errors_atoms(&kernel, &sample, g);
                        return Ok(norms
                            .iter()
                            .map(|nm| match nm {
                                Norm::Rkhs => r2.sqrt(),
                                Norm::L2 => l22.sqrt(),
                            })
                            .collect());
                    }
                }
                norms
                    .iter()
                    .map(|&nm| {
                        empirical_error(&kernel, &sample, &config.target, nm).map_err(|e| {
                            KmeError::ConstructionFailure(format!(
                                "replicate {rep} at n = {n} failed: {e}"
                            ))
                        })
                    })
                    .collect()
            })
            .collect();
        let mut per_rep: Vec<Vec<f64>> = Vec::with_capacity(config.replicates);
        for r in replicate_errs {
            per_rep.push(r?);
        }
        for (k, bucket) in per_norm_errors.iter_mut().enumerate() {
            bucket.push(per_rep.iter().map(|v| v[k]).collect());
        }
    }

    let mut reports = Vec::with_capacity(norms.len());
    for (k, &norm) in norms.iter().enumerate() {
        reports.push(assemble_report(config, norm, &per_norm_errors[k]));
    }
    Ok(reports)
}

fn assemble_report(config: &RateExperimentConfig, norm: Norm, errors_by_n: &[Vec<f64>]) -> RateReport {
    let mut errors = Vec::new();
    let mut per_n = Vec::new();
    for (i, &n) in config.n_grid.iter().enumerate() {
        let errs = &errors_by_n[i];
        for (rep, &e) in errs.iter().enumerate() {
            errors.push(ReplicateError { n, replicate: rep, error: e });
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let mut copy = errs.clone();
        per_n.push(PerNSummary { n, mean_error: mean, median_error: median(&mut copy) });
    }

    let (mut slope, mut intercept, mut slope_ci) = (None, None, None);
    if config.n_grid.len() >= 2 {
        let xs: Vec<f64> = config.n_grid.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = per_n.iter().map(|p| p.mean_error.max(1e-300).ln()).collect();
        let (s, b) = slope_fit(&xs, &ys);
        slope = Some(s);
        intercept = Some(b);

        // Basic bootstrap over replicates within each n.
        let mut rng = replicate_rng(config.seed, 0, usize::MAX - 1);
        let b_count = 1000;
        let mut boot = Vec::with_capacity(b_count);
        for _ in 0..b_count {
            let ys_b: Vec<f64> = errors_by_n
                .iter()
                .map(|errs| {
                    let m = errs.len();
                    let mean = (0..m).map(|_| errs[rng.random_range(0..m)]).sum::<f64>() / m as f64;
                    mean.max(1e-300).ln()
                })
                .collect();
            boot.push(slope_fit(&xs, &ys_b).0);
        }
        boot.sort_by(f64::total_cmp);
        let q = |p: f64| boot[((p * (b_count as f64 - 1.0)).round() as usize).min(b_count - 1)];
        let (lo, hi) = (2.0 * s - q(0.975), 2.0 * s - q(0.025));
        slope_ci = Some((lo.min(s), hi.max(s)));
    }

    RateReport { norm, seed: config.seed, errors, per_n, slope, intercept, slope_ci }
}

/// Run the experiment in the configured norm.
pub fn run_rate_experiment(config: &RateExperimentConfig) -> Result<RateReport> {
    Ok(run_rate_experiment_multi(config, &[config.norm])?.pop().expect("one norm"))
}

/// Concentration bound `sqrt(Ck/n) + sqrt(2 Ck log(1/delta) / n)` on the
/// embedding error, holding with probability at least `1 - delta`.
pub fn hoeffding_bound(ck: f64, n: usize, delta: f64) -> Result<f64> {
    if !(ck > 0.0) {
        return Err(KmeError::InvalidArgument(format!("Ck = {ck} must be > 0")));
    }
    if n < 1 {
        return Err(KmeError::InvalidArgument("n must be >= 1".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(KmeError::InvalidArgument(format!("delta = {delta} must lie in (0, 1]")));
    }
    let nf = n as f64;
    Ok((ck / nf).sqrt() + (2.0 * ck * (1.0 / delta).ln() / nf).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gauss_target(d: usize, sigma2: f64) -> Target {
        Target::Gaussian(IsotropicGaussian::new(vec![0.0; d], sigma2).unwrap())
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = gauss_target(2, 1.0);
        let a = sample_target(&t, 5, 99).unwrap();
        let b = sample_target(&t, 5, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_target(&t, 5, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampler_mean_close_to_target_mean() {
        let t = gauss_target(1, 1.0);
        let s = sample_target(&t, 1_000_000, 7).unwrap();
        let mean: f64 = s.points.iter().map(|p| p[0]).sum::<f64>() / s.points.len() as f64;
        assert!(mean.abs() < 4.0 / (1_000_000f64).sqrt());
    }

    #[test]
    fn two_point_exact_sample_has_zero_error() {
        let k = RadialKernel::gaussian(1.0, 1).unwrap();
        let t = TwoPointDiscrete::new(vec![0.0], vec![1.0], 0.25).unwrap();
        let sample = WeightedPointMeasure::new(
            vec![vec![0.0], vec![1.0]],
            vec![0.25, 0.75],
        )
        .unwrap();
        let e = empirical_error(&k, &sample, &Target::TwoPoint(t), Norm::Rkhs).unwrap();
        assert!(e < 1e-9);
    }

    #[test]
    fn fast_path_matches_generic_formulas() {
        let t = gauss_target(2, 0.8);
        let sample = sample_target(&t, 40, 3).unwrap();
        let g = match &t {
            Target::Gaussian(g) => g.clone(),
            _ => unreachable!(),
        };
        for k in [
            RadialKernel::gaussian(1.0, 2).unwrap(),
            RadialKernel::gaussian_mixture(&[0.6, 0.4], &[1.0, 0.5], 2).unwrap(),
        ] {
            let (r2, l22) = gauss_errors_atoms(&k, &sample, &g);
            let r2_gen = geometry::mmd_empirical_vs_gauss(&k, &sample, &g).unwrap();
            let l22_gen = geometry::l2_empirical_vs_gauss(&k, &sample, &g).unwrap();
            assert_relative_eq!(r2, r2_gen, epsilon = 1e-13, max_relative = 1e-10);
            assert_relative_eq!(l22, l22_gen, epsilon = 1e-12, max_relative = 1e-9);
        }
    }

    #[test]
    fn single_sample_matches_three_term_formula() {
        let k = RadialKernel::gaussian(1.0, 1).unwrap();
        let sample = WeightedPointMeasure::uniform(vec![vec![0.0]]).unwrap();
        let e = empirical_error(&k, &sample, &gauss_target(1, 1.0), Norm::Rkhs).unwrap();
        let expect = (1.0 - 2.0 / 2.0f64.sqrt() + 1.0 / 3.0f64.sqrt()).sqrt();
        assert_relative_eq!(e, expect, max_relative = 1e-12);
    }

    #[test]
    fn hoeffding_values() {
        assert_relative_eq!(hoeffding_bound(1.0, 100, 1.0).unwrap(), 0.1, max_relative = 1e-15);
        assert_relative_eq!(
            hoeffding_bound(1.0, 100, (-0.5f64).exp()).unwrap(),
            0.2,
            max_relative = 1e-12
        );
        assert!(hoeffding_bound(0.0, 10, 0.5).is_err());
        assert!(hoeffding_bound(1.0, 10, 0.0).is_err());
    }

    #[test]
    fn report_is_deterministic_and_slope_sane() {
        let cfg = RateExperimentConfig {
            kernel: RadialKernel::gaussian(1.0, 1).unwrap().to_spec(),
            target: gauss_target(1, 1.0),
            n_grid: vec![16, 32, 64, 128, 256],
            replicates: 60,
            norm: Norm::Rkhs,
            seed: 11,
        };
        let a = run_rate_experiment(&cfg).unwrap();
        let b = run_rate_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        let slope = a.slope.unwrap();
        assert!(slope < -0.3 && slope > -0.7, "slope {slope}");
        let (lo, hi) = a.slope_ci.unwrap();
        assert!(lo <= slope && slope <= hi);
        // Run under a different worker count: results must not move.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| run_rate_experiment(&cfg).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn multi_norm_matches_single_norm_runs() {
        let cfg = RateExperimentConfig {
            kernel: RadialKernel::gaussian(1.0, 1).unwrap().to_spec(),
            target: gauss_target(1, 1.0),
            n_grid: vec![8, 16, 32],
            replicates: 10,
            norm: Norm::Rkhs,
            seed: 5,
        };
        let both = run_rate_experiment_multi(&cfg, &[Norm::Rkhs, Norm::L2]).unwrap();
        let rkhs = run_rate_experiment(&cfg).unwrap();
        let mut cfg_l2 = cfg.clone();
        cfg_l2.norm = Norm::L2;
        let l2 = run_rate_experiment(&cfg_l2).unwrap();
        assert_eq!(both[0], rkhs);
        assert_eq!(both[1], l2);
    }

    #[test]
    fn degenerate_single_n_grid_has_no_slope() {
        let cfg = RateExperimentConfig {
            kernel: RadialKernel::gaussian(1.0, 1).unwrap().to_spec(),
            target: gauss_target(1, 1.0),
            n_grid: vec![32],
            replicates: 5,
            norm: Norm::Rkhs,
            seed: 1,
        };
        let r = run_rate_experiment(&cfg).unwrap();
        assert!(r.slope.is_none() && r.slope_ci.is_none());
    }

    #[test]
    fn mean_error_nonincreasing_in_n() {
        let cfg = RateExperimentConfig {
            kernel: RadialKernel::gaussian(1.0, 1).unwrap().to_spec(),
            target: gauss_target(1, 1.0),
            n_grid: vec![16, 64, 256],
            replicates: 80,
            norm: Norm::Rkhs,
            seed: 2,
        };
        let r = run_rate_experiment(&cfg).unwrap();
        for w in r.per_n.windows(2) {
            // medians, with generous noise tolerance at these replicate counts
            assert!(w[1].median_error <= w[0].median_error * 1.15);
        }
    }
}
