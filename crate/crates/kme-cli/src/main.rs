//! `kme-lab`: command-line driver for kernel mean embedding experiments.
//!
//! Subcommands: `rate` (Monte-Carlo convergence study), `bounds` (lower-bound
//! threshold tables), `verify` (closed-form vs oracle sweep), `lecam` (hard
//! family construction, verification, stress), `constants` (per-family scalar
//! constant tables).
//!
//! Exit codes: 0 success, 2 usage/config error, 3 numeric or construction
//! failure.

use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use kme_core::bounds::{
    alpha_for, ak_for, bk_for, bk_l2_for, bound_cor10, bound_cor2, bound_thm1, bound_thm12,
    bound_thm13, bound_thm6, bound_thm8, bound_thm9, bound_thm_e1, estimate_cpsi_eps, find_z_beta,
    BoundReport,
};
use kme_core::estimator::{
    hoeffding_bound, run_rate_experiment_multi, Norm, RateExperimentConfig, RateReport, Target,
};
use kme_core::geometry::{l2_gauss_dist2, rkhs_gauss_dist2};
use kme_core::kernel::{KernelParams, KernelSpec, RadialKernel};
use kme_core::lecam::{
    build_hard_family_thm8, minimax_stress, verify_hard_family, ConditionReport, EstimatorTag,
    StressSummary,
};
use kme_core::oracle::{bochner_rkhs_oracle, l2_dist_oracle};
use kme_core::KmeError;

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    /// Bad flags, unreadable config, invalid kernel parameters: exit 2.
    Usage(String),
    /// Quadrature, construction, or consistency failures: exit 3.
    Numeric(String),
}

type CResult<T> = Result<T, CliError>;

impl From<KmeError> for CliError {
    fn from(e: KmeError) -> Self {
        match e {
            KmeError::InvalidKernel(_)
            | KmeError::InvalidArgument(_)
            | KmeError::Unsupported(_)
            | KmeError::MomentCondition { .. } => CliError::Usage(e.to_string()),
            KmeError::IntegrationFailure { .. }
            | KmeError::ConstructionFailure(_)
            | KmeError::InternalConsistency(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("json: {e}"))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

// ---------------------------------------------------------------------------
// CLI surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "kme-lab", version, about = "Kernel mean embedding lab: rate experiments, minimax bound tables, oracle verification, hard-family construction")]
struct Cli {
    /// Worker-thread cap (fallback: env KME_LAB_JOBS). Does not affect results.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo convergence-rate experiment for the empirical embedding.
    Rate(RateArgs),
    /// Lower-bound threshold tables over (d, n) grids with sandwich columns.
    Bounds(BoundsArgs),
    /// Closed-form vs quadrature-oracle sweep over kernel families.
    Verify(VerifyArgs),
    /// Construct, verify, and stress a hard hypothesis family.
    Lecam(LecamArgs),
    /// Per-family scalar constant tables (tail mass, scale windows, A_k/B_k).
    Constants(ConstantsArgs),
}

/// Kernel selection flags shared by every subcommand.
#[derive(Args, Clone, Default, Deserialize)]
#[serde(default)]
struct KernelArgs {
    /// Kernel family: gaussian | gaussian_mixture | inverse_multiquadric | matern
    #[arg(long)]
    kernel: Option<String>,
    /// Gaussian bandwidth
    #[arg(long)]
    eta: Option<f64>,
    /// Mixture weights (comma-separated)
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    /// Mixture bandwidths (comma-separated)
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    /// Inverse-multiquadric / Matern scale
    #[arg(long)]
    c: Option<f64>,
    /// Inverse-multiquadric exponent
    #[arg(long)]
    gamma: Option<f64>,
    /// Matern smoothness (must exceed d/2)
    #[arg(long)]
    tau: Option<f64>,
    /// Path to a full kernel-spec JSON file (allows custom measures)
    #[arg(long)]
    kernel_json: Option<PathBuf>,
}

impl KernelArgs {
    fn merged(self, cfg: Self) -> Self {
        KernelArgs {
            kernel: self.kernel.or(cfg.kernel),
            eta: self.eta.or(cfg.eta),
            betas: self.betas.or(cfg.betas),
            etas: self.etas.or(cfg.etas),
            c: self.c.or(cfg.c),
            gamma: self.gamma.or(cfg.gamma),
            tau: self.tau.or(cfg.tau),
            kernel_json: self.kernel_json.or(cfg.kernel_json),
        }
    }

    /// Resolve to a kernel spec at dimension `d`.
    fn spec(&self, d: u32) -> CResult<KernelSpec> {
        if let Some(path) = &self.kernel_json {
            let text = std::fs::read_to_string(path)?;
            let mut spec: KernelSpec = serde_json::from_str(&text)?;
            spec.d = d;
            return Ok(spec);
        }
        let family = self.kernel.as_deref().ok_or_else(|| usage("missing --kernel"))?;
        let params = KernelParams {
            eta: self.eta,
            betas: self.betas.clone(),
            etas: self.etas.clone(),
            c: self.c,
            gamma: self.gamma,
            tau: self.tau,
        };
        Ok(KernelSpec { family: family.into(), d, params: Some(params), ..Default::default() })
    }
}

#[derive(Args, Default, Deserialize)]
#[serde(default)]
struct RateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    kernel_args: KernelArgs,
    /// Ambient dimension
    #[arg(long)]
    d: Option<u32>,
    /// Target distribution: gaussian | two_point
    #[arg(long)]
    target: Option<String>,
    /// Gaussian target variance
    #[arg(long)]
    sigma2: Option<f64>,
    /// Gaussian target mean (comma-separated, defaults to the origin)
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    /// Two-point target: first support point
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<f64>>,
    /// Two-point target: second support point
    #[arg(long, value_delimiter = ',')]
    v: Option<Vec<f64>>,
    /// Two-point target: probability of the first point
    #[arg(long)]
    p: Option<f64>,
    /// Sample-size grid, e.g. "64,128,...,8192" or "64..8192" (doubling)
    #[arg(long)]
    n: Option<String>,
    /// Replicates per grid point
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// rkhs | l2 | both
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// JSON file mirroring these flags (flags given on the command line win)
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Default, Deserialize)]
#[serde(default)]
struct BoundsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    kernel_args: KernelArgs,
    /// Dimension grid, e.g. "1..5" or "1,2,3"
    #[arg(long)]
    d: Option<String>,
    /// Sample-size grid, e.g. "100,10000"
    #[arg(long)]
    n: Option<String>,
    /// Bound ids to evaluate (comma-separated subset of
    /// thm1,cor2,thm6,thm8,thm9,cor10,thm12,thm13,thmE1)
    #[arg(long)]
    ids: Option<String>,
    /// Gaussian location-family variance for the strong-convexity bounds
    /// (thm6/thm12 only)
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Default, Deserialize)]
#[serde(default)]
struct VerifyArgs {
    /// Agreement tolerance: |closed - oracle| <= tol * (1 + |oracle|)
    #[arg(long)]
    tol: Option<f64>,
    /// Random location pairs per (family, d, norm) cell
    #[arg(long)]
    pairs: Option<usize>,
    /// Dimension grid, e.g. "1,2,3"
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Test mode: perturb the closed forms by 1e-3 to confirm detection
    #[arg(long, action = ArgAction::SetTrue)]
    inject_error: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Default, Deserialize)]
#[serde(default)]
struct LecamArgs {
    #[command(flatten)]
    #[serde(flatten)]
    kernel_args: KernelArgs,
    /// Ambient dimension
    #[arg(long)]
    d: Option<u32>,
    /// Sample size the family is tuned to
    #[arg(long)]
    n: Option<usize>,
    /// rkhs | l2
    #[arg(long)]
    norm: Option<String>,
    /// Stress replicates per hypothesis (0 skips the stress phase)
    #[arg(long)]
    stress: Option<usize>,
    /// empirical | zero
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Default, Deserialize)]
#[serde(default)]
struct ConstantsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    kernel_args: KernelArgs,
    /// Ambient dimension
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<KernelSpec>,
    parameters: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    version: String,
    timestamp: String,
    outputs: Vec<String>,
}

fn manifest(
    subcommand: &str,
    kernel: Option<KernelSpec>,
    parameters: serde_json::Value,
    seed: Option<u64>,
    outputs: &[PathBuf],
) -> RunManifest {
    RunManifest {
        subcommand: subcommand.into(),
        kernel,
        parameters,
        seed,
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn load_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> CResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn out_dir(dir: &Option<PathBuf>) -> CResult<PathBuf> {
    let dir = dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn parse_norm(s: &str) -> CResult<Norm> {
    match s {
        "rkhs" => Ok(Norm::Rkhs),
        "l2" => Ok(Norm::L2),
        other => Err(usage(format!("unknown norm '{other}' (expected rkhs or l2)"))),
    }
}

/// Parse a sample-size grid: comma-separated integers where the token `...`
/// (or a range `a..b`) fills in geometrically by the preceding ratio
/// (doubling by default).
fn parse_n_grid(s: &str) -> CResult<Vec<usize>> {
    let mut grid: Vec<usize> = Vec::new();
    let bad = |tok: &str| usage(format!("bad sample-size token '{tok}' in '{s}'"));
    let mut pending_fill = false;
    for tok in s.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        if tok == "..." || tok == ".." {
            pending_fill = true;
            continue;
        }
        if let Some((a, b)) = tok.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad(tok))?;
            let b: usize = b.trim().parse().map_err(|_| bad(tok))?;
            grid.push(a);
            fill_geometric(&mut grid, 2, b);
            continue;
        }
        let v: usize = tok.parse().map_err(|_| bad(tok))?;
        if pending_fill {
            let ratio = match grid.len() {
                0 => return Err(bad("...")),
                1 => 2,
                len => {
                    let r = grid[len - 1] / grid[len - 2].max(1);
                    if r >= 2 && grid[len - 1] == grid[len - 2] * r { r } else { 2 }
                }
            };
            fill_geometric(&mut grid, ratio, v);
            pending_fill = false;
        } else {
            grid.push(v);
        }
    }
    if pending_fill {
        return Err(usage(format!("trailing '...' in sample-size grid '{s}'")));
    }
    if grid.is_empty() {
        return Err(usage(format!("empty sample-size grid '{s}'")));
    }
    Ok(grid)
}

/// Extend `grid` by `ratio`-fold steps up to and including `end`.
fn fill_geometric(grid: &mut Vec<usize>, ratio: usize, end: usize) {
    let mut cur = *grid.last().expect("nonempty") * ratio;
    while cur < end {
        grid.push(cur);
        cur *= ratio;
    }
    if *grid.last().expect("nonempty") != end {
        grid.push(end);
    }
}

/// Parse a dimension grid: comma-separated integers, `a..b` inclusive ranges.
fn parse_dims(s: &str) -> CResult<Vec<u32>> {
    let mut dims = Vec::new();
    for tok in s.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        if let Some((a, b)) = tok.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|_| usage(format!("bad dimension '{tok}'")))?;
            let b: u32 = b.trim().parse().map_err(|_| usage(format!("bad dimension '{tok}'")))?;
            dims.extend(a..=b);
        } else {
            dims.push(tok.parse().map_err(|_| usage(format!("bad dimension '{tok}'")))?);
        }
    }
    if dims.is_empty() {
        return Err(usage(format!("empty dimension grid '{s}'")));
    }
    Ok(dims)
}

// ---------------------------------------------------------------------------
// rate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RateOutput {
    reports: Vec<RateReport>,
}

fn cmd_rate(args: RateArgs) -> CResult<()> {
    let cfg: RateArgs = load_config(&args.config)?;
    let a = RateArgs {
        kernel_args: args.kernel_args.merged(cfg.kernel_args),
        d: args.d.or(cfg.d),
        target: args.target.or(cfg.target),
        sigma2: args.sigma2.or(cfg.sigma2),
        mu: args.mu.or(cfg.mu),
        x: args.x.or(cfg.x),
        v: args.v.or(cfg.v),
        p: args.p.or(cfg.p),
        n: args.n.or(cfg.n),
        reps: args.reps.or(cfg.reps),
        seed: args.seed.or(cfg.seed),
        norm: args.norm.or(cfg.norm),
        out_dir: args.out_dir.or(cfg.out_dir),
        config: None,
    };

    let d = a.d.unwrap_or(1);
    let spec = a.kernel_args.spec(d)?;
    let target = match a.target.as_deref().unwrap_or("gaussian") {
        "gaussian" => {
            let sigma2 = a.sigma2.unwrap_or(1.0);
            let mu = a.mu.clone().unwrap_or_else(|| vec![0.0; d as usize]);
            if mu.len() != d as usize {
                return Err(usage(format!("--mu has {} entries, expected d = {d}", mu.len())));
            }
            Target::Gaussian(kme_core::IsotropicGaussian::new(mu, sigma2)?)
        }
        "two_point" => {
            let x = a.x.clone().ok_or_else(|| usage("two_point target needs --x"))?;
            let v = a.v.clone().ok_or_else(|| usage("two_point target needs --v"))?;
            let p = a.p.ok_or_else(|| usage("two_point target needs --p"))?;
            Target::TwoPoint(kme_core::TwoPointDiscrete::new(x, v, p)?)
        }
        other => return Err(usage(format!("unknown target '{other}'"))),
    };
    let n_grid = parse_n_grid(a.n.as_deref().unwrap_or("64,128,...,8192"))?;
    let seed = a.seed.unwrap_or(0);
    let norms: Vec<Norm> = match a.norm.as_deref().unwrap_or("rkhs") {
        "both" => vec![Norm::Rkhs, Norm::L2],
        one => vec![parse_norm(one)?],
    };

    let config = RateExperimentConfig {
        kernel: spec.clone(),
        target,
        n_grid,
        replicates: a.reps.unwrap_or(200),
        norm: norms[0],
        seed,
    };
    eprintln!("rate: seed = {seed}");
    let reports = run_rate_experiment_multi(&config, &norms).map_err(|e| match e {
        e @ (KmeError::InvalidArgument(_) | KmeError::InvalidKernel(_) | KmeError::MomentCondition { .. }) => {
            CliError::Usage(format!("rate experiment: {e}"))
        }
        e => CliError::Numeric(format!("rate experiment: {e}")),
    })?;

    let dir = out_dir(&a.out_dir)?;
    let report_path = dir.join("rate_report.json");
    let csv_path = dir.join("errors.csv");
    write_json(&report_path, &RateOutput { reports: reports.clone() })?;

    let mut csv = String::from("norm,n,replicate,error\n");
    for report in &reports {
        for row in &report.errors {
            csv.push_str(&format!(
                "{},{},{},{:.17e}\n",
                report.norm, row.n, row.replicate, row.error
            ));
        }
    }
    std::fs::write(&csv_path, csv)?;

    let outputs = vec![report_path, csv_path];
    let params = serde_json::json!({
        "d": d,
        "target": a.target.as_deref().unwrap_or("gaussian"),
        "sigma2": a.sigma2,
        "mu": a.mu,
        "n_grid": config.n_grid,
        "reps": config.replicates,
        "norms": norms,
    });
    write_json(
        &dir.join("rate_manifest.json"),
        &manifest("rate", Some(spec), params, Some(seed), &outputs),
    )?;

    for report in &reports {
        match report.slope {
            Some(s) => println!("norm = {}: fitted log-log slope = {s:.4}", report.norm),
            None => println!("norm = {}: slope unavailable (grid too small)", report.norm),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

const DEFAULT_BOUND_IDS: &str = "thm1,cor2,thm8,thm9,cor10,thm13,thmE1";

#[derive(Serialize)]
struct BoundRow {
    id: String,
    family: String,
    d: u32,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<BoundReport>,
    /// Matching upper bound (the sandwich column), where one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    upper_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skip_reason: Option<String>,
}

#[derive(Serialize)]
struct BoundsOutput {
    ids: Vec<String>,
    dims: Vec<u32>,
    n_grid: Vec<usize>,
    sigma2: f64,
    rows: Vec<BoundRow>,
}

fn cmd_bounds(args: BoundsArgs) -> CResult<()> {
    let cfg: BoundsArgs = load_config(&args.config)?;
    let a = BoundsArgs {
        kernel_args: args.kernel_args.merged(cfg.kernel_args),
        d: args.d.or(cfg.d),
        n: args.n.or(cfg.n),
        ids: args.ids.or(cfg.ids),
        sigma2: args.sigma2.or(cfg.sigma2),
        out_dir: args.out_dir.or(cfg.out_dir),
        config: None,
    };

    let dims = parse_dims(a.d.as_deref().unwrap_or("1,2,3"))?;
    let n_grid = parse_n_grid(a.n.as_deref().unwrap_or("100,10000"))?;
    let ids: Vec<String> = a
        .ids
        .as_deref()
        .unwrap_or(DEFAULT_BOUND_IDS)
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    const KNOWN: [&str; 9] =
        ["thm1", "cor2", "thm6", "thm8", "thm9", "cor10", "thm12", "thm13", "thmE1"];
    for id in &ids {
        if !KNOWN.contains(&id.as_str()) {
            return Err(usage(format!("unknown bound id '{id}'")));
        }
    }
    let sigma2 = a.sigma2.unwrap_or(1.0);

    let mut rows = Vec::new();
    let mut family = String::from("?");
    let mut kernel_spec_for_manifest: Option<KernelSpec> = None;
    for &d in &dims {
        let spec = a.kernel_args.spec(d)?;
        let kernel = match spec.build() {
            Ok(k) => k,
            Err(e) => {
                let reason = e.to_string();
                // The family does not exist at this dimension (e.g. Matern
                // smoothness below d/2); record the whole d-slice as skipped.
                for id in &ids {
                    for &n in &n_grid {
                        rows.push(BoundRow {
                            id: id.clone(),
                            family: family.clone(),
                            d,
                            n,
                            report: None,
                            upper_bound: None,
                            skip_reason: Some(reason.clone()),
                        });
                    }
                }
                continue;
            }
        };
        family = kernel.label().to_string();
        if kernel_spec_for_manifest.is_none() {
            kernel_spec_for_manifest = Some(spec.clone());
        }
        let kc = kernel.kernel_constants();
        // Per-dimension scalars shared across n; each may fail on its own.
        let zb = find_z_beta(&kernel);
        let al = alpha_for(&kernel);
        let convexity_rkhs = ids.iter().any(|i| i == "thm6").then(|| {
            estimate_cpsi_eps(&kernel, sigma2, d, Norm::Rkhs)
        });
        let convexity_l2 = ids.iter().any(|i| i == "thm12").then(|| {
            estimate_cpsi_eps(&kernel, sigma2, d, Norm::L2)
        });
        for &n in &n_grid {
            for id in &ids {
                let computed: Result<(BoundReport, Option<f64>), KmeError> = match id.as_str() {
                    "thm1" => zb
                        .as_ref()
                        .map_err(|e| clone_err(e))
                        .and_then(|&(_, beta)| bound_thm1(beta, n))
                        .map(|r| (r, None)),
                    "cor2" => al
                        .as_ref()
                        .map_err(|e| clone_err(e))
                        .and_then(|&(_, alpha)| bound_cor2(alpha, n))
                        .map(|r| (r, None)),
                    "thm6" => convexity_rkhs
                        .as_ref()
                        .expect("requested")
                        .as_ref()
                        .map_err(|e| clone_err(e))
                        .and_then(|est| bound_thm6(est.c_psi, est.eps_psi, n))
                        .map(|r| (r, None)),
                    "thm8" => bound_thm8(&kernel, n).and_then(|r| {
                        let ub = hoeffding_bound(kc.c_k_rkhs, n, 0.5)?;
                        Ok((r, Some(ub)))
                    }),
                    "thm9" => zb
                        .as_ref()
                        .map_err(|e| clone_err(e))
                        .and_then(|&(z2, _)| bound_thm9(&kernel, z2, n))
                        .map(|r| (r, None)),
                    "cor10" => bound_cor10(&kernel, n).map(|r| (r, None)),
                    "thm12" => convexity_l2
                        .as_ref()
                        .expect("requested")
                        .as_ref()
                        .map_err(|e| clone_err(e))
                        .and_then(|est| bound_thm12(est.c_psi, est.eps_psi, n))
                        .map(|r| (r, None)),
                    "thm13" => bound_thm13(&kernel, n).and_then(|r| {
                        let ub = match kc.c_k_l2 {
                            Some(ck) => Some(hoeffding_bound(ck, n, 0.5)?),
                            None => None,
                        };
                        Ok((r, ub))
                    }),
                    "thmE1" => bound_thm_e1(&kernel, n).map(|r| (r, None)),
                    other => unreachable!("id '{other}' validated above"),
                };
                let row = match computed {
                    Ok((report, upper_bound)) => BoundRow {
                        id: id.clone(),
                        family: family.clone(),
                        d,
                        n,
                        report: Some(report),
                        upper_bound,
                        skip_reason: None,
                    },
                    Err(e) => BoundRow {
                        id: id.clone(),
                        family: family.clone(),
                        d,
                        n,
                        report: None,
                        upper_bound: None,
                        skip_reason: Some(e.to_string()),
                    },
                };
                rows.push(row);
            }
        }
    }

    let dir = out_dir(&a.out_dir)?;
    let path = dir.join("bounds.json");
    let output = BoundsOutput { ids: ids.clone(), dims: dims.clone(), n_grid: n_grid.clone(), sigma2, rows };
    write_json(&path, &output)?;
    let params = serde_json::json!({ "ids": ids, "dims": dims, "n_grid": n_grid, "sigma2": sigma2 });
    write_json(
        &dir.join("bounds_manifest.json"),
        &manifest("bounds", kernel_spec_for_manifest, params, None, &[path]),
    )?;
    println!(
        "bounds: wrote {} rows ({} skipped)",
        output.rows.len(),
        output.rows.iter().filter(|r| r.skip_reason.is_some()).count()
    );
    Ok(())
}

/// `KmeError` is not `Clone`; rebuild an equivalent error from its message.
fn clone_err(e: &KmeError) -> KmeError {
    match e {
        KmeError::IntegrationFailure { error_estimate } => {
            KmeError::IntegrationFailure { error_estimate: *error_estimate }
        }
        KmeError::MomentCondition { d, detail } => {
            KmeError::MomentCondition { d: *d, detail: detail.clone() }
        }
        other => KmeError::ConstructionFailure(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VerifyCheck {
    family: String,
    d: u32,
    norm: Norm,
    pair: usize,
    sigma2: f64,
    closed: f64,
    oracle: f64,
    achieved_error: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyOutput {
    tol: f64,
    injected_error: bool,
    checks: Vec<VerifyCheck>,
    all_pass: bool,
}

/// The four standard families at their reference parameters.
fn standard_kernels(d: u32) -> Vec<RadialKernel> {
    let mut out = Vec::new();
    if let Ok(k) = RadialKernel::gaussian(1.0, d) {
        out.push(k);
    }
    if let Ok(k) = RadialKernel::gaussian_mixture(&[0.5, 0.5], &[2.0, 1.0], d) {
        out.push(k);
    }
    if let Ok(k) = RadialKernel::inverse_multiquadric(1.0, 2.0, d) {
        out.push(k);
    }
    if let Ok(k) = RadialKernel::matern(d as f64 / 2.0 + 1.5, 1.0, d) {
        out.push(k);
    }
    out
}

fn cmd_verify(args: VerifyArgs) -> CResult<()> {
    let cfg: VerifyArgs = load_config(&args.config)?;
    let a = VerifyArgs {
        tol: args.tol.or(cfg.tol),
        pairs: args.pairs.or(cfg.pairs),
        d: args.d.or(cfg.d),
        seed: args.seed.or(cfg.seed),
        inject_error: args.inject_error || cfg.inject_error,
        out_dir: args.out_dir.or(cfg.out_dir),
        config: None,
    };
    let tol = a.tol.unwrap_or(1e-6);
    if !(tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    let pairs = a.pairs.unwrap_or(5).max(1);
    let dims = parse_dims(a.d.as_deref().unwrap_or("1,2,3"))?;
    let seed = a.seed.unwrap_or(1);
    eprintln!("verify: seed = {seed}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut checks = Vec::new();
    for &d in &dims {
        for kernel in standard_kernels(d) {
            if kernel.require_moment_condition().is_err() {
                continue; // the oracles need the spectral density
            }
            for pair in 0..pairs {
                let sigma2 = if pair % 2 == 0 { 1.0 } else { 0.5 };
                let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                    (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
                };
                let g0 = kme_core::IsotropicGaussian::new(draw(&mut rng), sigma2)?;
                let g1 = kme_core::IsotropicGaussian::new(draw(&mut rng), sigma2)?;
                for norm in [Norm::Rkhs, Norm::L2] {
                    let (mut closed, oracle) = match norm {
                        Norm::Rkhs => (
                            rkhs_gauss_dist2(&kernel, &g0, &g1)?,
                            bochner_rkhs_oracle(&kernel, &g0, &g1, 1e-9)?.value,
                        ),
                        Norm::L2 => (
                            l2_gauss_dist2(&kernel, &g0, &g1)?,
                            l2_dist_oracle(&kernel, &g0, &g1, 1e-9)?.value,
                        ),
                    };
                    if a.inject_error {
                        closed += 1e-3;
                    }
                    let achieved = (closed - oracle).abs() / (1.0 + oracle.abs());
                    checks.push(VerifyCheck {
                        family: kernel.label().into(),
                        d,
                        norm,
                        pair,
                        sigma2,
                        closed,
                        oracle,
                        achieved_error: achieved,
                        pass: achieved <= tol,
                    });
                }
            }
        }
    }

    let all_pass = checks.iter().all(|c| c.pass);
    let output = VerifyOutput { tol, injected_error: a.inject_error, checks, all_pass };
    let dir = out_dir(&a.out_dir)?;
    let path = dir.join("verify.json");
    write_json(&path, &output)?;
    let params = serde_json::json!({
        "tol": tol, "pairs": pairs, "dims": dims, "inject_error": a.inject_error,
    });
    write_json(
        &dir.join("verify_manifest.json"),
        &manifest("verify", None, params, Some(seed), &[path]),
    )?;
    let failed = output.checks.iter().filter(|c| !c.pass).count();
    println!("verify: {} checks, {} failed", output.checks.len(), failed);
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "{failed} of {} closed-form vs oracle checks exceeded tol {tol:e}",
            output.checks.len()
        )))
    }
}

// ---------------------------------------------------------------------------
// lecam
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct LecamFamilySummary {
    family: String,
    d: u32,
    n: usize,
    norm: Norm,
    hypotheses: usize,
    /// Number of alternatives (hypotheses minus the base point).
    m: usize,
    s: f64,
    alpha: f64,
    sigma2: f64,
    c_nu: f64,
    packing_n: usize,
}

#[derive(Serialize)]
struct LecamOutput {
    family: LecamFamilySummary,
    report: ConditionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    stress: Option<StressSummary>,
}

fn cmd_lecam(args: LecamArgs) -> CResult<()> {
    let cfg: LecamArgs = load_config(&args.config)?;
    let a = LecamArgs {
        kernel_args: args.kernel_args.merged(cfg.kernel_args),
        d: args.d.or(cfg.d),
        n: args.n.or(cfg.n),
        norm: args.norm.or(cfg.norm),
        stress: args.stress.or(cfg.stress),
        estimator: args.estimator.or(cfg.estimator),
        seed: args.seed.or(cfg.seed),
        out_dir: args.out_dir.or(cfg.out_dir),
        config: None,
    };
    let d = a.d.unwrap_or(1);
    let n = a.n.unwrap_or(100);
    let norm = parse_norm(a.norm.as_deref().unwrap_or("rkhs"))?;
    let seed = a.seed.unwrap_or(0);
    let spec = a.kernel_args.spec(d)?;
    let kernel = spec.build()?;

    let family = build_hard_family_thm8(&kernel, n, norm)?;
    let report = verify_hard_family(&family).map_err(|e| CliError::Numeric(e.to_string()))?;
    let stress = match a.stress.unwrap_or(0) {
        0 => None,
        reps => {
            let tag = match a.estimator.as_deref().unwrap_or("empirical") {
                "empirical" => EstimatorTag::Empirical,
                "zero" => EstimatorTag::Zero,
                other => return Err(usage(format!("unknown estimator '{other}'"))),
            };
            eprintln!("lecam: stress seed = {seed}");
            Some(minimax_stress(tag, &family, reps, seed).map_err(|e| CliError::Numeric(e.to_string()))?)
        }
    };

    let overall_pass = report.overall_pass;
    let output = LecamOutput {
        family: LecamFamilySummary {
            family: kernel.label().into(),
            d,
            n,
            norm,
            hypotheses: family.hypotheses.len(),
            m: family.m,
            s: family.s,
            alpha: family.alpha,
            sigma2: family.sigma2,
            c_nu: family.c_nu,
            packing_n: family.packing_n,
        },
        report,
        stress,
    };
    let dir = out_dir(&a.out_dir)?;
    let path = dir.join("lecam.json");
    write_json(&path, &output)?;
    let params = serde_json::json!({
        "d": d, "n": n, "norm": norm, "stress": a.stress.unwrap_or(0),
        "estimator": a.estimator.as_deref().unwrap_or("empirical"),
    });
    write_json(
        &dir.join("lecam_manifest.json"),
        &manifest("lecam", Some(spec), params, Some(seed), &[path]),
    )?;
    println!(
        "lecam: {} hypotheses, s = {:.6e}, conditions {}",
        output.family.hypotheses,
        output.family.s,
        if overall_pass { "pass" } else { "FAIL" }
    );
    if let Some(stress) = &output.stress {
        println!("lecam: worst-case exceedance = {:.4}", stress.worst_case);
    }
    if overall_pass {
        Ok(())
    } else {
        Err(CliError::Numeric("hard-family conditions failed verification".into()))
    }
}

// ---------------------------------------------------------------------------
// constants
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ConstantsRow {
    family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<KernelParams>,
    d: u32,
    z_nu: f64,
    c_k_rkhs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_k_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psi_l2_sq: Option<f64>,
    /// Reference scale and tail mass `alpha = nu([t1, inf))`.
    t1: f64,
    alpha: f64,
    /// Scale window `[window_lo, window_hi]` carrying mass at least `beta`.
    window_lo: f64,
    window_hi: f64,
    beta: f64,
    /// Numerically re-verified `nu([window_lo, window_hi])`.
    window_mass: f64,
    b_k: f64,
    a_k: f64,
    b_k_l2: f64,
}

#[derive(Serialize)]
struct ConstantsOutput {
    d: u32,
    rows: Vec<ConstantsRow>,
}

fn constants_row(kernel: &RadialKernel) -> CResult<ConstantsRow> {
    let kc = kernel.kernel_constants();
    let (t1, alpha) = alpha_for(kernel)?;
    let (lo, hi, beta, b_k) = bk_for(kernel)?;
    let (_, _, _, a_k) = ak_for(kernel)?;
    let (_, _, _, b_k_l2) = bk_l2_for(kernel)?;
    let window_mass = kernel.nu_interval_mass(lo, hi)?;
    let spec = kernel.to_spec();
    Ok(ConstantsRow {
        family: kernel.label().into(),
        params: spec.params,
        d: kernel.d,
        z_nu: kc.z_nu,
        c_k_rkhs: kc.c_k_rkhs,
        c_k_l2: kc.c_k_l2,
        psi_l2_sq: kc.psi_l2_sq,
        t1,
        alpha,
        window_lo: lo,
        window_hi: hi,
        beta,
        window_mass,
        b_k,
        a_k,
        b_k_l2,
    })
}

fn cmd_constants(args: ConstantsArgs) -> CResult<()> {
    let cfg: ConstantsArgs = load_config(&args.config)?;
    let a = ConstantsArgs {
        kernel_args: args.kernel_args.merged(cfg.kernel_args),
        d: args.d.or(cfg.d),
        out_dir: args.out_dir.or(cfg.out_dir),
        config: None,
    };
    let d = a.d.unwrap_or(1);
    let kernels = if a.kernel_args.kernel.is_some() || a.kernel_args.kernel_json.is_some() {
        vec![a.kernel_args.spec(d)?.build()?]
    } else {
        let ks = standard_kernels(d);
        if ks.is_empty() {
            return Err(usage(format!("no standard family is defined at d = {d}")));
        }
        ks
    };
    let mut rows = Vec::new();
    for kernel in &kernels {
        rows.push(constants_row(kernel)?);
    }
    let output = ConstantsOutput { d, rows };
    let text = serde_json::to_string_pretty(&output)?;
    println!("{text}");

    let dir = out_dir(&a.out_dir)?;
    let path = dir.join("constants.json");
    write_json(&path, &output)?;
    let params = serde_json::json!({ "d": d });
    write_json(
        &dir.join("constants_manifest.json"),
        &manifest("constants", kernels.first().map(|k| k.to_spec()), params, None, &[path]),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

fn resolve_jobs(flag: Option<usize>) -> CResult<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("KME_LAB_JOBS") {
        Ok(v) => {
            let n: usize =
                v.parse().map_err(|_| usage(format!("KME_LAB_JOBS = '{v}' is not a number")))?;
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> CResult<()> {
    if let Some(jobs) = resolve_jobs(cli.jobs)? {
        if jobs == 0 {
            return Err(usage("--jobs must be >= 1"));
        }
        // Ignore the error if a global pool already exists; worker count
        // never changes results.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.cmd {
        Cmd::Rate(args) => cmd_rate(args),
        Cmd::Bounds(args) => cmd_bounds(args),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Lecam(args) => cmd_lecam(args),
        Cmd::Constants(args) => cmd_constants(args),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    };
    std::process::exit(code);
}
