//! Adaptive Gauss-Kronrod quadrature plus `nu`-measure integration.
//!
//! Density components are integrated in log space (`t = e^u`), with the
//! integration window taken from extreme quantiles of the component and the
//! initial panel split at the component's mode. Atoms are summed exactly and
//! never touch the quadrature error budget.

use statrs::distribution::{ContinuousCDF, Gamma, InverseGamma};
use std::cell::Cell;
use std::collections::BinaryHeap;

use crate::error::{KmeError, Result};
use crate::measure::NuMeasure;

pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_REL_TOL: f64 = 1e-8;
const MAX_PANELS: u32 = 4000;

/// Outcome of a numerical integration. `converged` is honest: it is set only
/// when the internal error estimate met the requested tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: u32,
    pub converged: bool,
}

impl QuadratureResult {
    pub fn exact(value: f64) -> Self {
        QuadratureResult { value, error_estimate: 0.0, panels: 0, converged: true }
    }

    pub fn into_value(self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(KmeError::IntegrationFailure { error_estimate: self.error_estimate })
        }
    }

    fn combine(self, other: QuadratureResult) -> QuadratureResult {
        QuadratureResult {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            panels: self.panels + other.panels,
            converged: self.converged && other.converged,
        }
    }
}

// 15-point Kronrod extension of 7-point Gauss-Legendre (nodes on [-1, 1]).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Gauss-Kronrod panel: returns (kronrod value, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let fsum = f(c - x) + f(c + x);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    kronrod *= h;
    gauss *= h;
    let diff = (kronrod - gauss).abs();
    // QUADPACK-style sharpened error estimate for smooth integrands.
    let scale = kronrod.abs().max(1e-300);
    let err = if diff == 0.0 {
        0.0
    } else {
        (diff * (200.0 * diff / scale).min(1.0).powf(1.5)).max(f64::EPSILON * scale)
    };
    (kronrod, err.max(diff * 1e-4))
}

#[derive(PartialEq)]
struct Panel {
    err: f64,
    a: f64,
    b: f64,
    value: f64,
}

impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err).then(self.a.total_cmp(&other.a))
    }
}

/// Adaptive integration of `f` over the finite interval `[a, b]`, worst
/// panel first. `split_points` seeds interior breakpoints (peaks, modes).
pub fn adaptive_gk<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    split_points: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> QuadratureResult {
    if a == b {
        return QuadratureResult::exact(0.0);
    }
    let mut edges: Vec<f64> = vec![a];
    for &s in split_points {
        if s > a && s < b {
            edges.push(s);
        }
    }
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut heap: BinaryHeap<Panel> = BinaryHeap::new();
    let mut panels = 0u32;
    for w in edges.windows(2) {
        let (v, e) = gk15(f, w[0], w[1]);
        heap.push(Panel { err: e, a: w[0], b: w[1], value: v });
        panels += 1;
    }
    loop {
        let total: f64 = heap.iter().map(|p| p.value).sum();
        let err: f64 = heap.iter().map(|p| p.err).sum();
        let tol = abs_tol.max(rel_tol * total.abs());
        if err <= tol {
            return QuadratureResult { value: total, error_estimate: err, panels, converged: true };
        }
        if panels >= MAX_PANELS {
            return QuadratureResult { value: total, error_estimate: err, panels, converged: false };
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval no longer splittable in f64; keep its estimate.
            let mut total = worst.value;
            let mut err = worst.err;
            for p in heap.iter() {
                total += p.value;
                err += p.err;
            }
            return QuadratureResult {
                value: total,
                error_estimate: err,
                panels,
                converged: err <= abs_tol.max(rel_tol * total.abs()),
            };
        }
        let (v1, e1) = gk15(f, worst.a, mid);
        let (v2, e2) = gk15(f, mid, worst.b);
        heap.push(Panel { err: e1, a: worst.a, b: mid, value: v1 });
        heap.push(Panel { err: e2, a: mid, b: worst.b, value: v2 });
        panels += 1;
    }
}

/// Quantile-based integration window and mode of a density component, used
/// to bound and seed the log-space quadrature.
struct ComponentWindow {
    lo: f64,
    hi: f64,
    mode: f64,
    /// Interior quantiles seeding the initial panels. Without them a narrow
    /// integrand feature can fall between the Kronrod nodes of a single wide
    /// panel and the adaptive refinement converges to a wrong value.
    splits: Vec<f64>,
}

/// Probabilities of the quantile split points used for every component.
const SPLIT_QUANTILES: [f64; 9] =
    [1e-9, 1e-6, 1e-3, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0 - 1e-3];

impl ComponentWindow {
    /// Log-space split points: the quantiles plus the mode, clamped into the
    /// window.
    fn log_splits(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .splits
            .iter()
            .chain(std::iter::once(&self.mode))
            .filter(|&&t| t > self.lo && t < self.hi)
            .map(|t| t.ln())
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

fn gamma_window(shape: f64, rate: f64) -> ComponentWindow {
    let dist = Gamma::new(shape, rate).expect("validated component");
    let eps = 1e-15;
    let mut lo = dist.inverse_cdf(eps);
    let mut hi = dist.inverse_cdf(1.0 - eps);
    if !(lo > 0.0) || !lo.is_finite() {
        lo = (shape / rate) * 1e-12;
    }
    if !hi.is_finite() || hi <= lo {
        hi = (shape / rate + 50.0 * (shape.sqrt() / rate)).max(lo * 10.0);
    }
    // Widen: the integrand may re-weight the tails relative to the density.
    lo *= 1e-3;
    hi *= 1e3;
    let mode = if shape > 1.0 { (shape - 1.0) / rate } else { dist.inverse_cdf(0.5) };
    let splits = SPLIT_QUANTILES.iter().map(|&q| dist.inverse_cdf(q)).collect();
    ComponentWindow { lo, hi, mode: mode.clamp(lo, hi), splits }
}

fn invgamma_window(shape: f64, scale: f64) -> ComponentWindow {
    let dist = InverseGamma::new(shape, scale).expect("validated component");
    let eps = 1e-15;
    let mut lo = dist.inverse_cdf(eps);
    let mut hi = dist.inverse_cdf(1.0 - eps);
    if !(lo > 0.0) || !lo.is_finite() {
        lo = scale / (shape + 1.0) * 1e-12;
    }
    if !hi.is_finite() || hi <= lo {
        hi = scale * 1e12;
    }
    lo *= 1e-3;
    hi *= 1e3;
    let mode = scale / (shape + 1.0);
    let splits = SPLIT_QUANTILES.iter().map(|&q| dist.inverse_cdf(q)).collect();
    ComponentWindow { lo, hi, mode: mode.clamp(lo, hi), splits }
}

fn gamma_log_pdf(t: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + (shape - 1.0) * t.ln() - rate * t
}

fn invgamma_log_pdf(t: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - statrs::function::gamma::ln_gamma(shape) - (shape + 1.0) * t.ln() - scale / t
}

/// `int f(t) dnu(t)`: atoms exactly, density components by adaptive
/// quadrature in log space.
pub fn integrate_nu<F: Fn(f64) -> f64>(
    f: &F,
    nu: &NuMeasure,
    abs_tol: f64,
    rel_tol: f64,
) -> QuadratureResult {
    let atom_part: f64 = nu.atoms.iter().map(|&(t, m)| m * f(t)).sum();
    let mut result = QuadratureResult::exact(atom_part);
    for g in &nu.gamma_components {
        let w = gamma_window(g.shape, g.rate);
        let integrand =
            |u: f64| -> f64 {
                let t = u.exp();
                let lp = gamma_log_pdf(t, g.shape, g.rate);
                if lp < -745.0 {
                    return 0.0;
                }
                f(t) * lp.exp() * t
            };
        let r = adaptive_gk(&integrand, w.lo.ln(), w.hi.ln(), &w.log_splits(), abs_tol, rel_tol);
        result = result.combine(QuadratureResult { value: g.weight * r.value, ..r });
    }
    for g in &nu.invgamma_components {
        let w = invgamma_window(g.shape, g.scale);
        let integrand =
            |u: f64| -> f64 {
                let t = u.exp();
                let lp = invgamma_log_pdf(t, g.shape, g.scale);
                if lp < -745.0 {
                    return 0.0;
                }
                f(t) * lp.exp() * t
            };
        let r = adaptive_gk(&integrand, w.lo.ln(), w.hi.ln(), &w.log_splits(), abs_tol, rel_tol);
        result = result.combine(QuadratureResult { value: g.weight * r.value, ..r });
    }
    result
}

/// `int int f(t1, t2) dnu(t1) dnu(t2)` by nesting `integrate_nu`. Atom-atom
/// terms are exact; the inner quadrature runs at a tighter tolerance so its
/// error does not dominate the outer estimate.
pub fn integrate_nu_double<F: Fn(f64, f64) -> f64>(
    f: &F,
    nu: &NuMeasure,
    abs_tol: f64,
    rel_tol: f64,
) -> QuadratureResult {
    let inner_err = Cell::new(0.0f64);
    let inner_panels = Cell::new(0u32);
    let inner_ok = Cell::new(true);
    let outer = integrate_nu(
        &|t1: f64| {
            let r = integrate_nu(&|t2: f64| f(t1, t2), nu, abs_tol * 0.1, rel_tol * 0.1);
            inner_err.set(inner_err.get().max(r.error_estimate));
            inner_panels.set(inner_panels.get().saturating_add(r.panels));
            if !r.converged {
                inner_ok.set(false);
            }
            r.value
        },
        nu,
        abs_tol,
        rel_tol,
    );
    QuadratureResult {
        value: outer.value,
        error_estimate: outer.error_estimate + inner_err.get() * nu.total_mass(),
        panels: outer.panels.saturating_add(inner_panels.get()),
        converged: outer.converged && inner_ok.get(),
    }
}
