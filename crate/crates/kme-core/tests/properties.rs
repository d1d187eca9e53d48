//! Property-based invariants of the kernel profiles, spectral densities, and
//! embedding distances.

use kme_core::geometry::{rkhs_gauss_dist2, rkhs_gauss_inner, IsotropicGaussian};
use kme_core::kernel::RadialKernel;
use kme_core::quad::adaptive_gk;
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum FamilyPick {
    Gaussian { eta: f64 },
    Mixture { b: (f64, f64), e: (f64, f64) },
    Imq { c: f64, gamma: f64 },
    Matern { c: f64, excess: f64 },
}

fn family_strategy() -> impl Strategy<Value = FamilyPick> {
    prop_oneof![
        (0.5f64..2.0).prop_map(|eta| FamilyPick::Gaussian { eta }),
        ((0.2f64..1.0), (0.2f64..1.0), (1.2f64..2.5), (0.4f64..1.0))
            .prop_map(|(b0, b1, e0, e1)| FamilyPick::Mixture { b: (b0, b1), e: (e0, e1) }),
        ((0.8f64..1.5), (1.6f64..3.0)).prop_map(|(c, gamma)| FamilyPick::Imq { c, gamma }),
        ((0.8f64..1.5), (1.0f64..2.5)).prop_map(|(c, excess)| FamilyPick::Matern { c, excess }),
    ]
}

fn build(pick: &FamilyPick, d: u32) -> RadialKernel {
    match pick {
        FamilyPick::Gaussian { eta } => RadialKernel::gaussian(*eta, d).unwrap(),
        FamilyPick::Mixture { b, e } => {
            RadialKernel::gaussian_mixture(&[b.0, b.1], &[e.0, e.1], d).unwrap()
        }
        FamilyPick::Imq { c, gamma } => {
            RadialKernel::inverse_multiquadric(*c, *gamma, d).unwrap()
        }
        FamilyPick::Matern { c, excess } => {
            RadialKernel::matern(d as f64 / 2.0 + excess, *c, d).unwrap()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// The kernel profile is positive, bounded by its value at zero, and
    /// nonincreasing in the squared radius.
    #[test]
    fn profile_monotone_and_bounded(
        pick in family_strategy(),
        d in 1u32..=3,
        r2a in 0.0f64..30.0,
        r2b in 0.0f64..30.0,
    ) {
        let k = build(&pick, d);
        let psi0 = k.eval_psi(0.0).unwrap();
        let (lo, hi) = if r2a <= r2b { (r2a, r2b) } else { (r2b, r2a) };
        let (plo, phi) = (k.eval_psi(lo).unwrap(), k.eval_psi(hi).unwrap());
        prop_assert!(phi > 0.0);
        prop_assert!(plo <= psi0 + 1e-12 * psi0);
        prop_assert!(phi <= plo + 1e-10 * psi0);
    }

    /// The spectral density is strictly positive wherever defined.
    #[test]
    fn spectral_density_positive(
        pick in family_strategy(),
        d in 1u32..=3,
        w2 in 0.0f64..50.0,
    ) {
        let k = build(&pick, d);
        if k.require_moment_condition().is_ok() {
            prop_assert!(k.spectral_density(w2).unwrap() > 0.0);
        }
    }

    /// Metric axioms for the embedding distance between Gaussian locations:
    /// symmetry, near-zero coincidence, and the triangle inequality.
    #[test]
    fn embedding_distance_is_a_metric(
        pick in family_strategy(),
        d in 1u32..=2,
        sigma2 in 0.4f64..1.5,
        coords in prop::collection::vec(-1.5f64..1.5, 6),
    ) {
        let k = build(&pick, d);
        let dd = d as usize;
        let g = |s: &[f64]| IsotropicGaussian::new(s[..dd].to_vec(), sigma2).unwrap();
        let (a, b, c) = (g(&coords[0..2]), g(&coords[2..4]), g(&coords[4..6]));
        let dist = |x: &IsotropicGaussian, y: &IsotropicGaussian| {
            rkhs_gauss_dist2(&k, x, y).unwrap().max(0.0).sqrt()
        };
        let (ab, ba) = (dist(&a, &b), dist(&b, &a));
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert!(dist(&a, &a) <= 1e-7);
        let (bc, ac) = (dist(&b, &c), dist(&a, &c));
        prop_assert!(ac <= ab + bc + 1e-10);
    }

    /// Polarization: dist^2 = <a,a> + <b,b> - 2<a,b> for the same closed
    /// forms.
    #[test]
    fn polarization_identity(
        pick in family_strategy(),
        d in 1u32..=2,
        sigma2 in 0.4f64..1.5,
        coords in prop::collection::vec(-1.5f64..1.5, 4),
    ) {
        let k = build(&pick, d);
        let dd = d as usize;
        let a = IsotropicGaussian::new(coords[0..dd].to_vec(), sigma2).unwrap();
        let b = IsotropicGaussian::new(coords[2..2 + dd].to_vec(), sigma2).unwrap();
        let lhs = rkhs_gauss_dist2(&k, &a, &b).unwrap();
        let (aa, bb, ab) = (
            rkhs_gauss_inner(&k, &a, &a).unwrap(),
            rkhs_gauss_inner(&k, &b, &b).unwrap(),
            rkhs_gauss_inner(&k, &a, &b).unwrap(),
        );
        let rhs = aa + bb - 2.0 * ab;
        // Each inner product is an independent quadrature at ~1e-8 relative
        // accuracy and the identity cancels them, so normalize by their size.
        let scale = 1.0 + aa.abs() + bb.abs() + 2.0 * ab.abs();
        prop_assert!((lhs - rhs).abs() <= 1e-7 * scale);
    }

    /// For a single-atom kernel the Gaussian-pair distance follows the exact
    /// two-parameter law `C1 (1 - exp(-C2 r2))`: two evaluations determine
    /// the curve, a third must land on it.
    #[test]
    fn single_atom_distance_law(
        eta in 0.5f64..2.0,
        d in 1u32..=3,
        sigma2 in 0.4f64..1.5,
        r2a in 0.05f64..1.0,
        r2c in 0.05f64..4.0,
    ) {
        let k = RadialKernel::gaussian(eta, d).unwrap();
        let dd = d as usize;
        let pair = |r2: f64| {
            let mut mu = vec![0.0; dd];
            mu[0] = r2.sqrt();
            let g0 = IsotropicGaussian::new(vec![0.0; dd], sigma2).unwrap();
            let g1 = IsotropicGaussian::new(mu, sigma2).unwrap();
            rkhs_gauss_dist2(&k, &g0, &g1).unwrap()
        };
        let r2b = 2.0 * r2a;
        let (va, vb) = (pair(r2a), pair(r2b));
        // va = C1 (1 - u), vb = C1 (1 - u^2) with u = exp(-C2 r2a)
        let u = vb / va - 1.0;
        prop_assume!(u > 1e-8 && u < 1.0 - 1e-8);
        let c1 = va / (1.0 - u);
        let c2 = -u.ln() / r2a;
        let predicted = c1 * (1.0 - (-c2 * r2c).exp());
        let actual = pair(r2c);
        prop_assert!(
            (predicted - actual).abs() <= 1e-9 * (1.0 + actual),
            "predicted {predicted} vs actual {actual}"
        );
    }
}

/// Total spectral mass equals `(2 pi)^{d/2} psi(0)` under our normalization.
#[test]
fn spectral_mass_matches_profile_at_zero() {
    let kernels = |d: u32| {
        vec![
            RadialKernel::gaussian(1.0, d).unwrap(),
            RadialKernel::gaussian_mixture(&[0.6, 0.4], &[1.0, 0.5], d).unwrap(),
            RadialKernel::inverse_multiquadric(1.0, 2.0, d).unwrap(),
            RadialKernel::matern(d as f64 / 2.0 + 1.5, 1.0, d).unwrap(),
        ]
    };
    for d in 1u32..=3 {
        let sphere = match d {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        };
        for k in kernels(d) {
            let f = |r: f64| r.powi(d as i32 - 1) * k.spectral_density(r * r).unwrap_or(f64::NAN);
            let q = adaptive_gk(&f, 0.0, 400.0, &[1.0, 5.0, 20.0, 100.0], 1e-9, 1e-7);
            let total = sphere * q.value;
            let expect = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0)
                * k.eval_psi(0.0).unwrap();
            let rel = (total - expect).abs() / expect;
            assert!(
                rel < 1e-4,
                "{} d={d}: spectral mass {total} vs (2pi)^(d/2) psi(0) = {expect}",
                k.label()
            );
        }
    }
}
