//! Invariants that hold for every input, not just on average.

use std::sync::Arc;

use proptest::prelude::*;
use stablemc_core::estimators::{occupation_samples, resolvents, Field};
use stablemc_core::kernels::{continuity_modulus, default_h_grid, ConstantStable, KernelBounds, Modulated};
use stablemc_core::mollify::{bound_inheritance_check, estimate_mu, Mollifier, MollifiedKernel};
use stablemc_core::oracles::getoor_exit_mean;
use stablemc_core::sampler::{simulate_path, simulate_until_exit};
use stablemc_core::{EstimateWithCI, JumpKernel, ScalarField, Region, SimConfig};

fn modulated(d: usize, alpha: f64) -> Modulated {
    Modulated::checked(KernelBounds::new(d, alpha, 0.5, Some(1.0)).unwrap(), 0.3, 0.25).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wilson_intervals_are_proper(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as usize;
        let e = EstimateWithCI::wilson(k, n, 0.0);
        prop_assert!((0.0..=1.0).contains(&e.mean));
        prop_assert!(e.std_error >= 0.0);
        prop_assert!(0.0 <= e.ci_low && e.ci_low <= e.mean && e.mean <= e.ci_high && e.ci_high <= 1.0);
        prop_assert!(e.ci_high > e.ci_low);
    }

    #[test]
    fn paths_are_pure_functions_of_seed_and_index(seed in any::<u64>(), index in 0u64..1_000_000, d in 1usize..=3) {
        let k = modulated(d, 1.2);
        let cfg = SimConfig::drop(0.05, 0.5, seed);
        let x0 = vec![0.1; d];
        let a = simulate_path(&k, &x0, &cfg, index).unwrap();
        let b = simulate_path(&k, &x0, &cfg, index).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.times.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(a.times.iter().all(|&t| t > 0.0 && t <= cfg.t_max));
    }

    #[test]
    fn exit_records_straddle_the_boundary(seed in any::<u64>(), index in 0u64..1000, r in 0.2f64..2.0) {
        let k = ConstantStable::standard(2, 1.0).unwrap();
        let cfg = SimConfig::drop(0.02, 5.0, seed);
        let domain = Region::ball(&[0.0, 0.0], r);
        let (_, rec) = simulate_until_exit(&k, &[0.0, 0.0], &domain, &cfg, index).unwrap();
        prop_assert!(domain.contains(&rec.pre_exit_position));
        prop_assert_eq!(rec.exited, !domain.contains(&rec.exit_position));
        prop_assert!(rec.exit_time <= cfg.t_max);
    }

    #[test]
    fn occupation_is_monotone_in_the_set(seed in any::<u64>(), r1 in 0.05f64..0.5, dr in 0.0f64..0.4) {
        let k = modulated(1, 0.8);
        let cfg = SimConfig::drop(0.02, 5.0, seed);
        let domain = Region::ball(&[0.0], 1.0);
        let sets = [Region::ball(&[0.0], r1), Region::ball(&[0.0], r1 + dr), Region::Empty];
        for (t, _) in occupation_samples(&k, &[0.0], &sets, &domain, &cfg, 50).unwrap() {
            prop_assert!(t[0] <= t[1]);
            prop_assert_eq!(t[2], 0.0);
        }
    }

    #[test]
    fn resolvent_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let k = modulated(1, 1.0);
        let cfg = SimConfig::drop(0.05, 5.0, seed);
        let f = Field::Gaussian { center: vec![0.2], width: 0.3, height: 1.0 };
        let g = Field::Indicator { region: Region::ball(&[-0.1], 0.5) };
        let fg = Field::Sum { terms: vec![(a, f.clone()), (b, g.clone())] };
        let fields: [&dyn ScalarField; 3] = [&f, &g, &fg];
        let r = resolvents(&k, &[0.0], &fields, 1.0, &cfg, 40).unwrap();
        let lhs = r[2].mean;
        let rhs = a * r[0].mean + b * r[1].mean;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn mollifier_is_a_radial_bump(d in 1usize..=3, eps in 0.01f64..2.0, z in prop::collection::vec(-3.0f64..3.0, 3)) {
        let m = Mollifier::new(d, eps).unwrap();
        let z = &z[..d];
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let v = m.eval(z);
        let flipped: Vec<f64> = z.iter().rev().map(|v| -v).collect();
        prop_assert!(v >= 0.0 && v <= m.peak());
        prop_assert_eq!(v > 0.0, r < eps);
        prop_assert!((v - m.eval(&flipped)).abs() <= 1e-12 * m.peak());
    }

    #[test]
    fn getoor_mean_is_monotone_and_scales(
        d in 1usize..=3,
        alpha in 0.1f64..1.9,
        r in 0.1f64..5.0,
        s in 0.0f64..0.9,
        t in 0.0f64..0.9,
    ) {
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        x[0] = s.min(t) * r;
        y[0] = s.max(t) * r;
        let gx = getoor_exit_mean(d, alpha, r, &x).unwrap();
        let gy = getoor_exit_mean(d, alpha, r, &y).unwrap();
        prop_assert!(gx >= gy);
        prop_assert!(getoor_exit_mean(d, alpha, r * 1.1, &x).unwrap() > gx);
        let g0 = getoor_exit_mean(d, alpha, r, &vec![0.0; d]).unwrap();
        let g1 = getoor_exit_mean(d, alpha, 1.0, &vec![0.0; d]).unwrap();
        prop_assert!((g0 - r.powf(alpha) * g1).abs() <= 1e-12 * g0);
    }

    #[test]
    fn continuity_modulus_vanishes_on_the_diagonal(x in prop::collection::vec(-2.0f64..2.0, 2), b in 0.01f64..10.0) {
        let k = modulated(2, 1.0);
        prop_assert_eq!(continuity_modulus(&k, &x, &x, b, &default_h_grid(2)).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn occupation_measure_mass_is_within_the_tail_bound(seed in any::<u64>(), lambda in 0.5f64..2.0, t_max in 2.0f64..10.0) {
        let k = modulated(1, 1.0);
        let cfg = SimConfig::drop(0.05, t_max, seed);
        let mu = estimate_mu(&k, &[0.0], lambda, &cfg, 50).unwrap();
        prop_assert!(mu.atoms() > 0);
        prop_assert!((0..mu.atoms()).all(|i| mu.atom(i).1 > 0.0));
        let allowance = 4.0 * f64::EPSILON / lambda;
        prop_assert!((mu.total_mass - 1.0 / lambda).abs() <= mu.tail_bound() + allowance);
    }

    #[test]
    fn mollified_kernel_inherits_bounds_exactly(
        seed in any::<u64>(),
        eps in 0.05f64..0.8,
        xs in prop::collection::vec(-3.0f64..3.0, 8),
        alpha in 0.3f64..1.7,
    ) {
        let base = Arc::new(modulated(1, alpha));
        let cfg = SimConfig::drop(0.05, 5.0, seed);
        let mu = Arc::new(estimate_mu(base.as_ref(), &[0.0], 1.0, &cfg, 40).unwrap());
        let mk = MollifiedKernel::new(base, mu, eps).unwrap();
        let x_grid: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let rep = bound_inheritance_check(&mk, &x_grid, &default_h_grid(1)).unwrap();
        prop_assert!(rep.pass, "{:?}", rep);
        prop_assert_eq!(mk.bounds().kappa, 0.5);
    }
}
