mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use pansatz::ansatz::lattice_round;
use pansatz::dynamics::{evolve_schedule, NoiseConfig, DEFAULT_SUBSTEPS};
use pansatz::estimation::{apply_confusion, invert_tensored, ReadoutModel};
use pansatz::optimizers::{minimize, Coordinate, HillClimbConfig, OptimizerConfig, OptimizerKind, SpsaConfig};
use pansatz::pulse::{cr_half_duration, DragEnvelope, Schedule};
use proptest::prelude::*;

fn quadratic(center: Vec<f64>) -> impl Fn(&[f64], u64) -> pansatz::Result<f64> + Sync {
    move |x: &[f64], _| Ok(x.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_pulses_keep_a_valid_density_matrix(
        re in -0.6f64..0.6,
        im in -0.6f64..0.6,
        beta in -2.0f64..2.0,
        units in 1u64..10,
        noisy in any::<bool>(),
    ) {
        let d = common::device().subset(&[0]).unwrap();
        let duration = 16 * units;
        let env = DragEnvelope::new(Complex64::new(re, im), duration as f64 / 4.0, beta, duration).unwrap();
        let mut s = Schedule::new();
        s.play(0, d.drive_channel(0).unwrap(), env).unwrap();
        let rho = evolve_schedule(&d, &s, &NoiseConfig::from_device(&d, noisy), DEFAULT_SUBSTEPS).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-9);
        prop_assert!(rho.hermiticity_error() < 1e-12);
        // RK4 is not exactly positivity preserving; the defect is at the purity tolerance
        prop_assert!(rho.min_eigenvalue() > -1e-6);
        if !noisy {
            prop_assert!((rho.purity() - 1.0).abs() < 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn readout_inversion_undoes_confusion(
        errors in prop::collection::vec((0.0f64..0.2, 0.0f64..0.2), 1..=4),
        weights in prop::collection::vec(0.0f64..1.0, 16),
    ) {
        let n = errors.len();
        let readout = ReadoutModel::from_errors(&errors).unwrap();
        let w = &weights[..1 << n];
        let total: f64 = w.iter().sum::<f64>() + 1e-9;
        let p: Vec<f64> = w.iter().map(|x| (x + 1e-9 / w.len() as f64) / total).collect();
        let noisy = apply_confusion(&p, &readout).unwrap();
        prop_assert!((noisy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let back = invert_tensored(&noisy, &readout).unwrap();
        for (a, b) in back.iter().zip(&p) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lattice_round_is_nearest_multiple(x in -5000.0f64..5000.0, step in 1u64..64) {
        let r = lattice_round(x, step);
        prop_assert_eq!(r % step as i64, 0);
        prop_assert!((r as f64 - x).abs() <= step as f64 / 2.0 + 1e-9);
    }

    #[test]
    fn cr_halves_are_on_the_lattice(total in -4000i64..4000, g in 1u64..32) {
        let h = cr_half_duration(total, g);
        prop_assert_eq!(h % g, 0);
        prop_assert!((2 * h) as i64 - total.abs() <= g as i64);
        prop_assert!(total.abs() - (2 * h) as i64 <= g as i64);
        prop_assert_eq!(h, cr_half_duration(-total, g));
    }

    #[test]
    fn hill_climb_never_gets_worse(
        center in prop::collection::vec(-3.0f64..3.0, 1..5),
        start in prop::collection::vec(-3.0f64..3.0, 4),
        seed in any::<u64>(),
    ) {
        let dim = center.len();
        let x0 = &start[..dim];
        let coords: Vec<Coordinate> = (0..dim)
            .map(|i| if i % 2 == 0 { Coordinate::lattice(0.5, 0.25) } else { Coordinate::continuous(0.3) })
            .collect();
        let config = OptimizerConfig { kind: OptimizerKind::HillClimb(HillClimbConfig::default()), rng_seed: seed, goal: None };
        let r = minimize(quadratic(center.clone()), x0, &coords, &config).unwrap();
        for pair in r.trace.windows(2) {
            prop_assert!(pair[1].cost <= pair[0].cost);
        }
        prop_assert!(r.best_cost <= r.trace[0].cost);
        let again = minimize(quadratic(center), x0, &coords, &config).unwrap();
        prop_assert_eq!(r, again);
    }

    #[test]
    fn spsa_calls_the_cost_twice_per_iteration(iters in 1usize..40, seed in any::<u64>(), pinned in any::<bool>()) {
        let calls = AtomicUsize::new(0);
        let f = |x: &[f64], _: u64| {
            calls.fetch_add(1, Ordering::Relaxed);
            Ok(x.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>())
        };
        let config = OptimizerConfig {
            kind: OptimizerKind::Spsa(SpsaConfig { max_iters: iters, a: pinned.then_some(0.2), ..SpsaConfig::default() }),
            rng_seed: seed,
            goal: None,
        };
        let r = minimize(f, &[0.0, 0.0, 0.0], &[Coordinate::continuous(0.1); 3], &config).unwrap();
        // an unpinned gain is calibrated from pilot gradients first
        let pilot = if pinned { 0 } else { 2 * SpsaConfig::default().pilot_samples };
        prop_assert_eq!(calls.load(Ordering::Relaxed), 2 * iters + pilot);
        prop_assert_eq!(r.evaluations, 2 * iters + pilot);
    }
}
