use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quasar_core::baselines::brute_force_tls;
use quasar_core::certify::{check_dual_certificate, check_psd_kernel, lagrangian_from_naive_dual};
use quasar_core::pipeline::solve_detailed;
use quasar_core::problem::lift;
use quasar_core::relax::{naive_constraints, quasar_constraints};
use quasar_core::synth::random_quaternion;
use quasar_core::{generate_instance, solve_robust_wahba, Relaxation, SolverSettings, SyntheticConfig};

#[test]
fn lifted_points_satisfy_every_constraint() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..50 {
        let n = 1 + trial % 6;
        let q = random_quaternion(&mut rng);
        let theta: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        let x = lift(&q, &theta);
        let z = &x * x.transpose();
        let cons = quasar_constraints(n);
        // the naive set is a prefix, so this covers both relaxations
        assert_eq!(&cons[..naive_constraints(n).len()], &naive_constraints(n)[..]);
        for (k, c) in cons.iter().enumerate() {
            let r = c.a.dot(&z) - c.b;
            assert!(r.abs() < 1e-14, "constraint {k} off by {r:e} at n = {n}");
        }
    }
}

#[test]
fn constraint_counts() {
    assert_eq!(quasar_constraints(2).len(), 39);
    assert_eq!(quasar_constraints(20).len(), 1461);
    for n in 1..=10 {
        assert_eq!(naive_constraints(n).len(), 1 + 10 * n);
        assert_eq!(quasar_constraints(n).len(), 1 + 16 * n + 3 * n * (n - 1));
        assert_eq!(Relaxation::Quasar.num_constraints(n), quasar_constraints(n).len());
    }
}

#[test]
fn every_constraint_has_unit_norm() {
    for c in quasar_constraints(4) {
        let d: DMatrix<f64> = c.a.to_dense(20);
        assert!((d.norm() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn noiseless_three_points() {
    let inst = generate_instance(&SyntheticConfig::new(3, 0.0, 0.0, 21)).unwrap();
    let naive = solve_robust_wahba(&inst.problem, Relaxation::Naive, &SolverSettings::default()).unwrap();
    assert!(naive.primal_obj.abs() < 1e-6, "{}", naive.primal_obj);
    assert_eq!(naive.certificate.rank, 1);

    let s = solve_robust_wahba(&inst.problem, Relaxation::Quasar, &SolverSettings::default()).unwrap();
    assert_eq!(s.estimate.theta, vec![1; 3]);
    assert!(s.estimate.r.geodesic_distance(&inst.r_true) < 1e-6);
    assert!(s.certificate.is_tight);
}

#[test]
fn quasar_matches_enumeration() {
    for (ratio, seed) in [(0.5, 2), (0.375, 9)] {
        let inst = generate_instance(&SyntheticConfig::new(8, 0.01, ratio, seed)).unwrap();
        let s = solve_robust_wahba(&inst.problem, Relaxation::Quasar, &SolverSettings::default()).unwrap();
        let bf = brute_force_tls(&inst.problem).unwrap();
        assert!(s.certificate.is_tight);
        assert_eq!(s.estimate.theta, bf.theta);
        assert!((s.estimate.f_qcqp - bf.f_star).abs() <= 1e-7 * bf.f_star);
        if ratio == 0.375 {
            // with low noise the optimal mask is the planted one
            assert_eq!(bf.theta, inst.theta_true);
        }
    }
}

#[test]
fn ninety_percent_outliers_still_rank_one() {
    let inst = generate_instance(&SyntheticConfig::new(20, 0.01, 0.9, 0)).unwrap();
    let s = solve_robust_wahba(&inst.problem, Relaxation::Quasar, &SolverSettings::default()).unwrap();
    assert_eq!(s.certificate.rank, 1);
    assert!(s.certificate.stable_rank < 1.0 + 1e-6);
    assert!(s.certificate.is_tight);
}

#[test]
fn quasar_duals_certify_a_tight_noisy_instance() {
    let inst = generate_instance(&SyntheticConfig::new(10, 0.01, 0.3, 4)).unwrap();
    let solved = solve_detailed(&inst.problem, Relaxation::Quasar, &SolverSettings::default()).unwrap();
    assert!(solved.summary.certificate.is_tight);
    // the symmetry multipliers have no place in the naive (μ, Λ) form, so the
    // slack C − 𝒜ᵀy is checked directly
    let s = solved.sdp.dual_slack(&solved.raw.y);
    let est = &solved.summary.estimate;
    let x = lift(&est.q, &est.theta);
    let chk = check_psd_kernel(&s, &x, 1e-6);
    assert!(chk.min_eig >= -1e-6, "{chk:?}");
    assert!(chk.verdict, "{chk:?}");
}

#[test]
fn naive_duals_split_into_multipliers() {
    let inst = generate_instance(&SyntheticConfig::new(6, 0.0, 0.0, 4)).unwrap();
    let cm = inst.problem.cost_matrices();
    let solved = solve_detailed(&inst.problem, Relaxation::Naive, &SolverSettings::default()).unwrap();
    assert!(solved.summary.certificate.is_tight);
    let (mu, lambda) = lagrangian_from_naive_dual(&solved.sdp, &solved.raw.y).unwrap();
    let x = lift(&inst.q_true, &inst.theta_true);
    let chk = check_dual_certificate(&cm.big_q, mu, &lambda, &x, 1e-6).unwrap();
    assert!(chk.min_eig >= -1e-6, "{chk:?}");
    assert!(chk.verdict, "{chk:?}");
}
