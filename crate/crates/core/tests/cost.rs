//! The lifted TLS cost against direct residual evaluation, and the χ²
//! threshold against numerical integration.

use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quasar_core::chi2::{chi2_cdf3, chi2_inv3, default_cbar_sq};
use quasar_core::problem::{build_cost_blocks, lift, qcqp_cost};
use quasar_core::synth::random_quaternion;
use quasar_core::{generate_instance, tls_cost, Correspondence, RobustWahbaProblem, SyntheticConfig};

fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> RobustWahbaProblem {
    let corrs = (0..n)
        .map(|_| {
            let a = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let b = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            Correspondence::new(a, b, rng.random_range(0.05..0.5)).unwrap()
        })
        .collect();
    RobustWahbaProblem::new(corrs, rng.random_range(0.5..10.0)).unwrap()
}

fn random_theta(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inlier_term_is_scaled_residual(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, 1 + (seed % 4) as usize + 1);
        let q = random_quaternion(&mut rng);
        let c = p.correspondences()[0];
        let r = q.to_rotation();
        let direct = (c.b - r.m * c.a).norm_squared() / (c.sigma * c.sigma);
        // single-measurement QCQP with θ = +1: x = [q; q]
        let (q0i, qii) = build_cost_blocks(&c, p.cbar_sq());
        let v = q.as_vector();
        let f = 2.0 * (v.transpose() * q0i * v)[(0, 0)] + (v.transpose() * qii * v)[(0, 0)];
        prop_assert!((f - direct).abs() < 1e-10 * (1.0 + direct));
    }

    #[test]
    fn lifted_cost_is_termwise_tls(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 + (seed % 7) as usize;
        let p = random_problem(&mut rng, n);
        let q = random_quaternion(&mut rng);
        let theta = random_theta(&mut rng, n);
        let r = q.to_rotation();
        let want: f64 = p
            .correspondences()
            .iter()
            .zip(&theta)
            .map(|(c, &t)| {
                let r2 = (c.b - r.m * c.a).norm_squared() / (c.sigma * c.sigma);
                let t = f64::from(t);
                (1.0 + t) / 2.0 * r2 + (1.0 - t) / 2.0 * p.cbar_sq()
            })
            .sum();
        let got = qcqp_cost(&p.cost_matrices().big_q, &lift(&q, &theta));
        prop_assert!((got - want).abs() < 1e-9 * (1.0 + want));
    }

    #[test]
    fn tls_is_min_over_theta(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 + (seed % 6) as usize;
        let p = random_problem(&mut rng, n);
        let q = random_quaternion(&mut rng);
        let big_q = p.cost_matrices().big_q;
        let best = (0..1u32 << n)
            .map(|mask| {
                let theta: Vec<i8> = (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
                qcqp_cost(&big_q, &lift(&q, &theta))
            })
            .fold(f64::INFINITY, f64::min);
        let tls = tls_cost(&q.to_rotation(), &p);
        prop_assert!((best - tls).abs() < 1e-9 * (1.0 + tls));
    }
}

#[test]
fn planted_truth_attains_zero_cost() {
    let inst = generate_instance(&SyntheticConfig::new(12, 0.0, 0.0, 3)).unwrap();
    assert!(tls_cost(&inst.r_true, &inst.problem) < 1e-20);
    let f = qcqp_cost(&inst.problem.cost_matrices().big_q, &lift(&inst.q_true, &inst.theta_true));
    assert!(f.abs() < 1e-9);
}

/// χ²₃ CDF by composite Simpson after `x = t²`, which removes the √x
/// singularity of the density at the origin.
fn cdf_by_quadrature(x: f64) -> f64 {
    let f = |t: f64| 2.0 * t * t * (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (b, n) = (x.sqrt(), 20_000);
    let h = b / n as f64;
    let mut s = f(0.0) + f(b);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn inv_by_bisection(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf_by_quadrature(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn chi2_quantiles_match_quadrature() {
    let median = chi2_inv3(0.5).unwrap();
    assert!((median - 2.3660).abs() < 5e-5, "{median}");
    assert!((median - inv_by_bisection(0.5)).abs() < 1e-8);

    let p = 1.0 - 1e-4;
    let c = chi2_inv3(p).unwrap();
    assert!((c - inv_by_bisection(p)).abs() < 1e-7, "{c}");
    assert!((chi2_cdf3(c) - p).abs() < 1e-9);
    assert!((cdf_by_quadrature(c) - p).abs() < 1e-9);
    assert_eq!(default_cbar_sq(), c);

    let grid = [0.5, 0.9, 0.99, 1.0 - 1e-4];
    let vals: Vec<f64> = grid.iter().map(|&p| chi2_inv3(p).unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[0] < w[1]), "{vals:?}");
}

#[test]
fn threshold_covers_inliers_at_the_stated_rate() {
    let mut cfg = SyntheticConfig::new(1000, 0.01, 0.0, 11);
    cfg.p_quantile = 0.99;
    let inst = generate_instance(&cfg).unwrap();
    let c = chi2_inv3(0.99).unwrap();
    let rate = inst
        .problem
        .correspondences()
        .iter()
        .filter(|k| k.scaled_residual_sq(&inst.r_true) <= c)
        .count() as f64
        / 1000.0;
    assert!((rate - 0.99).abs() <= 0.02, "{rate}");
}
