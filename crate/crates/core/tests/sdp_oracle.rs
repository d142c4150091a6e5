//! The SDP solver against an independent log-barrier method on the dual, plus
//! invariances of the solution.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quasar_core::pipeline::solve_detailed;
use quasar_core::sdp::{self, kkt_residuals, Algorithm, Constraint, SdpProblem, SdpSolution, SparseSym};
use quasar_core::{generate_instance, Relaxation, SolveStatus, SolverSettings, SyntheticConfig};

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&g + g.transpose()) * 0.5
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(n, n) * 0.1
}

/// A strictly primal and dual feasible instance, so both optima exist and
/// coincide.
fn random_sdp(seed: u64, n: usize, m: usize) -> (SdpProblem, Vec<DMatrix<f64>>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<DMatrix<f64>> = (0..m).map(|_| random_sym(&mut rng, n)).collect();
    let z0 = random_pd(&mut rng, n);
    let s0 = random_pd(&mut rng, n);
    let y0: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut c = s0;
    for (ak, yk) in a.iter().zip(&y0) {
        c += ak * *yk;
    }
    let cons = a
        .iter()
        .map(|ak| {
            let trip = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).map(|(i, j)| (i, j, ak[(i, j)]));
            Constraint {
                a: SparseSym::from_triplets(trip),
                b: ak.dot(&z0),
            }
        })
        .collect();
    (SdpProblem::new(c, cons).unwrap(), a, DVector::from_vec(y0))
}

/// `max bᵀy + t log det(C − Σ yₖAₖ)` by damped Newton for decreasing `t`.
/// Starts from a strictly dual feasible `y`; at the end the duality gap is at
/// most `n·t`.
fn barrier_reference(c: &DMatrix<f64>, a: &[DMatrix<f64>], b: &DVector<f64>, y_start: &DVector<f64>) -> f64 {
    let m = a.len();
    let slack = |y: &DVector<f64>| {
        let mut s = c.clone();
        for k in 0..m {
            s -= &a[k] * y[k];
        }
        s
    };
    let phi = |y: &DVector<f64>, t: f64| -> Option<f64> {
        let ch = slack(y).cholesky()?;
        let logdet = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Some(b.dot(y) + t * logdet)
    };
    let mut y = y_start.clone();
    let mut t = 1.0;
    while t > 1e-13 {
        for _ in 0..200 {
            let s_inv = slack(&y).cholesky().expect("interior").inverse();
            let sa: Vec<DMatrix<f64>> = a.iter().map(|ak| &s_inv * ak).collect();
            let g = DVector::from_fn(m, |k, _| b[k] - t * sa[k].trace());
            let h = DMatrix::from_fn(m, m, |k, l| t * (&sa[k] * &sa[l]).trace());
            let step = h.clone().cholesky().expect("barrier Hessian is PD").solve(&g);
            let decrement = g.dot(&step);
            if decrement < 1e-14 * (1.0 + b.dot(&y).abs()) {
                break;
            }
            let f0 = phi(&y, t).unwrap();
            let mut alpha = 1.0;
            loop {
                let cand = &y + &step * alpha;
                if let Some(f) = phi(&cand, t) {
                    if f >= f0 + 0.25 * alpha * decrement {
                        y = cand;
                        break;
                    }
                }
                alpha *= 0.5;
                assert!(alpha > 1e-20, "line search failed");
            }
        }
        t *= 0.2;
    }
    b.dot(&y)
}

#[test]
fn matches_barrier_reference_on_random_instances() {
    for seed in 0..10 {
        let (p, a, y0) = random_sdp(seed, 6, 4);
        let want = barrier_reference(p.cost(), &a, &p.rhs(), &y0);
        for algorithm in [Algorithm::Ipm, Algorithm::Admm] {
            let settings = SolverSettings {
                algorithm,
                ..SolverSettings::default()
            };
            let sol = sdp::solve(&p, &settings).unwrap();
            assert!(
                (sol.primal_obj - want).abs() <= 1e-5 * (1.0 + want.abs()),
                "seed {seed} {algorithm:?}: {} vs reference {want} ({:?})",
                sol.primal_obj,
                sol.status
            );
            assert!((sol.dual_obj - want).abs() <= 1e-5 * (1.0 + want.abs()));
        }
    }
}

#[test]
fn constraint_order_does_not_matter() {
    let inst = generate_instance(&SyntheticConfig::new(6, 0.01, 0.3, 17)).unwrap();
    let solved = solve_detailed(&inst.problem, Relaxation::Quasar, &SolverSettings::default()).unwrap();
    let m = solved.sdp.num_constraints();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut perm: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let shuffled = solved.sdp.permuted(&perm).unwrap();
    let sol = sdp::solve(&shuffled, &SolverSettings::default()).unwrap();
    let f = solved.raw.primal_obj;
    assert!((sol.primal_obj - f).abs() <= 1e-7 * (1.0 + f.abs()), "{} vs {f}", sol.primal_obj);
    assert!((&sol.z - &solved.raw.z).amax() <= 1e-5 * solved.raw.z.amax());
    // the dual is unique here, so it permutes with the constraints
    let y_back = DVector::from_fn(m, |k, _| solved.raw.y[perm[k]]);
    let dy = (&sol.y - &y_back).amax() / (1.0 + y_back.amax());
    assert!(dy <= 1e-4, "{dy:e}");
}

fn perturbed_dual(p: &SdpProblem, sol: &SdpSolution, dir: &DVector<f64>, eps: f64) -> f64 {
    let mut s = sol.clone();
    s.y = &sol.y + dir * eps;
    kkt_residuals(p, &s).dual_infeas
}

#[test]
fn dual_residual_grows_with_perturbation() {
    let (p, _, _) = random_sdp(3, 6, 4);
    let sol = sdp::solve(&p, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let base = kkt_residuals(&p, &sol);
    assert!(base.max() <= 1e-8);
    let dir = DVector::from_fn(4, |k, _| if k % 2 == 0 { 1.0 } else { -1.0 });
    let r1 = perturbed_dual(&p, &sol, &dir, 1e-3);
    let r2 = perturbed_dual(&p, &sol, &dir, 2e-3);
    assert!(r1 > 100.0 * base.dual_infeas.max(1e-12));
    assert!((r2 / r1 - 2.0).abs() < 0.05, "{r1:e} {r2:e}");
}

#[test]
fn solves_are_deterministic() {
    let inst = generate_instance(&SyntheticConfig::new(8, 0.01, 0.5, 2)).unwrap();
    let a = solve_detailed(&inst.problem, Relaxation::Quasar, &SolverSettings::default()).unwrap();
    let b = solve_detailed(&inst.problem, Relaxation::Quasar, &SolverSettings::default()).unwrap();
    assert_eq!(a.raw, b.raw);
    assert_eq!(a.summary.estimate, b.summary.estimate);
    assert_eq!(a.summary.certificate, b.summary.certificate);
}
