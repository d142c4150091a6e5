//! Alternating-direction augmented Lagrangian on the dual SDP: alternate an
//! exact `y` minimization (one Gram solve), an `S` step (PSD projection) and a
//! multiplier update for `X`. The dual it produces is noisy; the shared polish
//! step cleans it up afterwards.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{frob_inner, symmetrize, KktResiduals, SdpProblem, SdpSolution, SolveStatus, SolverSettings};

const MU_WINDOW: usize = 50;
const MU_FACTOR: f64 = 1.6;
const CHECK_EVERY: usize = 10;

/// Split `V` into `(V₊, V₋)` with `V = V₊ − V₋`, both PSD.
fn split_psd(v: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(v));
    let n = v.nrows();
    let mut pos = DMatrix::zeros(n, n);
    let mut neg = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let u = eig.eigenvectors.column(k);
        if lam > 0.0 {
            pos.ger(lam, &u, &u, 1.0);
        } else if lam < 0.0 {
            neg.ger(-lam, &u, &u, 1.0);
        }
    }
    (pos, neg)
}

fn residuals(p: &SdpProblem, c: &DMatrix<f64>, scale: f64, x: &DMatrix<f64>, y: &DVector<f64>, s: &DMatrix<f64>) -> KktResiduals {
    let b = p.rhs();
    let cnorm = p.cost().norm();
    let pobj = scale * frob_inner(c, x);
    let dobj = scale * b.dot(y);
    KktResiduals {
        primal_infeas: (p.apply_a(x) - &b).norm() / (1.0 + b.norm()),
        dual_infeas: scale * (c - p.apply_at(y) - s).norm() / (1.0 + cnorm),
        duality_gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
    }
}

pub(super) fn solve(p: &SdpProblem, st: &SolverSettings) -> SdpSolution {
    let n = p.dim();
    let m = p.num_constraints();
    let scale = p.cost().norm().max(1.0);
    let c = p.cost() / scale;
    let b = p.rhs();

    let gram = Mat::<f64>::from_fn(m, m, |i, j| p.constraints()[i].a.inner(&p.constraints()[j].a));
    let Ok(gram_f) = gram.llt(Side::Lower) else {
        // linearly dependent constraints
        return SdpSolution::assemble(
            p,
            DMatrix::zeros(n, n),
            DVector::zeros(m),
            p.cost().clone(),
            0,
            SolveStatus::NumericalFailure,
        );
    };
    let gram_solve = |rhs: &DVector<f64>| {
        let mut r = Mat::<f64>::from_fn(m, 1, |i, _| rhs[i]);
        gram_f.solve_in_place(r.as_mut());
        DVector::from_fn(m, |i, _| r[(i, 0)])
    };

    // X₀ = tI with t the least-squares fit of 𝒜(tI) = b.
    let traces = DVector::from_iterator(m, p.constraints().iter().map(|k| k.a.dot(&DMatrix::identity(n, n))));
    let t = if traces.norm_squared() > 0.0 {
        (traces.dot(&b) / traces.norm_squared()).max(0.0)
    } else {
        0.0
    };
    let mut x = DMatrix::<f64>::identity(n, n) * t;
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut y = DVector::<f64>::zeros(m);
    let mut mu = 1.0;
    let rho = st.over_relaxation;

    let mut status = SolveStatus::MaxIters;
    let mut iterations = st.max_iters;
    let (mut pacc, mut dacc) = (0.0, 0.0);
    if st.verbosity >= 1 {
        eprintln!("iter,primal_obj,dual_obj,primal_infeas,dual_infeas,gap,mu");
    }

    for iter in 1..=st.max_iters {
        let rhs = p.apply_a(&(&c - &s)) + (&b - p.apply_a(&x)) * mu;
        y = gram_solve(&rhs);
        let v = &c - p.apply_at(&y) - &x * mu;
        let (vp, vn) = split_psd(&v);
        s = vp;
        let x_new = vn / mu;
        x = &x * (1.0 - rho) + x_new * rho;

        if iter % CHECK_EVERY == 0 || iter == st.max_iters {
            let res = residuals(p, &c, scale, &x, &y, &s);
            if st.verbosity >= 1 {
                eprintln!(
                    "{iter},{:.12e},{:.12e},{:.3e},{:.3e},{:.3e},{mu:.3e}",
                    scale * frob_inner(&c, &x),
                    scale * b.dot(&y),
                    res.primal_infeas,
                    res.dual_infeas,
                    res.duality_gap
                );
            }
            if !res.max().is_finite() {
                status = SolveStatus::NumericalFailure;
                iterations = iter;
                break;
            }
            if res.within(st.eps_rel) {
                status = SolveStatus::Optimal;
                iterations = iter;
                break;
            }
            pacc += res.primal_infeas.max(1e-300).ln();
            dacc += res.dual_infeas.max(1e-300).ln();
            if iter % MU_WINDOW == 0 {
                // Balance the two infeasibilities. The dual residual is
                // μ·(X_old − X_new), so a small μ favours dual feasibility and
                // a large one primal.
                let ratio = (pacc - dacc) / (MU_WINDOW / CHECK_EVERY) as f64;
                if ratio > 0.5 {
                    mu *= MU_FACTOR;
                } else if ratio < -0.5 {
                    mu /= MU_FACTOR;
                }
                mu = mu.clamp(1e-6, 1e6);
                pacc = 0.0;
                dacc = 0.0;
            }
        }
    }

    SdpSolution::assemble(p, x, y * scale, s * scale, iterations, status)
}
