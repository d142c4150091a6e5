//! Infeasible primal-dual interior-point method, HKM search direction with a
//! Mehrotra predictor-corrector.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::{frob_inner, symmetrize, KktResiduals, SdpProblem, SdpSolution, SolveStatus, SolverSettings};

/// Iterations without a new best KKT residual before giving up. Near the
/// floating-point floor the Schur complement loses its last digits and the
/// iterates wander instead of converging.
const STALL_LIMIT: usize = 6;

struct Workspace<'a> {
    p: &'a SdpProblem,
    n: usize,
    /// Full (mirrored) nonzero lists of each A_k.
    full: Vec<Vec<(usize, usize, f64)>>,
    /// `C / scale`
    c: DMatrix<f64>,
    b: DVector<f64>,
}

impl Workspace<'_> {
    fn apply_a(&self, m: &DMatrix<f64>) -> DVector<f64> {
        self.p.apply_a(m)
    }

    fn apply_at(&self, y: &DVector<f64>) -> DMatrix<f64> {
        self.p.apply_at(y)
    }

    /// Schur complement `M_kl = tr(A_k X A_l W)`, `W = S⁻¹`.
    fn schur(&self, x: &DMatrix<f64>, w: &DMatrix<f64>) -> Mat<f64> {
        let m = self.full.len();
        let n = self.n;
        let xs = x.as_slice();
        let ws = w.as_slice();
        let mut out = Mat::<f64>::zeros(m, m);
        for k in 0..m {
            let ek = &self.full[k];
            for l in k..m {
                let el = &self.full[l];
                let mut acc = 0.0;
                for &(a, bb, v) in ek {
                    let mut inner = 0.0;
                    for &(c, d, wv) in el {
                        // X[b, c] · W[d, a], column-major
                        inner += wv * xs[bb + c * n] * ws[d + a * n];
                    }
                    acc += v * inner;
                }
                out[(k, l)] = acc;
                out[(l, k)] = acc;
            }
        }
        out
    }
}

/// Largest `α` keeping `X + α dX ⪰ 0` (infinite if every step does), given
/// `chol(X)`.
fn max_step(chol: &Cholesky<f64, nalgebra::Dyn>, d: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let t = l.solve_lower_triangular(d).unwrap_or_else(|| d.clone());
    let t = l
        .solve_lower_triangular(&t.transpose())
        .unwrap_or_else(|| t.transpose());
    let lmin = SymmetricEigen::new(symmetrize(&t))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn factor_schur(m: &Mat<f64>) -> Option<faer::linalg::solvers::Llt<f64>> {
    if let Ok(f) = m.llt(Side::Lower) {
        return Some(f);
    }
    let dmax = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let mut delta = 1e-14 * dmax.max(1e-300);
    for _ in 0..4 {
        let mut reg = m.clone();
        for i in 0..m.nrows() {
            reg[(i, i)] += delta;
        }
        if let Ok(f) = reg.llt(Side::Lower) {
            return Some(f);
        }
        delta *= 100.0;
    }
    None
}

fn solve_schur(f: &faer::linalg::solvers::Llt<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let mut r = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    f.solve_in_place(r.as_mut());
    DVector::from_fn(rhs.len(), |i, _| r[(i, 0)])
}

pub(super) fn solve(p: &SdpProblem, st: &SolverSettings) -> SdpSolution {
    let n = p.dim();
    let cnorm = p.cost().norm();
    let scale = cnorm.max(1.0);
    let ws = Workspace {
        p,
        n,
        full: p.constraints().iter().map(|c| c.a.full_entries()).collect(),
        c: p.cost() / scale,
        b: p.rhs(),
    };
    let bnorm = ws.b.norm();

    let nf = n as f64;
    let max_a = p
        .constraints()
        .iter()
        .map(|c| c.a.frobenius_norm())
        .fold(0.0, f64::max);
    let xi = p
        .constraints()
        .iter()
        .map(|c| nf * (1.0 + c.b.abs()) / (1.0 + c.a.frobenius_norm()))
        .fold(10f64.max(nf.sqrt()), f64::max);
    let eta = 10f64.max(nf.sqrt()).max(max_a).max(ws.c.norm());

    let mut x = DMatrix::<f64>::identity(n, n) * xi;
    let mut s = DMatrix::<f64>::identity(n, n) * eta;
    let mut y = DVector::<f64>::zeros(p.num_constraints());

    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let mut stalled = 0;
    let mut best: Option<(f64, DMatrix<f64>, DVector<f64>, DMatrix<f64>)> = None;
    if st.verbosity >= 1 {
        eprintln!("iter,primal_obj,dual_obj,primal_infeas,dual_infeas,gap,mu,alpha_p,alpha_d");
    }
    let (mut last_ap, mut last_ad) = (0.0, 0.0);

    for iter in 0..=st.max_iters {
        iterations = iter;
        let rp = &ws.b - ws.apply_a(&x);
        let rd = &ws.c - &s - ws.apply_at(&y);
        let pobj = scale * frob_inner(&ws.c, &x);
        let dobj = scale * ws.b.dot(&y);
        let res = KktResiduals {
            primal_infeas: rp.norm() / (1.0 + bnorm),
            dual_infeas: scale * rd.norm() / (1.0 + cnorm),
            duality_gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
        };
        let mu = frob_inner(&x, &s) / nf;
        if st.verbosity >= 1 {
            eprintln!(
                "{iter},{pobj:.12e},{dobj:.12e},{:.3e},{:.3e},{:.3e},{mu:.3e},{last_ap:.3},{last_ad:.3}",
                res.primal_infeas, res.dual_infeas, res.duality_gap
            );
        }
        if res.within(st.eps_rel) {
            status = SolveStatus::Optimal;
            best = None;
            break;
        }
        if !mu.is_finite() || !res.max().is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        if best.as_ref().is_none_or(|b| res.max() < b.0) {
            best = Some((res.max(), x.clone(), y.clone(), s.clone()));
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                status = SolveStatus::NumericalFailure;
                break;
            }
        }
        // Dual ray: bᵀy grows without bound while the dual stays feasible.
        if dobj / scale > 1e12 * (1.0 + (pobj / scale).abs()) && res.dual_infeas < st.eps_rel {
            status = SolveStatus::Infeasible;
            break;
        }
        if iter == st.max_iters {
            break;
        }

        let (Some(chol_x), Some(chol_s)) = (Cholesky::new(x.clone()), Cholesky::new(s.clone())) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let w = symmetrize(&chol_s.inverse());
        let schur = ws.schur(&x, &w);
        let Some(fac) = factor_schur(&schur) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let xrdw = &x * &rd * &w;
        let base_rhs = &rp + ws.apply_a(&xrdw);

        let direction = |g: &DMatrix<f64>| {
            let rhs = &base_rhs - ws.apply_a(g);
            let dy = solve_schur(&fac, &rhs);
            let ds = &rd - ws.apply_at(&dy);
            let dx = symmetrize(&(g - &x * &ds * &w));
            (dx, dy, ds)
        };

        // predictor
        let g_aff = -&x;
        let (dx_a, _, ds_a) = direction(&g_aff);
        let ap_a = max_step(&chol_x, &dx_a).min(1.0);
        let ad_a = max_step(&chol_s, &ds_a).min(1.0);
        let mu_aff = frob_inner(&(&x + &dx_a * ap_a), &(&s + &ds_a * ad_a)) / nf;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let g = &w * (sigma * mu) - &x - &dx_a * &ds_a * &w;
        let (dx, dy, ds) = direction(&g);
        let gamma = 0.9 + 0.09 * ap_a.min(ad_a);
        let ap = (gamma * max_step(&chol_x, &dx)).min(1.0);
        let ad = (gamma * max_step(&chol_s, &ds)).min(1.0);

        x += &dx * ap;
        y += &dy * ad;
        s += &ds * ad;
        x = symmetrize(&x);
        s = symmetrize(&s);
        last_ap = ap;
        last_ad = ad;
    }

    if status != SolveStatus::Optimal {
        if let Some((_, bx, by, bs)) = best {
            x = bx;
            y = by;
            s = bs;
        }
    }
    SdpSolution::assemble(p, x, y * scale, s * scale, iterations, status)
}
