//! Post-solve refinement of a low-rank primal-dual pair.
//!
//! When the spectrum of the returned `Z` has a clear gap after `r` leading
//! eigenvalues, restrict to that range `U`:
//!
//! * primal: `Z' = U T Uᵀ` with `T ⪰ 0` the least-squares fit of `𝒜(U T Uᵀ) = b`;
//! * dual: the minimum-norm correction `δ` solving `𝒜ᵀ(δ) U = (C − 𝒜ᵀy) U`,
//!   i.e. complementary slackness `(C − 𝒜ᵀy') Z' = 0`, with `S' = C − 𝒜ᵀy'`.
//!
//! Interior-point iterates keep `O(μ)` mass off the optimal face and lose
//! accuracy in the last few digits; the refined pair removes both. When `S'`
//! is not PSD within `eps_abs` the solver's own dual is kept next to `Z'`.
//! Either candidate replaces the original only if it lowers the largest KKT
//! residual, so a relaxation that is not low-rank is never forced to look like
//! one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{min_eigenvalue, sorted_eigen, SdpProblem, SdpSolution, SolveStatus, SolverSettings};

/// Relative drop between consecutive eigenvalues that defines the range.
const SPECTRAL_GAP: f64 = 1e-3;
/// Widest range considered; beyond it the solution is not low-rank.
const MAX_RANGE: usize = 6;

pub(super) fn polish(p: &SdpProblem, sol: SdpSolution, st: &SolverSettings) -> SdpSolution {
    match try_polish(p, &sol, st) {
        Some(better) => better,
        None => sol,
    }
}

/// Number of leading eigenvalues before the first drop by `SPECTRAL_GAP`.
fn numerical_range(vals: &DVector<f64>) -> Option<usize> {
    if !(vals[0] > 0.0) {
        return None;
    }
    (1..vals.len().min(MAX_RANGE + 1)).find(|&k| vals[k] <= SPECTRAL_GAP * vals[k - 1])
}

/// `UᵀAU` for a sparse symmetric `A`.
fn project(a: &super::SparseSym, u: &DMatrix<f64>) -> DMatrix<f64> {
    let r = u.ncols();
    let mut out = DMatrix::zeros(r, r);
    for &(i, j, v) in a.entries() {
        for c in 0..r {
            for d in 0..r {
                let mut t = u[(i, c)] * u[(j, d)];
                if i != j {
                    t += u[(j, c)] * u[(i, d)];
                }
                out[(c, d)] += v * t;
            }
        }
    }
    out
}

fn refit_primal(p: &SdpProblem, u: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let r = u.ncols();
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|a| (a..r).map(move |b| (a, b))).collect();
    let m = p.num_constraints();
    let mut design = DMatrix::zeros(m, pairs.len());
    for (k, con) in p.constraints().iter().enumerate() {
        let b = project(&con.a, u);
        for (col, &(i, j)) in pairs.iter().enumerate() {
            design[(k, col)] = if i == j { b[(i, i)] } else { 2.0 * b[(i, j)] };
        }
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let coef = svd.solve(&p.rhs(), 1e-12 * smax).ok()?;
    let mut t = DMatrix::zeros(r, r);
    for (col, &(i, j)) in pairs.iter().enumerate() {
        t[(i, j)] = coef[col];
        t[(j, i)] = coef[col];
    }
    let eig = SymmetricEigen::new(t);
    let clipped = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0)));
    let t = &eig.eigenvectors * clipped * eig.eigenvectors.transpose();
    Some(u * t * u.transpose())
}

fn refit_dual(p: &SdpProblem, y: &DVector<f64>, u: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = p.dim();
    let r = u.ncols();
    let target = p.dual_slack(y) * u;
    let mut kmat = DMatrix::zeros(n * r, p.num_constraints());
    for (col, con) in p.constraints().iter().enumerate() {
        // A_k U, column-major to match `target`
        let mut au = DMatrix::<f64>::zeros(n, r);
        for &(i, j, v) in con.a.entries() {
            for c in 0..r {
                au[(i, c)] += v * u[(j, c)];
                if i != j {
                    au[(j, c)] += v * u[(i, c)];
                }
            }
        }
        kmat.column_mut(col).copy_from_slice(au.as_slice());
    }
    let rhs = DVector::from_column_slice(target.as_slice());
    let svd = kmat.svd(true, true);
    let smax = svd.singular_values.max();
    let delta = svd.solve(&rhs, 1e-12 * smax).ok()?;
    Some(y + delta)
}

fn try_polish(p: &SdpProblem, sol: &SdpSolution, st: &SolverSettings) -> Option<SdpSolution> {
    let (vals, vecs) = sorted_eigen(&sol.z);
    let r = numerical_range(&vals)?;
    let u = vecs.columns(0, r).into_owned();
    let z = refit_primal(p, &u)?;
    let dual = refit_dual(p, &sol.y, &u).and_then(|y| {
        let s = p.dual_slack(&y);
        (min_eigenvalue(&s) >= -st.eps_abs * (1.0 + s.norm())).then_some((y, s))
    });
    // full refit when its slack stays PSD, otherwise keep the solver's dual
    let candidates = dual
        .into_iter()
        .chain(std::iter::once((sol.y.clone(), sol.s.clone())))
        .map(|(y, s)| SdpSolution::assemble(p, z.clone(), y, s, sol.iterations, sol.status));
    let mut cand = candidates
        .filter(|c| c.residuals.max() < sol.residuals.max())
        .min_by(|a, b| a.residuals.max().total_cmp(&b.residuals.max()))?;
    if cand.residuals.within(st.eps_rel) && sol.status != SolveStatus::Infeasible {
        cand.status = SolveStatus::Optimal;
    }
    Some(cand)
}
