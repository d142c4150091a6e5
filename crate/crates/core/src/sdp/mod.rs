//! Dense primal-dual solver for standard-form semidefinite programs
//!
//! ```text
//! min tr(C Z)  s.t.  tr(A_k Z) = b_k,  Z ⪰ 0
//! max bᵀy      s.t.  C − Σ y_k A_k = S,  S ⪰ 0
//! ```
//!
//! Two algorithms are provided: an infeasible primal-dual interior-point method
//! (the default; reaches the accuracy needed for eigenvalue-based rank tests in
//! a few dozen iterations) and a dual ADMM with PSD projection. Either result
//! is then polished when the primal solution is numerically low-rank.

mod admm;
mod ipm;
mod polish;
mod sparse;

pub use sparse::SparseSym;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub a: SparseSym,
    pub b: f64,
}

/// `min tr(C Z)` subject to `tr(A_k Z) = b_k`, `Z ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    dim: usize,
    cost: DMatrix<f64>,
    constraints: Vec<Constraint>,
}

impl SdpProblem {
    /// Validates shapes, symmetry of `C`, index bounds, and rejects empty or
    /// duplicated constraints.
    pub fn new(cost: DMatrix<f64>, constraints: Vec<Constraint>) -> Result<Self> {
        let dim = cost.nrows();
        if cost.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: cost.ncols(),
            });
        }
        ensure_finite(cost.as_slice(), "cost matrix")?;
        let asym = (&cost - cost.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + cost.abs().max()) {
            return Err(Error::InvalidArgument(format!(
                "cost matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        for (k, c) in constraints.iter().enumerate() {
            if c.a.nnz_upper() == 0 {
                return Err(Error::InvalidArgument(format!("constraint {k} is empty")));
            }
            if let Some(mx) = c.a.max_index() {
                if mx >= dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: mx + 1,
                    });
                }
            }
            let vals: Vec<f64> = c.a.entries().iter().map(|e| e.2).collect();
            ensure_finite(&vals, "constraint matrix")?;
            ensure_finite(&[c.b], "constraint right-hand side")?;
        }
        let mut keys: Vec<(Vec<(usize, usize, u64)>, u64)> = constraints
            .iter()
            .map(|c| {
                (
                    c.a.entries().iter().map(|&(i, j, v)| (i, j, v.to_bits())).collect(),
                    c.b.to_bits(),
                )
            })
            .collect();
        keys.sort();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate constraint".into()));
        }
        let cost = (&cost + cost.transpose()) * 0.5;
        Ok(Self {
            dim,
            cost,
            constraints,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    #[inline]
    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    #[inline]
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.b))
    }

    /// `𝒜(Z)_k = tr(A_k Z)`.
    pub fn apply_a(&self, z: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints.iter().map(|c| c.a.dot(z)),
        )
    }

    /// `𝒜ᵀ(y) = Σ y_k A_k`.
    pub fn apply_at(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (c, &yk) in self.constraints.iter().zip(y.iter()) {
            c.a.add_to(&mut m, yk);
        }
        m
    }

    /// `C − 𝒜ᵀ(y)`: the dual slack implied by `y` alone.
    pub fn dual_slack(&self, y: &DVector<f64>) -> DMatrix<f64> {
        &self.cost - self.apply_at(y)
    }

    /// Same problem with constraints permuted: new constraint `k` is old
    /// constraint `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.constraints.len()];
        if perm.len() != seen.len() {
            return Err(Error::DimensionMismatch {
                expected: seen.len(),
                got: perm.len(),
            });
        }
        for &p in perm {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
        }
        Ok(Self {
            dim: self.dim,
            cost: self.cost.clone(),
            constraints: perm.iter().map(|&p| self.constraints[p].clone()).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Infeasible primal-dual path following (HKM direction, Mehrotra
    /// predictor-corrector).
    #[default]
    Ipm,
    /// Dual ADMM with eigendecomposition-based PSD projection.
    Admm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iters: usize,
    /// PSD tolerance: eigenvalues of Z, S above `−eps_abs·(1+‖·‖_F)` count as
    /// nonnegative. Also the floor for ADMM's absolute residuals.
    pub eps_abs: f64,
    /// Bound on each of the three relative KKT residuals.
    pub eps_rel: f64,
    /// ADMM relaxation factor in `[1, 2)`; unused by the interior-point method.
    pub over_relaxation: f64,
    /// 0 silent; ≥ 1 writes a CSV iteration log to stderr.
    pub verbosity: u8,
    pub algorithm: Algorithm,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            eps_abs: 1e-9,
            eps_rel: 1e-8,
            over_relaxation: 1.6,
            verbosity: 0,
            algorithm: Algorithm::Ipm,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be ≥ 1".into()));
        }
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(1.0..2.0).contains(&self.over_relaxation) {
            return Err(Error::InvalidArgument(format!(
                "over_relaxation must lie in [1, 2), got {}",
                self.over_relaxation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical_failure",
        })
    }
}

/// Relative KKT residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖𝒜(Z) − b‖ / (1 + ‖b‖)`
    pub primal_infeas: f64,
    /// `‖C − 𝒜ᵀ(y) − S‖_F / (1 + ‖C‖_F)`
    pub dual_infeas: f64,
    /// `|tr(CZ) − bᵀy| / (1 + |tr(CZ)|)`
    pub duality_gap: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal_infeas.max(self.dual_infeas).max(self.duality_gap)
    }

    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.primal_infeas, self.dual_infeas, self.duality_gap)
    }

    fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    pub s: DMatrix<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl SdpSolution {
    fn assemble(p: &SdpProblem, z: DMatrix<f64>, y: DVector<f64>, s: DMatrix<f64>, iterations: usize, status: SolveStatus) -> Self {
        let z = symmetrize(&z);
        let s = symmetrize(&s);
        let primal_obj = frob_inner(p.cost(), &z);
        let dual_obj = p.rhs().dot(&y);
        let mut sol = Self {
            z,
            y,
            s,
            primal_obj,
            dual_obj,
            residuals: KktResiduals {
                primal_infeas: 0.0,
                dual_infeas: 0.0,
                duality_gap: 0.0,
            },
            iterations,
            status,
        };
        sol.residuals = kkt_residuals(p, &sol);
        sol
    }
}

/// The three relative KKT residuals of a candidate primal-dual triple.
pub fn kkt_residuals(p: &SdpProblem, sol: &SdpSolution) -> KktResiduals {
    let b = p.rhs();
    let rp = p.apply_a(&sol.z) - &b;
    let rd = p.cost() - p.apply_at(&sol.y) - &sol.s;
    let pobj = frob_inner(p.cost(), &sol.z);
    let dobj = b.dot(&sol.y);
    KktResiduals {
        primal_infeas: rp.norm() / (1.0 + b.norm()),
        dual_infeas: rd.norm() / (1.0 + p.cost().norm()),
        duality_gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
    }
}

/// Solve with the algorithm chosen in `settings`.
///
/// Never returns `Err` for convergence trouble: that is reported through
/// [`SdpSolution::status`] together with the last iterate. `Err` is reserved
/// for invalid settings.
pub fn solve(p: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
    settings.validate()?;
    if p.num_constraints() == 0 {
        return Err(Error::InvalidArgument("problem has no constraints".into()));
    }
    let raw = match settings.algorithm {
        Algorithm::Ipm => ipm::solve(p, settings),
        Algorithm::Admm => admm::solve(p, settings),
    };
    Ok(polish::polish(p, raw, settings))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[inline]
pub(crate) fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Eigendecomposition with eigenvalues sorted in descending order.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> SdpProblem {
        let c = DMatrix::identity(2, 2);
        let a = SparseSym::from_triplets([(0, 0, 1.0)]);
        SdpProblem::new(c, vec![Constraint { a, b: 1.0 }]).unwrap()
    }

    #[test]
    fn rejects_malformed() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(SdpProblem::new(c, vec![]).is_err());
        let a = SparseSym::from_triplets([(0, 3, 1.0)]);
        assert!(SdpProblem::new(DMatrix::identity(2, 2), vec![Constraint { a, b: 1.0 }]).is_err());
        let a = SparseSym::from_triplets([(0, 0, 1.0)]);
        let dup = vec![Constraint { a: a.clone(), b: 1.0 }, Constraint { a, b: 1.0 }];
        assert!(SdpProblem::new(DMatrix::identity(2, 2), dup).is_err());
    }

    #[test]
    fn exact_optimum_has_zero_residuals() {
        let p = tiny();
        let sol = SdpSolution::assemble(
            &p,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DVector::from_element(1, 1.0),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            0,
            SolveStatus::Optimal,
        );
        assert!(sol.residuals.max() < 1e-12);
    }

    #[test]
    fn both_algorithms_solve_tiny() {
        for algorithm in [Algorithm::Ipm, Algorithm::Admm] {
            let settings = SolverSettings {
                algorithm,
                ..Default::default()
            };
            let sol = solve(&tiny(), &settings).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal, "{algorithm:?}");
            assert!((sol.primal_obj - 1.0).abs() < 1e-7);
            assert!((sol.z[(0, 0)] - 1.0).abs() < 1e-7);
            assert!(sol.z[(1, 1)].abs() < 1e-7);
        }
    }

    #[test]
    fn settings_validation() {
        let bad = SolverSettings {
            over_relaxation: 2.0,
            ..Default::default()
        };
        assert!(solve(&tiny(), &bad).is_err());
        let bad = SolverSettings {
            max_iters: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
