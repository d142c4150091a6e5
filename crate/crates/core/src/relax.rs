//! Semidefinite relaxations of the binary-cloned QCQP.
//!
//! The lifted variable is `Z = x xᵀ` with `x = [q; q₁; …; q_N]`, viewed as an
//! `(N+1)×(N+1)` grid of 4×4 blocks. Both relaxations keep
//!
//! * `tr([Z]₀₀) = 1`
//! * `[Z]ᵢᵢ = [Z]₀₀` for every `i`
//!
//! and the QUASAR relaxation adds the redundant (for rank-one `Z`) constraints
//! that every off-diagonal block `[Z]₀ᵢ` and `[Z]ᵢⱼ` is symmetric.
//!
//! Each constraint matrix is scaled to unit Frobenius norm. Order: trace; block
//! equalities per `i` (entries `r ≤ c`, row-major); `0–i` symmetries per `i`;
//! `i–j` symmetries for `i < j` lexicographically.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdp::{Constraint, SdpProblem, SparseSym};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relaxation {
    Naive,
    Quasar,
}

impl Relaxation {
    pub fn num_constraints(self, n: usize) -> usize {
        match self {
            Relaxation::Naive => 1 + 10 * n,
            Relaxation::Quasar => 1 + 16 * n + 3 * n * n.saturating_sub(1),
        }
    }
}

fn trace_constraint() -> Constraint {
    Constraint {
        a: SparseSym::from_triplets((0..4).map(|k| (k, k, 0.5))),
        b: 0.5,
    }
}

/// `[Z]ᵢᵢ(r, c) − [Z]₀₀(r, c) = 0`
fn block_equalities(i: usize, out: &mut Vec<Constraint>) {
    let o = 4 * i;
    for r in 0..4 {
        for c in r..4 {
            let a = if r == c {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                SparseSym::from_triplets([(o + r, o + r, h), (r, r, -h)])
            } else {
                SparseSym::from_triplets([(o + r, o + c, 0.5), (r, c, -0.5)])
            };
            out.push(Constraint { a, b: 0.0 });
        }
    }
}

/// `[Z]ᵢⱼ(r, c) − [Z]ᵢⱼ(c, r) = 0` for `r < c`, blocks `i < j`.
fn block_symmetries(i: usize, j: usize, out: &mut Vec<Constraint>) {
    let (oi, oj) = (4 * i, 4 * j);
    for r in 0..4 {
        for c in (r + 1)..4 {
            let a = SparseSym::from_triplets([(oi + r, oj + c, 0.5), (oi + c, oj + r, -0.5)]);
            out.push(Constraint { a, b: 0.0 });
        }
    }
}

fn check_dim(q: &DMatrix<f64>, n: usize) -> Result<()> {
    let expected = 4 * (n + 1);
    if q.nrows() != expected || q.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: q.nrows().max(q.ncols()),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one measurement".into()));
    }
    Ok(())
}

pub fn naive_constraints(n: usize) -> Vec<Constraint> {
    let mut cons = Vec::with_capacity(Relaxation::Naive.num_constraints(n));
    cons.push(trace_constraint());
    for i in 1..=n {
        block_equalities(i, &mut cons);
    }
    cons
}

pub fn quasar_constraints(n: usize) -> Vec<Constraint> {
    let mut cons = naive_constraints(n);
    cons.reserve(Relaxation::Quasar.num_constraints(n) - cons.len());
    for i in 1..=n {
        block_symmetries(0, i, &mut cons);
    }
    for i in 1..=n {
        for j in (i + 1)..=n {
            block_symmetries(i, j, &mut cons);
        }
    }
    cons
}

pub fn build_naive_sdp(q: &DMatrix<f64>, n: usize) -> Result<SdpProblem> {
    check_dim(q, n)?;
    SdpProblem::new(q.clone(), naive_constraints(n))
}

pub fn build_quasar_sdp(q: &DMatrix<f64>, n: usize) -> Result<SdpProblem> {
    check_dim(q, n)?;
    SdpProblem::new(q.clone(), quasar_constraints(n))
}

pub fn build_sdp(kind: Relaxation, q: &DMatrix<f64>, n: usize) -> Result<SdpProblem> {
    match kind {
        Relaxation::Naive => build_naive_sdp(q, n),
        Relaxation::Quasar => build_quasar_sdp(q, n),
    }
}
