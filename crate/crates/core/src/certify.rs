//! Rounding, tightness metrics and optimality certificates.
//!
//! A relaxation is *tight* when its optimal `Z` has rank one and its optimal
//! value matches the cost of the rounded QCQP point. The dual side is checked
//! through the matrix `M = Q − μJ − Λ`, where `J` selects block `(0,0)` and `Λ`
//! carries the block-equality multipliers: `M ⪰ 0` together with `M x* = 0`
//! proves that `x*` is globally optimal.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{lift, qcqp_cost, RobustWahbaProblem};
use crate::quat::{omega1_mat, skew, Rotation3, UnitQuaternion};
use crate::relax::Relaxation;
use crate::sdp::{min_eigenvalue, sorted_eigen, SdpProblem, SdpSolution};

/// Default eigenvalue ratio below which an eigenvalue counts as zero.
pub const RANK_TOL: f64 = 1e-6;
/// Default relative gap accepted as tight.
pub const GAP_TOL: f64 = 1e-6;
/// Below this `|f_qcqp|` the relative gap is undefined and the absolute gap is
/// reported instead.
pub const ABS_GAP_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustRotationEstimate {
    pub q: UnitQuaternion,
    #[serde(rename = "R")]
    pub r: Rotation3,
    pub theta: Vec<i8>,
    pub inliers: Vec<usize>,
    pub f_qcqp: f64,
}

impl RobustRotationEstimate {
    /// Estimate at a given `(q, θ)`, with its QCQP cost.
    pub fn from_parts(problem: &RobustWahbaProblem, q: UnitQuaternion, theta: Vec<i8>) -> Result<Self> {
        if theta.len() != problem.n() {
            return Err(Error::DimensionMismatch {
                expected: problem.n(),
                got: theta.len(),
            });
        }
        let f = qcqp_cost(&problem.cost_matrices().big_q, &lift(&q, &theta));
        Ok(Self::assemble(q, theta, f))
    }

    fn assemble(q: UnitQuaternion, theta: Vec<i8>, f_qcqp: f64) -> Self {
        let inliers = theta
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0)
            .map(|(i, _)| i)
            .collect();
        Self {
            r: q.to_rotation(),
            q,
            theta,
            inliers,
            f_qcqp: f_qcqp.max(0.0),
        }
    }
}

/// Round a lifted SDP solution to a feasible QCQP point.
///
/// Uses the leading eigenpair `x̂ = √λ₁ v₁`: `q̂` is the normalized first
/// block and `θ̂ᵢ = sign(q̂ᵀ x̂ᵢ)`, with a zero sign broken to `+1`. The cost is
/// `xᵀQx` at `x = [q̂; θ̂₁q̂; …]`.
pub fn round_solution(z: &DMatrix<f64>, big_q: &DMatrix<f64>) -> Result<RobustRotationEstimate> {
    let dim = z.nrows();
    if dim < 8 || dim % 4 != 0 || z.ncols() != dim {
        return Err(Error::InvalidArgument(format!(
            "Z must be square of side 4(N+1) with N ≥ 1, got {}×{}",
            z.nrows(),
            z.ncols()
        )));
    }
    if big_q.shape() != z.shape() {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: big_q.nrows(),
        });
    }
    let n = dim / 4 - 1;
    let (vals, vecs) = sorted_eigen(z);
    if !(vals[0] > 0.0) {
        return Err(Error::DegenerateSolution(format!("leading eigenvalue {:e} is not positive", vals[0])));
    }
    let x = vecs.column(0) * vals[0].sqrt();
    let q0 = x.fixed_rows::<4>(0).into_owned();
    if !(q0.norm() > 0.0) {
        return Err(Error::DegenerateSolution("leading eigenvector has a zero rotation block".into()));
    }
    let q = UnitQuaternion::from_vector(q0)?;
    let theta: Vec<i8> = (0..n)
        .map(|i| {
            let qi = x.fixed_rows::<4>(4 * (i + 1));
            // against the raw block: canonicalizing q̂ may flip its sign
            if q0.dot(&qi) < 0.0 {
                -1
            } else {
                1
            }
        })
        .collect();
    let f = qcqp_cost(big_q, &lift(&q, &theta));
    Ok(RobustRotationEstimate::assemble(q, theta, f))
}

/// `(f_qcqp − f_sdp)/f_qcqp`, clipped at zero. The flag is set when
/// `|f_qcqp| < 1e-12` and the absolute difference is returned instead.
pub fn relative_gap(f_qcqp: f64, f_sdp: f64) -> (f64, bool) {
    if f_qcqp.abs() < ABS_GAP_THRESHOLD {
        ((f_qcqp - f_sdp).abs(), true)
    } else {
        (((f_qcqp - f_sdp) / f_qcqp).max(0.0), false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankMetrics {
    pub rank: usize,
    pub stable_rank: f64,
    /// Descending.
    pub eigvals: Vec<f64>,
}

/// Numerical rank `#{λᵢ > tol·λ₁}` and stable rank `Σλᵢ²/λ₁²`.
pub fn rank_metrics(z: &DMatrix<f64>, tol: f64) -> Result<RankMetrics> {
    if z.is_empty() || z.nrows() != z.ncols() {
        return Err(Error::InvalidArgument("Z must be square and non-empty".into()));
    }
    let (vals, _) = sorted_eigen(z);
    let l1 = vals[0];
    if !(l1 > 0.0) {
        return Err(Error::DegenerateSolution("stable rank undefined: no positive eigenvalue".into()));
    }
    let rank = vals.iter().filter(|&&v| v > tol * l1).count();
    let stable_rank = vals.iter().map(|v| v * v).sum::<f64>() / (l1 * l1);
    Ok(RankMetrics {
        rank,
        stable_rank,
        eigvals: vals.iter().copied().collect(),
    })
}

/// Tightness verdict for one solved relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Lower bound on the relaxation optimum from the dual iterate, see
    /// [`certified_lower_bound`].
    pub f_sdp: f64,
    pub f_qcqp: f64,
    pub relative_gap: f64,
    pub gap_is_absolute: bool,
    pub rank: usize,
    pub stable_rank: f64,
    /// Smallest eigenvalue of `C − Σ yₖAₖ`.
    pub dual_min_eig: f64,
    pub is_tight: bool,
    /// Up to five leading eigenvalues of `Z`.
    pub eigvals: Vec<f64>,
}

impl Certificate {
    /// Metrics for `sol` against the rounded estimate.
    ///
    /// `f_sdp` is the dual lower bound rather than `tr(CZ)`: an inexact `Z`
    /// overestimates the optimum and would understate the gap, whereas the
    /// bound holds for any `y`. `is_tight` requires rank one and
    /// `f_qcqp − f_sdp ≤ gap_tol·max(1, f_qcqp)`; above unit cost this is the
    /// relative-gap test, and it then proves the rounded point globally
    /// optimal to that tolerance.
    pub fn new(p: &SdpProblem, sol: &SdpSolution, est: &RobustRotationEstimate, rank_tol: f64, gap_tol: f64) -> Result<Self> {
        let m = rank_metrics(&sol.z, rank_tol)?;
        let dual_min_eig = min_eigenvalue(&p.dual_slack(&sol.y));
        let f_sdp = p.rhs().dot(&sol.y) + (p.dim() / 4) as f64 * dual_min_eig.min(0.0);
        let (gap, absolute) = relative_gap(est.f_qcqp, f_sdp);
        let excess = (est.f_qcqp - f_sdp).max(0.0);
        let is_tight = m.rank == 1 && excess <= gap_tol * est.f_qcqp.abs().max(1.0);
        Ok(Self {
            f_sdp,
            f_qcqp: est.f_qcqp,
            relative_gap: gap,
            gap_is_absolute: absolute,
            rank: m.rank,
            stable_rank: m.stable_rank,
            dual_min_eig,
            is_tight,
            eigvals: m.eigvals.into_iter().take(5).collect(),
        })
    }
}

/// Lower bound on the relaxation optimum valid for any `y`, feasible or not:
/// `bᵀy + tr(Z)·min(0, λ_min(C − 𝒜ᵀy))` with `tr(Z) = N + 1` on the feasible
/// set.
pub fn certified_lower_bound(p: &SdpProblem, y: &DVector<f64>) -> f64 {
    let trace = (p.dim() / 4) as f64;
    p.rhs().dot(y) + trace * min_eigenvalue(&p.dual_slack(y)).min(0.0)
}

/// Outcome of [`check_dual_certificate`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualCheck {
    pub min_eig: f64,
    /// `‖M x‖₂`
    pub stationarity_residual: f64,
    /// Eigenvalues with `|λ| ≤ tol·‖M‖₂`.
    pub zero_eig_multiplicity: usize,
    pub verdict: bool,
}

/// Validate that `Λ` only touches blocks `(0,0)` and `(i,i)`, that each
/// diagonal block is symmetric and that block `(0,0)` equals `−Σ Λ[i,i]`.
fn check_lambda_pattern(lambda: &DMatrix<f64>) -> Result<()> {
    let dim = lambda.nrows();
    if dim < 8 || dim % 4 != 0 || lambda.ncols() != dim {
        return Err(Error::InvalidCertificate(format!("Λ must be 4(N+1)-square, got {}×{}", lambda.nrows(), lambda.ncols())));
    }
    let nb = dim / 4;
    let scale = lambda.amax().max(1.0);
    let tol = 1e-12 * scale;
    for bi in 0..nb {
        for bj in 0..nb {
            let blk = lambda.fixed_view::<4, 4>(4 * bi, 4 * bj);
            if bi != bj && blk.amax() > tol {
                return Err(Error::InvalidCertificate(format!("Λ block ({bi},{bj}) must be zero")));
            }
            if bi == bj && (blk - blk.transpose()).amax() > tol {
                return Err(Error::InvalidCertificate(format!("Λ block ({bi},{bi}) is not symmetric")));
            }
        }
    }
    let mut sum = lambda.fixed_view::<4, 4>(0, 0).into_owned();
    for i in 1..nb {
        sum += lambda.fixed_view::<4, 4>(4 * i, 4 * i);
    }
    if sum.amax() > tol * nb as f64 {
        return Err(Error::InvalidCertificate("Λ block (0,0) must equal the sum of −Λ[i,i]".into()));
    }
    Ok(())
}

/// Check `M = Q − μJ − Λ ⪰ 0` and `M x = 0`, both relative to `‖M‖`.
pub fn check_dual_certificate(q: &DMatrix<f64>, mu: f64, lambda: &DMatrix<f64>, x: &DVector<f64>, tol: f64) -> Result<DualCheck> {
    if q.shape() != lambda.shape() || q.nrows() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: q.nrows(),
            got: lambda.nrows().max(x.len()),
        });
    }
    check_lambda_pattern(lambda)?;
    let mut m = q - lambda;
    for k in 0..4 {
        m[(k, k)] -= mu;
    }
    Ok(check_psd_kernel(&m, x, tol))
}

/// PSD and kernel test on an already assembled `M`, e.g. a solver dual slack.
pub fn check_psd_kernel(m: &DMatrix<f64>, x: &DVector<f64>, tol: f64) -> DualCheck {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let spec = eig.eigenvalues.amax();
    let min_eig = eig.eigenvalues.min();
    let zero_eig_multiplicity = eig.eigenvalues.iter().filter(|v| v.abs() <= tol * spec).count();
    let stationarity_residual = (m * x).norm();
    let verdict = min_eig >= -tol * spec && stationarity_residual <= tol * m.norm() * x.norm();
    DualCheck {
        min_eig,
        stationarity_residual,
        zero_eig_multiplicity,
        verdict,
    }
}

/// Split a naive-relaxation dual vector into `(μ, Λ)` so that
/// `S = Q − μJ − Λ`.
///
/// Only defined for the naive relaxation, whose constraints are exactly the
/// trace (first) and the block equalities; for QUASAR the symmetry multipliers
/// have no place in `Λ` and the slack `S` itself serves as the certificate.
pub fn lagrangian_from_naive_dual(p: &SdpProblem, y: &DVector<f64>) -> Result<(f64, DMatrix<f64>)> {
    let n = p.dim() / 4 - 1;
    if p.num_constraints() != Relaxation::Naive.num_constraints(n) || y.len() != p.num_constraints() {
        return Err(Error::InvalidArgument("expected a naive relaxation and a matching dual vector".into()));
    }
    let trace = &p.constraints()[0];
    // the trace constraint is c·I on block (0,0); its multiplier times c is μ
    let c = trace.a.entries()[0].2;
    let mu = y[0] * c;
    let mut rest = y.clone();
    rest[0] = 0.0;
    Ok((mu, p.apply_at(&rest)))
}

/// The analytic dual certificate of a noiseless, outlier-free instance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiselessCertificate {
    pub mu: f64,
    pub lambda_blocks: Vec<Matrix4<f64>>,
    pub lambda: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub x_star: DVector<f64>,
    pub min_eig: f64,
    pub zero_eig_multiplicity: usize,
    /// All `aᵢ` parallel: the certificate may have a larger kernel.
    pub degenerate: bool,
}

/// Relative tolerance used to count zero eigenvalues of the analytic `M`.
pub const NOISELESS_KERNEL_TOL: f64 = 1e-9;

/// Build `μ = 0` and `Λᵢᵢ = Ω₁(q*) diag(Eᵢᵢ, −c̄²/4) Ω₁(q*)ᵀ` with
/// `Eᵢᵢ = ⌊aᵢ/σᵢ⌋ₓ² − (c̄²/4) I₃`.
///
/// The `1/σᵢ` scaling matches the cost blocks, which carry `1/σᵢ²`.
pub fn construct_noiseless_certificate(p: &RobustWahbaProblem, q_star: &UnitQuaternion) -> Result<NoiselessCertificate> {
    let r = q_star.to_rotation();
    let max_residual = p
        .correspondences()
        .iter()
        .map(|c| (c.b - r.m * c.a).norm())
        .fold(0.0, f64::max);
    if max_residual >= 1e-9 {
        return Err(Error::NotNoiseless { max_residual });
    }
    let n = p.n();
    let cb4 = p.cbar_sq() / 4.0;
    let om = omega1_mat(q_star.as_vector());
    let lambda_blocks: Vec<Matrix4<f64>> = p
        .correspondences()
        .iter()
        .map(|c| {
            let k = skew(&(c.a / c.sigma));
            let e: Matrix3<f64> = k * k - Matrix3::identity() * cb4;
            let mut bar = Matrix4::zeros();
            bar.fixed_view_mut::<3, 3>(0, 0).copy_from(&e);
            bar[(3, 3)] = -cb4;
            let l = om * bar * om.transpose();
            (l + l.transpose()) * 0.5
        })
        .collect();

    let dim = 4 * (n + 1);
    let mut lambda = DMatrix::zeros(dim, dim);
    for (i, l) in lambda_blocks.iter().enumerate() {
        let o = 4 * (i + 1);
        let mut top = lambda.fixed_view_mut::<4, 4>(0, 0);
        top += l;
        lambda.fixed_view_mut::<4, 4>(o, o).copy_from(&(-l));
    }
    let big_q = p.cost_matrices().big_q;
    let x_star = lift(q_star, &vec![1; n]);
    let check = check_dual_certificate(&big_q, 0.0, &lambda, &x_star, NOISELESS_KERNEL_TOL)?;
    let a0 = p.correspondences()[0].a;
    let degenerate = p
        .correspondences()
        .iter()
        .all(|c| c.a.cross(&a0).norm() <= 1e-12 * c.a.norm() * a0.norm());
    Ok(NoiselessCertificate {
        mu: 0.0,
        m: &big_q - &lambda,
        lambda_blocks,
        lambda,
        x_star,
        min_eig: check.min_eig,
        zero_eig_multiplicity: check.zero_eig_multiplicity,
        degenerate,
    })
}
