//! End-to-end: relax, solve, round, certify.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certify::{round_solution, Certificate, RobustRotationEstimate, GAP_TOL, RANK_TOL};
use crate::error::Result;
use crate::problem::RobustWahbaProblem;
use crate::relax::{build_sdp, Relaxation};
use crate::sdp::{self, KktResiduals, SdpProblem, SdpSolution, SolveStatus, SolverSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustWahbaSolution {
    pub relaxation: Relaxation,
    pub estimate: RobustRotationEstimate,
    pub certificate: Certificate,
    pub status: SolveStatus,
    pub residuals: KktResiduals,
    pub iterations: usize,
    /// `tr(CZ)` and `bᵀy` as returned by the solver.
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub wall_time_s: f64,
}

/// The SDP together with its raw solution, for callers that need more than
/// the summary.
#[derive(Debug, Clone)]
pub struct Solved {
    pub sdp: SdpProblem,
    pub raw: SdpSolution,
    pub summary: RobustWahbaSolution,
}

/// Solve `relaxation` of `p` and certify the rounded estimate.
///
/// A solver that stops short of its tolerances does not make this fail: the
/// best iterate is still rounded and the certificate, together with `status`,
/// reports how much it can be trusted.
pub fn solve_robust_wahba(p: &RobustWahbaProblem, relaxation: Relaxation, settings: &SolverSettings) -> Result<RobustWahbaSolution> {
    Ok(solve_detailed(p, relaxation, settings)?.summary)
}

pub fn solve_detailed(p: &RobustWahbaProblem, relaxation: Relaxation, settings: &SolverSettings) -> Result<Solved> {
    let t0 = Instant::now();
    let cm = p.cost_matrices();
    let sdp = build_sdp(relaxation, &cm.big_q, p.n())?;
    let raw = sdp::solve(&sdp, settings)?;
    let estimate = round_solution(&raw.z, &cm.big_q)?;
    let certificate = Certificate::new(&sdp, &raw, &estimate, RANK_TOL, GAP_TOL)?;
    let summary = RobustWahbaSolution {
        relaxation,
        estimate,
        certificate,
        status: raw.status,
        residuals: raw.residuals,
        iterations: raw.iterations,
        primal_obj: raw.primal_obj,
        dual_obj: raw.dual_obj,
        wall_time_s: t0.elapsed().as_secs_f64(),
    };
    Ok(Solved { sdp, raw, summary })
}
