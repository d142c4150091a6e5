//! Certifiably optimal outlier-robust rotation search.
//!
//! Given vector pairs `(aᵢ, bᵢ)` of which an unknown subset are outliers, find
//! the rotation minimizing the truncated-least-squares cost
//! `Σ min(‖bᵢ − R aᵢ‖²/σᵢ², c̄²)`. The problem is rewritten as a QCQP over
//! binary-cloned quaternions, relaxed to a semidefinite program, and the SDP
//! solution is rounded and certified: when the relaxation is tight the
//! rounded estimate is provably globally optimal.
//!
//! Quaternions are stored `[v; s]` with the scalar part last throughout.

pub mod baselines;
pub mod certify;
pub mod chi2;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod problem;
pub mod quat;
pub mod relax;
pub mod sdp;
pub mod sdpa;
pub mod sweep;
pub mod synth;

pub use baselines::{brute_force_tls, ransac_rotation, wahba_closed_form, BruteForceResult, RansacParams};
pub use certify::{Certificate, NoiselessCertificate, RobustRotationEstimate};
pub use error::{Error, Result};
pub use pipeline::{solve_robust_wahba, RobustWahbaSolution};
pub use problem::{tls_cost, Correspondence, CostMatrices, RobustWahbaProblem};
pub use quat::{OmegaMatrix, OmegaSide, Rotation3, UnitQuaternion};
pub use relax::Relaxation;
pub use sweep::{BenchReport, Method, SweepConfig};
pub use synth::{generate_instance, SyntheticConfig, SyntheticInstance};
pub use sdp::{Algorithm, KktResiduals, SdpProblem, SdpSolution, SolveStatus, SolverSettings};

pub use nalgebra;
