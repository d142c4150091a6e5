//! Robust Wahba instances and the QCQP cost matrices built from them.

use nalgebra::{DMatrix, DVector, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::chi2::default_cbar_sq;
use crate::error::{ensure_finite, Error, Result};
use crate::quat::{hat, omega1_mat, omega2_mat, Rotation3, UnitQuaternion};

/// One vector measurement pair `bᵢ ≈ R aᵢ` with isotropic noise scale `σᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub sigma: f64,
}

impl Correspondence {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>, sigma: f64) -> Result<Self> {
        let c = Self { a, b, sigma };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.a.as_slice(), "a")?;
        ensure_finite(self.b.as_slice(), "b")?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Normalized squared residual `‖b − R a‖² / σ²`.
    #[inline]
    pub fn scaled_residual_sq(&self, r: &Rotation3) -> f64 {
        (self.b - r.m * self.a).norm_squared() / (self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct RobustWahbaProblem {
    correspondences: Vec<Correspondence>,
    cbar_sq: f64,
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    correspondences: Vec<Correspondence>,
    cbar_sq: f64,
}

impl TryFrom<ProblemRepr> for RobustWahbaProblem {
    type Error = Error;
    fn try_from(r: ProblemRepr) -> Result<Self> {
        Self::new(r.correspondences, r.cbar_sq)
    }
}

impl From<RobustWahbaProblem> for ProblemRepr {
    fn from(p: RobustWahbaProblem) -> Self {
        Self {
            correspondences: p.correspondences,
            cbar_sq: p.cbar_sq,
        }
    }
}

impl RobustWahbaProblem {
    /// Requires `N ≥ 2` and `c̄² > 0`. Parallel measurements are accepted.
    pub fn new(correspondences: Vec<Correspondence>, cbar_sq: f64) -> Result<Self> {
        if correspondences.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 correspondences, got {}",
                correspondences.len()
            )));
        }
        if !(cbar_sq > 0.0 && cbar_sq.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cbar_sq must be positive and finite, got {cbar_sq}"
            )));
        }
        for c in &correspondences {
            c.validate()?;
        }
        Ok(Self {
            correspondences,
            cbar_sq,
        })
    }

    /// Uses `c̄² = χ²₃⁻¹(1 − 10⁻⁴)`.
    pub fn with_default_threshold(correspondences: Vec<Correspondence>) -> Result<Self> {
        Self::new(correspondences, default_cbar_sq())
    }

    /// Set-membership parameterization: measurement `i` is an inlier iff
    /// `‖bᵢ − R aᵢ‖ ≤ βᵢ`. Realized with `c̄² = 1` and `σᵢ = βᵢ`.
    pub fn from_bounds(pairs: &[(Vector3<f64>, Vector3<f64>)], beta: &[f64]) -> Result<Self> {
        if pairs.len() != beta.len() {
            return Err(Error::DimensionMismatch {
                expected: pairs.len(),
                got: beta.len(),
            });
        }
        let corrs = pairs
            .iter()
            .zip(beta)
            .map(|(&(a, b), &bi)| Correspondence::new(a, b, bi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(corrs, 1.0)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.correspondences.len()
    }

    #[inline]
    pub fn cbar_sq(&self) -> f64 {
        self.cbar_sq
    }

    #[inline]
    pub fn correspondences(&self) -> &[Correspondence] {
        &self.correspondences
    }

    /// Side of the lifted matrix variable, `4(N+1)`.
    #[inline]
    pub fn lifted_dim(&self) -> usize {
        4 * (self.n() + 1)
    }

    pub fn scaled_residuals_sq(&self, r: &Rotation3) -> Vec<f64> {
        self.correspondences
            .iter()
            .map(|c| c.scaled_residual_sq(r))
            .collect()
    }

    /// Optimal inlier signs at a fixed rotation; ties count as inliers.
    pub fn classify(&self, r: &Rotation3) -> Vec<i8> {
        self.correspondences
            .iter()
            .map(|c| if c.scaled_residual_sq(r) <= self.cbar_sq { 1 } else { -1 })
            .collect()
    }

    pub fn cost_matrices(&self) -> CostMatrices {
        let (q0i, qii): (Vec<_>, Vec<_>) = self
            .correspondences
            .iter()
            .map(|c| build_cost_blocks(c, self.cbar_sq))
            .unzip();
        let big_q = assemble_q(&q0i, &qii).expect("lists built together");
        CostMatrices { q0i, qii, big_q }
    }
}

/// The 4×4 blocks `Q₀ᵢ`, `Qᵢᵢ` and the assembled `4(N+1)`-square matrix `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrices {
    pub q0i: Vec<Matrix4<f64>>,
    pub qii: Vec<Matrix4<f64>>,
    pub big_q: DMatrix<f64>,
}

/// Per-measurement cost blocks.
///
/// With `P = ((‖b‖² + ‖a‖²) I₄ + 2 Ω₁(b̂) Ω₂(â)) / σ²` (symmetric, since the
/// product of commuting Ω's is),
/// `Qᵢᵢ = P/2 + (c̄²/2) I₄` and `Q₀ᵢ = P/4 − (c̄²/4) I₄`.
pub fn build_cost_blocks(c: &Correspondence, cbar_sq: f64) -> (Matrix4<f64>, Matrix4<f64>) {
    let s2 = c.sigma * c.sigma;
    let cross = omega1_mat(&hat(&c.b)) * omega2_mat(&hat(&c.a));
    let mut p = cross * 2.0;
    let diag = c.b.norm_squared() + c.a.norm_squared();
    for k in 0..4 {
        p[(k, k)] += diag;
    }
    p /= s2;
    // symmetrize away rounding differences between the two off-diagonal halves
    let p = (p + p.transpose()) * 0.5;
    let eye = Matrix4::identity();
    let qii = p * 0.5 + eye * (cbar_sq * 0.5);
    let q0i = p * 0.25 - eye * (cbar_sq * 0.25);
    (q0i, qii)
}

/// Assemble the block matrix with `Q₀ᵢ` in blocks `(0,i)`/`(i,0)` and `Qᵢᵢ` on
/// the diagonal; all other blocks, including `(0,0)`, are zero.
pub fn assemble_q(q0i: &[Matrix4<f64>], qii: &[Matrix4<f64>]) -> Result<DMatrix<f64>> {
    if q0i.len() != qii.len() {
        return Err(Error::DimensionMismatch {
            expected: q0i.len(),
            got: qii.len(),
        });
    }
    let n = q0i.len();
    let mut q = DMatrix::zeros(4 * (n + 1), 4 * (n + 1));
    for i in 0..n {
        let o = 4 * (i + 1);
        q.fixed_view_mut::<4, 4>(0, o).copy_from(&q0i[i]);
        q.fixed_view_mut::<4, 4>(o, 0).copy_from(&q0i[i].transpose());
        q.fixed_view_mut::<4, 4>(o, o).copy_from(&qii[i]);
    }
    Ok(q)
}

/// TLS objective `Σ min(‖bᵢ − R aᵢ‖²/σᵢ², c̄²)`.
pub fn tls_cost(r: &Rotation3, p: &RobustWahbaProblem) -> f64 {
    p.correspondences
        .iter()
        .map(|c| c.scaled_residual_sq(r).min(p.cbar_sq))
        .sum()
}

/// The lifted vector `x = [q; θ₁q; …; θ_N q]`.
pub fn lift(q: &UnitQuaternion, theta: &[i8]) -> DVector<f64> {
    let n = theta.len();
    let qv = q.as_vector();
    let mut x = DVector::zeros(4 * (n + 1));
    x.fixed_rows_mut::<4>(0).copy_from(qv);
    for (i, &t) in theta.iter().enumerate() {
        x.fixed_rows_mut::<4>(4 * (i + 1)).copy_from(&(qv * f64::from(t)));
    }
    x
}

/// `xᵀ Q x`.
pub fn qcqp_cost(big_q: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * big_q * x)[(0, 0)]
}
