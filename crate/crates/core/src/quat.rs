//! Unit-quaternion algebra in the `[v; s]` layout (scalar part LAST).
//!
//! A quaternion is stored as the 4-vector `q = [q1, q2, q3, q4]` where
//! `q1..q3` is the vector part and `q4` the scalar part. The Hamilton product
//! is expressed through the two linear operators
//!
//! ```text
//! qa ⊗ qb = Ω₁(qa) qb = Ω₂(qb) qa
//! ```
//!
//! and a vector `a` is rotated by the sandwich `q ⊗ â ⊗ q⁻¹` with
//! `â = [a; 0]`.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Which of the two Hamilton-product operators a matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OmegaSide {
    /// `Ω₁(q) p = q ⊗ p`
    Left,
    /// `Ω₂(q) p = p ⊗ q`
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaMatrix {
    pub m: Matrix4<f64>,
    pub side: OmegaSide,
}

/// `Ω₁(q)` without argument validation.
#[inline]
pub fn omega1_mat(q: &Vector4<f64>) -> Matrix4<f64> {
    let (q1, q2, q3, q4) = (q[0], q[1], q[2], q[3]);
    #[rustfmt::skip]
    let m = Matrix4::new(
         q4, -q3,  q2, q1,
         q3,  q4, -q1, q2,
        -q2,  q1,  q4, q3,
        -q1, -q2, -q3, q4,
    );
    m
}

/// `Ω₂(q)` without argument validation.
#[inline]
pub fn omega2_mat(q: &Vector4<f64>) -> Matrix4<f64> {
    let (q1, q2, q3, q4) = (q[0], q[1], q[2], q[3]);
    #[rustfmt::skip]
    let m = Matrix4::new(
         q4,  q3, -q2, q1,
        -q3,  q4,  q1, q2,
         q2, -q1,  q4, q3,
        -q1, -q2, -q3, q4,
    );
    m
}

/// Left-multiplication operator. Defined for any finite 4-vector, unit or not.
pub fn omega1(q: &Vector4<f64>) -> Result<OmegaMatrix> {
    ensure_finite(q.as_slice(), "quaternion")?;
    Ok(OmegaMatrix {
        m: omega1_mat(q),
        side: OmegaSide::Left,
    })
}

/// Right-multiplication operator: `Ω₂(p) q = q ⊗ p`.
pub fn omega2(q: &Vector4<f64>) -> Result<OmegaMatrix> {
    ensure_finite(q.as_slice(), "quaternion")?;
    Ok(OmegaMatrix {
        m: omega2_mat(q),
        side: OmegaSide::Right,
    })
}

/// Hamilton product `qa ⊗ qb`.
pub fn qmul(qa: &Vector4<f64>, qb: &Vector4<f64>) -> Result<Vector4<f64>> {
    ensure_finite(qa.as_slice(), "left quaternion")?;
    ensure_finite(qb.as_slice(), "right quaternion")?;
    Ok(omega1_mat(qa) * qb)
}

/// Homogenize a 3-vector as the pure quaternion `[a; 0]`.
#[inline]
pub fn hat(a: &Vector3<f64>) -> Vector4<f64> {
    Vector4::new(a.x, a.y, a.z, 0.0)
}

/// Cross-product matrix `⌊a⌋×` such that `⌊a⌋× b = a × b`.
#[inline]
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.0, -a.z, a.y,
        a.z, 0.0, -a.x,
        -a.y, a.x, 0.0,
    );
    m
}

/// A unit quaternion `[v; s]`, sign-canonicalized so that `s ≥ 0`.
///
/// Ties at `s = 0` are broken by making the first nonzero component positive,
/// so that `q` and `-q` always map to the same stored value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    q: Vector4<f64>,
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self {
            q: Vector4::new(0.0, 0.0, 0.0, 1.0),
        }
    }

    /// Normalizes and canonicalizes an arbitrary nonzero 4-vector.
    pub fn from_vector(q: Vector4<f64>) -> Result<Self> {
        ensure_finite(q.as_slice(), "quaternion")?;
        let n = q.norm();
        if n < 1e-300 {
            return Err(Error::InvalidArgument("zero quaternion".into()));
        }
        Ok(Self {
            q: canonical_sign(q / n),
        })
    }

    /// Keeps the given sign (no canonicalization). Used for clones `qᵢ = θᵢ q`.
    pub fn from_vector_raw(q: Vector4<f64>) -> Result<Self> {
        ensure_finite(q.as_slice(), "quaternion")?;
        let n = q.norm();
        if n < 1e-300 {
            return Err(Error::InvalidArgument("zero quaternion".into()));
        }
        Ok(Self { q: q / n })
    }

    /// Rotation by `angle` radians about `axis` (need not be unit).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) || !angle.is_finite() {
            return Err(Error::InvalidArgument("degenerate axis or angle".into()));
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let v = axis / n * s;
        Self::from_vector(Vector4::new(v.x, v.y, v.z, c))
    }

    #[inline]
    pub fn as_vector(&self) -> &Vector4<f64> {
        &self.q
    }

    #[inline]
    pub fn vector_part(&self) -> Vector3<f64> {
        Vector3::new(self.q[0], self.q[1], self.q[2])
    }

    #[inline]
    pub fn scalar_part(&self) -> f64 {
        self.q[3]
    }

    /// Conjugate `[-v; s]`. The result is stored with the raw sign, since for
    /// `s = 0` canonicalizing would undo the inversion.
    pub fn inverse(&self) -> Self {
        Self {
            q: Vector4::new(-self.q[0], -self.q[1], -self.q[2], self.q[3]),
        }
    }

    pub fn to_rotation(&self) -> Rotation3 {
        quat_to_rot(self)
    }

    /// Rotate a vector by the sandwich product.
    pub fn rotate(&self, a: &Vector3<f64>) -> Vector3<f64> {
        quat_to_rot(self).m * a
    }

    /// True when `self` and `other` encode the same rotation (`q ~ -q`).
    pub fn same_rotation(&self, other: &Self, tol: f64) -> bool {
        (self.q - other.q).norm() <= tol || (self.q + other.q).norm() <= tol
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::from_vector(Vector4::from(v))
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        [q.q[0], q.q[1], q.q[2], q.q[3]]
    }
}

pub(crate) fn canonical_sign(q: Vector4<f64>) -> Vector4<f64> {
    if q[3] > 0.0 {
        return q;
    }
    if q[3] < 0.0 {
        return -q;
    }
    match q.iter().find(|c| **c != 0.0) {
        Some(c) if *c < 0.0 => -q,
        _ => q,
    }
}

/// Inverse of a unit quaternion: reverses the sign of the vector part.
pub fn qinv(q: &UnitQuaternion) -> UnitQuaternion {
    q.inverse()
}

/// Proper rotation matrix, `mᵀm = I` and `det m = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation3 {
    pub m: Matrix3<f64>,
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    /// Validates orthogonality and orientation to 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        ensure_finite(m.as_slice(), "rotation")?;
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "not a rotation: |RᵀR - I|∞ = {ortho:e}, det = {det}"
            )));
        }
        Ok(Self { m })
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: self.m.transpose(),
        }
    }

    /// Unit quaternion via the largest-diagonal branch (Shepperd's method).
    pub fn to_quaternion(&self) -> UnitQuaternion {
        rot_to_quat(self)
    }

    /// Angle of the relative rotation `selfᵀ other`, in `[0, π]`.
    ///
    /// Computed as `atan2(sin, cos)` from the skew and trace parts; `acos` of
    /// the trace alone loses half the digits near zero.
    pub fn geodesic_distance(&self, other: &Rotation3) -> f64 {
        let d = self.m.transpose() * other.m;
        let c = (d.trace() - 1.0) / 2.0;
        let s = Vector3::new(d[(2, 1)] - d[(1, 2)], d[(0, 2)] - d[(2, 0)], d[(1, 0)] - d[(0, 1)]).norm() / 2.0;
        s.atan2(c)
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation3 {
    type Error = Error;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

impl From<Rotation3> for [[f64; 3]; 3] {
    fn from(r: Rotation3) -> Self {
        std::array::from_fn(|i| std::array::from_fn(|j| r.m[(i, j)]))
    }
}

/// Top-left 3×3 block of `Ω₂ᵀ(q) Ω₁(q) = diag(R, 1)`.
pub fn quat_to_rot(q: &UnitQuaternion) -> Rotation3 {
    let v = q.as_vector();
    let r4 = omega2_mat(v).transpose() * omega1_mat(v);
    Rotation3 {
        m: r4.fixed_view::<3, 3>(0, 0).into_owned(),
    }
}

/// Inverse of [`quat_to_rot`], branching on the largest of `tr R` and the
/// diagonal entries so the divisor is never small.
pub fn rot_to_quat(r: &Rotation3) -> UnitQuaternion {
    let m = &r.m;
    let tr = m.trace();
    let candidates = [tr, m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let (best, _) = candidates
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    let q = match best {
        0 => {
            let s = (1.0 + tr).sqrt() * 2.0;
            Vector4::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
                0.25 * s,
            )
        }
        1 => {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Vector4::new(
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(2, 1)] - m[(1, 2)]) / s,
            )
        }
        2 => {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Vector4::new(
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
            )
        }
        _ => {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Vector4::new(
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        }
    };
    let n = q.norm();
    UnitQuaternion {
        q: canonical_sign(q / n),
    }
}
