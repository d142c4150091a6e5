//! Reference estimators: closed-form weighted Wahba, RANSAC, and exhaustive
//! TLS enumeration.
//!
//! All three share one quaternion eigen-solver. For unit `q`,
//! `‖b − R a‖² = qᵀ P(a, b) q` with
//! `P = (‖b‖² + ‖a‖²) I₄ + 2 Ω₁(b̂) Ω₂(â)`, so a weighted least-squares cost is
//! the quadratic form of `Σ wᵢ Pᵢ` and its minimum over rotations is that
//! matrix's smallest eigenvalue.

use nalgebra::{Matrix4, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Correspondence, RobustWahbaProblem};
use crate::quat::{hat, omega1_mat, omega2_mat, Rotation3, UnitQuaternion};

/// Largest `N` accepted by [`brute_force_tls`] (`2^N` eigen-solves).
pub const BRUTE_FORCE_MAX_N: usize = 14;

/// `P(a, b)` with `qᵀPq = ‖b − R(q) a‖²`.
fn residual_form(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix4<f64> {
    let mut p = omega1_mat(&hat(b)) * omega2_mat(&hat(a)) * 2.0;
    let d = a.norm_squared() + b.norm_squared();
    for k in 0..4 {
        p[(k, k)] += d;
    }
    (p + p.transpose()) * 0.5
}

/// Smallest eigenpair of a symmetric 4×4 matrix.
fn min_eigenpair(m: &Matrix4<f64>) -> (f64, UnitQuaternion) {
    let eig = SymmetricEigen::new(*m);
    let k = eig.eigenvalues.imin();
    let q = UnitQuaternion::from_vector(eig.eigenvectors.column(k).into_owned()).expect("eigenvectors are unit");
    (eig.eigenvalues[k], q)
}

fn all_parallel<'a>(mut vs: impl Iterator<Item = &'a Vector3<f64>>) -> bool {
    let Some(first) = vs.find(|v| v.norm() > 0.0) else {
        return true;
    };
    vs.all(|v| v.cross(first).norm() <= 1e-12 * v.norm() * first.norm())
}

/// Weighted Wahba: `argmin_R Σ wᵢ ‖bᵢ − R aᵢ‖²`, solved exactly.
///
/// Needs at least two positively weighted correspondences whose `aᵢ` are not
/// all parallel; otherwise the minimizer is not unique and `IllPosed` is
/// returned.
pub fn wahba_closed_form(corrs: &[Correspondence], weights: &[f64]) -> Result<Rotation3> {
    if corrs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: corrs.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
    }
    let active: Vec<&Correspondence> = corrs.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(c, _)| c).collect();
    if active.len() < 2 {
        return Err(Error::IllPosed(format!("{} weighted correspondences, need at least 2", active.len())));
    }
    if all_parallel(active.iter().map(|c| &c.a)) {
        return Err(Error::IllPosed("all aᵢ are parallel".into()));
    }
    let m = corrs
        .iter()
        .zip(weights)
        .fold(Matrix4::zeros(), |acc, (c, &w)| acc + residual_form(&c.a, &c.b) * w);
    Ok(min_eigenpair(&m).1.to_rotation())
}

/// `Σ wᵢ ‖bᵢ − R aᵢ‖²`
pub fn wahba_cost(r: &Rotation3, corrs: &[Correspondence], weights: &[f64]) -> f64 {
    corrs
        .iter()
        .zip(weights)
        .map(|(c, w)| w * (c.b - r.m * c.a).norm_squared())
        .sum()
}

/// Inverse-variance weights `1/σᵢ²`.
pub fn inverse_variance_weights(corrs: &[Correspondence]) -> Vec<f64> {
    corrs.iter().map(|c| 1.0 / (c.sigma * c.sigma)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub rotation: Rotation3,
    pub q: UnitQuaternion,
    pub theta: Vec<i8>,
    pub f_star: f64,
}

/// Global TLS optimum by enumerating every inlier set.
///
/// For each `θ ∈ {±1}ᴺ` the best rotation on the inlier set is the Wahba
/// solution and its cost is the smallest eigenvalue of `Σ_{θᵢ=+1} Pᵢ/σᵢ²`, so
/// degenerate inlier sets (empty, single, parallel) are scored exactly too.
/// Ties are broken by the lexicographically smallest `θ` (outlier `−1` first).
pub fn brute_force_tls(p: &RobustWahbaProblem) -> Result<BruteForceResult> {
    brute_force_corrs(p.correspondences(), p.cbar_sq())
}

/// [`brute_force_tls`] on a bare slice, which may hold a single pair.
pub fn brute_force_corrs(corrs: &[Correspondence], cbar_sq: f64) -> Result<BruteForceResult> {
    let n = corrs.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no correspondences".into()));
    }
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge(format!("brute force limited to N ≤ {BRUTE_FORCE_MAX_N}, got {n}")));
    }
    let forms: Vec<Matrix4<f64>> = corrs
        .iter()
        .map(|c| residual_form(&c.a, &c.b) / (c.sigma * c.sigma))
        .collect();
    // bit i of the mask set ⇔ θᵢ = +1; lexicographic θ order is then the
    // order of the bit-reversed mask
    let key = |mask: u32| mask.reverse_bits() >> (32 - n);
    let score = |mask: u32| -> (f64, u32) {
        let mut m = Matrix4::zeros();
        let mut outliers = 0usize;
        for (i, f) in forms.iter().enumerate() {
            if mask >> i & 1 == 1 {
                m += f;
            } else {
                outliers += 1;
            }
        }
        let lmin = if outliers == n { 0.0 } else { min_eigenpair(&m).0.max(0.0) };
        (lmin + outliers as f64 * cbar_sq, mask)
    };
    let better = |a: (f64, u32), b: (f64, u32)| match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if key(a.1) <= key(b.1) {
                a
            } else {
                b
            }
        }
    };
    let (f_star, mask) = (0..1u32 << n)
        .into_par_iter()
        .map(score)
        .reduce(|| (f64::INFINITY, 0), better);
    let theta: Vec<i8> = (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
    let m = forms
        .iter()
        .zip(&theta)
        .filter(|(_, &t)| t > 0)
        .fold(Matrix4::zeros(), |acc, (f, _)| acc + f);
    let q = if theta.iter().all(|&t| t < 0) {
        UnitQuaternion::identity()
    } else {
        min_eigenpair(&m).1
    };
    Ok(BruteForceResult {
        rotation: q.to_rotation(),
        q,
        theta,
        f_star,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub max_iters: usize,
    pub sample_size: usize,
    /// Bound on `‖bᵢ − R aᵢ‖²/σᵢ²`; `None` uses the problem's `c̄²`.
    pub inlier_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            sample_size: 2,
            inlier_threshold: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RansacStatus {
    Success,
    /// No sample gathered two inliers; the rotation is a best effort.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacResult {
    pub rotation: Rotation3,
    pub inliers: Vec<usize>,
    pub status: RansacStatus,
    pub degenerate_samples: usize,
}

/// Two-point RANSAC with an inverse-variance Wahba re-fit on the best
/// consensus set. Deterministic given `params.seed`.
pub fn ransac_rotation(p: &RobustWahbaProblem, params: &RansacParams) -> Result<RansacResult> {
    if params.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be ≥ 1".into()));
    }
    let corrs = p.correspondences();
    let n = corrs.len();
    if params.sample_size < 2 || params.sample_size > n {
        return Err(Error::InvalidArgument(format!(
            "sample_size must lie in [2, {n}], got {}",
            params.sample_size
        )));
    }
    let thr = params.inlier_threshold.unwrap_or(p.cbar_sq());
    if !(thr > 0.0) {
        return Err(Error::InvalidArgument("inlier threshold must be positive".into()));
    }
    let weights = inverse_variance_weights(corrs);
    let consensus = |r: &Rotation3| -> Vec<usize> {
        corrs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.scaled_residual_sq(r) <= thr)
            .map(|(i, _)| i)
            .collect()
    };
    let subset = |idx: &[usize]| -> (Vec<Correspondence>, Vec<f64>) {
        (idx.iter().map(|&i| corrs[i].clone()).collect(), idx.iter().map(|&i| weights[i]).collect())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Rotation3, Vec<usize>)> = None;
    let mut degenerate = 0;
    for _ in 0..params.max_iters {
        let idx = sample(&mut rng, n, params.sample_size).into_vec();
        let (c, w) = subset(&idx);
        let Ok(r) = wahba_closed_form(&c, &w) else {
            degenerate += 1;
            continue;
        };
        let inl = consensus(&r);
        if best.as_ref().is_none_or(|(_, b)| inl.len() > b.len()) {
            best = Some((r, inl));
        }
    }

    match best {
        Some((r, inl)) if inl.len() >= 2 => {
            let (c, w) = subset(&inl);
            let (rotation, inliers) = match wahba_closed_form(&c, &w) {
                Ok(refit) => {
                    let again = consensus(&refit);
                    if again.len() >= inl.len() {
                        (refit, again)
                    } else {
                        (r, inl)
                    }
                }
                Err(_) => (r, inl),
            };
            Ok(RansacResult {
                rotation,
                inliers,
                status: RansacStatus::Success,
                degenerate_samples: degenerate,
            })
        }
        other => {
            let rotation = match other {
                Some((r, _)) => r,
                None => {
                    let m = corrs
                        .iter()
                        .zip(&weights)
                        .fold(Matrix4::zeros(), |acc, (c, &w)| acc + residual_form(&c.a, &c.b) * w);
                    min_eigenpair(&m).1.to_rotation()
                }
            };
            Ok(RansacResult {
                inliers: consensus(&rotation),
                rotation,
                status: RansacStatus::Failed,
                degenerate_samples: degenerate,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::tls_cost;
    use crate::synth::{generate_instance, SyntheticConfig};

    fn pair(a: Vector3<f64>, b: Vector3<f64>) -> Correspondence {
        Correspondence::new(a, b, 0.1).unwrap()
    }

    #[test]
    fn residual_form_matches_direct() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 2.0, -0.5), 0.8).unwrap();
        let a = Vector3::new(0.3, -1.2, 0.7);
        let b = Vector3::new(1.0, 0.1, -0.3);
        let f = q.as_vector().dot(&(residual_form(&a, &b) * q.as_vector()));
        assert!((f - (b - q.to_rotation().m * a).norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn identity_data_gives_identity() {
        let corrs = vec![pair(Vector3::x(), Vector3::x()), pair(Vector3::y(), Vector3::y())];
        let r = wahba_closed_form(&corrs, &[1.0, 1.0]).unwrap();
        assert!(r.geodesic_distance(&Rotation3::identity()) < 1e-10);
    }

    #[test]
    fn parallel_is_ill_posed() {
        let corrs = vec![pair(Vector3::x(), Vector3::y()), pair(Vector3::x() * 2.0, Vector3::y() * 2.0)];
        assert!(matches!(wahba_closed_form(&corrs, &[1.0, 1.0]), Err(Error::IllPosed(_))));
        assert!(matches!(wahba_closed_form(&corrs[..1], &[1.0]), Err(Error::IllPosed(_))));
    }

    #[test]
    fn brute_force_small_cases() {
        let r = UnitQuaternion::from_axis_angle(&Vector3::new(0.2, 1.0, 0.3), 1.1).unwrap().to_rotation();
        let corrs = vec![pair(Vector3::x(), r.m * Vector3::x()), pair(Vector3::z(), r.m * Vector3::z())];
        let bf = brute_force_corrs(&corrs, 9.0).unwrap();
        assert!(bf.f_star.abs() < 1e-12);
        assert_eq!(bf.theta, vec![1, 1]);
        let one = brute_force_corrs(&[pair(Vector3::new(0.0, 0.6, 0.8), Vector3::x())], 9.0).unwrap();
        assert!(one.f_star.abs() < 1e-12);
        assert_eq!(one.theta, vec![1]);
    }

    #[test]
    fn brute_force_refuses_large() {
        let inst = generate_instance(&SyntheticConfig::new(15, 0.01, 0.2, 1)).unwrap();
        assert!(matches!(brute_force_tls(&inst.problem), Err(Error::TooLarge(_))));
    }

    #[test]
    fn brute_force_is_a_lower_bound() {
        let inst = generate_instance(&SyntheticConfig::new(8, 0.01, 0.4, 5)).unwrap();
        let bf = brute_force_tls(&inst.problem).unwrap();
        assert!((tls_cost(&bf.rotation, &inst.problem) - bf.f_star).abs() < 1e-8 * (1.0 + bf.f_star));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let r = crate::synth::random_quaternion(&mut rng).to_rotation();
            assert!(bf.f_star <= tls_cost(&r, &inst.problem) + 1e-9);
        }
        assert_eq!(bf.theta, inst.theta_true);
    }

    #[test]
    fn ransac_outlier_free_keeps_everything() {
        let inst = generate_instance(&SyntheticConfig::new(30, 0.01, 0.0, 2)).unwrap();
        let params = RansacParams {
            inlier_threshold: Some(1e6),
            ..Default::default()
        };
        let res = ransac_rotation(&inst.problem, &params).unwrap();
        assert_eq!(res.status, RansacStatus::Success);
        assert_eq!(res.inliers, (0..30).collect::<Vec<_>>());
        assert!(res.rotation.geodesic_distance(&inst.r_true) < 0.05);
    }

    #[test]
    fn ransac_duplicates_are_degenerate() {
        let c = pair(Vector3::x(), Vector3::y());
        let p = RobustWahbaProblem::with_default_threshold(vec![c.clone(), c.clone(), c]).unwrap();
        let res = ransac_rotation(&p, &RansacParams::default()).unwrap();
        assert_eq!(res.status, RansacStatus::Failed);
        assert_eq!(res.degenerate_samples, 1000);
        // best effort still aligns the shared direction
        assert!((res.rotation.m * Vector3::x() - Vector3::y()).norm() < 1e-9);
    }
}
