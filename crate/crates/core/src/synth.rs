//! Synthetic robust Wahba instances.
//!
//! `aᵢ` uniform on the unit sphere, a Haar-random ground-truth rotation,
//! inliers `bᵢ = R aᵢ + εᵢ` with `εᵢ ~ N(0, σ² I₃)`, and outliers replaced by
//! independent uniform unit vectors. All randomness flows from one ChaCha8
//! stream seeded by `seed`, so instances are reproducible across platforms.

use nalgebra::{Vector3, Vector4};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::chi2::chi2_inv3;
use crate::error::{Error, Result};
use crate::problem::{Correspondence, RobustWahbaProblem};
use crate::quat::{Rotation3, UnitQuaternion};

/// Noise scale assumed by the cost when the data are generated noise-free.
pub const NOISELESS_MODEL_SIGMA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Standard deviation of the inlier noise actually added.
    pub sigma: f64,
    pub outlier_ratio: f64,
    pub seed: u64,
    /// Inlier probability defining `c̄²`.
    #[serde(default = "default_p")]
    pub p_quantile: f64,
    /// Draw `aᵢ` on the unit sphere; otherwise from `N(0, I₃)`.
    #[serde(default = "default_true")]
    pub unit_vectors: bool,
    /// Noise scale written into the problem. Defaults to `sigma`, or to
    /// [`NOISELESS_MODEL_SIGMA`] when `sigma = 0` (a zero scale would make the
    /// cost undefined).
    #[serde(default)]
    pub model_sigma: Option<f64>,
}

fn default_p() -> f64 {
    1.0 - 1e-4
}

fn default_true() -> bool {
    true
}

impl SyntheticConfig {
    pub fn new(n: usize, sigma: f64, outlier_ratio: f64, seed: u64) -> Self {
        Self {
            n,
            sigma,
            outlier_ratio,
            seed,
            p_quantile: default_p(),
            unit_vectors: true,
            model_sigma: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n must be ≥ 2, got {}", self.n)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be ≥ 0, got {}", self.sigma)));
        }
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return Err(Error::InvalidArgument(format!(
                "outlier_ratio must lie in [0, 1), got {}",
                self.outlier_ratio
            )));
        }
        if let Some(ms) = self.model_sigma {
            if !(ms > 0.0 && ms.is_finite()) {
                return Err(Error::InvalidArgument(format!("model_sigma must be > 0, got {ms}")));
            }
        }
        Ok(())
    }

    pub fn effective_model_sigma(&self) -> f64 {
        match self.model_sigma {
            Some(s) => s,
            None if self.sigma > 0.0 => self.sigma,
            None => NOISELESS_MODEL_SIGMA,
        }
    }

    pub fn num_outliers(&self) -> usize {
        (self.outlier_ratio * self.n as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub problem: RobustWahbaProblem,
    pub q_true: UnitQuaternion,
    pub r_true: Rotation3,
    pub theta_true: Vec<i8>,
    pub seed: u64,
}

impl SyntheticInstance {
    pub fn num_outliers(&self) -> usize {
        self.theta_true.iter().filter(|&&t| t < 0).count()
    }
}

fn unit3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    let v: [f64; 3] = UnitSphere.sample(rng);
    Vector3::from(v)
}

/// Haar-distributed rotation: a normalized 4-D Gaussian is uniform on S³.
pub fn random_quaternion<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion {
    loop {
        let v = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
        if v.norm() > 1e-12 {
            return UnitQuaternion::from_vector(v).expect("finite nonzero");
        }
    }
}

pub fn generate_instance(cfg: &SyntheticConfig) -> Result<SyntheticInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let q_true = random_quaternion(&mut rng);
    let r_true = q_true.to_rotation();
    let a: Vec<Vector3<f64>> = (0..cfg.n)
        .map(|_| {
            if cfg.unit_vectors {
                unit3(&mut rng)
            } else {
                Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng))
            }
        })
        .collect();
    let mut theta = vec![1i8; cfg.n];
    for i in sample(&mut rng, cfg.n, cfg.num_outliers()) {
        theta[i] = -1;
    }
    let noise = Normal::new(0.0, cfg.sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let model_sigma = cfg.effective_model_sigma();
    let corrs = a
        .iter()
        .zip(&theta)
        .map(|(ai, &t)| {
            let b = if t > 0 {
                r_true.m * ai + Vector3::from_fn(|_, _| noise.sample(&mut rng))
            } else {
                unit3(&mut rng)
            };
            Correspondence::new(*ai, b, model_sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    let cbar_sq = chi2_inv3(cfg.p_quantile)?;
    Ok(SyntheticInstance {
        problem: RobustWahbaProblem::new(corrs, cbar_sq)?,
        q_true,
        r_true,
        theta_true: theta,
        seed: cfg.seed,
    })
}

/// Angle of `r1ᵀ r2` in radians, within `[0, π]`.
pub fn rotation_geodesic_error(r1: &Rotation3, r2: &Rotation3) -> f64 {
    r1.geodesic_distance(r2)
}
