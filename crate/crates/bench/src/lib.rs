//! Fixtures shared by the benchmarks.

use quasar_core::{generate_instance, SyntheticInstance, SyntheticConfig};

/// Deterministic benchmark instance with 1 % noise.
pub fn instance(n: usize, outlier_ratio: f64) -> SyntheticInstance {
    generate_instance(&SyntheticConfig::new(n, 0.01, outlier_ratio, 2024)).expect("valid benchmark config")
}
