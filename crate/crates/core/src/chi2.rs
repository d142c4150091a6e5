//! Chi-squared (3 degrees of freedom) distribution, used to pick the TLS
//! threshold c̄² from an inlier probability.

use crate::error::{Error, Result};

// ln Γ(3/2) = ln(√π / 2)
const LN_GAMMA_3_2: f64 = -0.120_782_237_635_245_22;
const A: f64 = 1.5;

/// Regularized lower incomplete gamma `P(3/2, x)`.
fn lower_gamma_p(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let prefactor = (A * x.ln() - x - LN_GAMMA_3_2).exp();
    if x < A + 1.0 {
        // series: P = e^{-x} x^a / Γ(a+1) Σ x^n / ((a+1)...(a+n))
        let mut term = 1.0 / A;
        let mut sum = term;
        let mut ap = A;
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum * prefactor).min(1.0)
    } else {
        // modified Lentz continued fraction for Q = 1 - P
        let tiny = 1e-300;
        let mut b = x + 1.0 - A;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - A);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - prefactor * h).max(0.0)
    }
}

/// CDF of χ²(3): `P(3/2, x/2)`.
pub fn chi2_cdf3(x: f64) -> f64 {
    lower_gamma_p(0.5 * x)
}

/// Density of χ²(3): `√x e^{-x/2} / √(2π)`.
pub fn chi2_pdf3(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    x.sqrt() * (-0.5 * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Quantile of χ²(3): the `x` with `P(χ² ≤ x) = p`.
///
/// Brackets the root by doubling, then runs safeguarded Newton steps that fall
/// back to bisection whenever a step leaves the bracket.
pub fn chi2_inv3(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 4.0;
    while chi2_cdf3(hi) < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf3(x) - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = chi2_pdf3(x);
        let mut next = if pdf > 0.0 { x - f / pdf } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Default TLS threshold: the χ²(3) quantile at `p = 1 − 10⁻⁴`.
pub fn default_cbar_sq() -> f64 {
    chi2_inv3(1.0 - 1e-4).expect("valid probability")
}
