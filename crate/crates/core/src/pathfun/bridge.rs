//! Supremum of a Brownian bridge with drift over one grid interval.
//!
//! Given the endpoints `x`, `y` of `x + (y − x)t/γ + λ Y_t` on `[0, γ]`, where
//! `Y` is a standard Brownian bridge, the supremum has the closed-form law
//! `P(sup ≤ z) = 1 − exp(−2(z − x)(z − y)/(γλ²))` for `z ≥ max(x, y)`.

use crate::error::{Error, Result};

pub fn bridge_sup_cdf(x: f64, y: f64, lam: f64, gam: f64, z: f64) -> f64 {
    if z < x.max(y) {
        return 0.0;
    }
    -(-2.0 * (z - x) * (z - y) / (gam * lam * lam)).exp_m1()
}

/// Inverse-CDF draw of the bridge supremum from a uniform `u ∈ (0, 1)`.
pub fn bridge_sup_sample(x: f64, y: f64, lam: f64, gam: f64, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid("u", "must lie in the open interval (0, 1)"));
    }
    Ok(bridge_sup_inverse(x, y, lam, gam, u))
}

/// Unchecked inverse for hot loops; `u` must lie in `(0, 1)`.
#[inline]
pub(crate) fn bridge_sup_inverse(x: f64, y: f64, lam: f64, gam: f64, u: f64) -> f64 {
    let c = -2.0 * gam * lam * lam * (-u).ln_1p();
    let d = (x - y).abs();
    let s = (d * d + c).sqrt();
    // ½[(x + y) + s] written without cancelling s against |x − y|
    let excess = if s + d > 0.0 { c / (s + d) } else { 0.0 };
    x.max(y) + 0.5 * excess
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_examples() {
        assert_relative_eq!(bridge_sup_cdf(0.0, 0.0, 1.0, 1.0, 1.0), 1.0 - (-2f64).exp(), epsilon = 1e-15);
        assert_eq!(bridge_sup_cdf(0.3, -0.2, 1.0, 1.0, 0.3), 0.0);
        assert_eq!(bridge_sup_cdf(0.3, -0.2, 1.0, 1.0, 0.1), 0.0);
        assert_relative_eq!(bridge_sup_cdf(0.0, 1.0, 0.5, 2.0, 2.0), 1.0 - (-8f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn sample_examples() {
        let u = 1.0 - (-2f64).exp();
        assert_relative_eq!(bridge_sup_sample(0.0, 0.0, 1.0, 1.0, u).unwrap(), 1.0, epsilon = 1e-14);
        let z = bridge_sup_sample(0.4, 0.1, 1.0, 1.0, 1e-300).unwrap();
        assert_relative_eq!(z, 0.4, epsilon = 1e-15);
        assert!(bridge_sup_sample(0.0, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(bridge_sup_sample(0.0, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_volatility_is_linear_max() {
        assert_eq!(bridge_sup_inverse(0.2, 0.5, 0.0, 1.0, 0.7), 0.5);
    }
}
