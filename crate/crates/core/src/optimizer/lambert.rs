//! Principal-branch Lambert W and the inverse of `h(x) = x 2^x`.

use std::f64::consts::LN_2;

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("argument {0} is outside the principal-branch domain [0, inf)")]
pub struct DomainError(pub f64);

const MAX_ITER: usize = 64;

/// `W(y)` with `W e^W = y`, for `y >= 0`.
///
/// Halley iteration started from `ln(1 + y)`, which lies within a factor of
/// two of the root on the whole half-line.
pub fn lambert_w(y: f64) -> Result<f64, DomainError> {
    if !(y >= 0.0) || y.is_infinite() {
        return Err(DomainError(y));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let mut w = y.ln_1p();
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - y;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(w)
}

/// `h^{-1}(y)` for `h(x) = x 2^x`, i.e. `W(y ln 2) / ln 2`.
pub fn h_inverse(y: f64) -> Result<f64, DomainError> {
    if !(y >= 0.0) {
        return Err(DomainError(y));
    }
    Ok(lambert_w(y * LN_2)? / LN_2)
}

/// `h(x) = x 2^x`.
pub fn h(x: f64) -> f64 {
    x * x.exp2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert_close!(lambert_w(std::f64::consts::E).unwrap(), 1.0, 1e-15);
        // Omega constant, from iterating x <- exp(-x).
        assert_close!(lambert_w(1.0).unwrap(), 0.567_143_290_409_783_8, 1e-15);
        assert_close!(h_inverse(2.0).unwrap(), 1.0, 1e-14);
        assert_close!(h_inverse(8.0).unwrap(), 2.0, 1e-14);
        assert_eq!(h_inverse(0.0).unwrap(), 0.0);
    }

    #[test]
    fn residuals_across_scales() {
        let mut y = 1e-12;
        while y < 1e12 {
            let w = lambert_w(y).unwrap();
            let residual = (w * w.exp() - y).abs();
            assert!(residual <= 1e-12 * y.max(1e-300) + 1e-300 || residual <= 1e-12, "y={y} residual={residual}");
            let x = h_inverse(y).unwrap();
            assert!((h(x) - y).abs() <= 1e-10 * y, "h round trip at y={y}");
            y *= 3.7;
        }
    }

    #[test]
    fn negative_rejected() {
        assert_eq!(lambert_w(-0.1), Err(DomainError(-0.1)));
        assert!(h_inverse(-1.0).is_err());
        assert!(lambert_w(f64::NAN).is_err());
    }
}
