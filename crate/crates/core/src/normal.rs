//! Standard normal helpers.

use std::f64::consts::SQRT_2;

/// Standard normal CDF, `Φ(t) = erfc(-t/√2)/2`.
pub fn cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert_eq!(cdf(f64::INFINITY), 1.0);
        assert_eq!(cdf(f64::NEG_INFINITY), 0.0);
    }
}
