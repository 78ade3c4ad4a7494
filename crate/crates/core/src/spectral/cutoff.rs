//! Smooth cutoffs shared by every frequency decomposition in the crate.
//!
//! The base transition is the quintic smootherstep `S(t) = 6t^5 - 15t^4 + 10t^3`
//! on `[0, 1]`, clamped outside. It satisfies `S(t) + S(1 - t) = 1`.
//!
//! * `bump(x)`: 1 on `|x| <= 1`, `1 - S(|x| - 1)` on `1 < |x| < 2`, 0 beyond.
//! * `dyadic(x) = bump(x) - bump(2x)`, supported in `1/2 <= |x| <= 2`, with `dyadic(1) = 1`.
//! * `wiener(x) = 1 - S(|x|)` on `|x| < 1`; its integer translates sum to 1.

use crate::error::{LabError, Result};

pub fn smootherstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

pub fn bump(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        1.0 - smootherstep(a - 1.0)
    }
}

pub fn dyadic(x: f64) -> f64 {
    bump(x) - bump(2.0 * x)
}

pub fn wiener(x: f64) -> f64 {
    let a = x.abs();
    if a >= 1.0 {
        0.0
    } else {
        1.0 - smootherstep(a)
    }
}

/// Validates `n` as a dyadic integer `2^j`, `j >= 0`, returning `j`.
pub fn dyadic_exponent(n: f64) -> Result<u32> {
    if n.is_finite() && n >= 1.0 && n.fract() == 0.0 && n <= 2f64.powi(62) {
        let m = n as u64;
        if m.is_power_of_two() {
            return Ok(m.trailing_zeros());
        }
    }
    Err(LabError::NotDyadic(n))
}

/// Low-frequency symbol as a function of frequency magnitude `s >= 0`.
pub fn low_symbol(s: f64) -> f64 {
    bump(2.0 * s)
}

/// Block symbol at dyadic frequency `n` as a function of frequency magnitude.
pub fn block_symbol(s: f64, n: f64) -> f64 {
    dyadic(s / n)
}

/// Frequency magnitude attached to an eigenvalue; negative energies sit at zero.
pub fn frequency_of(lambda: f64) -> f64 {
    lambda.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smootherstep_is_symmetric() {
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert!((smootherstep(t) + smootherstep(1.0 - t) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn dyadic_is_one_at_one() {
        assert_eq!(dyadic(1.0), 1.0);
        assert_eq!(dyadic(0.5), 0.0);
        assert_eq!(dyadic(2.0), 0.0);
        assert_eq!(dyadic(0.3), 0.0);
    }

    #[test]
    fn wiener_translates_sum_to_one() {
        for i in 0..400 {
            let x = -3.0 + i as f64 * 0.0173;
            let s: f64 = (-6..=6).map(|n| wiener(x - n as f64)).sum();
            assert!((s - 1.0).abs() < 1e-14, "{x} {s}");
        }
    }

    #[test]
    fn dyadic_exponent_rejects_non_powers() {
        assert_eq!(dyadic_exponent(8.0).unwrap(), 3);
        assert_eq!(dyadic_exponent(1.0).unwrap(), 0);
        assert!(dyadic_exponent(3.0).is_err());
        assert!(dyadic_exponent(0.5).is_err());
        assert!(dyadic_exponent(f64::NAN).is_err());
    }
}
