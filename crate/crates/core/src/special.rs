//! Standard normal helpers with stable tails.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this the log-CDF switches to the Mills-ratio continued fraction.
const LOWER_TAIL: f64 = -8.0;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn norm_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `log Φ(x)` without underflow for large negative `x`.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x < LOWER_TAIL {
        // Φ(x) = φ(x) / (-x) · m(-x) with m the scaled Mills ratio.
        norm_log_pdf(x) + mills_ratio(-x).ln()
    } else if x > 5.0 {
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else {
        (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln()
    }
}

/// `(1 - Φ(t)) / φ(t)` for `t` well into the upper tail, via the
/// continued fraction `1/(t+ 1/(t+ 2/(t+ 3/(t+ ...))))`.
fn mills_ratio(t: f64) -> f64 {
    let mut tail = t;
    for k in (1..=80).rev() {
        tail = t + k as f64 / tail;
    }
    1.0 / tail
}

/// Inverse Mills ratio `φ(x) / Φ(x)`, the derivative of `log Φ`.
pub fn inverse_mills(x: f64) -> f64 {
    if x < LOWER_TAIL {
        1.0 / mills_ratio(-x)
    } else {
        (norm_log_pdf(x) - log_norm_cdf(x)).exp()
    }
}

/// First and negated second derivative of `log Φ` at `x`.
///
/// The curvature `λ(x)(x + λ(x))` lies in (0, 1) for every finite `x`.
pub fn log_norm_cdf_derivs(x: f64) -> (f64, f64) {
    let lambda = inverse_mills(x);
    let curvature = (lambda * (x + lambda)).clamp(0.0, 1.0);
    (lambda, curvature)
}

/// `log(y!)` via the log-gamma function.
pub fn ln_factorial(y: f64) -> f64 {
    libm::lgamma(y + 1.0)
}
