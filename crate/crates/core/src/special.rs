//! Thin wrappers over the scalar special functions the rest of the crate
//! leans on: standard normal CDF/quantile/density and the regularized
//! incomplete gamma with its quantile.

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_lr, ln_gamma};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile.
///
/// One Newton correction on top of the library inverse brings the result to
/// machine precision; the raw inverse is only ~1e-9 accurate.
pub fn norm_quantile(p: f64) -> f64 {
    let mut z = -SQRT_2 * erfc_inv(2.0 * p);
    if z.is_finite() {
        let err = norm_cdf(z) - p;
        let dens = norm_pdf(z);
        if dens > 0.0 {
            z -= err / dens;
        }
    }
    z
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Log of the standard normal density.
pub fn norm_logpdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * LN_2PI
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(a, x)
    }
}

/// Log density of Gamma(shape a, scale 1) at x > 0.
pub fn gamma_logpdf_std(a: f64, x: f64) -> f64 {
    (a - 1.0) * x.ln() - x - ln_gamma(a)
}

/// Quantile of Gamma(shape a, scale 1): solves P(a, x) = p.
///
/// Newton iteration seeded by the Wilson-Hilferty approximation, safeguarded
/// by a bisection bracket that is maintained at every step and taken over
/// outright if Newton stalls.
pub fn gamma_quantile_std(a: f64, p: f64) -> f64 {
    assert!(a > 0.0, "shape must be positive");
    assert!((0.0..=1.0).contains(&p), "probability out of range");
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    // Wilson-Hilferty start, clamped away from zero.
    let z = norm_quantile(p);
    let t = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * a.sqrt());
    let mut x = (a * t * t * t).max(1e-300);

    // Establish a bracket around the root.
    let (mut lo, mut hi) = if gamma_p(a, x) < p { (x, x) } else { (0.0, x) };
    while gamma_p(a, hi) < p {
        lo = hi;
        hi = (hi * 2.0).max(1e-8);
        if hi > 1e300 {
            return hi;
        }
    }

    for _ in 0..100 {
        let f = gamma_p(a, x) - p;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dens = gamma_logpdf_std(a, x).exp();
        let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * x.abs().max(1e-300) {
            return next;
        }
        x = next;
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    x
}
