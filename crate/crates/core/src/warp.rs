//! Strictly monotone warping functions `W = F⁻¹ ∘ Φ` together with their
//! inverses `G = Φ⁻¹ ∘ F` and the log derivative of `G`, which the copula
//! likelihood needs.
//!
//! Three families are shipped: the identity, Gamma quantile warps with an
//! optional affine output map (used to express "10 − x"-style transformed
//! fits as a single warp), and Tukey g-and-h warps whose forward map is the
//! closed-form `τ(z) = l + s·((e^{gz}−1)/g)·e^{hz²}`.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    gamma_logpdf_std, gamma_p, gamma_quantile_std, norm_cdf, norm_logpdf, norm_quantile,
};

/// Affine output map `raw ↦ c0 + c1·raw` composed after a quantile warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub c0: f64,
    pub c1: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { c0: 0.0, c1: 1.0 };

    pub fn apply(&self, x: f64) -> f64 {
        self.c0 + self.c1 * x
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y - self.c0) / self.c1
    }
}

impl Default for Affine {
    fn default() -> Self {
        Affine::IDENTITY
    }
}

/// A warping function family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpSpec {
    Identity,
    Gamma {
        shape: f64,
        scale: f64,
        #[serde(default)]
        post: Affine,
    },
    TukeyGh {
        g: f64,
        h: f64,
        loc: f64,
        scale: f64,
    },
}

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

const PHI_CLAMP_LO: f64 = 1e-16;
const PHI_CLAMP_HI: f64 = 1.0 - 1e-16;

fn clamped_norm_cdf(z: f64) -> f64 {
    let u = norm_cdf(z);
    if u < PHI_CLAMP_LO || u > PHI_CLAMP_HI {
        if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            eprintln!("warning: normal CDF saturated at z = {z}; clamping to avoid infinite quantiles");
        }
        u.clamp(PHI_CLAMP_LO, PHI_CLAMP_HI)
    } else {
        u
    }
}

impl WarpSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WarpSpec::Identity => Ok(()),
            WarpSpec::Gamma { shape, scale, post } => {
                if !(shape > 0.0) {
                    return Err(Error::NonPositiveParameter { name: "shape", value: shape });
                }
                if !(scale > 0.0) {
                    return Err(Error::NonPositiveParameter { name: "scale", value: scale });
                }
                if post.c1 == 0.0 || !post.c1.is_finite() {
                    return Err(Error::InvalidConfig("affine post map must have nonzero slope".into()));
                }
                Ok(())
            }
            WarpSpec::TukeyGh { h, scale, .. } => {
                if h < 0.0 {
                    return Err(Error::InvalidConfig("tukey g-and-h requires h >= 0".into()));
                }
                if !(scale > 0.0) {
                    return Err(Error::NonPositiveParameter { name: "scale", value: scale });
                }
                Ok(())
            }
        }
    }

    /// Whether `forward` is increasing in `z` (false only for Gamma warps
    /// with an order-reversing affine map).
    pub fn is_increasing(&self) -> bool {
        match *self {
            WarpSpec::Gamma { post, .. } => post.c1 > 0.0,
            _ => true,
        }
    }

    /// The open interval `range(W)`; endpoints may be infinite.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            WarpSpec::Identity => (f64::NEG_INFINITY, f64::INFINITY),
            WarpSpec::Gamma { post, .. } => {
                if post.c1 > 0.0 {
                    (post.c0, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, post.c0)
                }
            }
            WarpSpec::TukeyGh { g, h, loc, scale } => {
                if h > 0.0 || g == 0.0 {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    let endpoint = loc - scale / g;
                    if g > 0.0 {
                        (endpoint, f64::INFINITY)
                    } else {
                        (f64::NEG_INFINITY, endpoint)
                    }
                }
            }
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let (lo, hi) = self.range();
        v > lo && v < hi && v.is_finite()
    }

    /// `W(z) = F⁻¹(Φ(z))`.
    pub fn forward(&self, z: f64) -> f64 {
        match *self {
            WarpSpec::Identity => z,
            WarpSpec::Gamma { shape, scale, post } => {
                let u = clamped_norm_cdf(z);
                post.apply(scale * gamma_quantile_std(shape, u))
            }
            WarpSpec::TukeyGh { g, h, loc, scale } => loc + scale * gh_core(g, h, z),
        }
    }

    /// `G(v) = Φ⁻¹(F(v))`, defined for `v` strictly inside `range(W)`.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        if !self.contains(v) {
            return Err(Error::Domain { value: v });
        }
        match *self {
            WarpSpec::Identity => Ok(v),
            WarpSpec::Gamma { shape, scale, post } => {
                let x = post.invert(v) / scale;
                let u = gamma_p(shape, x).clamp(PHI_CLAMP_LO, PHI_CLAMP_HI);
                Ok(norm_quantile(u))
            }
            WarpSpec::TukeyGh { g, h, loc, scale } => gh_invert(g, h, (v - loc) / scale),
        }
    }

    /// `log |dG/dv|` at `v` strictly inside `range(W)`.
    pub fn log_dg(&self, v: f64) -> Result<f64> {
        if !self.contains(v) {
            return Err(Error::Domain { value: v });
        }
        match *self {
            WarpSpec::Identity => Ok(0.0),
            WarpSpec::Gamma { shape, scale, post } => {
                let raw = post.invert(v);
                let x = raw / scale;
                let u = gamma_p(shape, x).clamp(PHI_CLAMP_LO, PHI_CLAMP_HI);
                let z = norm_quantile(u);
                // log f(raw) − log φ(G(v)) − log |c1|, with f the Gamma density.
                Ok(gamma_logpdf_std(shape, x) - scale.ln() - norm_logpdf(z) - post.c1.abs().ln())
            }
            WarpSpec::TukeyGh { g, h, loc, scale } => {
                let z = gh_invert(g, h, (v - loc) / scale)?;
                Ok(-(scale * gh_core_deriv(g, h, z)).ln())
            }
        }
    }
}

/// `(e^{gz} − 1)/g · e^{hz²/2}` with the g → 0 limit handled. This is the
/// classical Tukey parametrization (half the squared argument in the
/// h-exponent), which is what the published calibration values correspond
/// to.
fn gh_core(g: f64, h: f64, z: f64) -> f64 {
    let base = if g == 0.0 { z } else { (g * z).exp_m1() / g };
    base * (0.5 * h * z * z).exp()
}

/// Derivative of [`gh_core`] in `z`; strictly positive for h ≥ 0.
fn gh_core_deriv(g: f64, h: f64, z: f64) -> f64 {
    let e = (0.5 * h * z * z).exp();
    if g == 0.0 {
        e * (1.0 + h * z * z)
    } else {
        e * ((g * z).exp() + h * z * (g * z).exp_m1() / g)
    }
}

/// Solve `gh_core(g, h, z) = w` by safeguarded Newton inside a bracket grown
/// geometrically from z = 0.
fn gh_invert(g: f64, h: f64, w: f64) -> Result<f64> {
    if w == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = if w > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    for _ in 0..200 {
        if w > 0.0 {
            if gh_core(g, h, hi) >= w {
                break;
            }
            lo = hi;
            hi *= 2.0;
        } else {
            if gh_core(g, h, lo) <= w {
                break;
            }
            hi = lo;
            lo *= 2.0;
        }
    }
    if !(gh_core(g, h, lo) <= w && gh_core(g, h, hi) >= w) {
        return Err(Error::Domain { value: w });
    }

    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = gh_core(g, h, z) - w;
        if f > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let d = gh_core_deriv(g, h, z);
        let mut next = z - f / d;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 1e-13 * z.abs().max(1.0) {
            return Ok(next);
        }
        z = next;
    }
    Ok(z)
}

/// The spatial threshold `c = Φ⁻¹(1 − π)` pairing a rejection level with the
/// Bernoulli marginal of the binary field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernoulliThreshold {
    pub c: f64,
    pub pi: f64,
}

impl BernoulliThreshold {
    /// Threshold from the marginal success probability (for a standardized
    /// latent field).
    pub fn from_pi(pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidConfig(format!("pi must be in (0,1), got {pi}")));
        }
        Ok(Self { c: norm_quantile(1.0 - pi), pi })
    }

    pub fn from_c(c: f64) -> Self {
        Self { c, pi: 1.0 - norm_cdf(c) }
    }

    /// Ties `g = c` map to 1.
    pub fn apply(&self, g: f64) -> u8 {
        u8::from(g >= self.c)
    }
}
