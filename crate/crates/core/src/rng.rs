//! Deterministic random-number substreams and the handful of distributions
//! the samplers draw from.
//!
//! Every parallelisable unit of work (one equation, one factor, one posterior
//! draw) gets its own [`ChaCha8Rng`] derived from a master seed plus a path of
//! integer tags, so results never depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a path of tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Independent generator for the task identified by `tags` under `seed`.
pub fn substream(seed: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tags))
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma(shape, rate) draw.
pub fn gamma_rate<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0, "gamma({shape}, {rate})");
    Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

/// Inverse-Gamma(shape, scale) draw, parameterised so the mean is
/// `scale / (shape - 1)`.
pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    1.0 / gamma_rate(rng, shape, scale)
}

/// Chi-squared draw with `dof` degrees of freedom.
pub fn chi_squared<R: Rng + ?Sized>(rng: &mut R, dof: f64) -> f64 {
    2.0 * gamma_rate(rng, 0.5 * dof, 1.0)
}

/// Side of the real line a truncated Gaussian is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfLine {
    Positive,
    Negative,
}

/// Draws from `N(mean, sd^2)` truncated to the given half line.
///
/// Uses plain rejection when the truncation point is in the bulk and
/// Robert's exponential-proposal sampler in the tail, which stays exact for
/// arbitrarily remote truncation points.
pub fn truncated_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    side: HalfLine,
) -> Result<f64> {
    if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
        return Err(Error::Degenerate(format!(
            "truncated normal with mean {mean}, sd {sd}"
        )));
    }
    // Reduce to a standard normal truncated to [lower, inf).
    let (sign, lower) = match side {
        HalfLine::Positive => (1.0, -mean / sd),
        HalfLine::Negative => (-1.0, mean / sd),
    };
    let z = standard_tail(rng, lower);
    let draw = sign * (sign * mean + sd * z);
    let valid = match side {
        HalfLine::Positive => draw > 0.0,
        HalfLine::Negative => draw < 0.0,
    };
    if valid && draw.is_finite() {
        Ok(draw)
    } else if draw == 0.0 {
        // Rounding landed on the boundary; nudge to the smallest admissible value.
        Ok(sign * f64::MIN_POSITIVE)
    } else {
        Err(Error::Degenerate(format!(
            "truncated normal draw {draw} outside support (mean {mean}, sd {sd})"
        )))
    }
}

/// Standard normal truncated to `[lower, inf)`.
fn standard_tail<R: Rng + ?Sized>(rng: &mut R, lower: f64) -> f64 {
    if lower < 0.3 {
        loop {
            let z = std_normal(rng);
            if z >= lower {
                return z;
            }
        }
    }
    let alpha = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = lower + e / alpha;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - alpha) * (z - alpha)).exp() {
            return z;
        }
    }
}
