//! Numerical primitives shared by every workflow: the standard normal
//! distribution, exact binomial and chi-square(1) tails, keyed random
//! streams and integer rounding policies.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("probability {0} is outside the open interval (0, 1)")]
    OpenInterval(f64),
    #[error("probability {0} is outside [0, 1]")]
    NotAProbability(f64),
    #[error("chi-square statistic must be non-negative, got {0}")]
    NegativeStatistic(f64),
    #[error("binomial count {successes} exceeds trials {trials}")]
    CountExceedsTrials { successes: u64, trials: u64 },
}

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self, NumericError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(NumericError::NotAProbability(value))
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to zero.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Probability(0.0)
        } else {
            Probability(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Probability {
        Probability(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = NumericError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation (relative error 1.15e-9), followed by
// Halley refinement against the erfc-based CDF.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_690e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239e0,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838e0,
    -2.549_732_539_343_734e0,
    4.374_664_141_464_968e0,
    2.938_163_982_698_783e0,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996e0,
    3.754_408_661_907_416e0,
];

fn acklam_lower(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        let c = &ACKLAM_C;
        let d = &ACKLAM_D;
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        let a = &ACKLAM_A;
        let b = &ACKLAM_B;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    }
}

/// Inverse of the standard normal CDF on the open interval `(0, 1)`.
///
/// Evaluated on the lower half only and mirrored, so
/// `normal_quantile(p) == -normal_quantile(1 - p)` holds bit-for-bit.
pub fn normal_quantile(p: f64) -> Result<f64, NumericError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NumericError::OpenInterval(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    let mut x = acklam_lower(p);
    for _ in 0..2 {
        let err = normal_cdf(x) - p;
        let u = err / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Upper-tail probability of a chi-square variable with one degree of freedom.
pub fn chi_square1_sf(x: f64) -> Result<f64, NumericError> {
    if x.is_nan() || x < 0.0 {
        return Err(NumericError::NegativeStatistic(x));
    }
    Ok(libm::erfc((0.5 * x).sqrt()))
}

/// Two-sided exact binomial test of `successes` out of `trials` fair-coin
/// flips: twice the smaller tail, clipped to 1.
pub fn exact_binomial_two_sided(successes: u64, trials: u64) -> Result<f64, NumericError> {
    if successes > trials {
        return Err(NumericError::CountExceedsTrials { successes, trials });
    }
    if trials == 0 {
        return Ok(1.0);
    }
    let k = successes.min(trials - successes);
    let tail = binomial_half_cdf(k, trials);
    Ok((2.0 * tail).min(1.0))
}

/// `P(X <= k)` for `X ~ Binomial(n, 1/2)`, summed in log space so large `n`
/// does not underflow.
fn binomial_half_cdf(k: u64, n: u64) -> f64 {
    let nf = n as f64;
    let mut log_term = -nf * std::f64::consts::LN_2;
    let mut logs = Vec::with_capacity(k as usize + 1);
    logs.push(log_term);
    for i in 0..k {
        log_term += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        logs.push(log_term);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    (max + sum.ln()).exp()
}

/// Integer conversion applied to real-valued sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingPolicy {
    #[default]
    CeilPerArm,
    Nearest,
    Floor,
}

// Absorbs representation error such as 1900.0000000000002 from products
// that are integral in exact arithmetic.
const ROUNDING_SLACK: f64 = 1e-9;

impl RoundingPolicy {
    pub fn apply(self, value: f64) -> u64 {
        let v = value.max(0.0);
        let r = match self {
            RoundingPolicy::CeilPerArm => (v - ROUNDING_SLACK * v.max(1.0)).ceil(),
            RoundingPolicy::Nearest => v.round(),
            RoundingPolicy::Floor => (v + ROUNDING_SLACK * v.max(1.0)).floor(),
        };
        r.max(0.0) as u64
    }
}

/// Floor with the same representation slack as [`RoundingPolicy`].
pub fn floor_count(value: f64) -> u64 {
    RoundingPolicy::Floor.apply(value)
}

/// Key of an independent pseudo-random stream.
///
/// Streams are ChaCha8 keystreams: the key is derived from the master seed
/// (and an optional sub-stream tag), the 64-bit stream id is the stream
/// index, so any `(master_seed, stream_index)` pair can be materialized
/// without touching any other stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
    #[serde(default)]
    pub tag: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        RngStream { master_seed, stream_index, tag: 0 }
    }

    /// Independent stream for a named purpose within the same index.
    pub fn substream(self, tag: u64) -> Self {
        RngStream {
            tag: splitmix64(self.tag ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
            ..self
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let key = splitmix64(self.master_seed ^ splitmix64(self.tag));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(self.stream_index);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
