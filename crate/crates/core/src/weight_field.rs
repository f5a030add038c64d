//! Lazily addressed i.i.d. edge weights on Z².
//!
//! Every weight is a pure function of `(seed, law, edge)`: the canonical edge
//! coordinates are hashed into a 64-bit word, the word is turned into a
//! uniform deviate, and the deviate is pushed through the inverse CDF of the
//! configured law. Nothing is stored, so any finite window of the infinite
//! lattice can be materialised on demand and translations act exactly.
//!
//! The hash, bit for bit (all arithmetic is wrapping on `u64`):
//!
//! ```text
//! mix(z)  = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!           z ^= z >> 27; z *= 0x94D049BB133111EB;
//!           z ^ (z >> 31)
//! key     = ((x as u32 as u64) << 32) | (y as u32 as u64)   // shifted base vertex
//! h       = mix(seed ^ 0x9E3779B97F4A7C15)
//! h       = mix(h ^ key)
//! h       = mix(h ^ (axis_tag * 0xD1B54A32D192ED03))        // axis_tag: e1 -> 1, e2 -> 2
//! u       = (h >> 11) as f64 * 2^-53                        // u in [0, 1)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{FppError, Result};
use crate::lattice::{Axis, EdgeId, Vertex};
use crate::scalar::Scalar;

const SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const AXIS_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const REPLICA_SALT: u64 = 0xA076_1D64_78BD_642F;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed of replica `index` under `base`. Adding replicas never changes the
/// seeds of existing ones.
pub fn replica_seed(base: u64, index: u64) -> u64 {
    mix64(mix64(base ^ REPLICA_SALT) ^ index.wrapping_mul(SEED_SALT))
}

/// Edge-weight law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum DistributionConfig {
    Exponential { rate: f64 },
    /// `lo == hi` is accepted as the degenerate constant law.
    Uniform { lo: f64, hi: f64 },
    /// Weight `b` with probability `p`, otherwise `a`.
    ShiftedBernoulli { p: f64, a: f64, b: f64 },
}

impl DistributionConfig {
    pub fn exponential(rate: f64) -> Self {
        DistributionConfig::Exponential { rate }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        DistributionConfig::Uniform { lo, hi }
    }

    /// Every edge has weight `c`.
    pub fn constant(c: f64) -> Self {
        DistributionConfig::Uniform { lo: c, hi: c }
    }

    pub fn shifted_bernoulli(p: f64, a: f64, b: f64) -> Self {
        DistributionConfig::ShiftedBernoulli { p, a, b }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FppError::Config(msg));
        match *self {
            DistributionConfig::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return bad(format!("exponential rate must be > 0, got {rate}"));
                }
            }
            DistributionConfig::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo > hi {
                    return bad(format!("uniform needs 0 <= lo <= hi, got [{lo}, {hi})"));
                }
                if hi == 0.0 {
                    return bad("uniform(0,0) puts all mass at 0".into());
                }
            }
            DistributionConfig::ShiftedBernoulli { p, a, b } => {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("bernoulli p must lie in [0,1], got {p}"));
                }
                if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 {
                    return bad(format!("bernoulli values must be >= 0, got a={a}, b={b}"));
                }
                if self.atom_at_zero() >= 0.5 {
                    return bad("P(weight = 0) must be < 1/2".into());
                }
            }
        }
        Ok(())
    }

    fn atom_at_zero(&self) -> f64 {
        match *self {
            DistributionConfig::Exponential { .. } => 0.0,
            DistributionConfig::Uniform { lo, hi } => {
                if lo == 0.0 && hi == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            DistributionConfig::ShiftedBernoulli { p, a, b } => {
                let mut m = 0.0;
                if a == 0.0 {
                    m += 1.0 - p;
                }
                if b == 0.0 {
                    m += p;
                }
                m
            }
        }
    }

    /// Whether the law has no atoms, so geodesics are almost surely unique.
    pub fn is_continuous(&self) -> bool {
        match *self {
            DistributionConfig::Exponential { .. } => true,
            DistributionConfig::Uniform { lo, hi } => lo < hi,
            DistributionConfig::ShiftedBernoulli { .. } => false,
        }
    }

    /// Inverse CDF evaluated at `u ∈ [0, 1)`.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            DistributionConfig::Exponential { rate } => -(-u).ln_1p() / rate,
            DistributionConfig::Uniform { lo, hi } => lo + (hi - lo) * u,
            DistributionConfig::ShiftedBernoulli { p, a, b } => {
                if u < p {
                    b
                } else {
                    a
                }
            }
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            DistributionConfig::Exponential { rate } => {
                if t <= 0.0 {
                    0.0
                } else {
                    1.0 - (-rate * t).exp()
                }
            }
            DistributionConfig::Uniform { lo, hi } => {
                if t < lo {
                    0.0
                } else if t >= hi {
                    1.0
                } else {
                    (t - lo) / (hi - lo)
                }
            }
            DistributionConfig::ShiftedBernoulli { p, a, b } => {
                let mut c = 0.0;
                if t >= a {
                    c += 1.0 - p;
                }
                if t >= b {
                    c += p;
                }
                c
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionConfig::Exponential { rate } => 1.0 / rate,
            DistributionConfig::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionConfig::ShiftedBernoulli { p, a, b } => a + p * (b - a),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            DistributionConfig::Exponential { rate } => 1.0 / (rate * rate),
            DistributionConfig::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            DistributionConfig::ShiftedBernoulli { p, a, b } => p * (1.0 - p) * (b - a) * (b - a),
        }
    }

    /// Short human-readable label used in file headers.
    pub fn label(&self) -> String {
        match *self {
            DistributionConfig::Exponential { rate } => format!("exponential(rate={rate})"),
            DistributionConfig::Uniform { lo, hi } if lo == hi => format!("constant({lo})"),
            DistributionConfig::Uniform { lo, hi } => format!("uniform(lo={lo},hi={hi})"),
            DistributionConfig::ShiftedBernoulli { p, a, b } => {
                format!("shifted-bernoulli(p={p},a={a},b={b})")
            }
        }
    }
}

/// A seeded i.i.d. environment on the edges of Z².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightField {
    config: DistributionConfig,
    seed: u64,
    origin_shift: Vertex,
}

impl WeightField {
    pub fn new(config: DistributionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(WeightField {
            config,
            seed,
            origin_shift: Vertex::ORIGIN,
        })
    }

    pub fn config(&self) -> &DistributionConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn origin_shift(&self) -> Vertex {
        self.origin_shift
    }

    /// Uniform deviate behind edge `e`.
    #[inline]
    pub fn uniform(&self, e: EdgeId) -> f64 {
        let b = e.base + self.origin_shift;
        let key = ((b.x as u32 as u64) << 32) | (b.y as u32 as u64);
        let tag = match e.axis {
            Axis::E1 => 1u64,
            Axis::E2 => 2u64,
        };
        let mut h = mix64(self.seed ^ SEED_SALT);
        h = mix64(h ^ key);
        h = mix64(h ^ tag.wrapping_mul(AXIS_SALT));
        unit_interval(h)
    }

    #[inline]
    pub fn weight_f64(&self, e: EdgeId) -> f64 {
        self.config.quantile(self.uniform(e))
    }

    #[inline]
    pub fn weight<T: Scalar>(&self, e: EdgeId) -> T {
        T::of(self.weight_f64(e))
    }

    /// The environment `T_v ω`, i.e. `shifted.weight(e) == self.weight(e - v)`.
    pub fn shifted_view(&self, v: Vertex) -> WeightField {
        WeightField {
            origin_shift: self.origin_shift - v,
            ..*self
        }
    }
}

/// Shorthand for [`WeightField::new`].
pub fn create_field(config: DistributionConfig, seed: u64) -> Result<WeightField> {
    WeightField::new(config, seed)
}
