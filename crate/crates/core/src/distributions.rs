//! The four primitive distributions the rating model draws from.
//!
//! Each has an exact sampler driven by a [`SimRng`] and a log-density. The
//! truncated normal is sampled by inverting its CDF on whichever tail keeps
//! the most precision, never by clamping an untruncated draw.

use std::f64::consts::SQRT_2;

use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// `ln(sqrt(2 pi))`
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal survival function `1 - cdf(z)`, accurate in the upper tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    low: f64,
    high: f64,
}

impl Uniform {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::InvalidRange { low, high });
        }
        Ok(Uniform { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        let x = self.low + (self.high - self.low) * rng.next_f64();
        // rounding can land exactly on `high` for wide ranges
        if x >= self.high {
            self.low
        } else {
            x
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x < self.low || x > self.high {
            f64::NEG_INFINITY
        } else {
            -(self.high - self.low).ln()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        ((x - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bernoulli {
    p: f64,
}

impl Bernoulli {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        Ok(Bernoulli { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sample(&self, rng: &mut SimRng) -> bool {
        rng.next_f64() < self.p
    }

    pub fn log_pmf(&self, x: bool) -> f64 {
        if x {
            self.p.ln()
        } else {
            (1.0 - self.p).ln()
        }
    }
}

/// Parameters of a normal distribution restricted to `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormalParams {
    pub mean: f64,
    pub std: f64,
    pub low: f64,
    pub high: f64,
}

impl TruncatedNormalParams {
    pub fn new(mean: f64, std: f64, low: f64, high: f64) -> Self {
        TruncatedNormalParams {
            mean,
            std,
            low,
            high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.mean, self.std, self.low, self.high]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams(format!("non-finite value in {self:?}")));
        }
        if self.std <= 0.0 {
            return Err(Error::InvalidParams(format!("std {} must be positive", self.std)));
        }
        if self.low >= self.high {
            return Err(Error::InvalidParams(format!(
                "low {} must be below high {}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// A truncated normal with its log normalizer precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    params: TruncatedNormalParams,
    alpha: f64,
    beta: f64,
    /// `ln(Phi(beta) - Phi(alpha))`
    log_mass: f64,
    upper_tail: bool,
}

impl TruncatedNormal {
    pub fn new(params: TruncatedNormalParams) -> Result<Self> {
        params.validate()?;
        let alpha = (params.low - params.mean) / params.std;
        let beta = (params.high - params.mean) / params.std;
        // Work in survival space when the whole interval sits above the mean,
        // otherwise Phi(beta) - Phi(alpha) cancels to zero in the upper tail.
        let upper_tail = alpha > 0.0;
        let mass = if upper_tail {
            normal_sf(alpha) - normal_sf(beta)
        } else {
            normal_cdf(beta) - normal_cdf(alpha)
        };
        if mass.is_nan() || mass <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "interval [{}, {}] carries no probability mass under N({}, {})",
                params.low, params.high, params.mean, params.std
            )));
        }
        Ok(TruncatedNormal {
            params,
            alpha,
            beta,
            log_mass: mass.ln(),
            upper_tail,
        })
    }

    pub fn params(&self) -> &TruncatedNormalParams {
        &self.params
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        let u = rng.next_f64();
        let z = if self.upper_tail {
            let (qa, qb) = (normal_sf(self.alpha), normal_sf(self.beta));
            -normal_quantile(qb + u * (qa - qb))
        } else {
            let (pa, pb) = (normal_cdf(self.alpha), normal_cdf(self.beta));
            normal_quantile(pa + u * (pb - pa))
        };
        let p = &self.params;
        // the clamp only absorbs quantile rounding at the interval ends
        (p.mean + p.std * z).clamp(p.low, p.high)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let p = &self.params;
        if !(x >= p.low && x <= p.high) {
            return f64::NEG_INFINITY;
        }
        let z = (x - p.mean) / p.std;
        -0.5 * z * z - LN_SQRT_2PI - p.std.ln() - self.log_mass
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let p = &self.params;
        if x <= p.low {
            return 0.0;
        }
        if x >= p.high {
            return 1.0;
        }
        let z = (x - p.mean) / p.std;
        let num = if self.upper_tail {
            normal_sf(self.alpha) - normal_sf(z)
        } else {
            normal_cdf(z) - normal_cdf(self.alpha)
        };
        (num / self.log_mass.exp()).clamp(0.0, 1.0)
    }
}

/// Convenience wrapper around [`TruncatedNormal::new`] and `sample`.
pub fn truncated_normal_sample(rng: &mut SimRng, params: TruncatedNormalParams) -> Result<f64> {
    Ok(TruncatedNormal::new(params)?.sample(rng))
}

pub fn truncated_normal_log_pdf(x: f64, params: TruncatedNormalParams) -> Result<f64> {
    Ok(TruncatedNormal::new(params)?.log_pdf(x))
}

/// Categorical over indices `0..weights.len()`, proportional to the weights.
///
/// All-zero weights fall back to the uniform distribution. This is the state
/// of the ranking at the first step, when no movie has been rated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Categorical<'a> {
    weights: &'a [f64],
    total: f64,
}

impl<'a> Categorical<'a> {
    pub fn new(weights: &'a [f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyWeights);
        }
        let mut total = 0.0;
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::NegativeWeight { index, value });
            }
            total += value;
        }
        Ok(Categorical { weights, total })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_uniform_fallback(&self) -> bool {
        self.total == 0.0
    }

    pub fn probability(&self, index: usize) -> f64 {
        if index >= self.weights.len() {
            0.0
        } else if self.total == 0.0 {
            1.0 / self.weights.len() as f64
        } else {
            self.weights[index] / self.total
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> usize {
        let n = self.weights.len();
        let u = rng.next_f64();
        if self.total == 0.0 {
            return ((u * n as f64) as usize).min(n - 1);
        }
        let target = u * self.total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = i;
                if target < acc {
                    return i;
                }
            }
        }
        last_positive
    }

    pub fn log_pmf(&self, index: usize) -> f64 {
        self.probability(index).ln()
    }
}

pub fn uniform_sample(rng: &mut SimRng, low: f64, high: f64) -> Result<f64> {
    Ok(Uniform::new(low, high)?.sample(rng))
}

pub fn bernoulli_sample(rng: &mut SimRng, p: f64) -> Result<bool> {
    Ok(Bernoulli::new(p)?.sample(rng))
}

pub fn categorical_sample(rng: &mut SimRng, weights: &[f64]) -> Result<usize> {
    Ok(Categorical::new(weights)?.sample(rng))
}
