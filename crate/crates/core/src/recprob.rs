//! Recommendation probabilities from a per-user power-law fit of predicted
//! click-through probabilities.
//!
//! A user's predicted probabilities are fitted with a continuous power law
//! `f(x) = ((alpha - 1) / x_min) (x / x_min)^-alpha`. An item with predicted
//! probability `x` is then put in the feed with probability
//! `min(1, c * g(x) / f(x))` for a chosen target density `g`, which reshapes
//! the density of preference levels in the feed towards `g`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::InteractionDataset;
use crate::error::{LcfError, Result};
use crate::{ItemId, UserId};

pub const DEFAULT_MIN_FIT_SIZE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub x_min: f64,
    pub alpha: f64,
    pub n_samples: usize,
}

impl PowerLawFit {
    /// Fitted density, flat at `f(x_min)` below the cutoff.
    pub fn density(&self, x: f64) -> f64 {
        power_law_density(self.alpha, self.x_min, x.max(self.x_min))
    }
}

fn power_law_density(alpha: f64, x_min: f64, x: f64) -> f64 {
    (alpha - 1.0) / x_min * (x / x_min).powf(-alpha)
}

/// Maximum-likelihood exponent with `x_min` at the smallest positive sample.
/// Zero and negative values are ignored.
pub fn fit_ctp_distribution(ctps: &[f64], min_fit_size: usize) -> Result<PowerLawFit> {
    let positive: Vec<f64> = ctps.iter().copied().filter(|&x| x > 0.0 && x.is_finite()).collect();
    if positive.len() < min_fit_size.max(1) {
        return Err(LcfError::InsufficientData { have: positive.len(), need: min_fit_size.max(1) });
    }
    let x_min = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let log_sum: f64 = positive.iter().map(|&x| (x / x_min).ln()).sum();
    if log_sum <= 0.0 {
        return Err(LcfError::DegenerateDistribution);
    }
    let m = positive.len();
    Ok(PowerLawFit { x_min, alpha: 1.0 + m as f64 / log_sum, n_samples: m })
}

/// Density the feed should follow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetDensity {
    Uniform { lo: f64, hi: f64 },
    /// Power law with the fit's cutoff and this exponent.
    PowerLaw { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecommendationPolicy {
    pub target: TargetDensity,
    pub scale_c: f64,
}

impl RecommendationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_c >= 0.0 && self.scale_c.is_finite()) {
            return Err(LcfError::InvalidArgument(format!("scale must be finite and >= 0, got {}", self.scale_c)));
        }
        match self.target {
            TargetDensity::Uniform { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                Err(LcfError::InvalidArgument(format!("uniform target needs lo < hi, got [{lo}, {hi}]")))
            }
            TargetDensity::PowerLaw { alpha } if !(alpha > 1.0 && alpha.is_finite()) => {
                Err(LcfError::InvalidArgument(format!("power-law target needs alpha > 1, got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    fn target_density(&self, fit: &PowerLawFit, x: f64) -> f64 {
        match self.target {
            TargetDensity::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            TargetDensity::PowerLaw { alpha } => power_law_density(alpha, fit.x_min, x.max(fit.x_min)),
        }
    }
}

/// `min(1, c * g(x) / f(x))`, with `x` clamped into `[0, 1]`.
pub fn recommendation_probability(fit: &PowerLawFit, policy: &RecommendationPolicy, x: f64) -> f64 {
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    let g = policy.target_density(fit, x);
    let scaled = policy.scale_c.max(0.0) * g;
    if scaled <= 0.0 || scaled.is_nan() {
        return 0.0;
    }
    let f = fit.density(x);
    let prob = scaled / f;
    if prob.is_nan() {
        1.0
    } else {
        prob.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedDecision {
    pub item: ItemId,
    pub probability: f64,
    pub included: bool,
}

/// One independent Bernoulli draw per candidate `(item, clamped ctp)`,
/// in input order.
pub fn draw_feed(
    predictions: &[(ItemId, f64)],
    fit: &PowerLawFit,
    policy: &RecommendationPolicy,
    seed: u64,
) -> Vec<FeedDecision> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    predictions
        .iter()
        .map(|&(item, x)| {
            let probability = recommendation_probability(fit, policy, x);
            let included = rng.random::<f64>() < probability;
            FeedDecision { item, probability, included }
        })
        .collect()
}

/// CSV with columns `user,item,probability,included`.
pub fn write_feed_csv<W: Write>(ds: &InteractionDataset, feeds: &[(UserId, Vec<FeedDecision>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user", "item", "probability", "included"])?;
    for (u, feed) in feeds {
        for d in feed {
            w.write_record([
                ds.user_key(*u).unwrap_or_default(),
                ds.item_key(d.item).unwrap_or_default(),
                &format!("{:.6}", d.probability),
                &d.included.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
