//! How fast a sample click-through rate settles on the true rate.
//!
//! The mean absolute error of a sample CTR over `s` i.i.d. Bernoulli clicks is
//! computed two ways: exactly, by summing over the binomial distribution, and
//! by seeded Monte-Carlo simulation.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LcfError, Result};

/// Trials drawn from one generator stream. Fixed so results do not depend on
/// how many threads run the simulation.
const TRIALS_PER_CHUNK: u64 = 1 << 15;

fn check_ratio(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(LcfError::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")))
    }
}

/// `E|X - p|` for `X ~ Bernoulli(p)`, which is `2p(1 - p)`.
pub fn binary_mad(p: f64) -> Result<f64> {
    check_ratio("p", p)?;
    Ok(2.0 * p * (1.0 - p))
}

/// `E|K/s - ctr|` for `K ~ Binomial(s, ctr)`.
pub fn exact_ctr_mae(s: u64, ctr: f64) -> Result<f64> {
    if s == 0 {
        return Err(LcfError::InvalidArgument("sample size must be at least 1".into()));
    }
    check_ratio("ctr", ctr)?;
    if ctr == 0.0 || ctr == 1.0 {
        return Ok(0.0);
    }
    let (ln_p, ln_q) = (ctr.ln(), (1.0 - ctr).ln());
    let sf = s as f64;
    let mut ln_binom = 0.0f64;
    let mut total = 0.0;
    for k in 0..=s {
        if k > 0 {
            ln_binom += ((s - k + 1) as f64 / k as f64).ln();
        }
        let kf = k as f64;
        let pmf = (ln_binom + kf * ln_p + (sf - kf) * ln_q).exp();
        total += pmf * (kf / sf - ctr).abs();
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityConfig {
    pub true_ctr: f64,
    pub sample_sizes: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        check_ratio("ctr", self.true_ctr)?;
        if self.trials == 0 {
            return Err(LcfError::InvalidArgument("trials must be at least 1".into()));
        }
        if self.sample_sizes.contains(&0) {
            return Err(LcfError::InvalidArgument("sample sizes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityRow {
    pub sample_size: u64,
    pub simulated_mae: f64,
    pub exact_mae: f64,
    pub trials: u64,
    /// Monte-Carlo standard error of `simulated_mae`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub true_ctr: f64,
    pub seed: u64,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    /// CSV with columns `sample_size,simulated_mae,exact_mae,trials`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sample_size", "simulated_mae", "exact_mae", "trials"])?;
        for r in &self.rows {
            w.write_record([
                r.sample_size.to_string(),
                format!("{:.6}", r.simulated_mae),
                format!("{:.6}", r.exact_mae),
                r.trials.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn chunk_seed(seed: u64, sample_size: u64, chunk: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ sample_size) ^ chunk)
}

/// Sum of absolute deviations and of their squares over one chunk of trials.
fn simulate_chunk(cfg: &StabilityConfig, s: u64, chunk: u64, n: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(chunk_seed(cfg.seed, s, chunk));
    let clicks = Binomial::new(s, cfg.true_ctr).expect("ctr validated");
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let dev = (clicks.sample(&mut rng) as f64 / s as f64 - cfg.true_ctr).abs();
        sum += dev;
        sq += dev * dev;
    }
    (sum, sq)
}

/// Monte-Carlo MAE of the sample CTR for each configured sample size, paired
/// with the exact value.
pub fn simulate_ctr_mae(cfg: &StabilityConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let n_chunks = cfg.trials.div_ceil(TRIALS_PER_CHUNK);
    let rows = cfg
        .sample_sizes
        .par_iter()
        .map(|&s| {
            let partial: Vec<(f64, f64)> = (0..n_chunks)
                .into_par_iter()
                .map(|c| {
                    let n = TRIALS_PER_CHUNK.min(cfg.trials - c * TRIALS_PER_CHUNK);
                    simulate_chunk(cfg, s, c, n)
                })
                .collect();
            let (sum, sq) = partial.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
            let t = cfg.trials as f64;
            let mean = sum / t;
            let var = if cfg.trials > 1 { ((sq - t * mean * mean) / (t - 1.0)).max(0.0) } else { 0.0 };
            Ok(StabilityRow {
                sample_size: s,
                simulated_mae: mean,
                exact_mae: exact_ctr_mae(s, cfg.true_ctr)?,
                trials: cfg.trials,
                std_error: (var / t).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport { true_ctr: cfg.true_ctr, seed: cfg.seed, rows })
}
