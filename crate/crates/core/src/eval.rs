//! Offline evaluation: per-user stratified k-fold splits and hit ratio at K,
//! swept over the personalization coefficient.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{ExposureModel, InteractionDataset};
use crate::error::{LcfError, Result};
use crate::predict::{PredictionConfig, Predictor, ThresholdMode};
use crate::{ItemId, UserId};

/// Fold id of every interaction, stored parallel to the users' histories.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FoldAssignment {
    k: usize,
    seed: u64,
    folds: Vec<Vec<u32>>,
}

/// Shuffles each user's items with a seeded generator and deals them to folds
/// round-robin. The dealer position carries over from one user to the next,
/// so fold sizes differ by at most one both per user and overall.
pub fn kfold_split(ds: &InteractionDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(LcfError::InvalidArgument(format!("fold count must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dealer = 0usize;
    let folds = ds
        .histories()
        .iter()
        .map(|h| {
            let mut order: Vec<usize> = (0..h.len()).collect();
            order.shuffle(&mut rng);
            let mut assigned = vec![0u32; h.len()];
            for pos in order {
                assigned[pos] = (dealer % k) as u32;
                dealer += 1;
            }
            assigned
        })
        .collect();
    Ok(FoldAssignment { k, seed, folds })
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fold holding out `(u, i)`, if that pair is an interaction of `ds`.
    pub fn fold_of(&self, ds: &InteractionDataset, u: UserId, i: ItemId) -> Option<usize> {
        let pos = ds.history(u).ok()?.binary_search(&i).ok()?;
        Some(self.folds[u as usize][pos] as usize)
    }

    fn split<'a>(&'a self, ds: &'a InteractionDataset, fold: usize, held_out: bool) -> impl Iterator<Item = (UserId, ItemId)> + 'a {
        ds.histories().iter().enumerate().flat_map(move |(u, h)| {
            h.iter()
                .zip(&self.folds[u])
                .filter(move |(_, &f)| (f as usize == fold) == held_out)
                .map(move |(&i, _)| (u as UserId, i))
        })
    }

    pub fn test_pairs(&self, ds: &InteractionDataset, fold: usize) -> Vec<(UserId, ItemId)> {
        self.split(ds, fold, true).collect()
    }

    pub fn train_pairs(&self, ds: &InteractionDataset, fold: usize) -> Vec<(UserId, ItemId)> {
        self.split(ds, fold, false).collect()
    }

    /// Dataset without fold `fold`, sharing the user and item tables of `ds`.
    pub fn train_dataset(&self, ds: &InteractionDataset, fold: usize) -> Result<InteractionDataset> {
        ds.with_pairs(self.split(ds, fold, false))
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.folds.iter().flatten() {
            sizes[f as usize] += 1;
        }
        sizes
    }

    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }
}

/// Hit ratio of one fold at one `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub hits: usize,
    pub n_test_pairs: usize,
    /// hits / held-out pairs
    pub hr_micro: f64,
    /// mean over test users of their own hit fraction
    pub hr_macro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalEntry {
    pub p: f64,
    pub mean_hr_micro: f64,
    pub mean_hr_macro: f64,
    pub folds: Vec<FoldResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub top_k: usize,
    pub n_folds: usize,
    pub seed: u64,
    pub theta2: usize,
    pub mode: ThresholdMode,
    pub fold_digest: u64,
    pub entries: Vec<EvalEntry>,
}

impl EvalReport {
    /// Entry with the highest mean micro hit ratio; the smallest `p` wins ties.
    pub fn best(&self) -> Option<&EvalEntry> {
        self.entries
            .iter()
            .fold(None, |best: Option<&EvalEntry>, e| match best {
                Some(b) if b.mean_hr_micro >= e.mean_hr_micro => Some(b),
                _ => Some(e),
            })
    }

    pub fn entry(&self, p: f64) -> Option<&EvalEntry> {
        self.entries.iter().find(|e| e.p == p)
    }

    /// CSV with columns `p,fold,hr_micro,hr_macro,n_test_pairs`.
    pub fn write_folds_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "fold", "hr_micro", "hr_macro", "n_test_pairs"])?;
        for e in &self.entries {
            for f in &e.folds {
                w.write_record([
                    e.p.to_string(),
                    f.fold.to_string(),
                    format!("{:.6}", f.hr_micro),
                    format!("{:.6}", f.hr_macro),
                    f.n_test_pairs.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// CSV with columns `p,mean_hr_micro,mean_hr_macro`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "mean_hr_micro", "mean_hr_macro"])?;
        for e in &self.entries {
            w.write_record([
                e.p.to_string(),
                format!("{:.6}", e.mean_hr_micro),
                format!("{:.6}", e.mean_hr_macro),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-user hits at every grid point, and the user's held-out count.
struct UserOutcome {
    hits: Vec<usize>,
    n_test: usize,
}

/// Hit ratios for every `p` in `grid` on a single fold.
fn evaluate_fold(
    ds: &InteractionDataset,
    folds: &FoldAssignment,
    fold: usize,
    top_k: usize,
    base: &PredictionConfig,
    grid: &[f64],
) -> Result<Vec<FoldResult>> {
    let train = folds.train_dataset(ds, fold)?;
    let mut held_out: Vec<Vec<ItemId>> = vec![Vec::new(); ds.n_users()];
    let mut n_pairs = 0;
    for (u, i) in folds.split(ds, fold, true) {
        held_out[u as usize].push(i);
        n_pairs += 1;
    }
    if n_pairs == 0 {
        return Err(LcfError::DegenerateSplit { fold });
    }

    let exp = ExposureModel::Full;
    let predictor = Predictor::new(&train, &exp).with_cooccurrence();
    let outcomes: Vec<UserOutcome> = held_out
        .par_iter()
        .enumerate()
        .filter(|(_, items)| !items.is_empty())
        .map(|(u, items)| {
            let basis = predictor.basis(u as UserId, base)?;
            let hits = grid
                .iter()
                .map(|&p| {
                    let top = basis.top_k(p, top_k);
                    items.iter().filter(|i| top.iter().any(|t| t.item == **i)).count()
                })
                .collect();
            Ok(UserOutcome { hits, n_test: items.len() })
        })
        .collect::<Result<_>>()?;

    let n_users = outcomes.len() as f64;
    Ok((0..grid.len())
        .map(|g| {
            let hits: usize = outcomes.iter().map(|o| o.hits[g]).sum();
            let macro_sum: f64 = outcomes.iter().map(|o| o.hits[g] as f64 / o.n_test as f64).sum();
            FoldResult {
                fold,
                hits,
                n_test_pairs: n_pairs,
                hr_micro: hits as f64 / n_pairs as f64,
                hr_macro: macro_sum / n_users,
            }
        })
        .collect())
}

fn evaluate_grid(
    ds: &InteractionDataset,
    folds: &FoldAssignment,
    top_k: usize,
    base: &PredictionConfig,
    grid: &[f64],
) -> Result<Vec<EvalEntry>> {
    for &p in grid {
        base.with_p(p).validate()?;
    }
    let per_fold: Vec<Vec<FoldResult>> = (0..folds.k())
        .map(|f| evaluate_fold(ds, folds, f, top_k, base, grid))
        .collect::<Result<_>>()?;
    let k = folds.k() as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &p)| {
            let folds: Vec<FoldResult> = per_fold.iter().map(|r| r[g]).collect();
            EvalEntry {
                p,
                mean_hr_micro: folds.iter().map(|f| f.hr_micro).sum::<f64>() / k,
                mean_hr_macro: folds.iter().map(|f| f.hr_macro).sum::<f64>() / k,
                folds,
            }
        })
        .collect())
}

/// Cross-validated hit ratio at `top_k` for `cfg.p`.
pub fn evaluate_hr(
    ds: &InteractionDataset,
    folds: &FoldAssignment,
    top_k: usize,
    cfg: &PredictionConfig,
) -> Result<EvalEntry> {
    let mut entries = evaluate_grid(ds, folds, top_k, cfg, &[cfg.p])?;
    Ok(entries.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub n_folds: usize,
    pub top_k: usize,
    pub p_grid: Vec<f64>,
    pub theta2: usize,
    pub mode: ThresholdMode,
    pub seed: u64,
}

impl SweepConfig {
    /// `0, 0.25, ..., 4`
    pub fn default_grid() -> Vec<f64> {
        (0..=16).map(|k| k as f64 * 0.25).collect()
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_folds: 5,
            top_k: 10,
            p_grid: Self::default_grid(),
            theta2: 16,
            mode: ThresholdMode::Lenient,
            seed: 42,
        }
    }
}

/// Hit ratio for every `p` in the grid over one shared fold assignment.
pub fn sweep_personalization(ds: &InteractionDataset, cfg: &SweepConfig) -> Result<EvalReport> {
    if cfg.p_grid.is_empty() {
        return Err(LcfError::InvalidArgument("empty p grid".into()));
    }
    let mut grid = cfg.p_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let folds = kfold_split(ds, cfg.n_folds, cfg.seed)?;
    let base = PredictionConfig { p: grid[0], theta2: cfg.theta2, mode: cfg.mode, clamp: true };
    let entries = evaluate_grid(ds, &folds, cfg.top_k, &base, &grid)?;
    Ok(EvalReport {
        top_k: cfg.top_k,
        n_folds: cfg.n_folds,
        seed: cfg.seed,
        theta2: cfg.theta2,
        mode: cfg.mode,
        fold_digest: folds.digest(),
        entries,
    })
}
