//! User-item click-through probability prediction.
//!
//! The predicted probability of user `u` clicking item `j` is the global rate
//! of `j` shifted by `p` times the mean correlation `r_{i_k}(j)` over the
//! user's history items `i_k` that have enough support. `p = 0` reduces to
//! popularity ranking.

use std::io::Write;

use serde::Serialize;

use crate::corpus::{ExposureModel, InteractionDataset};
use crate::correlate::{rate, CooccurrenceTable, CorrelationIndex};
use crate::error::{LcfError, Result};
use crate::sets;
use crate::{ItemId, UserId};

/// How the per-term support threshold applies to a user's history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Average over the qualifying history items only.
    #[default]
    Lenient,
    /// Every history item must qualify, otherwise the prediction falls back
    /// to the global rate.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionConfig {
    /// Personalization coefficient.
    pub p: f64,
    /// A history item `i_k` contributes only when `|E(j) ∩ L(i_k)| > theta2`.
    pub theta2: usize,
    pub mode: ThresholdMode,
    /// Report the clamped score rather than the raw one.
    pub clamp: bool,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig { p: 1.5, theta2: 16, mode: ThresholdMode::Lenient, clamp: true }
    }
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p >= 0.0) {
            return Err(LcfError::InvalidArgument(format!("p must be finite and >= 0, got {}", self.p)));
        }
        Ok(())
    }

    pub fn with_p(self, p: f64) -> Self {
        PredictionConfig { p, ..self }
    }

    /// The score this configuration reports for a prediction.
    pub fn reported_score(&self, pred: &CtpPrediction) -> f64 {
        if self.clamp {
            pred.clamped_score
        } else {
            pred.raw_score
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CtpPrediction {
    pub item: ItemId,
    pub raw_score: f64,
    pub clamped_score: f64,
    /// History terms that contributed to the average.
    pub n_effective: usize,
    /// No term qualified; the score is the item's global rate.
    pub fallback: bool,
}

impl CtpPrediction {
    fn combine(item: ItemId, ctr: f64, sum: f64, n: usize, p: f64) -> Self {
        let raw_score = if n == 0 { ctr } else { ctr + (p / n as f64) * sum };
        CtpPrediction {
            item,
            raw_score,
            clamped_score: raw_score.clamp(0.0, 1.0),
            n_effective: n,
            fallback: n == 0,
        }
    }
}

/// Outcome of a single prediction request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ctp {
    Predicted(CtpPrediction),
    /// The item is already in the user's history.
    AlreadyConsumed,
}

impl Ctp {
    pub fn prediction(self) -> Option<CtpPrediction> {
        match self {
            Ctp::Predicted(p) => Some(p),
            Ctp::AlreadyConsumed => None,
        }
    }
}

/// Per-candidate ingredients of a user's predictions, independent of `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBasis {
    pub user: UserId,
    items: Vec<ItemId>,
    ctr: Vec<f64>,
    sum: Vec<f64>,
    n: Vec<u32>,
}

impl ScoreBasis {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn predictions(&self, p: f64) -> Vec<CtpPrediction> {
        (0..self.items.len())
            .map(|x| CtpPrediction::combine(self.items[x], self.ctr[x], self.sum[x], self.n[x] as usize, p))
            .collect()
    }

    /// Top `k` candidates by raw score, ties by item ordinal.
    pub fn top_k(&self, p: f64, k: usize) -> Vec<CtpPrediction> {
        top_k(self.predictions(p), k)
    }
}

fn rank_order(a: &CtpPrediction, b: &CtpPrediction) -> std::cmp::Ordering {
    b.raw_score.total_cmp(&a.raw_score).then(a.item.cmp(&b.item))
}

fn top_k(mut preds: Vec<CtpPrediction>, k: usize) -> Vec<CtpPrediction> {
    if k == 0 {
        return Vec::new();
    }
    if k < preds.len() {
        preds.select_nth_unstable_by(k - 1, rank_order);
        preds.truncate(k);
    }
    preds.sort_by(rank_order);
    preds
}

/// Scores users against a fixed dataset and exposure model.
///
/// Correlations come from the attached index when its threshold is at most
/// the requested `theta2`, and are computed from the dataset otherwise.
#[derive(Debug)]
pub struct Predictor<'a> {
    ds: &'a InteractionDataset,
    exp: &'a ExposureModel,
    ctrs: Vec<f64>,
    cooc: Option<CooccurrenceTable>,
    index: Option<&'a CorrelationIndex>,
}

impl<'a> Predictor<'a> {
    pub fn new(ds: &'a InteractionDataset, exp: &'a ExposureModel) -> Self {
        let ctrs = (0..ds.n_items() as ItemId)
            .map(|j| {
                let e = exp.exposure_set(ds, j);
                match e {
                    Ok(e) if !e.is_empty() => rate(ds.liked_unchecked(j).len(), e.len()),
                    _ => f64::NAN,
                }
            })
            .collect();
        Predictor { ds, exp, ctrs, cooc: None, index: None }
    }

    /// Precomputes co-occurrence counts. Enables whole-catalogue scoring in a
    /// single pass per history item under full exposure.
    pub fn with_cooccurrence(mut self) -> Self {
        self.cooc = Some(CooccurrenceTable::build(self.ds));
        self
    }

    pub fn with_index(mut self, index: &'a CorrelationIndex) -> Self {
        self.index = Some(index);
        self
    }

    pub fn dataset(&self) -> &'a InteractionDataset {
        self.ds
    }

    fn ctr(&self, j: ItemId) -> Result<f64> {
        let c = self.ctrs[j as usize];
        if c.is_nan() {
            Err(LcfError::UndefinedCtr { item: j })
        } else {
            Ok(c)
        }
    }

    /// `r_i(j)` if its support exceeds `theta2`.
    fn term(&self, i: ItemId, j: ItemId, theta2: usize) -> Result<Option<f64>> {
        if let Some(index) = self.index {
            if index.theta1() <= theta2 && index.contains_source(i) {
                return Ok(index.get(i, j).filter(|e| e.support as usize > theta2).map(|e| e.r));
            }
        }
        let li = self.ds.liked_unchecked(i);
        let support = self.exp.exposure_set(self.ds, j)?.intersect_count(li);
        if support <= theta2 {
            return Ok(None);
        }
        let hits = match &self.cooc {
            Some(t) => t.count(i, j) as usize,
            None => sets::intersect_count(li, self.ds.liked_unchecked(j)),
        };
        Ok(Some(rate(hits, support) - self.ctr(j)?))
    }

    /// Sum of qualifying terms and the divisor to use with it.
    fn terms(&self, history: &[ItemId], j: ItemId, cfg: &PredictionConfig) -> Result<(f64, usize)> {
        let mut sum = 0.0;
        let mut n = 0;
        for &i in history {
            match self.term(i, j, cfg.theta2)? {
                Some(r) => {
                    sum += r;
                    n += 1;
                }
                None if cfg.mode == ThresholdMode::Strict => return Ok((0.0, 0)),
                None => {}
            }
        }
        Ok((sum, n))
    }

    pub fn predict(&self, u: UserId, j: ItemId, cfg: &PredictionConfig) -> Result<Ctp> {
        cfg.validate()?;
        let history = self.ds.history(u)?;
        self.ds.liked_set(j)?;
        if history.binary_search(&j).is_ok() {
            return Ok(Ctp::AlreadyConsumed);
        }
        let ctr = self.ctr(j)?;
        let (sum, n) = self.terms(history, j, cfg)?;
        Ok(Ctp::Predicted(CtpPrediction::combine(j, ctr, sum, n, cfg.p)))
    }

    /// Everything needed to score `u` against every unconsumed item at any
    /// `p`, for fixed `theta2` and mode.
    pub fn basis(&self, u: UserId, cfg: &PredictionConfig) -> Result<ScoreBasis> {
        let history = self.ds.history(u)?;
        let n_items = self.ds.n_items();
        let mut items = Vec::with_capacity(n_items - history.len());
        let mut hist = history.iter().peekable();
        for j in 0..n_items as ItemId {
            if hist.peek() == Some(&&j) {
                hist.next();
            } else {
                items.push(j);
            }
        }
        let ctr = items.iter().map(|&j| self.ctr(j)).collect::<Result<Vec<_>>>()?;

        if let (ExposureModel::Full, Some(cooc)) = (self.exp, &self.cooc) {
            // Under full exposure the support of a term does not depend on j.
            let qualifying: Vec<ItemId> = history
                .iter()
                .copied()
                .filter(|&i| self.ds.liked_unchecked(i).len() > cfg.theta2)
                .collect();
            let n = match cfg.mode {
                ThresholdMode::Strict if qualifying.len() < history.len() => 0,
                _ => qualifying.len(),
            };
            let mut sum = vec![0.0; items.len()];
            if n > 0 {
                for &i in &qualifying {
                    let support = self.ds.liked_unchecked(i).len();
                    let (targets, counts) = cooc.row(i);
                    let mut row = targets.iter().zip(counts).peekable();
                    for (x, &j) in items.iter().enumerate() {
                        while row.peek().is_some_and(|(&t, _)| t < j) {
                            row.next();
                        }
                        let hits = match row.peek() {
                            Some((&t, &c)) if t == j => c as usize,
                            _ => 0,
                        };
                        sum[x] += rate(hits, support) - ctr[x];
                    }
                }
            }
            let n = vec![n as u32; items.len()];
            return Ok(ScoreBasis { user: u, items, ctr, sum, n });
        }

        let mut sum = Vec::with_capacity(items.len());
        let mut n = Vec::with_capacity(items.len());
        for &j in &items {
            let (s, c) = self.terms(history, j, cfg)?;
            sum.push(s);
            n.push(c as u32);
        }
        Ok(ScoreBasis { user: u, items, ctr, sum, n })
    }

    /// Top `k` unconsumed items for `u`, by raw score then item ordinal.
    pub fn recommend(&self, u: UserId, cfg: &PredictionConfig, k: usize) -> Result<Vec<CtpPrediction>> {
        cfg.validate()?;
        if k == 0 {
            self.ds.history(u)?;
            return Ok(Vec::new());
        }
        Ok(self.basis(u, cfg)?.top_k(cfg.p, k))
    }
}

/// Predicted click-through probability of user `u` for item `j`.
pub fn predict_ctp(
    index: &CorrelationIndex,
    ds: &InteractionDataset,
    exp: &ExposureModel,
    u: UserId,
    j: ItemId,
    cfg: &PredictionConfig,
) -> Result<Ctp> {
    Predictor::new(ds, exp).with_index(index).predict(u, j, cfg)
}

/// History items of `u` whose support for `j` exceeds `theta2`.
pub fn effective_history(
    ds: &InteractionDataset,
    exp: &ExposureModel,
    u: UserId,
    j: ItemId,
    theta2: usize,
) -> Result<Vec<ItemId>> {
    let history = ds.history(u)?;
    let e = exp.exposure_set(ds, j)?;
    Ok(history
        .iter()
        .copied()
        .filter(|&i| e.intersect_count(ds.liked_unchecked(i)) > theta2)
        .collect())
}

/// Top `k` recommendations for `u` as `(item, prediction)` pairs.
pub fn recommend_topk(
    index: &CorrelationIndex,
    ds: &InteractionDataset,
    exp: &ExposureModel,
    u: UserId,
    cfg: &PredictionConfig,
    k: usize,
) -> Result<Vec<(ItemId, CtpPrediction)>> {
    let predictor = Predictor::new(ds, exp).with_index(index);
    let predictor = if exp.is_full() { predictor.with_cooccurrence() } else { predictor };
    Ok(predictor.recommend(u, cfg, k)?.into_iter().map(|p| (p.item, p)).collect())
}

/// CSV with columns `user,rank,item,raw_score,clamped_score,n_effective,fallback`.
pub fn write_recommendations_csv<W: Write>(
    ds: &InteractionDataset,
    lists: &[(UserId, Vec<CtpPrediction>)],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user", "rank", "item", "raw_score", "clamped_score", "n_effective", "fallback"])?;
    for (u, list) in lists {
        for (rank, pred) in list.iter().enumerate() {
            w.write_record([
                ds.user_key(*u).unwrap_or_default(),
                &(rank + 1).to_string(),
                ds.item_key(pred.item).unwrap_or_default(),
                &format!("{:.6}", pred.raw_score),
                &format!("{:.6}", pred.clamped_score),
                &pred.n_effective.to_string(),
                &pred.fallback.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
