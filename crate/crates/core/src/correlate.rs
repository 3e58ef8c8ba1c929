//! Global and local click-through rates and the item-to-item correlation
//! coefficient built from them.
//!
//! For a source item `i` and target `j`, the local rate is the fraction of the
//! users who liked `i` (and were exposed to `j`) that also liked `j`. The
//! correlation `r_i(j)` is that local rate minus the global rate of `j`, so it
//! is positive when the fans of `i` over-index on `j`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{ExposureModel, InteractionDataset};
use crate::error::{LcfError, Result};
use crate::sets;
use crate::ItemId;

/// Popularity figures of one item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ItemStats {
    pub item: ItemId,
    pub n_liked: usize,
    pub n_exposed: usize,
    pub global_ctr: f64,
}

#[inline]
pub(crate) fn rate(num: usize, den: usize) -> f64 {
    num as f64 / den as f64
}

pub fn item_stats(ds: &InteractionDataset, exp: &ExposureModel, j: ItemId) -> Result<ItemStats> {
    let n_liked = ds.liked_set(j)?.len();
    let n_exposed = exp.exposure_set(ds, j)?.len();
    if n_exposed == 0 {
        return Err(LcfError::UndefinedCtr { item: j });
    }
    Ok(ItemStats { item: j, n_liked, n_exposed, global_ctr: rate(n_liked, n_exposed) })
}

/// `CTR_U(j) = |L(j)| / |E(j)|`.
pub fn global_ctr(ds: &InteractionDataset, exp: &ExposureModel, j: ItemId) -> Result<f64> {
    item_stats(ds, exp, j).map(|s| s.global_ctr)
}

/// Raw counts behind a local rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// `|L(j) ∩ L(i)|`
    pub hits: usize,
    /// `|E(j) ∩ L(i)|`
    pub support: usize,
}

pub fn pair_counts(ds: &InteractionDataset, exp: &ExposureModel, i: ItemId, j: ItemId) -> Result<PairCounts> {
    let li = ds.liked_set(i)?;
    let lj = ds.liked_set(j)?;
    let support = exp.exposure_set(ds, j)?.intersect_count(li);
    let hits = if i == j { li.len() } else { sets::intersect_count(li, lj) };
    Ok(PairCounts { hits, support })
}

/// `CTR_{L(i)}(j) = |L(j) ∩ L(i)| / |E(j) ∩ L(i)|`.
pub fn local_ctr(ds: &InteractionDataset, exp: &ExposureModel, i: ItemId, j: ItemId) -> Result<f64> {
    let c = pair_counts(ds, exp, i, j)?;
    if c.support == 0 {
        return Err(LcfError::UndefinedCtr { item: j });
    }
    Ok(rate(c.hits, c.support))
}

/// One stored correlation `r_source(target)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationEntry {
    pub source: ItemId,
    pub target: ItemId,
    pub r: f64,
    pub local_ctr: f64,
    pub support: u32,
}

impl CorrelationEntry {
    fn from_counts(source: ItemId, target: ItemId, counts: PairCounts, target_ctr: f64) -> Self {
        let local_ctr = rate(counts.hits, counts.support);
        CorrelationEntry { source, target, r: local_ctr - target_ctr, local_ctr, support: counts.support as u32 }
    }
}

/// `r_i(j)` when its support `|E(j) ∩ L(i)|` strictly exceeds `theta1`,
/// `None` otherwise.
pub fn correlation(
    ds: &InteractionDataset,
    exp: &ExposureModel,
    i: ItemId,
    j: ItemId,
    theta1: usize,
) -> Result<Option<CorrelationEntry>> {
    let counts = pair_counts(ds, exp, i, j)?;
    if counts.support <= theta1 {
        return Ok(None);
    }
    let ctr = global_ctr(ds, exp, j)?;
    Ok(Some(CorrelationEntry::from_counts(i, j, counts, ctr)))
}

/// Both sides of the asymmetry identity under full exposure:
/// `(r_i(j) / r_j(i), CTR_U(j) / CTR_U(i))`.
pub fn asymmetry_ratio(ds: &InteractionDataset, exp: &ExposureModel, i: ItemId, j: ItemId) -> Result<(f64, f64)> {
    if !exp.is_full() {
        return Err(LcfError::UnsupportedExposure);
    }
    let r_ij = correlation(ds, exp, i, j, 0)?.ok_or(LcfError::UndefinedCtr { item: j })?.r;
    let r_ji = correlation(ds, exp, j, i, 0)?.ok_or(LcfError::UndefinedCtr { item: i })?.r;
    let ctr_i = global_ctr(ds, exp, i)?;
    let ctr_j = global_ctr(ds, exp, j)?;
    if r_ji == 0.0 {
        return Err(LcfError::UndefinedRatio { what: "r_j(i) = 0" });
    }
    if ctr_i == 0.0 {
        return Err(LcfError::UndefinedRatio { what: "CTR_U(i) = 0" });
    }
    Ok((r_ij / r_ji, ctr_j / ctr_i))
}

/// Sparse co-occurrence counts `|L(i) ∩ L(j)|`, one ascending row per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceTable {
    offsets: Vec<usize>,
    targets: Vec<ItemId>,
    counts: Vec<u32>,
}

impl CooccurrenceTable {
    pub fn build(ds: &InteractionDataset) -> Self {
        let rows: Vec<Vec<(ItemId, u32)>> = (0..ds.n_items() as ItemId)
            .into_par_iter()
            .map_init(|| vec![0u32; ds.n_items()], |counter, i| cooccurrence_row(ds, i, counter))
            .collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let total = rows.iter().map(Vec::len).sum();
        let mut targets = Vec::with_capacity(total);
        let mut counts = Vec::with_capacity(total);
        for row in rows {
            for (t, c) in row {
                targets.push(t);
                counts.push(c);
            }
            offsets.push(targets.len());
        }
        CooccurrenceTable { offsets, targets, counts }
    }

    /// Targets and counts co-occurring with `i`, including `i` itself.
    pub fn row(&self, i: ItemId) -> (&[ItemId], &[u32]) {
        let (a, b) = (self.offsets[i as usize], self.offsets[i as usize + 1]);
        (&self.targets[a..b], &self.counts[a..b])
    }

    pub fn count(&self, i: ItemId, j: ItemId) -> u32 {
        let (targets, counts) = self.row(i);
        targets.binary_search(&j).map(|p| counts[p]).unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }
}

/// Scatters the histories of `L(i)` into `counter` and drains the touched
/// cells in target order. `counter` must be all zeros on entry and is left
/// zeroed.
fn cooccurrence_row(ds: &InteractionDataset, i: ItemId, counter: &mut [u32]) -> Vec<(ItemId, u32)> {
    let mut touched = Vec::new();
    for &u in ds.liked_unchecked(i) {
        for &j in ds.history_unchecked(u) {
            let c = &mut counter[j as usize];
            if *c == 0 {
                touched.push(j);
            }
            *c += 1;
        }
    }
    touched.sort_unstable();
    touched
        .into_iter()
        .map(|j| (j, std::mem::take(&mut counter[j as usize])))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct SourceEntries {
    entries: Vec<CorrelationEntry>,
    /// positions into `entries`, ordered by target
    by_target: Vec<u32>,
}

/// Correlations `r_i(j)` with support above `theta1`, grouped by source and
/// ranked by `r` descending, then support descending, then target ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationIndex {
    theta1: usize,
    sources: BTreeMap<ItemId, SourceEntries>,
}

impl CorrelationIndex {
    pub fn theta1(&self) -> usize {
        self.theta1
    }

    pub fn sources(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.sources.keys().copied()
    }

    pub fn contains_source(&self, i: ItemId) -> bool {
        self.sources.contains_key(&i)
    }

    /// Ranked entries of source `i`.
    pub fn entries(&self, i: ItemId) -> Result<&[CorrelationEntry]> {
        self.sources
            .get(&i)
            .map(|s| s.entries.as_slice())
            .ok_or(LcfError::SourceNotInIndex { item: i })
    }

    /// The stored entry for `(i, j)`, if `i` was indexed and the pair passed
    /// the threshold.
    pub fn get(&self, i: ItemId, j: ItemId) -> Option<&CorrelationEntry> {
        let s = self.sources.get(&i)?;
        let pos = s
            .by_target
            .binary_search_by_key(&j, |&p| s.entries[p as usize].target)
            .ok()?;
        Some(&s.entries[s.by_target[pos] as usize])
    }

    pub fn n_entries(&self) -> usize {
        self.sources.values().map(|s| s.entries.len()).sum()
    }

    /// True when no pair passed the threshold.
    pub fn is_empty(&self) -> bool {
        self.n_entries() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &CorrelationEntry> {
        self.sources.values().flat_map(|s| s.entries.iter())
    }

    /// CSV with columns `source,target,r,local_ctr,support`, items written by key.
    pub fn write_csv<W: Write>(&self, ds: &InteractionDataset, out: W) -> Result<()> {
        write_entries_csv(ds, self.iter(), out)
    }

    /// JSON array of `{source, target, r, local_ctr, support}` objects.
    pub fn write_json<W: Write>(&self, ds: &InteractionDataset, out: W) -> Result<()> {
        write_entries_json(ds, self.iter(), out)
    }
}

/// Writes correlation entries as CSV, `r` and `local_ctr` with six decimals.
pub fn write_entries_csv<'a, W, I>(ds: &InteractionDataset, entries: I, out: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a CorrelationEntry>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source", "target", "r", "local_ctr", "support"])?;
    for e in entries {
        w.write_record([
            ds.item_key(e.source).unwrap_or_default(),
            ds.item_key(e.target).unwrap_or_default(),
            &format!("{:.6}", e.r),
            &format!("{:.6}", e.local_ctr),
            &e.support.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_entries_json<'a, W, I>(ds: &InteractionDataset, entries: I, out: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a CorrelationEntry>,
{
    #[derive(Serialize)]
    struct Row<'a> {
        source: &'a str,
        target: &'a str,
        r: f64,
        local_ctr: f64,
        support: u32,
    }
    let rows: Vec<Row<'_>> = entries
        .into_iter()
        .map(|e| Row {
            source: ds.item_key(e.source).unwrap_or_default(),
            target: ds.item_key(e.target).unwrap_or_default(),
            r: e.r,
            local_ctr: e.local_ctr,
            support: e.support,
        })
        .collect();
    serde_json::to_writer(out, &rows)?;
    Ok(())
}

fn rank_order(a: &CorrelationEntry, b: &CorrelationEntry) -> std::cmp::Ordering {
    b.r.total_cmp(&a.r)
        .then(b.support.cmp(&a.support))
        .then(a.target.cmp(&b.target))
}

/// Builds a [`CorrelationIndex`].
#[derive(Debug, Clone, Default)]
pub struct IndexBuilder {
    theta1: usize,
    sources: Option<Vec<ItemId>>,
    workers: Option<usize>,
}

impl IndexBuilder {
    pub fn new(theta1: usize) -> Self {
        IndexBuilder { theta1, ..Default::default() }
    }

    /// Restricts the index to these sources; default is every item.
    pub fn sources(mut self, sources: Vec<ItemId>) -> Self {
        self.sources = Some(sources);
        self
    }

    /// Runs the build on a dedicated pool of `n` threads. The result does not
    /// depend on `n`.
    pub fn workers(mut self, n: usize) -> Self {
        self.workers = Some(n);
        self
    }

    pub fn build(&self, ds: &InteractionDataset, exp: &ExposureModel) -> Result<CorrelationIndex> {
        match self.workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| LcfError::InvalidArgument(format!("thread pool: {e}")))?
                .install(|| self.build_inner(ds, exp)),
            None => self.build_inner(ds, exp),
        }
    }

    fn build_inner(&self, ds: &InteractionDataset, exp: &ExposureModel) -> Result<CorrelationIndex> {
        let mut sources: Vec<ItemId> = match &self.sources {
            Some(s) => s.clone(),
            None => (0..ds.n_items() as ItemId).collect(),
        };
        sources.sort_unstable();
        sources.dedup();
        for &i in &sources {
            ds.liked_set(i)?;
        }

        // CTRs of items with empty exposure never get used: their support is 0.
        let ctrs: Vec<f64> = (0..ds.n_items() as ItemId)
            .map(|j| match exp.exposure_set(ds, j) {
                Ok(e) if !e.is_empty() => Ok(rate(ds.liked_unchecked(j).len(), e.len())),
                Ok(_) => Ok(f64::NAN),
                Err(err) => Err(err),
            })
            .collect::<Result<_>>()?;

        let theta1 = self.theta1;
        let built: Vec<(ItemId, Vec<CorrelationEntry>)> = sources
            .par_iter()
            .map_init(
                || vec![0u32; ds.n_items()],
                |counter, &i| source_entries(ds, exp, &ctrs, i, theta1, counter).map(|e| (i, e)),
            )
            .collect::<Result<_>>()?;

        let sources = built
            .into_iter()
            .map(|(i, mut entries)| {
                entries.sort_by(rank_order);
                let mut by_target: Vec<u32> = (0..entries.len() as u32).collect();
                by_target.sort_unstable_by_key(|&p| entries[p as usize].target);
                (i, SourceEntries { entries, by_target })
            })
            .collect();
        Ok(CorrelationIndex { theta1, sources })
    }
}

fn source_entries(
    ds: &InteractionDataset,
    exp: &ExposureModel,
    ctrs: &[f64],
    i: ItemId,
    theta1: usize,
    counter: &mut [u32],
) -> Result<Vec<CorrelationEntry>> {
    let li = ds.liked_unchecked(i);
    let n_items = ds.n_items() as ItemId;
    if exp.is_full() {
        let support = li.len();
        if support <= theta1 {
            return Ok(Vec::new());
        }
        let row = cooccurrence_row(ds, i, counter);
        let mut row = row.into_iter().peekable();
        let mut out = Vec::with_capacity(n_items as usize - 1);
        for j in 0..n_items {
            let hits = match row.peek() {
                Some(&(t, c)) if t == j => {
                    row.next();
                    c as usize
                }
                _ => 0,
            };
            if j != i {
                out.push(CorrelationEntry::from_counts(i, j, PairCounts { hits, support }, ctrs[j as usize]));
            }
        }
        Ok(out)
    } else {
        let mut out = Vec::new();
        for j in (0..n_items).filter(|&j| j != i) {
            let support = exp.exposure_set(ds, j)?.intersect_count(li);
            if support > theta1 {
                let hits = sets::intersect_count(li, ds.liked_unchecked(j));
                out.push(CorrelationEntry::from_counts(i, j, PairCounts { hits, support }, ctrs[j as usize]));
            }
        }
        Ok(out)
    }
}

/// Index over `sources` (every item when `None`) with threshold `theta1`.
pub fn build_correlation_index(
    ds: &InteractionDataset,
    exp: &ExposureModel,
    theta1: usize,
    sources: Option<&[ItemId]>,
) -> Result<CorrelationIndex> {
    let mut b = IndexBuilder::new(theta1);
    if let Some(s) = sources {
        b = b.sources(s.to_vec());
    }
    b.build(ds, exp)
}

/// The `k` highest-ranked targets for source `i`.
pub fn item_item_topk(index: &CorrelationIndex, i: ItemId, k: usize) -> Result<&[CorrelationEntry]> {
    let entries = index.entries(i)?;
    Ok(&entries[..k.min(entries.len())])
}
