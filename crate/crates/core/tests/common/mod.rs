#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;

use indexmap::IndexSet;
use lcf::{ingest_interactions, ExposureModel, IngestConfig, InteractionDataset, ItemId, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOY4_CSV: &str = "\
u1,a,purchase,1.0,0
u1,b,purchase,1.0,0
u2,a,purchase,1.0,0
u2,b,purchase,1.0,0
u3,a,purchase,1.0,0
u4,c,purchase,1.0,0
";

pub fn toy4() -> InteractionDataset {
    ingest_interactions(TOY4_CSV.as_bytes(), &IngestConfig::default()).unwrap()
}

fn tables(n_users: usize, n_items: usize) -> (IndexSet<String>, IndexSet<String>) {
    (
        (0..n_users).map(|u| format!("u{u}")).collect(),
        (0..n_items).map(|i| format!("i{i}")).collect(),
    )
}

/// Random dataset with at most `max_users` users and `max_items` items; every
/// user and item has at least one interaction.
pub fn random_small(seed: u64, max_users: usize, max_items: usize) -> (InteractionDataset, BTreeSet<(UserId, ItemId)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = rng.random_range(2..=max_users);
    let n_items = rng.random_range(2..=max_items);
    let density = rng.random_range(0.15..0.8);
    let mut pairs = BTreeSet::new();
    for u in 0..n_users as u32 {
        for i in 0..n_items as u32 {
            if rng.random::<f64>() < density {
                pairs.insert((u, i));
            }
        }
    }
    for u in 0..n_users as u32 {
        if !pairs.iter().any(|p| p.0 == u) {
            pairs.insert((u, rng.random_range(0..n_items as u32)));
        }
    }
    for i in 0..n_items as u32 {
        if !pairs.iter().any(|p| p.1 == i) {
            pairs.insert((rng.random_range(0..n_users as u32), i));
        }
    }
    let (users, items) = tables(n_users, n_items);
    let ds = InteractionDataset::from_pairs(users, items, pairs.iter().copied()).unwrap();
    (ds, pairs)
}

/// Explicit exposure: each item's likers plus a random subset of the others.
pub fn random_exposure(ds: &InteractionDataset, seed: u64) -> (ExposureModel, Vec<BTreeSet<UserId>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE0E0);
    let sets: Vec<BTreeSet<UserId>> = (0..ds.n_items() as ItemId)
        .map(|i| {
            let liked = ds.liked_set(i).unwrap();
            (0..ds.n_users() as UserId)
                .filter(|u| liked.contains(u) || rng.random::<f64>() < 0.5)
                .collect()
        })
        .collect();
    let model = ExposureModel::explicit(ds, sets.iter().map(|s| Some(s.iter().copied().collect())).collect()).unwrap();
    (model, sets)
}

/// Clustered synthetic log shaped like a game-store purchase log: heavy-tailed
/// item popularity and history lengths, users drawn towards one taste group.
pub fn synthetic_store(seed: u64, n_users: usize, n_items: usize, n_groups: usize, affinity: f64) -> InteractionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // popularity weights ~ rank^-1.1
    let weights: Vec<f64> = (0..n_items).map(|r| 1.0 / ((r + 1) as f64).powf(1.1)).collect();
    let group_of: Vec<usize> = (0..n_items).map(|_| rng.random_range(0..n_groups)).collect();
    let cumulative = |idx: &[usize]| {
        let mut acc = 0.0;
        idx.iter().map(|&i| { acc += weights[i]; acc }).collect::<Vec<f64>>()
    };
    let all: Vec<usize> = (0..n_items).collect();
    let all_cum = cumulative(&all);
    let groups: Vec<Vec<usize>> = (0..n_groups).map(|g| all.iter().copied().filter(|&i| group_of[i] == g).collect()).collect();
    let group_cum: Vec<Vec<f64>> = groups.iter().map(|g| cumulative(g)).collect();
    let draw = |rng: &mut ChaCha8Rng, idx: &[usize], cum: &[f64]| {
        let x = rng.random::<f64>() * cum[cum.len() - 1];
        idx[cum.partition_point(|&c| c < x).min(idx.len() - 1)]
    };
    let mut pairs = Vec::new();
    for u in 0..n_users as u32 {
        let g = rng.random_range(0..n_groups);
        // history length: discrete Pareto-ish, mean about 10
        let len = ((1.0 - rng.random::<f64>()).powf(-1.0 / 1.4) * 3.0) as usize;
        let len = len.clamp(1, n_items / 4);
        let mut seen = BTreeSet::new();
        let mut attempts = 0;
        while seen.len() < len && attempts < len * 20 {
            attempts += 1;
            let item = if rng.random::<f64>() < affinity && !groups[g].is_empty() {
                draw(&mut rng, &groups[g], &group_cum[g])
            } else {
                draw(&mut rng, &all, &all_cum)
            };
            seen.insert(item as u32);
        }
        pairs.extend(seen.into_iter().map(|i| (u, i)));
    }
    let (users, items) = tables(n_users, n_items);
    InteractionDataset::from_pairs(users, items, pairs).unwrap()
}

/// Path of the Kaggle steam-200k log, from `LCF_STEAM_CSV` or `data/steam-200k.csv`
/// at the workspace root.
pub fn steam_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("LCF_STEAM_CSV") {
        return Some(PathBuf::from(p));
    }
    let local = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/steam-200k.csv");
    local.exists().then_some(local)
}

pub fn steam() -> Option<&'static InteractionDataset> {
    static DS: OnceLock<Option<InteractionDataset>> = OnceLock::new();
    DS.get_or_init(|| {
        let path = steam_path()?;
        let file = std::fs::File::open(&path).unwrap_or_else(|e| panic!("cannot open {}: {e}", path.display()));
        Some(ingest_interactions(std::io::BufReader::new(file), &IngestConfig::default()).unwrap())
    })
    .as_ref()
}

/// Brute-force reference built from raw pair sets.
pub struct Oracle {
    pub n_users: usize,
    pub n_items: usize,
    pub liked: Vec<BTreeSet<UserId>>,
    pub history: Vec<BTreeSet<ItemId>>,
    /// `None` means full exposure.
    pub exposure: Option<Vec<BTreeSet<UserId>>>,
}

impl Oracle {
    pub fn new(n_users: usize, n_items: usize, pairs: &BTreeSet<(UserId, ItemId)>, exposure: Option<Vec<BTreeSet<UserId>>>) -> Self {
        let mut liked = vec![BTreeSet::new(); n_items];
        let mut history = vec![BTreeSet::new(); n_users];
        for &(u, i) in pairs {
            liked[i as usize].insert(u);
            history[u as usize].insert(i);
        }
        Oracle { n_users, n_items, liked, history, exposure }
    }

    fn exposed(&self, j: ItemId) -> BTreeSet<UserId> {
        match &self.exposure {
            None => (0..self.n_users as UserId).collect(),
            Some(e) => e[j as usize].clone(),
        }
    }

    pub fn ctr(&self, j: ItemId) -> f64 {
        self.liked[j as usize].len() as f64 / self.exposed(j).len() as f64
    }

    pub fn support(&self, i: ItemId, j: ItemId) -> usize {
        self.exposed(j).intersection(&self.liked[i as usize]).count()
    }

    /// `(r, local_ctr, support)`
    pub fn r(&self, i: ItemId, j: ItemId) -> (f64, f64, usize) {
        let support = self.support(i, j);
        let hits = self.liked[j as usize].intersection(&self.liked[i as usize]).count();
        let local = hits as f64 / support as f64;
        (local - self.ctr(j), local, support)
    }

    /// Every `(i, j)` with `i != j` and support above `theta1`.
    pub fn index(&self, theta1: usize) -> Vec<(ItemId, ItemId, f64, f64, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n_items as ItemId {
            for j in 0..self.n_items as ItemId {
                if i != j && self.support(i, j) > theta1 {
                    let (r, l, s) = self.r(i, j);
                    out.push((i, j, r, l, s));
                }
            }
        }
        out
    }

    /// `(raw_score, n_effective)` under lenient or strict thresholding.
    pub fn predict(&self, u: UserId, j: ItemId, p: f64, theta2: usize, strict: bool) -> (f64, usize) {
        let mut sum = 0.0;
        let mut n = 0;
        for &i in &self.history[u as usize] {
            if self.support(i, j) > theta2 {
                sum += self.r(i, j).0;
                n += 1;
            } else if strict {
                return (self.ctr(j), 0);
            }
        }
        if n == 0 {
            (self.ctr(j), 0)
        } else {
            (self.ctr(j) + (p / n as f64) * sum, n)
        }
    }

    /// Items outside the user's history ranked by global rate, ties by ordinal.
    pub fn popularity(&self, u: UserId) -> Vec<ItemId> {
        let mut items: Vec<ItemId> = (0..self.n_items as ItemId).filter(|j| !self.history[u as usize].contains(j)).collect();
        items.sort_by(|a, b| self.ctr(*b).total_cmp(&self.ctr(*a)).then(a.cmp(b)));
        items
    }
}

pub fn oracle_for(ds: &InteractionDataset, exposure: Option<Vec<BTreeSet<UserId>>>) -> Oracle {
    let pairs: BTreeSet<(UserId, ItemId)> = ds.pairs().collect();
    Oracle::new(ds.n_users(), ds.n_items(), &pairs, exposure)
}

/// Compares the correlation index and every CTP prediction against the oracle,
/// bit for bit. Checks the index-backed, co-occurrence and direct paths.
pub fn check_against_oracle(
    ds: &InteractionDataset,
    exp: &ExposureModel,
    oracle: &Oracle,
    theta1: usize,
    theta2: usize,
    p: f64,
) -> Result<(), String> {
    let index = lcf::build_correlation_index(ds, exp, theta1, None).map_err(|e| e.to_string())?;
    let expected = oracle.index(theta1);
    let got: Vec<_> = index.iter().map(|e| (e.source, e.target, e.r, e.local_ctr, e.support as usize)).collect();
    let key = |t: &(ItemId, ItemId, f64, f64, usize)| (t.0, t.1);
    let mut got_sorted = got.clone();
    got_sorted.sort_by_key(key);
    if got_sorted.len() != expected.len() {
        return Err(format!("index has {} entries, oracle {}", got_sorted.len(), expected.len()));
    }
    for (g, e) in got_sorted.iter().zip(&expected) {
        if key(g) != key(e) || g.2.to_bits() != e.2.to_bits() || g.3.to_bits() != e.3.to_bits() || g.4 != e.4 {
            return Err(format!("index entry {g:?} != oracle {e:?}"));
        }
    }
    for mode in [lcf::ThresholdMode::Lenient, lcf::ThresholdMode::Strict] {
        let strict = mode == lcf::ThresholdMode::Strict;
        let cfg = lcf::PredictionConfig { p, theta2, mode, clamp: true };
        let direct = lcf::Predictor::new(ds, exp);
        let indexed = lcf::Predictor::new(ds, exp).with_index(&index);
        let cooc = lcf::Predictor::new(ds, exp).with_cooccurrence();
        for u in 0..ds.n_users() as UserId {
            let mut via_basis = std::collections::BTreeMap::new();
            for pred in cooc.basis(u, &cfg).map_err(|e| e.to_string())?.predictions(p) {
                via_basis.insert(pred.item, pred);
            }
            for j in 0..ds.n_items() as ItemId {
                let consumed = oracle.history[u as usize].contains(&j);
                let (raw, n) = oracle.predict(u, j, p, theta2, strict);
                for (name, predictor) in [("direct", &direct), ("indexed", &indexed)] {
                    match predictor.predict(u, j, &cfg).map_err(|e| e.to_string())?.prediction() {
                        None if consumed => {}
                        Some(pr) if !consumed && pr.raw_score.to_bits() == raw.to_bits() && pr.n_effective == n => {}
                        other => return Err(format!("{name} u{u} i{j} strict={strict}: {other:?}, oracle ({raw}, {n}) consumed={consumed}")),
                    }
                }
                match via_basis.get(&j) {
                    None if consumed => {}
                    Some(pr) if !consumed && pr.raw_score.to_bits() == raw.to_bits() && pr.n_effective == n => {}
                    other => return Err(format!("basis u{u} i{j} strict={strict}: {other:?}, oracle ({raw}, {n})")),
                }
            }
        }
    }
    Ok(())
}
