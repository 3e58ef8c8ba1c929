use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lcf::correlate::{write_entries_csv, write_entries_json, IndexBuilder};
use lcf::predict::write_recommendations_csv;
use lcf::recprob::{write_feed_csv, DEFAULT_MIN_FIT_SIZE};
use lcf::{
    dataset_stats, draw_feed, fit_ctp_distribution, global_ctr, ingest_interactions, simulate_ctr_mae,
    sweep_personalization, CtpPrediction, ExposureModel, IngestConfig, InteractionDataset, ItemId, LcfError,
    PredictionConfig, Predictor, RecommendationPolicy, StabilityConfig, SweepConfig, TargetDensity,
    ThresholdMode, UserId,
};

use crate::output::{emit, ensure_dir, slug, write_atomic};

pub enum CliError {
    /// Bad flag values; exit status 2.
    Usage(String),
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

impl From<LcfError> for CliError {
    fn from(e: LcfError) -> Self {
        CliError::Failed(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Parser, Debug)]
#[command(name = "lcf", version, about = "Local collaborative filtering over implicit feedback")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse an interaction log and write the canonical JSON snapshot.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print user, item and interaction counts and sparsity.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Item-to-item correlation lists.
    ItemItem {
        #[command(flatten)]
        data: DataArgs,
        /// Source item title (exact or unique prefix); repeatable. All items when omitted.
        #[arg(long)]
        item: Vec<String>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 400)]
        theta1: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Top-K user recommendations from predicted click-through probabilities.
    Recommend(RecommendArgs),
    /// Cross-validated hit ratio over a grid of personalization coefficients.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Directory for `eval_folds.csv` and `eval_summary.csv`; summary goes to stdout when omitted.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Mean absolute error of the sample CTR versus sample size.
    Stability {
        #[command(flatten)]
        stab: StabilityArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Stats, the three item-item lists, the stability sweep and the p sweep in one go.
    ReproducePaper {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 400)]
        theta1: usize,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, default_value_t = 300_000)]
        trials: u64,
        #[arg(long, value_delimiter = ',', default_values_t = FIGURE_SIZES.to_vec())]
        sizes: Vec<u64>,
    },
}

const FIGURE_SIZES: [u64; 14] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 400, 512, 1024, 1600, 2048];
const TARGET_GAMES: [&str; 3] = ["The Elder Scrolls V Skyrim", "Dota 2", "Counter-Strike Global Offensive"];

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Interaction CSV, or a `.json` snapshot written by `ingest`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "purchase")]
    behavior: String,
    /// Treat repeated rows as an error instead of collapsing them.
    #[arg(long)]
    no_dedup: bool,
}

impl DataArgs {
    fn load(&self) -> CliResult<InteractionDataset> {
        let path = &self.input;
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let ds = if path.extension().is_some_and(|e| e == "json") {
            let text = std::io::read_to_string(BufReader::new(file))
                .with_context(|| format!("cannot read {}", path.display()))?;
            InteractionDataset::from_json(&text).with_context(|| format!("in {}", path.display()))?
        } else {
            let cfg = IngestConfig { behavior: self.behavior.clone(), dedup: !self.no_dedup };
            ingest_interactions(BufReader::new(file), &cfg).with_context(|| format!("in {}", path.display()))?
        };
        Ok(ds)
    }
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, default_value_t = 1.5)]
    p: f64,
    #[arg(long, default_value_t = 16)]
    theta2: usize,
    /// Require every history item to pass theta2.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct RecommendArgs {
    #[command(flatten)]
    data: DataArgs,
    /// User key; repeatable. All users when omitted.
    #[arg(long)]
    user: Vec<String>,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[command(flatten)]
    predict: PredictArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also draw a feed per user and write `user,item,probability,included` here.
    #[arg(long)]
    feed_output: Option<PathBuf>,
    /// Per-user power-law fits as JSON.
    #[arg(long)]
    fit_output: Option<PathBuf>,
    /// Feed target density: `uniform:LO:HI` or `power-law:ALPHA`.
    #[arg(long, default_value = "uniform:0:1")]
    target: String,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_FIT_SIZE)]
    min_fit: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Recommendation list length.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long, value_delimiter = ',')]
    p_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 16)]
    theta2: usize,
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl SweepArgs {
    fn config(&self) -> CliResult<SweepConfig> {
        if self.folds < 2 {
            return usage(format!("--folds must be at least 2, got {}", self.folds));
        }
        let p_grid = self.p_grid.clone().unwrap_or_else(SweepConfig::default_grid);
        if p_grid.is_empty() {
            return usage("--p-grid is empty");
        }
        if let Some(p) = p_grid.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return usage(format!("--p-grid values must be finite and >= 0, got {p}"));
        }
        Ok(SweepConfig {
            n_folds: self.folds,
            top_k: self.top,
            p_grid,
            theta2: self.theta2,
            mode: mode(self.strict),
            seed: self.seed,
        })
    }
}

#[derive(Args, Debug)]
struct StabilityArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [16u64, 64, 400, 1600])]
    sizes: Vec<u64>,
    #[arg(long, default_value_t = 300_000)]
    trials: u64,
    #[arg(long, default_value_t = 0.5)]
    ctr: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl StabilityArgs {
    fn config(&self) -> CliResult<StabilityConfig> {
        let cfg = StabilityConfig {
            true_ctr: self.ctr,
            sample_sizes: self.sizes.clone(),
            trials: self.trials,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn mode(strict: bool) -> ThresholdMode {
    if strict {
        ThresholdMode::Strict
    } else {
        ThresholdMode::Lenient
    }
}

fn parse_target(spec: &str) -> CliResult<TargetDensity> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| CliError::Usage(format!("bad number {s:?} in --target")));
    let target = match parts.as_slice() {
        ["uniform", lo, hi] => TargetDensity::Uniform { lo: num(lo)?, hi: num(hi)? },
        ["power-law", alpha] => TargetDensity::PowerLaw { alpha: num(alpha)? },
        _ => return usage(format!("--target must be uniform:LO:HI or power-law:ALPHA, got {spec:?}")),
    };
    Ok(target)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest { data, output } => {
            let ds = data.load()?;
            let json = ds.to_json()?;
            write_atomic(&output, |w| Ok(w.write_all(json.as_bytes())?))?;
            eprintln!("{}", dataset_stats(&ds));
        }
        Command::Stats { data, format } => {
            let ds = data.load()?;
            let stats = dataset_stats(&ds);
            emit(None, |w| {
                match format {
                    Format::Json => writeln!(w, "{}", serde_json::to_string(&stats)?)?,
                    Format::Csv => {
                        writeln!(w, "users,items,interactions,sparsity")?;
                        writeln!(w, "{},{},{},{:.6}", stats.n_users, stats.n_items, stats.n_interactions, stats.sparsity)?;
                    }
                    Format::Text => writeln!(w, "{stats}")?,
                }
                Ok(())
            })?;
        }
        Command::ItemItem { data, item, top, theta1, format, output } => {
            let ds = data.load()?;
            let sources = item
                .iter()
                .map(|title| ds.lookup_item(title))
                .collect::<lcf::Result<Vec<ItemId>>>()?;
            write_item_lists(&ds, &sources, top, theta1, format, output.as_deref())?;
        }
        Command::Recommend(args) => recommend(args)?,
        Command::Evaluate { data, sweep, output_dir } => {
            let cfg = sweep.config()?;
            let ds = data.load()?;
            let report = sweep_personalization(&ds, &cfg)?;
            match output_dir {
                Some(dir) => {
                    ensure_dir(&dir)?;
                    write_atomic(&dir.join("eval_folds.csv"), |w| Ok(report.write_folds_csv(w)?))?;
                    write_atomic(&dir.join("eval_summary.csv"), |w| Ok(report.write_summary_csv(w)?))?;
                }
                None => emit(None, |w| Ok(report.write_summary_csv(w)?))?,
            }
        }
        Command::Stability { stab, format, output } => {
            let cfg = stab.config()?;
            let report = simulate_ctr_mae(&cfg)?;
            emit(output.as_deref(), |w| {
                match format {
                    Format::Json => serde_json::to_writer(&mut *w, &report)?,
                    _ => report.write_csv(w)?,
                }
                Ok(())
            })?;
        }
        Command::ReproducePaper { data, output_dir, theta1, sweep, trials, sizes } => {
            let sweep_cfg = sweep.config()?;
            let stab_cfg = StabilityArgs { sizes, trials, ctr: 0.5, seed: sweep.seed }.config()?;
            let ds = data.load()?;
            ensure_dir(&output_dir)?;
            reproduce(&ds, &output_dir, theta1, &sweep_cfg, &stab_cfg)?;
        }
    }
    Ok(())
}

fn write_item_lists(
    ds: &InteractionDataset,
    sources: &[ItemId],
    top: usize,
    theta1: usize,
    format: Format,
    output: Option<&Path>,
) -> CliResult<()> {
    let exp = ExposureModel::Full;
    let mut builder = IndexBuilder::new(theta1);
    if !sources.is_empty() {
        builder = builder.sources(sources.to_vec());
    }
    let index = builder.build(ds, &exp)?;
    let mut order: Vec<ItemId> = if sources.is_empty() { index.sources().collect() } else { sources.to_vec() };
    order.dedup();
    let mut rows = Vec::new();
    for i in order {
        rows.extend_from_slice(lcf::item_item_topk(&index, i, top)?);
    }
    emit(output, |w| {
        match format {
            Format::Json => write_entries_json(ds, &rows, w)?,
            _ => write_entries_csv(ds, &rows, w)?,
        }
        Ok(())
    })?;
    Ok(())
}

fn recommend(args: RecommendArgs) -> CliResult<()> {
    let cfg = PredictionConfig {
        p: args.predict.p,
        theta2: args.predict.theta2,
        mode: mode(args.predict.strict),
        clamp: true,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let policy = RecommendationPolicy { target: parse_target(&args.target)?, scale_c: args.scale };
    policy.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let ds = args.data.load()?;
    let users: Vec<UserId> = if args.user.is_empty() {
        (0..ds.n_users() as UserId).collect()
    } else {
        args.user
            .iter()
            .map(|k| ds.user_id(k.trim()).ok_or_else(|| anyhow::anyhow!("unknown user {k:?}")))
            .collect::<anyhow::Result<_>>()?
    };
    let exp = ExposureModel::Full;
    let predictor = Predictor::new(&ds, &exp).with_cooccurrence();

    let mut lists: Vec<(UserId, Vec<CtpPrediction>)> = Vec::with_capacity(users.len());
    let mut feeds = Vec::new();
    let mut fits = Vec::new();
    let want_feed = args.feed_output.is_some() || args.fit_output.is_some();
    for &u in &users {
        let basis = predictor.basis(u, &cfg)?;
        lists.push((u, basis.top_k(cfg.p, args.top)));
        if !want_feed {
            continue;
        }
        let preds = basis.predictions(cfg.p);
        let clamped: Vec<f64> = preds.iter().map(|p| p.clamped_score).collect();
        let user_key = ds.user_key(u).unwrap_or_default().to_string();
        match fit_ctp_distribution(&clamped, args.min_fit) {
            Ok(fit) => {
                let cands: Vec<(ItemId, f64)> = preds.iter().map(|p| (p.item, p.clamped_score)).collect();
                let feed = draw_feed(&cands, &fit, &policy, args.seed.wrapping_add(u as u64));
                fits.push(json!({"user": user_key, "x_min": fit.x_min, "alpha": fit.alpha, "n_samples": fit.n_samples}));
                feeds.push((u, feed));
            }
            Err(e @ (LcfError::InsufficientData { .. } | LcfError::DegenerateDistribution)) => {
                eprintln!("warning: no feed for user {user_key}: {e}");
            }
            Err(e) => return Err(e.into()),
        }
    }

    let ds = &ds;
    emit(args.output.as_deref(), |w| {
        match args.format {
            Format::Json => {
                let rows: Vec<_> = lists
                    .iter()
                    .flat_map(|(u, list)| {
                        let user = ds.user_key(*u).unwrap_or_default();
                        list.iter().enumerate().map(move |(rank, p)| {
                            json!({
                                "user": user,
                                "rank": rank + 1,
                                "item": ds.item_key(p.item).unwrap_or_default(),
                                "raw_score": p.raw_score,
                                "clamped_score": p.clamped_score,
                                "n_effective": p.n_effective,
                                "fallback": p.fallback,
                            })
                        })
                    })
                    .collect();
                serde_json::to_writer(&mut *w, &rows)?;
            }
            _ => write_recommendations_csv(ds, &lists, w)?,
        }
        Ok(())
    })?;
    if let Some(path) = &args.fit_output {
        write_atomic(path, |w| Ok(serde_json::to_writer(w, &fits)?))?;
    }
    if let Some(path) = &args.feed_output {
        write_atomic(path, |w| Ok(write_feed_csv(ds, &feeds, w)?))?;
    }
    Ok(())
}

/// Exact or prefix lookup, then a match ignoring case and punctuation.
fn find_target(ds: &InteractionDataset, title: &str) -> CliResult<ItemId> {
    let err = match ds.lookup_item(title) {
        Ok(item) => return Ok(item),
        Err(e) => e,
    };
    let want = slug(title);
    let mut found = (0..ds.n_items() as ItemId).filter(|&i| ds.item_key(i).is_some_and(|k| slug(k) == want));
    match (found.next(), found.next()) {
        (Some(item), None) => Ok(item),
        _ => Err(err.into()),
    }
}

fn reproduce(
    ds: &InteractionDataset,
    dir: &Path,
    theta1: usize,
    sweep_cfg: &SweepConfig,
    stab_cfg: &StabilityConfig,
) -> CliResult<()> {
    let stats = dataset_stats(ds);
    println!("{stats}");
    write_atomic(&dir.join("stats.txt"), |w| Ok(writeln!(w, "{stats}")?))?;

    let exp = ExposureModel::Full;
    let mut ctr_rows = Vec::new();
    for title in TARGET_GAMES {
        let item = find_target(ds, title)?;
        ctr_rows.push((title, global_ctr(ds, &exp, item)?));
        let path = dir.join(format!("item_item_{}.csv", slug(title)));
        write_item_lists(ds, &[item], 10, theta1, Format::Csv, Some(&path))?;
    }
    write_atomic(&dir.join("target_ctr.csv"), |w| {
        writeln!(w, "item,global_ctr")?;
        for (title, ctr) in &ctr_rows {
            writeln!(w, "{title},{ctr:.6}")?;
        }
        Ok(())
    })?;

    let stab = simulate_ctr_mae(stab_cfg)?;
    write_atomic(&dir.join("stability.csv"), |w| Ok(stab.write_csv(w)?))?;

    let report = sweep_personalization(ds, sweep_cfg)?;
    write_atomic(&dir.join("eval_folds.csv"), |w| Ok(report.write_folds_csv(w)?))?;
    write_atomic(&dir.join("eval_summary.csv"), |w| Ok(report.write_summary_csv(w)?))?;
    if let Some(best) = report.best() {
        println!("best p = {} (HR@{} = {:.4})", best.p, report.top_k, best.mean_hr_micro);
    }
    Ok(())
}
