//! Local collaborative filtering over implicit feedback.
//!
//! The crate turns a log of positive user actions into
//!
//! * item-to-item correlation coefficients, the gap between the click-through
//!   rate of an item inside the population that liked another item and its
//!   global click-through rate ([`correlate`]),
//! * per-user click-through probability predictions that shift an item's
//!   global rate by the averaged correlations of the user's history
//!   ([`predict`]),
//! * a recommendation-probability layer that shapes a user's feed from a
//!   power-law fit of their predicted probabilities ([`recprob`]),
//!
//! together with the offline tooling used to study them: cross-validated hit
//! ratio sweeps ([`eval`]) and CTR estimator stability simulation
//! ([`stability`]).

pub mod corpus;
pub mod correlate;
pub mod error;
pub mod eval;
pub mod predict;
pub mod recprob;
pub mod sets;
pub mod stability;

pub use corpus::{
    dataset_stats, ingest_interactions, DatasetStats, ExposureModel, ExposureSet, IngestConfig,
    InteractionDataset, InteractionRecord,
};
pub use correlate::{
    asymmetry_ratio, build_correlation_index, correlation, global_ctr, item_item_topk, local_ctr,
    CorrelationEntry, CorrelationIndex, ItemStats,
};
pub use error::{LcfError, Result};
pub use eval::{
    evaluate_hr, kfold_split, sweep_personalization, EvalEntry, EvalReport, FoldAssignment, FoldResult,
    SweepConfig,
};
pub use predict::{
    effective_history, predict_ctp, recommend_topk, Ctp, CtpPrediction, PredictionConfig,
    Predictor, ThresholdMode,
};
pub use recprob::{
    draw_feed, fit_ctp_distribution, recommendation_probability, FeedDecision, PowerLawFit,
    RecommendationPolicy, TargetDensity,
};
pub use stability::{binary_mad, exact_ctr_mae, simulate_ctr_mae, StabilityConfig, StabilityReport};

/// Dense user ordinal.
pub type UserId = u32;
/// Dense item ordinal.
pub type ItemId = u32;
