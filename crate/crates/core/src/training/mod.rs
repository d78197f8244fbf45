//! Training loop, median ensembles, zero-shot evaluation and the
//! block-count sweep.

mod config;
mod ensemble;
mod eval;
mod store;
mod sweep;
mod trainer;

pub use config::{EnsembleSpec, Profile, TrainConfig};
pub use ensemble::{ensemble_digest, ensemble_forecast, lookback_window, median_combine, member_forecasts};
pub use eval::{
    aggregate_rows, score_cases, zero_shot_eval, EvalCase, EvalReport, MetricRow, SourceEnsemble, TrainedSource,
    REPORT_SCHEMA_VERSION,
};
pub use sweep::{
    block_sweep, bootstrap_metric, SweepPair, SweepRow, SweepSpec, SweepTable, DEFAULT_BOOTSTRAP_RESAMPLES,
};
pub use store::{
    load_checkpoint_set, read_checkpoint_set, save_checkpoint_set, CheckpointSet, EnsembleEntry, MemberEntry, Precision,
    CHECKPOINT_SET_FILE, CHECKPOINT_SET_SCHEMA_VERSION,
};
pub use trainer::{
    default_workers, initial_model, train, train_ensemble, train_source, training_plan, MemberSummary, PlannedSplit,
    TrainOutcome,
};
