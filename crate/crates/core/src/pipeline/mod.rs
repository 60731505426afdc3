//! Windowing, oversampling, training with early stopping, evaluation and
//! grid search.

mod evaluate;
mod grid;
mod metrics;
mod smote;
mod train;
mod windows;

pub use evaluate::{
    evaluate, group_auc, group_scores, report_from_scores, score_phase, selection_score, split_by_birth,
    split_seen_unseen, AucSummary, EvalReport, Evaluation, NodeGroup, NodeSplit, Phase, ScoredNode,
};
pub use grid::{grid_search, select_best, write_results_csv, GridOutcome, GridRow, GridSpec, RESULTS_HEADER};
pub use metrics::{auc, bootstrap_ci, BootstrapCi, BootstrapConfig};
pub use smote::{smote_oversample, SmoteOutput, SyntheticOrigin, DEFAULT_SMOTE_K};
pub use train::{train_model, train_model_with, validate_model, EpochRecord, TrainConfig, TrainOutcome, Validation};
pub use windows::{make_windows, MonthRange, WindowSpec, DEFAULT_WINDOW_LEN};
