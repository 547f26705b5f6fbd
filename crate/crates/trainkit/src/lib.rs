//! Class-imbalance tooling and evaluation: inverse-frequency class weights,
//! stratified splits, downsampling, the two-phase training recipe, capped
//! merging of reviewed synthetic examples, and accuracy / macro-F1 reports.

mod augment;
mod error;
mod imbalance;
mod metrics;
mod train;

pub use augment::{max_synthetic, merge_synthetic, MergeOutcome, DEFAULT_CAP_FRACTION};
pub use error::{Error, Result};
pub use imbalance::{
    compute_class_weights, downsample, label_counts, stratified_split, test_count, ClassWeights, SplitPlan,
    TwoPhasePlan, DEFAULT_LAMBDA,
};
pub use metrics::{evaluate, render_csv, render_table, EvalReport};
pub use textprep::{TaskName, TaskSpec};
pub use train::{accuracy, train, two_phase_train, PhaseOutcome, TrainConfig, TrainSummary, TwoPhaseOutcome};
