//! Experiment orchestration: fold planning, synthetic corpus generation,
//! and cross-validation over the condition grid.

mod folds;
mod run;
mod synth;

pub use folds::{make_folds, FoldPlan, FoldSpec};
pub use run::{
    classwise_csv, detection_classes_present, full_grid, results_csv, run_experiment, Condition,
    ConditionResult, ExperimentResults, FoldRun, RunSettings,
};
pub use synth::{synth_corpus, SynthSpec};
