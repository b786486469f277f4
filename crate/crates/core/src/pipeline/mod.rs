//! Stage-ordered decoding pipelines and the leave-one-subject-out harness.

pub mod config;
pub mod eval;
pub mod run;

pub use config::{CspParams, EaParams, EaReference, LaParams, LdaParams, PipelineConfig, Stage, PRESET_NAMES};
pub use eval::{
    cell_seed, compare_configs, loso_evaluate, select_calibration_block, Aggregates, Comparison, EvalReport,
    EvalSettings, RunRecord, Summary, DEFAULT_M_VALUES, DEFAULT_REPEATS,
};
pub use run::{build_pipeline, Calibration, Pipeline, Prepared, RunOutcome, RunStatus};
