//! Belief-function action recognition with temporal filtering.
//!
//! Parameters extracted from video are turned into binary mass functions
//! ([`fuzzify`]), fused per action with AND/OR rules ([`fusion`]) and
//! smoothed over time by a CUSUM-driven credal filter ([`filter`]).
//! [`eval`] scores frame decisions against annotated segments and
//! [`pipeline`] strings everything together.

pub mod belief;
pub mod eval;
pub mod filter;
pub mod fusion;
pub mod fuzzify;
pub mod pipeline;
pub mod synthetic;
pub mod trace;

pub use belief::{BeliefError, Frame, Hypothesis, MassDistribution, Subset};
pub use eval::{decide, gain_report, segment_metrics, EvalReport, SegmentAnnotation, SegmentMetrics};
pub use filter::{
    run_batch, select_initial_model, BatchOutput, EvolutionModel, FilterConfig, FilterError,
    FilterEvent, FilterState,
};
pub use fusion::{evaluate_rule, fuse_frame, FrameEvidence, RuleExpr};
pub use fuzzify::{fuzzify_value, FuzzyPartition, Trapezoid};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineInput, RunOptions};
pub use synthetic::{generate_synthetic, SyntheticSpec};
