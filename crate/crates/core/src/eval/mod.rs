//! Evaluation: agreement statistics, classification metrics, rubric scoring
//! and pairwise graph judging.

mod agreement;
mod judge;
mod metrics;
mod rubric;

pub use agreement::{aggregate_mode, cohens_kappa, Annotation, AnnotationSet, ModeResult};
pub use judge::{
    judge_pair, parse_judge_reply, presentation_swapped, win_rate_table, Dimension, DimensionVerdict,
    JudgeKind, JudgeOutcome, Side, WinRateRow, WinRateTable,
};
pub use metrics::{classification_metrics, classification_metrics_with, fmt_metric, ClassMetrics, ClassificationReport};
pub use rubric::{parse_rubric_reply, rubric_score_summary, RubricScores, RUBRIC_DIMENSIONS};

use crate::llm::GatewayError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{0}")]
    Empty(String),
    #[error("agreement is undefined: expected chance agreement is 1")]
    DegenerateAgreement,
    #[error("graphs for narrative {0} are identical; refusing to judge")]
    DegeneratePair(String),
    #[error("judge reply for {narrative_id} lacks verdicts for: {}", missing.join(", "))]
    PartialVerdicts { narrative_id: String, missing: Vec<String>, raw: String },
    #[error("cannot parse reply {raw:?}: {message}")]
    Parse { raw: String, message: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}
