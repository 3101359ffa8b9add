//! Guided reviews, inference on review answers and manual editing.

mod apply;
mod interpolate;
mod manual;
mod review;

pub use apply::{
    apply_review_answer, join_checks, lerp_annotation, rank_candidates, AnswerReport, Candidate, JoinChecks, ReviewAnswer,
    ReviewOutcome, Special,
};
pub use interpolate::{interpolate_gap, interpolate_gap_with, linear_gap, GapFill, GapModel};
pub use manual::{adjust, apply_manual, split_tracklet, user_state, ManualOp};
pub use review::{
    connection_review_id, create_reviews, fragment_review_id, keyframes, region_confidence, Review, ReviewKind, ReviewStatus,
};
