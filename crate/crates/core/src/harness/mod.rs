//! Synthetic scenes, evaluation metrics, the simulated annotator and the
//! annotation-cost model.

pub mod annotator;
pub mod cost;
pub mod metrics;
pub mod synth;

pub use annotator::{answer_review, simulate_reviews, SimulationContext, Transcript, TranscriptEntry};
pub use cost::{estimate_cost, simulate_manual_annotation, ManualSimulation, SECONDS_PER_ANNOTATION, SECONDS_PER_SWITCH};
pub use metrics::{evaluate, identity_changes, match_frames, MatchPair, MetricsReport};
pub use synth::{generate_scene, marks_from_gt, write_scene, GroundTruth, GtState, GtTarget, Motion, Scene, SceneSpec};
