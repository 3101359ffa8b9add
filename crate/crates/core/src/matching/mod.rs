//! Tracklet association by agreement between forward and backward
//! sequential trackers, each optimising a whole-frame target configuration
//! with a genetic algorithm.

mod appearance;
mod associate;
mod fitness;
mod ga;
mod sweep;

pub use appearance::{fit_target, sample_delta_stats, DeltaStats, PatchShape, Templates, SIGMA_FLOOR};
pub use associate::{
    concatenate, match_iteration, match_tracklets, AssociationGraph, IterationOutcome, JoinRecord, MatchInput,
    MatchOutcome, Vertex,
};
pub use fitness::{claim_foreground, fit_global};
pub use ga::{ga_step, ActiveTarget, Endpoint, GaContext, MotionStats, MIN_SIGMA_POS, MIN_SIGMA_THETA};
pub use sweep::{prune_targets, run_direction, Direction, Landing, SweepInput};
