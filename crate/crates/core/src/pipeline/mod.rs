//! Stage orchestration and project persistence.

mod project;
mod run;
pub mod stages;

use serde::{Deserialize, Serialize};

pub use project::{BatchOp, OpResult, Project, ProjectMeta, PROJECT_VERSION};
pub use run::{track_video, ChunkSummary, CorrectionModel, Progress, TrackingRun};

/// Where a project stands; only ever moves forward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Created,
    Marked,
    Foreground,
    Detected,
    Built,
    Matched,
    Correcting,
}
