//! From blobs to the initial tracklet set: foreground tunnels, lanes,
//! majority-mapped tracklets and the confidence forest that filters them.

mod build;
mod confidence;
pub mod forest;
mod track;
mod tunnel;

pub use build::{build_tracklets, fill_lane, BuildOutcome};
pub use confidence::{filter_tracks, score_tracklets, train_confidence, ConfidenceModel};
pub use track::{
    Annotation, Connection, ConnectionSource, TrackDocument, TrackState, Tracklet, TRACK_DOCUMENT_VERSION,
};
pub use tunnel::{build_tunnels, label_image, partition_lanes, Lane, NodeRef, TunnelGraph};
