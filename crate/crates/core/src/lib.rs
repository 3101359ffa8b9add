//! Batch multi-object tracking driven by sparse user marks.
//!
//! The crate implements the whole mark → track → correct flow for
//! static-camera frame sequences:
//!
//! - [`marking`]: user marks, mark-frame scheduling and parameter derivation
//! - [`foreground`]: background subtraction plus swarm-tuned morphological refinement
//! - [`detection`]: blob proposals, area/ratio gating and a HOG + linear SVM classifier
//! - [`tracklets`]: foreground tunnels, lanes, initial tracklets and the confidence forest
//! - [`matching`]: forward/backward genetic-algorithm trackers and cycle-based association
//! - [`chunking`]: chunk planning and nearest-neighbour stitching for long videos
//! - [`correction`]: guided reviews, review inference and the five manual operations
//! - [`harness`]: synthetic scenes, evaluation metrics, simulated annotators and cost model
//!
//! [`pipeline`] ties the stages together behind a persisted [`pipeline::Project`].

pub mod chunking;
pub mod config;
pub mod correction;
pub mod detection;
pub mod error;
pub mod foreground;
pub mod geometry;
pub mod harness;
pub mod marking;
pub mod matching;
pub mod media;
pub mod pipeline;
pub mod rng;
pub mod tracklets;

pub use config::Config;
pub use error::{Error, Result};
pub use geometry::{Point, Pose};
