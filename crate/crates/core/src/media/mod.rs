//! Frame sequences, frames and binary masks.

mod frame;
mod mask;
mod sequence;

pub use frame::{ColorMode, Frame};
pub use mask::{BinaryMask, MaskStore};
pub use sequence::{open_sequence, ChunkView, FrameSequence, InMemoryVideo, Manifest, Video};
