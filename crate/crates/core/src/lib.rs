//! Source/target disambiguation of copy-move forgeries.
//!
//! Given an image and a mask marking two nearly duplicate regions, the
//! toolkit decides which region was copied (the source) and which was pasted
//! (the target). Resampling a region and then resampling it back degrades it
//! more than a single resampling does, so replicating the target from the
//! source fits better than the reverse. The crate also generates labeled
//! synthetic forgeries to train and evaluate the scorers.

pub mod disambig;
pub mod foa;
pub mod geometry;
pub mod imaging;
pub mod pipeline;
pub mod synthgen;
pub mod warp;
