//! Depth layers from a monocular, linearly moving camera, colour+depth
//! channel stacks, exposure rating, and COCO-protocol mask evaluation.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod color;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod geometry;
pub mod pipeline;
pub mod raster;
pub mod stack;
pub mod stereo;
