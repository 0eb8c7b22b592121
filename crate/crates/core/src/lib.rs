//! Adaptive-resolution intra frame coding.
//!
//! Every 64x64 coding tree unit (CTU) of a YUV 4:2:0 frame is either coded at
//! full resolution or down-sampled by two, coded at low resolution and then
//! up-sampled back, either with a fixed DCT interpolation filter or with a
//! small trained convolutional network. The encoder picks the resolution per
//! CTU by rate-distortion cost and the up-sampler per channel by distortion.

pub mod coder;
pub mod error;
pub mod eval;
pub mod frame;
pub mod intra;
pub mod nn;
pub mod resample;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use frame::{CtuGrid, Frame, Plane};
