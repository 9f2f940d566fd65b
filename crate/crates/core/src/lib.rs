//! Bone-conducted speech enhancement: vocoder features, the dual-adversarial
//! cycle-consistent model, training, enhancement and objective metrics.

pub mod audio;
pub mod dsp;
mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod toy;
pub mod trainer;
pub mod vocoder;

pub use error::{Error, Result};
