//! Video clip augmentation for data-efficient action recognition: temporally
//! coherent photometric/geometric ops, temporal ops, actor-preserving
//! background swaps, their composition into a strong augmentation, and a
//! small FixMatch-style trainer to measure them.

pub mod clip;
pub mod error;
pub mod mix;
pub mod photo_geo;
pub mod policy;
pub mod recipes;
pub mod rng;
pub mod ssl;
pub mod temporal;

pub use clip::{foreground_ratio, HumanMask, SoftLabel, VideoClip};
pub use error::{Error, Result};
pub use rng::SeededRng;
