//! Core of the hdrforge pipeline: HDR file formats, colour transforms,
//! panorama-based clip curation, LDR degradation, exposure masks, the
//! structured prompt format, and evaluation metrics.

pub mod color;
pub mod degrade;
pub mod hdr_io;
pub mod image;
pub mod mask;
pub mod metrics;
pub mod pano;
pub mod prompt;
pub mod rng;

pub use color::{LogGammaParams, ToneOperator};
pub use image::{ClipMetadata, Colorspace, ImageF32, VideoClip};
