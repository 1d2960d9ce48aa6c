//! Front-end fusion of spectral (FBANK) and self-supervised feature streams.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`spectral`] turns a waveform into log-Mel filterbank features on a
//!    10 ms clock.
//! 2. [`ssl_source`] supplies the self-supervised stream on a 20 ms clock,
//!    either from a [`feat`] file or from a seeded synthetic generator.
//! 3. [`align`] projects the SSL stream down to the spectral dimension and
//!    folds pairs of spectral frames so both streams share one `T × D` shape.
//! 4. [`fusion`] combines the aligned streams (linear, convolutional,
//!    co-attention or mixture-of-experts), with hand-derived gradients in
//!    [`diff`].
//! 5. [`toytask`] trains the fusion front-ends on a synthetic classification
//!    task and [`analysis`] summarises the learned gate weights.

pub mod align;
pub mod analysis;
pub mod cli;
pub mod diff;
pub mod error;
pub mod feat;
pub mod fusion;
pub mod params;
pub mod rng;
pub mod spectral;
pub mod ssl_source;
pub mod toytask;
pub mod wav;

pub use error::{Error, Result};
pub use feat::{FeatureMatrix, StreamSource};
