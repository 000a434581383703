//! Vibrotactile texture-signal synthesis: the spectrogram codec, datasets,
//! the conditional GAN, the texture-image encoder and the end-to-end
//! pipeline that ties them together.

pub mod codec;
pub mod dataset;
pub mod encoder;
pub mod gan;
pub mod label;
pub mod pipeline;
mod error;

pub use error::{CoreError, Result};
