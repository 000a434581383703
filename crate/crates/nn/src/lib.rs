//! Dense tensors, a small set of differentiable layers, losses and an Adam
//! optimizer: enough to train the spectrogram GAN and the texture image
//! encoder on a CPU. Everything trains in `f32`; layers are generic over
//! [`Scalar`] so gradients can be verified in `f64`.

pub mod adam;
pub mod checkpoint;
mod error;
pub mod gemm;
pub mod gradcheck;
pub mod layer;
pub mod layers;
pub mod loss;
pub mod registry;
mod scalar;
pub mod sequential;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{NnError, Result};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layer::{Initializer, Layer, LayerSpec};
pub use registry::LayerRegistry;
pub use scalar::Scalar;
pub use sequential::Sequential;
pub use tensor::{Param, Tensor};
