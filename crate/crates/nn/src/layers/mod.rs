mod activation;
mod batch_norm;
mod conv;
mod dense;
mod residual;
mod shape;

pub use activation::{sigmoid, softmax_rows, LeakyRelu, LeakyReluConfig, Relu, Sigmoid, Softmax};
pub use batch_norm::{BatchNorm, BatchNormConfig};
pub use conv::{conv2d_forward, conv2d_input_grad, conv2d_weight_grad, Conv2d, Conv2dConfig};
pub use dense::{Dense, DenseConfig};
pub use residual::{ResidualBlock, ResidualBlockConfig};
pub use shape::{
    pixel_shuffle, pixel_unshuffle, GlobalAvgPool, PixelShuffle, PixelShuffleConfig, Reshape, ReshapeConfig,
};
