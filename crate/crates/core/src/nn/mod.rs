//! Minimal tensor, layer and optimizer toolkit with hand-written gradients.
//!
//! Activations are row-major: convolutional tensors are `[N, C, H, W]`,
//! dense tensors `[N, D]`. Every layer caches what its backward pass needs
//! during `forward`; calling `backward` without a preceding forward is an
//! error.

mod adam;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod gemm;
pub mod gradcheck;
mod layer;
mod loss;
mod pool;
mod state;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use batchnorm::BatchNorm;
pub use conv::Conv2d;
pub use dense::Dense;
pub use dropout::Dropout;
pub use layer::{Layer, LayerSpec, Relu, Sequential, Softmax};
pub use loss::{
    add_l2_grad, cross_entropy, cross_entropy_l2, l2_penalty, softmax_cross_entropy, softmax_rows,
    LossConfig,
};
pub use pool::{AvgPool2, GlobalAvgPool};
pub use state::{NamedTensor, StateDict, TensorData};
pub use tensor::{Param, Tensor};

pub(crate) use state::{load_param, save_param};

pub(crate) use gemm::gemm;

/// Forward-pass behaviour of Dropout and BatchNorm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
