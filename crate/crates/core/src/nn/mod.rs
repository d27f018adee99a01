//! Layer kernels: forward passes and their paired backward passes.
//!
//! These are free functions over explicit parameter structs. Stateful layer
//! wrappers that cache activations for backpropagation live in
//! [`crate::model::layer`].

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod pool;
pub mod softmax;

pub use activation::{relu6, relu6_backward};
pub use batchnorm::{
    batchnorm2d, batchnorm2d_backward_eval, batchnorm2d_backward_train, batchnorm2d_eval,
    batchnorm2d_train, BatchNormCache, BatchNormGrads, BatchNormParams,
};
pub use conv::{conv2d, conv2d_backward, conv_output_extent, Conv2dGrads, Conv2dParams};
pub use dense::{dense, dense_backward, DenseGrads, DenseParams};
pub use dropout::{dropout, dropout_backward, DropoutMask};
pub use pool::{global_average_pool, global_average_pool_backward};
pub use softmax::{log_softmax, softmax, softmax_backward};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}
