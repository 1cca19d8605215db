//! Minimal dense-tensor math with reverse-mode differentiation:
//! convolutions (including dilated and asymmetric kernels), linear layers,
//! an LSTM cell, activations, losses, and the SGD/cosine-annealing
//! optimizer.

mod gemm;
pub mod ops;
mod optim;
mod scalar;
mod tensor;

#[cfg(feature = "oracles")]
pub mod reference;

pub use ops::{
    batchnorm2d, concat, conv2d, cross_entropy, effective_kernel_size, linear, lstm_cell, matmul,
    mean_all, mse, prelu, relu, sigmoid, softmax, sum_all, tanh, ConvSpec, LstmCellParams,
};
pub use optim::{cosine_lr, sgd_step, OptimizerState};
pub use scalar::Scalar;
pub use tensor::{backward, Tensor};
