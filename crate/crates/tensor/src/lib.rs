//! Dense row-major `f64` tensors and a small reverse-mode differentiation tape.
//!
//! The differentiable op set is deliberately closed: matmul, n-mode product,
//! elementwise add/sub/mul/scale, tanh, sigmoid, softmax, concat, slice,
//! reshape, sum, weighted sum, 1-D max-pooling and softmax cross-entropy.
//! Every model in the workspace is built from these.

mod error;
pub mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use error::TensorError;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
