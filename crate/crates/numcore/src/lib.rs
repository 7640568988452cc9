//! Minimal dense numerics for the translation model.
//!
//! Everything is a row-major [`Tensor`]; model code records operations on a
//! [`Graph`] and calls [`Graph::backward`] to obtain gradients. Precision is a
//! type parameter: training runs in `f32`, gradient checks in `f64`.

mod error;
pub mod gradcheck;
mod graph;
mod rng;
mod scalar;
mod softmax;
mod tensor;

pub use error::NumError;
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use rng::Rng;
pub use scalar::Scalar;
pub use softmax::{cross_entropy, softmax};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, NumError>;
