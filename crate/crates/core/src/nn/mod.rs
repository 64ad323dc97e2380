//! Small dense networks with batched reverse-mode gradients.

mod adam;
mod dense;
mod gradcheck;
mod matrix;

pub use adam::{Adam, DEFAULT_LR};
pub use dense::{Activation, Architecture, DenseNet, GradTape, Gradients};
pub use gradcheck::{grad_check, max_relative_error, numeric_gradient, GRAD_CHECK_FLOOR};
pub use matrix::Matrix;
