//! Reverse-mode autodiff over dense f64 tensors, plus the optimizer and the
//! dense building blocks everything downstream trains with.

pub mod adam;
pub mod check;
pub mod fft;
pub mod nn;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use nn::{Act, Affine, Mlp, MlpVars};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
