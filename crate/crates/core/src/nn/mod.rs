//! Minimal dense feed-forward network engine.
//!
//! All arithmetic is `f64`. Hidden layers use ReLU and outputs are linear;
//! training minimises mean squared error with [`Adam`].

mod dropout;
mod layer;
mod matrix;
mod optim;

pub use dropout::{dropout_forward, DropoutMode};
pub use layer::{mse_loss, Activation, DenseLayer, LayerGrad, SideInput, Stack, StackGrad};
pub use matrix::Matrix;
pub use optim::Adam;
