//! Minimal dense-tensor autograd used by the conditional and deep-convolutional
//! GANs of the rotor pipeline.
//!
//! Values are held in `f64` so that finite-difference gradient checks are
//! meaningful; checkpoints store parameters as little-endian `f32`.

pub mod checkpoint;
mod error;
pub mod graph;
mod kernels;
pub mod layers;
pub mod loss;
pub mod optim;
mod tensor;

pub use error::NnError;
pub use graph::{Gradients, Graph, Var};
pub use layers::{BoundParams, LayerSpec, Mode, Network};
pub use loss::{batch_moments, bce_loss, Moments, BCE_CLAMP};
pub use optim::AdamState;
pub use tensor::Tensor;

pub type Result<T, E = NnError> = std::result::Result<T, E>;
