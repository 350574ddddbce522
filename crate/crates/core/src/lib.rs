//! Pure-encoder Transformers for forecasting (FoT), vision (ViT) and
//! multi-modal fusion (FuT), built on a small reverse-mode autodiff tape.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the element type for the common cases.

pub mod autograd;
pub mod dataset;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod heads;
pub mod model;
pub mod nn;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use autograd::{concat, Gradients, Tape, Var};
pub use dataset::{Batch, BatchTarget, DataSource, Example, InMemory, Split, Target};
pub use error::{Error, Result};
pub use model::{Checkpoint, Inputs, Model, ModelSpec, ModelTemplate};
pub use params::{ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;
pub type Example64 = Example<f64>;
pub type Checkpoint64 = Checkpoint<f64>;
