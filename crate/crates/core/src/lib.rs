//! Small BERT-style encoder stack: corpus handling, WordPiece vocabulary,
//! tape autodiff, masked-LM pre-training, classification fine-tuning and evaluation.

pub mod autodiff;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use autodiff::Tape;
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Model32 = model::ModelParameters<f32>;
pub type Model64 = model::ModelParameters<f64>;
