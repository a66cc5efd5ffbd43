//! Traffic map forecasting with UNet-family encoder/decoder networks.

pub mod autodiff;
pub mod data;
pub mod ensemble;
mod error;
pub mod layers;
pub mod model;
mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{build_model, shape_schedule, ModelConfig, ModelType, ShapeSchedule, UNet};
pub use scalar::{Element, Real};
pub use tensor::{DType, EwOp, Shape, Tensor, TensorData};
