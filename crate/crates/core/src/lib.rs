pub mod adversarial;
pub mod conditions;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod scalar;
pub mod tensor;
pub mod transformer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// 64-bit instantiations, used for gradient checks and acceptance runs.
pub type Tensor64 = tensor::Tensor<f64>;
pub type Transformer64 = transformer::MemoryAugmentedTransformer<f64>;
pub type GatModel64 = adversarial::GatModel<f64>;

/// 32-bit instantiations.
pub type Tensor32 = tensor::Tensor<f32>;
pub type Transformer32 = transformer::MemoryAugmentedTransformer<f32>;
pub type GatModel32 = adversarial::GatModel<f32>;
