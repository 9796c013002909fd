//! Differentiable 1-D layers: dilated/strided convolution, batch
//! normalization, activations, decimation, linear upsampling and channel
//! concatenation. Each is a method on [`Graph`](crate::tensor::Graph).

mod activation;
pub mod conv;
pub mod norm;
mod resample;

pub use conv::Conv1dSpec;
pub use norm::{BatchNormState, BnMode, RunningStats, BN_EPS, BN_MOMENTUM};
