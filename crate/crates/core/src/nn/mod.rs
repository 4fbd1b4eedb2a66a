//! Small deterministic neural-network engine over NHWC `f64` batches.

mod activation;
mod conv;
mod dense;
mod gemm;
mod loss;
mod network;
mod norm;
mod ops;
mod optim;
mod params;
mod pool;
mod spec;
mod tensor;

pub mod gradcheck;

pub use loss::{cross_entropy, softmax_cross_entropy};
pub use network::Network;
pub use norm::{BN_EPSILON, BN_MOMENTUM};
pub use ops::{
    batchnorm, conv1d, conv2d, dense, dropout, global_avg_pool, maxpool1d, maxpool2d, softmax, BatchNormState,
    Mode,
};
pub use optim::Adadelta;
pub use params::{Gradients, Param, ParamRole, ParamStore};
pub use spec::LayerSpec;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid layer spec: {0}")]
    Spec(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
