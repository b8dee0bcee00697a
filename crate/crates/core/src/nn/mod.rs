//! The localization CNN with hand-written forward and backward passes.

#[cfg(target_arch = "x86_64")]
mod avx512;
mod checkpoint;
mod conv;
mod gemm;
pub mod gradcheck;
mod layers;
mod model;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, ARCH_FINGERPRINT};
pub use gemm::Scalar;
pub use layers::{
    dropout_backward, dropout_forward, global_avg_pool_backward, global_avg_pool_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, Conv2d, ConvGrads, Linear, LinearGrads, PoolIndex,
};
pub use model::{
    model_backward, model_forward, parameter_count, ForwardTrace, ModelState, Mode, CONV_CHANNELS, DROPOUT_RATE,
    HIDDEN_UNITS, MAX_INPUT_CHANNELS, MIN_SPATIAL,
};
pub use tensor::Tensor4;
